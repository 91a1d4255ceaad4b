import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from colalign.alignment import scene_ccps
from colalign.bold import BoldParams, evaluate_candidate
from colalign.calibration import (
    OptimParams,
    curve_cost,
    isotonic_increasing,
    load_icrf,
    optimisation_cost,
    optimise_icrf,
    repair_curve,
    select_icrf,
    smoothness_terms,
)
from colalign.core import EmorBasis, ResponseCurve, invert_curve, uniform_grid
from colalign.errors import ConfigurationError, ValidationError
from colalign.reference import DorfDatabase
from colalign.synthetic import generate_scene, make_spec

FAST = OptimParams(restarts=4, max_epochs=40)


@pytest.fixture(scope="module")
def noisy_scene(dorf):
    return generate_scene(make_spec(dorf[17], seed=4))


def test_single_candidate_database_returns_it(noisy_scene):
    db = DorfDatabase((ResponseCurve.identity(),))
    res = select_icrf(scene_ccps(noisy_scene), db)
    assert res.index == 0
    assert np.array_equal(res.icrf.samples, ResponseCurve.identity().samples)


def test_tie_resolves_to_lowest_index(noisy_scene, dorf):
    c = dorf[5]
    db = DorfDatabase((dorf[40], c, c))
    ccps = scene_ccps(noisy_scene)
    res = select_icrf(ccps, db)
    scores = [evaluate_candidate(ccps, inv).bold for inv in db.inverse_curves]
    assert scores[1] == scores[2]
    assert res.index == int(np.argmin(scores))
    if scores[1] <= scores[0]:
        assert res.index == 1


def test_empty_database():
    with pytest.raises(ConfigurationError):
        select_icrf([np.full((2, 3), 0.5)], DorfDatabase(()))


def test_selection_recovers_truth(noisy_scene, dorf):
    res = select_icrf(scene_ccps(noisy_scene), dorf)
    assert np.mean(np.abs(res.icrf.samples - dorf.inverse_curves[17].samples)) <= 0.02
    assert res.score == pytest.approx(res.diagnostics.bold)


def test_selection_independent_of_workers(noisy_scene, dorf):
    ccps = scene_ccps(noisy_scene)
    a = select_icrf(ccps, dorf, workers=1)
    b = select_icrf(ccps, dorf, workers=4)
    assert a.index == b.index and a.score == b.score


def test_result_json_round_trip(tmp_path, noisy_scene, dorf):
    res = select_icrf(scene_ccps(noisy_scene), dorf)
    res.save(tmp_path / "icrf.json", seed=9)
    doc = json.loads((tmp_path / "icrf.json").read_text())
    assert doc["seed"] == 9 and doc["method"] == "selection" and doc["index"] == res.index
    assert np.array_equal(load_icrf(tmp_path / "icrf.json").samples, res.icrf.samples)


def identity_basis():
    t = uniform_grid(1024)
    return EmorBasis(t, np.stack([0.3 * np.sin(4 * np.pi * t), 0.1 * np.sin(np.pi * t)]))


def linear_ccps(seed=0):
    scene = generate_scene(make_spec(ResponseCurve.identity(), seed=seed))
    return scene_ccps(scene)


def test_zero_theta_identity_mean_cost_is_bold_squared():
    ccps = linear_ccps()
    basis = identity_basis()
    cost, breakdown = optimisation_cost(np.zeros(2), basis, ccps)
    micro, macro, mono = smoothness_terms(basis.mean, 10)
    assert micro[0] < 1e-6 and macro[0] < 1e-6 and mono[0] == 0
    assert cost == pytest.approx(breakdown.bold ** 2, abs=1e-12)


def test_non_monotone_theta_costs_more_than_repair():
    ccps = linear_ccps(1)
    basis = identity_basis()
    theta = np.array([1.0, 0.0])
    raw = basis.mean + theta @ basis.eigenvectors
    assert np.any(np.diff(raw) < 0)
    cost, _ = optimisation_cost(theta, basis, ccps)
    repaired = repair_curve(raw)
    rep_cost = curve_cost(repaired.samples, ccps, BoldParams(), OptimParams())[0][0]
    assert cost > rep_cost


def test_cost_recomputes_from_breakdown(rng):
    ccps = linear_ccps(2)
    basis = identity_basis()
    opt = OptimParams(psi1=0.3, psi2=0.7)
    theta = rng.uniform(-0.5, 0.5, 2)
    cost, bd = optimisation_cost(theta, basis, ccps, opt=opt)
    raw = basis.mean + theta @ basis.eigenvectors
    micro, macro, mono = (float(v[0]) for v in smoothness_terms(raw, opt.M))
    expected = bd.bold ** 2 + (opt.psi1 * micro) ** 2 + (opt.psi2 * macro) ** 2 + opt.mono_weight * mono
    assert cost == pytest.approx(expected, abs=1e-9)


def test_smoothness_terms_closed_form():
    t = uniform_grid(1001)
    micro, macro, mono = smoothness_terms(t ** 2, 10)
    assert micro[0] == pytest.approx(2.0, abs=1e-6)
    assert macro[0] == pytest.approx(0.0, abs=1e-6)
    assert mono[0] == 0
    _, _, mono = smoothness_terms(1 - t, 10)
    # central differences cover the S - 2 interior intervals
    assert mono[0] == pytest.approx(999 / 1000, abs=1e-12)


@settings(max_examples=50)
@given(st.lists(st.floats(-10, 10), min_size=1, max_size=40))
def test_isotonic_properties(ys):
    y = np.array(ys)
    out = isotonic_increasing(y)
    assert out.shape == y.shape
    assert np.all(np.diff(out) >= -1e-12)
    assert out.sum() == pytest.approx(y.sum(), abs=1e-8)
    assert np.allclose(isotonic_increasing(out), out)


def test_isotonic_brute_force_small():
    # exhaustive check against the closed-form two-point solution
    assert isotonic_increasing([3.0, 1.0]).tolist() == [2.0, 2.0]
    assert isotonic_increasing([1.0, 3.0, 2.0, 4.0]).tolist() == [1.0, 2.5, 2.5, 4.0]


def test_repair_curve_is_valid_response():
    t = uniform_grid(64)
    c = repair_curve(t + 0.2 * np.sin(6 * np.pi * t))
    assert np.all(np.diff(c.samples) >= 0)
    assert c.samples[0] == 0 and c.samples[-1] == 1


@pytest.fixture(scope="module")
def h0_ccps(inverse_basis):
    crf = invert_curve(ResponseCurve(inverse_basis.mean))
    scene = generate_scene(make_spec(crf, sigma=0.0, seed=3))
    return scene_ccps(scene)


def test_optimise_deterministic_single_restart(h0_ccps, inverse_basis):
    opt = OptimParams(restarts=1, max_epochs=40, seed=11)
    a = optimise_icrf(h0_ccps, inverse_basis, opt=opt)
    b = optimise_icrf(h0_ccps, inverse_basis, opt=opt)
    assert np.array_equal(a.theta, b.theta)
    assert np.array_equal(a.icrf.samples, b.icrf.samples)


def test_optimise_independent_of_workers(h0_ccps, inverse_basis):
    a = optimise_icrf(h0_ccps, inverse_basis, opt=OptimParams(restarts=20, max_epochs=20, workers=1))
    b = optimise_icrf(h0_ccps, inverse_basis, opt=OptimParams(restarts=20, max_epochs=20, workers=3))
    assert np.array_equal(a.restart_costs, b.restart_costs)


def test_optimise_improves_and_is_monotone(h0_ccps, inverse_basis):
    res = optimise_icrf(h0_ccps, inverse_basis, opt=FAST)
    assert np.all(res.restart_costs <= res.initial_costs)
    assert np.all(np.diff(res.icrf.samples) >= 0)
    assert res.icrf.samples[0] == 0 and res.icrf.samples[-1] == 1
    assert res.theta.shape == (FAST.k,)


def test_optimise_rejects_bad_basis(h0_ccps, inverse_basis):
    fwd = EmorBasis(inverse_basis.mean, inverse_basis.eigenvectors, "forward")
    with pytest.raises(ConfigurationError):
        optimise_icrf(h0_ccps, fwd, opt=FAST)
    with pytest.raises(ConfigurationError):
        optimise_icrf(h0_ccps, inverse_basis.truncated(3), opt=FAST)


def test_optim_params_defaults_and_validation():
    p = OptimParams()
    assert (p.lr0, p.decay_steps, p.decay_rate, p.max_epochs, p.tol, p.restarts) == (0.5, 1000, 0.9, 600, 1e-3, 50)
    with pytest.raises(ValidationError):
        OptimParams(restarts=0)
    with pytest.raises(ValidationError):
        OptimParams(lr0=0)
    with pytest.raises(ValidationError):
        OptimParams(M=1)
