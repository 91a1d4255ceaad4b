import json

import numpy as np
import pytest

from colalign.alignment import collect_ccps, scene_ccps
from colalign.core import ResponseCurve
from colalign.errors import ValidationError
from colalign.io import load_annotations, read_image
from colalign.synthetic import (
    SyntheticSceneSpec,
    build_emor_basis,
    chart_reflectances,
    generate_camera_set,
    generate_scene,
    make_spec,
    recovery_study,
    save_scene,
    surrogate_dorf_curves,
)


def rows_rgb(scene):
    rows = collect_ccps(scene.images, [scene.annotations[i] for i in scene.image_ids])
    return np.array([[s.rgb for s in row] for row in rows])


def test_noise_free_identity_is_gain_times_reflectance(rng):
    gains = rng.uniform(0.3, 1, (3, 3))
    refl = chart_reflectances(12, rng)
    scene = generate_scene(SyntheticSceneSpec(gains, refl, ResponseCurve.identity()))
    expected = gains[:, None, :] * refl[None, :, :]
    assert np.allclose(rows_rgb(scene), expected, atol=1e-15)


def test_noise_free_gamma_closed_form(rng):
    gains = rng.uniform(0.3, 1, (3, 3))
    refl = chart_reflectances(12, rng)
    scene = generate_scene(SyntheticSceneSpec(gains, refl, ResponseCurve.gamma(1 / 2.2)))
    expected = (gains[:, None, :] * refl[None, :, :]) ** (1 / 2.2)
    assert np.max(np.abs(rows_rgb(scene) - expected)) <= 1 / 255


def test_fixed_seed_bit_identical():
    a = generate_scene(make_spec(ResponseCurve.gamma(0.5), seed=5))
    b = generate_scene(make_spec(ResponseCurve.gamma(0.5), seed=5))
    for x, y in zip(a.images, b.images):
        assert np.array_equal(x.pixels, y.pixels)
    c = generate_scene(make_spec(ResponseCurve.gamma(0.5), seed=6))
    assert not np.array_equal(a.images[0].pixels, c.images[0].pixels)


def test_noise_is_applied_in_linear_domain():
    spec = make_spec(ResponseCurve.identity(), sigma=0.01, seed=2)
    scene = generate_scene(spec)
    resid = scene.observed_linear - scene.linear
    assert 0.005 < resid.std() < 0.015
    assert np.allclose(rows_rgb(scene), scene.observed_linear, atol=1e-15)


def test_spec_validation():
    with pytest.raises(ValidationError):
        SyntheticSceneSpec(np.zeros((2, 3)), np.full((4, 3), 0.5), ResponseCurve.identity())
    with pytest.raises(ValidationError):
        SyntheticSceneSpec(np.ones((2, 3)), np.full((4, 3), 1.5), ResponseCurve.identity())
    with pytest.raises(ValidationError):
        chart_reflectances(4, np.random.default_rng(0), layout="checker")


def test_chart_layouts(rng):
    strat = chart_reflectances(24, rng)
    assert np.allclose(np.sort(strat[:, 0]), np.linspace(0.02, 1, 24))
    chart = chart_reflectances(24, rng, layout="chart")
    greys = chart[-6:]
    assert np.all(greys[:, 0] == greys[:, 1]) and np.all(greys[:, 1] == greys[:, 2])
    assert greys[0, 0] == 1.0 and greys[-1, 0] == pytest.approx(0.02)


def test_save_scene_round_trip(tmp_path):
    scene = generate_scene(make_spec(ResponseCurve.gamma(0.6), m=3, seed=1))
    save_scene(scene, tmp_path, {"seed": 1})
    anns = load_annotations(tmp_path / "annotations.json")
    assert sorted(anns) == scene.image_ids
    for iid, img in zip(scene.image_ids, scene.images):
        back = read_image(tmp_path / f"{iid}.png")
        assert np.max(np.abs(back.pixels - img.pixels)) <= 0.5 / 255 + 1e-12
    truth = json.loads((tmp_path / "truth.json").read_text())
    assert truth["seed"] == 1 and len(truth["crf"]["samples"]) == 1024


def test_surrogate_database_shape(dorf):
    assert len(dorf) == 201
    assert len(set(dorf.names)) == 201
    for c in dorf.curves:
        assert c.samples[0] == 0 and c.samples[-1] == 1
        assert np.all(np.diff(c.samples) >= 0)
    again = surrogate_dorf_curves()
    assert np.array_equal(again[100].samples, dorf[100].samples)


def test_emor_basis_orthonormal(dorf):
    b = build_emor_basis(dorf.inverse_curves, 6)
    gram = b.eigenvectors @ b.eigenvectors.T
    assert np.allclose(gram, np.eye(6), atol=1e-10)
    assert np.all(b.eigenvectors[np.arange(6), np.argmax(np.abs(b.eigenvectors), axis=1)] > 0)


def test_recovery_study_reproducible(dorf):
    a = recovery_study(dorf, trials=3, seed=42)
    b = recovery_study(dorf, trials=3, seed=42)
    assert np.array_equal(a.deviations, b.deviations)
    assert np.array_equal(a.true_indices, b.true_indices)
    doc = a.to_json()
    assert doc["root_seed"] == 42 and len(doc["trials"]) == 3


def test_recovery_study_noise_free_reported(dorf):
    rep = recovery_study(dorf, trials=3, sigma=0.0, seed=1)
    assert rep.deviations.shape == (3,)
    assert np.all(np.isfinite(rep.deviations))


def test_camera_set_shares_scene(dorf):
    cams = generate_camera_set([dorf[1], dorf[50], dorf[99]], m=4, seed=3)
    assert len(cams) == 3
    ratio = cams[0].linear / cams[1].linear
    # same chart and illuminants: cameras differ by one gain per channel
    assert np.allclose(ratio, ratio[0, 0], atol=1e-12)
    assert not np.allclose(rows_rgb(cams[0]), rows_rgb(cams[1]))
    assert len(scene_ccps(cams[2])) == 3
