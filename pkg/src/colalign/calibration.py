"""Inverse response calibration from calibration images.

Two back ends minimise the BoLD score: ``select_icrf`` searches a database
of measured curves exhaustively, ``optimise_icrf`` fits coefficients of a
low-dimensional inverse-response basis with restarted Adam.
"""

from __future__ import annotations

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .bold import BoldBreakdown, BoldParams, evaluate_batch, evaluate_candidate
from .core import EmorBasis, EmorCoefficients, ResponseCurve, emor_samples
from .errors import ConfigurationError, NumericalError, OptimisationFailedError, ValidationError
from .reference import DorfDatabase, curve_from_json

log = logging.getLogger(__name__)

CHUNK = 16  # restarts per work item; fixed so results do not depend on worker count


@dataclass(frozen=True)
class OptimParams:
    psi1: float = 1e-3
    psi2: float = 1e-3
    M: int = 10
    restarts: int = 50
    lr0: float = 0.5
    decay_steps: int = 1000
    decay_rate: float = 0.9
    max_epochs: int = 600
    tol: float = 1e-3
    relative_tol: bool = True
    k: int = 5
    mono_weight: float = 1e3
    fd_step: float = 1e-4
    init_range: float = 1.0
    seed: int = 0
    workers: int = 1

    def __post_init__(self):
        for name in ("psi1", "psi2", "tol", "mono_weight"):
            if not getattr(self, name) >= 0:
                raise ValidationError(f"{name} must be >= 0")
        for name in ("lr0", "decay_rate", "fd_step", "init_range"):
            if not getattr(self, name) > 0:
                raise ValidationError(f"{name} must be > 0")
        for name in ("restarts", "decay_steps", "max_epochs", "k", "workers"):
            if int(getattr(self, name)) < 1:
                raise ValidationError(f"{name} must be a positive integer")
        if self.M < 2:
            raise ValidationError("M must be >= 2")


@dataclass(frozen=True, eq=False)
class CalibrationResult:
    icrf: ResponseCurve
    score: float
    method: str
    diagnostics: BoldBreakdown
    name: str = ""
    index: int = -1
    theta: np.ndarray | None = None
    restart_costs: np.ndarray | None = field(default=None, repr=False)
    initial_costs: np.ndarray | None = field(default=None, repr=False)

    def to_json(self, **extra) -> dict:
        doc = {"method": self.method, "score": float(self.score)}
        if self.method == "selection":
            doc.update(name=self.name, index=self.index)
        else:
            doc["theta"] = [float(v) for v in self.theta]
        doc["bold"] = self.diagnostics.to_json()
        doc.update(extra)
        doc["samples"] = [float(v) for v in self.icrf.samples]
        return doc

    def save(self, path, **extra):
        Path(path).write_text(json.dumps(self.to_json(**extra), indent=1))


def load_icrf(path) -> ResponseCurve:
    """Read the curve from a calibration result (or plain curve) JSON file."""
    return curve_from_json(json.loads(Path(path).read_text()))


def _map_chunks(fn, items, workers):
    if workers <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


# -- Selection ---------------------------------------------------------------

def select_icrf(ccps, dorf: DorfDatabase, params: BoldParams = BoldParams(),
                workers: int = 1) -> CalibrationResult:
    """Inverse of the database curve with the lowest BoLD score.

    Ties resolve to the lowest database index.
    """
    if dorf is None or len(dorf) == 0:
        raise ConfigurationError("response-curve database is empty")
    cands = dorf.inverse_matrix
    spans = [(a, min(a + 64, len(cands))) for a in range(0, len(cands), 64)]
    scores = np.concatenate(
        _map_chunks(lambda ab: evaluate_batch(ccps, cands[ab[0]:ab[1]], params)[0], spans, workers)
    )
    if not np.any(np.isfinite(scores)):
        raise NumericalError("no database curve produced a finite BoLD score")
    best = int(np.argmin(scores))
    icrf = dorf.inverse_curves[best]
    breakdown = evaluate_candidate(ccps, icrf, params)
    return CalibrationResult(icrf, breakdown.bold, "selection", breakdown,
                             name=icrf.name, index=best)


# -- Optimisation ------------------------------------------------------------

def _derivatives(raw: np.ndarray):
    h = 1.0 / (raw.shape[-1] - 1)
    d1 = (raw[..., 2:] - raw[..., :-2]) / (2 * h)
    d2 = (raw[..., 2:] - 2 * raw[..., 1:-1] + raw[..., :-2]) / (h * h)
    return d1, d2


def smoothness_terms(raw: np.ndarray, M: int):
    """``(mean |f''|, std of f'' block means over M equal blocks, integral of max(0, -f'))``."""
    raw = np.atleast_2d(raw)
    d1, d2 = _derivatives(raw)
    micro = np.mean(np.abs(d2), axis=-1)
    blocks = np.array_split(d2, M, axis=-1)
    macro = np.std(np.stack([b.mean(axis=-1) for b in blocks], axis=-1), axis=-1)
    # integral of the negative slope, i.e. the total amount the curve descends
    mono = np.sum(np.maximum(0.0, -d1), axis=-1) / (raw.shape[-1] - 1)
    return micro, macro, mono


def curve_cost(raw, ccps, bold_params: BoldParams, opt: OptimParams):
    """Cost of raw (unclamped) curve samples, batched over the leading axis.

    Returns ``(cost, bold, micro, macro, mono)`` arrays; non-finite
    intermediates give an infinite cost.
    """
    raw = np.atleast_2d(np.asarray(raw, dtype=float))
    finite = np.all(np.isfinite(raw), axis=1)
    safe = np.where(finite[:, None], raw, 0.0)
    bold = evaluate_batch(ccps, np.clip(safe, 0.0, 1.0), bold_params)[0]
    micro, macro, mono = smoothness_terms(safe, opt.M)
    with np.errstate(over="ignore", invalid="ignore"):
        cost = bold ** 2 + (opt.psi1 * micro) ** 2 + (opt.psi2 * macro) ** 2 + opt.mono_weight * mono
    cost = np.where(finite & np.isfinite(cost), cost, np.inf)
    return cost, bold, micro, macro, mono


def optimisation_cost(theta, basis: EmorBasis, ccps, bold_params: BoldParams = BoldParams(),
                      opt: OptimParams = OptimParams()):
    """Cost of one coefficient vector and the BoLD breakdown of its curve."""
    raw = emor_samples(basis, theta)
    cost, *_ = curve_cost(raw, ccps, bold_params, opt)
    breakdown = evaluate_candidate(ccps, np.clip(raw, 0.0, 1.0), bold_params) if np.all(np.isfinite(raw)) else None
    return float(cost[0]), breakdown


def isotonic_increasing(y) -> np.ndarray:
    """Least-squares non-decreasing fit (pool adjacent violators)."""
    y = np.asarray(y, dtype=float)
    vals, weights, sizes = [], [], []
    for v in y:
        vals.append(v)
        weights.append(1.0)
        sizes.append(1)
        while len(vals) > 1 and vals[-2] > vals[-1]:
            w = weights[-2] + weights[-1]
            vals[-2] = (vals[-2] * weights[-2] + vals[-1] * weights[-1]) / w
            weights[-2] = w
            sizes[-2] += sizes[-1]
            del vals[-1], weights[-1], sizes[-1]
    return np.repeat(vals, sizes)


def repair_curve(raw, name: str = "emor") -> ResponseCurve:
    """Isotonic repair then affine renormalisation to endpoints 0 and 1."""
    y = isotonic_increasing(np.clip(raw, 0.0, 1.0))
    span = y[-1] - y[0]
    if not span > 0:
        raise NumericalError("recovered curve is constant after monotone repair")
    y = np.clip((y - y[0]) / span, 0.0, 1.0)
    y[0], y[-1] = 0.0, 1.0
    return ResponseCurve(y, name)


def _run_restarts(thetas: np.ndarray, basis: EmorBasis, ccps, bold_params, opt: OptimParams):
    """Batched Adam over a block of restarts with best-iterate tracking."""
    r, k = thetas.shape
    beta1, beta2, eps = 0.9, 0.999, 1e-8
    eye = np.eye(k) * opt.fd_step

    def costs(th):
        return curve_cost(emor_samples(basis, th), ccps, bold_params, opt)[0]

    theta = thetas.copy()
    cost = costs(theta)
    initial = cost.copy()
    best_theta, best_cost = theta.copy(), cost.copy()
    m1 = np.zeros_like(theta)
    m2 = np.zeros_like(theta)
    active = np.isfinite(cost)
    for step in range(1, opt.max_epochs + 1):
        if not active.any():
            break
        idx = np.flatnonzero(active)
        th = theta[idx]
        probe = np.concatenate([th[:, None, :] + eye[None], th[:, None, :] - eye[None]], axis=1)
        pc = costs(probe.reshape(-1, k)).reshape(len(idx), 2 * k)
        with np.errstate(invalid="ignore"):
            grad = (pc[:, :k] - pc[:, k:]) / (2 * opt.fd_step)
        bad = ~np.all(np.isfinite(grad), axis=1)
        grad[bad] = 0.0
        lr = opt.lr0 * opt.decay_rate ** (step / opt.decay_steps)
        m1[idx] = beta1 * m1[idx] + (1 - beta1) * grad
        m2[idx] = beta2 * m2[idx] + (1 - beta2) * grad * grad
        mhat = m1[idx] / (1 - beta1 ** step)
        vhat = m2[idx] / (1 - beta2 ** step)
        theta[idx] = th - lr * mhat / (np.sqrt(vhat) + eps)
        new = costs(theta[idx])
        improved = new < best_cost[idx]
        best_cost[idx[improved]] = new[improved]
        best_theta[idx[improved]] = theta[idx[improved]]
        delta = np.abs(new - cost[idx])
        if opt.relative_tol:
            with np.errstate(invalid="ignore", divide="ignore"):
                delta = delta / np.abs(cost[idx])
        cost[idx] = new
        stop = bad | ~np.isfinite(new) | (delta < opt.tol)
        active[idx[stop]] = False
    return best_theta, best_cost, initial


def optimise_icrf(ccps, basis: EmorBasis, bold_params: BoldParams = BoldParams(),
                  opt: OptimParams = OptimParams()) -> CalibrationResult:
    """Fit basis coefficients by restarted Adam and return the best curve.

    Each restart ``i`` draws its initial coefficients from child ``i`` of the
    root seed, so results do not depend on scheduling or worker count.
    """
    if basis.kind != "inverse":
        raise ConfigurationError("optimisation needs an inverse-response basis")
    if opt.k > basis.k:
        raise ConfigurationError(f"k={opt.k} exceeds the {basis.k} eigenvectors of the basis")
    basis = basis.truncated(opt.k)
    children = np.random.SeedSequence(opt.seed).spawn(opt.restarts)
    init = np.stack([
        np.random.default_rng(c).uniform(-opt.init_range, opt.init_range, opt.k) for c in children
    ])
    blocks = [init[a:a + CHUNK] for a in range(0, opt.restarts, CHUNK)]
    results = _map_chunks(lambda b: _run_restarts(b, basis, ccps, bold_params, opt), blocks, opt.workers)
    thetas = np.concatenate([r[0] for r in results])
    final = np.concatenate([r[1] for r in results])
    initial = np.concatenate([r[2] for r in results])
    if not np.any(np.isfinite(final)):
        raise OptimisationFailedError(f"all {opt.restarts} restarts ended with a non-finite cost")
    best = int(np.argmin(final))
    theta = thetas[best]
    raw = emor_samples(basis, theta)
    icrf = repair_curve(raw)
    breakdown = evaluate_candidate(ccps, icrf, bold_params)
    log.info("optimisation: best restart %d cost %.4g", best, final[best])
    return CalibrationResult(icrf, float(final[best]), "optimisation", breakdown,
                             name="emor", theta=EmorCoefficients(theta).theta,
                             restart_costs=final, initial_costs=initial)


def params_to_json(bold_params: BoldParams, opt: OptimParams | None = None) -> dict:
    doc = {"bold": asdict(bold_params)}
    if opt is not None:
        doc["optimisation"] = asdict(opt)
    return doc
