"""Balance-of-linear-distances (BoLD) objective for response calibration.

Pipeline for one candidate inverse response curve and a CCP matrix:

1. sort the patch columns by their mean value (stable);
2. linearise every entry through the candidate curve;
3. align each image row to the column-mean targets of the first and last
   columns with an exact two-point affine map;
4. take absolute distances to the column means and average them per
   column, giving the mean distance curve;
5. combine the asymmetry of that curve, a normalisation term and the area
   under it into a single score.

All routines are vectorised over a batch of candidate curves so that the
exhaustive search and the optimiser can evaluate many candidates at once.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .core import CcpMatrix, ResponseCurve, interp_uniform
from .errors import (
    DegenerateRowError,
    DimensionError,
    InsufficientDataError,
    ValidationError,
)

SKEW_MODES = ("quantile", "values")
SKEW_SOURCES = ("mean", "all")
VAR_FLOOR = 1e-12


@dataclass(frozen=True)
class BoldParams:
    """Weights and sampling options of the BoLD score.

    ``skew_mode`` selects what the skewness statistic is computed on:
    ``"quantile"`` draws ``s`` positions at uniform quantiles of the mean
    distance curve treated as a density over the sorted intensity axis, so
    the statistic measures asymmetry about the curve's symmetry axis;
    ``"values"`` takes ``s`` uniformly spaced samples of the curve's values.
    ``skew_source`` chooses the mean curve (``"mean"``) or every row of the
    distance matrix (``"all"``) as the sampled object. ``normalise`` rescales
    aligned values so the first/last column targets become 0 and 1.
    ``mass_floor``: in quantile mode the skewness of a curve whose mean value
    is below this is scaled down linearly (to 0 for an all-zero curve),
    since a curve with almost no mass carries no usable shape.
    """

    lambda1: float = 0.0
    lambda2: float = 1.0
    s: int = 100
    normalise: bool = True
    skew_mode: str = "quantile"
    skew_source: str = "mean"
    mass_floor: float = 3e-3

    def __post_init__(self):
        for name in ("lambda1", "lambda2"):
            v = getattr(self, name)
            if not np.isfinite(v) or v < 0:
                raise ValidationError(f"{name} must be finite and >= 0, got {v}")
        if int(self.s) != self.s or self.s < 3:
            raise ValidationError(f"s must be an integer >= 3, got {self.s}")
        if not self.mass_floor >= 0:
            raise ValidationError("mass_floor must be >= 0")
        if self.skew_mode not in SKEW_MODES:
            raise ValidationError(f"skew_mode must be one of {SKEW_MODES}")
        if self.skew_source not in SKEW_SOURCES:
            raise ValidationError(f"skew_source must be one of {SKEW_SOURCES}")


@dataclass(frozen=True, eq=False)
class BoldBreakdown:
    bold: float
    eta: float
    phi: float
    mu: float
    mean_distance_curve: np.ndarray
    channels: tuple = field(default=(), repr=False)

    def recompute(self, params: BoldParams) -> float:
        return float(np.hypot(self.eta - params.lambda1 * self.phi, params.lambda2 * self.mu))

    def to_json(self) -> dict:
        return {
            "bold": self.bold,
            "eta": self.eta,
            "phi": self.phi,
            "mu": self.mu,
            "mean_distance_curve": [float(v) for v in self.mean_distance_curve],
        }


def _values(ccps) -> np.ndarray:
    return np.asarray(getattr(ccps, "values", ccps), dtype=float)


def column_order(values) -> np.ndarray:
    """Stable permutation that sorts columns by ascending mean."""
    return np.argsort(_values(values).mean(axis=0), kind="stable")


def sort_columns(ccps: CcpMatrix) -> CcpMatrix:
    """Permute columns so their means are non-decreasing; ties keep order."""
    vals = _values(ccps)
    return CcpMatrix(vals[:, column_order(vals)], getattr(ccps, "channel", "intensity"))


def _check_rows(vals: np.ndarray):
    if vals.ndim != 2:
        raise DimensionError(f"expected a 2-D CCP matrix, got shape {vals.shape}")
    if vals.shape[1] < 2:
        raise InsufficientDataError("row alignment needs at least two columns")
    bad = np.flatnonzero(vals[:, 0] == vals[:, -1])
    if bad.size:
        raise DegenerateRowError(int(bad[0]))


def align_rows(ccps: CcpMatrix):
    """Map each row affinely so its first/last entries hit the column-mean targets.

    Returns ``(aligned, alpha, beta)`` where ``aligned = alpha * row + beta``
    row by row.
    """
    vals = _values(ccps)
    _check_rows(vals)
    first, last = vals[:, 0], vals[:, -1]
    alpha = (last.mean() - first.mean()) / (last - first)
    beta = first.mean() - alpha * first
    aligned = alpha[:, None] * vals + beta[:, None]
    return CcpMatrix(aligned, "aligned"), alpha, beta


def mean_distance_curve(aligned, icrf: ResponseCurve | None = None, normalise: bool = False):
    """Column means of ``|aligned - column mean|``.

    If ``icrf`` is given the entries are first mapped through it (they must
    then lie in [0, 1]). With ``normalise`` the values are rescaled so the
    first and last column means become 0 and 1 before measuring distances.
    Returns ``(curve, mean_ccp)``.
    """
    vals = _values(aligned)
    if icrf is not None:
        vals = np.asarray(icrf(vals), dtype=float)
    if normalise:
        lo, hi = vals[:, 0].mean(), vals[:, -1].mean()
        if hi == lo:
            raise DegenerateRowError(0, "first and last column targets coincide")
        vals = (vals - lo) / (hi - lo)
    mean_ccp = vals.mean(axis=0)
    curve = np.abs(vals - mean_ccp).mean(axis=0)
    return curve, mean_ccp


def _skewness(x: np.ndarray) -> np.ndarray:
    """Sample skewness along the last axis, NaNs ignored; 0 when variance < floor."""
    valid = ~np.isnan(x)
    count = np.sum(valid, axis=-1)
    with np.errstate(invalid="ignore", divide="ignore"):
        mean = np.sum(np.where(valid, x, 0.0), axis=-1, keepdims=True) / count[..., None]
        dev = x - mean
        m2 = np.nansum(dev ** 2, axis=-1) / count
        m3 = np.nansum(dev ** 3, axis=-1) / count
        eta = m3 / m2 ** 1.5
    return np.where((count > 0) & (m2 >= VAR_FLOOR), eta, 0.0)


def uniform_value_samples(curves: np.ndarray, s: int) -> np.ndarray:
    """``s`` evenly spaced samples of each piecewise-linear curve on [0, 1]."""
    curves = np.asarray(curves, dtype=float)
    n = curves.shape[-1]
    t = np.linspace(0.0, 1.0, s)
    return interp_uniform(curves.reshape(-1, n), t).reshape(curves.shape[:-1] + (s,))


def quantile_positions(curves: np.ndarray, s: int) -> np.ndarray:
    """Positions at the ``(i + 0.5) / s`` quantiles of each curve read as a density.

    Each curve is a piecewise-linear density over [0, 1] with knots at the
    column positions; its CDF is piecewise quadratic and is inverted exactly.
    Curves with no mass yield NaN rows.
    """
    curves = np.asarray(curves, dtype=float)
    shape = curves.shape
    n = shape[-1]
    y = curves.reshape(-1, n)
    rows = y.shape[0]
    h = 1.0 / (n - 1)
    seg = 0.5 * (y[:, 1:] + y[:, :-1]) * h
    cdf = np.concatenate([np.zeros((rows, 1)), np.cumsum(seg, axis=1)], axis=1)
    total = cdf[:, -1]
    empty = ~(total > 0)
    safe_total = np.where(empty, 1.0, total)
    cdf_n = cdf / safe_total[:, None]

    q = (np.arange(s) + 0.5) / s
    offset = 2.0 * np.arange(rows)[:, None]
    flat = (cdf_n + offset).ravel()
    idx = np.searchsorted(flat, (q[None, :] + offset).ravel(), side="right").reshape(rows, s)
    j = np.clip(idx - 1 - n * np.arange(rows)[:, None], 0, n - 2)

    r = (q[None, :] - np.take_along_axis(cdf_n, j, axis=1)) * safe_total[:, None]
    y0 = np.take_along_axis(y, j, axis=1)
    y1 = np.take_along_axis(y, j + 1, axis=1)
    slope = (y1 - y0) / h
    disc = np.sqrt(np.maximum(y0 * y0 + 2.0 * slope * r, 0.0))
    denom = y0 + disc
    with np.errstate(invalid="ignore", divide="ignore"):
        u = np.where(denom > 0, 2.0 * r / denom, 0.0)
    x = j * h + np.clip(u, 0.0, h)
    x[empty] = np.nan
    return x.reshape(shape[:-1] + (s,))


def _eta(dbar: np.ndarray, d: np.ndarray | None, params: BoldParams) -> np.ndarray:
    """Asymmetry coefficient for a batch; ``dbar`` is ``(K, n)``, ``d`` is ``(K, m, n)``."""
    src = dbar if params.skew_source == "mean" or d is None else d
    if params.skew_mode == "quantile":
        x = quantile_positions(src, params.s)
    else:
        x = uniform_value_samples(src, params.s)
    if src.ndim == 3:
        x = x.reshape(x.shape[0], -1)
    eta = _skewness(x)
    if params.skew_mode == "quantile":
        if params.mass_floor > 0:
            eta = eta * np.clip(dbar.mean(axis=-1) / params.mass_floor, 0.0, 1.0)
    return eta


def _combine(eta, phi, mu, params: BoldParams):
    return np.hypot(eta - params.lambda1 * phi, params.lambda2 * mu)


def bold_value(curve, params: BoldParams = BoldParams()) -> BoldBreakdown:
    """BoLD score of a mean distance curve."""
    dbar = np.asarray(curve, dtype=float)
    if dbar.ndim != 1:
        raise DimensionError("mean distance curve must be 1-D")
    if dbar.size < 3:
        raise InsufficientDataError(f"need at least 3 columns, got {dbar.size}")
    eta = float(_eta(dbar[None, :], None, params)[0])
    phi = float(dbar.max() + dbar.min() - 1.0)
    mu = float(dbar.sum())
    bold = float(_combine(eta, phi, mu, params))
    return BoldBreakdown(bold, eta, phi, mu, dbar.copy())


def _channel_stack(ccps) -> list:
    if isinstance(ccps, (CcpMatrix, np.ndarray)):
        mats = [_values(ccps)]
    else:
        mats = [_values(c) for c in ccps]
    if not mats:
        raise InsufficientDataError("no CCP matrices supplied")
    for vals in mats:
        if vals.ndim != 2:
            raise DimensionError(f"expected 2-D CCP matrices, got shape {vals.shape}")
        if vals.shape[1] < 3:
            raise InsufficientDataError(f"need at least 3 patches, got {vals.shape[1]}")
        if vals.shape[0] < 2:
            raise InsufficientDataError(f"need at least 2 images, got {vals.shape[0]}")
    return mats


def _channel_batch(vals: np.ndarray, icrfs: np.ndarray, params: BoldParams):
    """Per-candidate (eta, phi, mu, dbar) for one channel matrix."""
    # canonical row order makes every reduction independent of input row order
    vals = vals[np.lexsort(vals.T[::-1])]
    ordered = vals[:, column_order(vals)]
    _check_rows(ordered)
    lin =interp_uniform(icrfs, ordered)  # (K, m, n)
    first, last = lin[..., 0], lin[..., -1]
    t_first = first.mean(axis=1)
    t_last = last.mean(axis=1)
    span = last - first
    bad = np.any(span == 0, axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        alpha = (t_last - t_first)[:, None] / span
        beta = t_first[:, None] - alpha * first
        aligned = alpha[..., None] * lin + beta[..., None]
        if params.normalise:
            width = t_last - t_first
            bad |= width == 0
            aligned = (aligned - t_first[:, None, None]) / width[:, None, None]
    mean_ccp = aligned.mean(axis=1, keepdims=True)
    d = np.abs(aligned - mean_ccp)
    dbar = d.mean(axis=1)
    bad |= ~np.all(np.isfinite(dbar), axis=1)
    dbar = np.where(bad[:, None], 0.0, dbar)
    eta = _eta(dbar, np.where(bad[:, None, None], 0.0, d), params)
    phi = dbar.max(axis=1) + dbar.min(axis=1) - 1.0
    mu = dbar.sum(axis=1)
    return eta, phi, mu, dbar, bad


def evaluate_batch(ccps, icrfs, params: BoldParams = BoldParams()):
    """Score a batch of candidate inverse curves.

    ``ccps`` is one CCP matrix or a sequence of per-channel matrices (their
    components are averaged across channels). ``icrfs`` is ``(K, S)``.
    Returns ``(bold, eta, phi, mu, dbar)`` arrays; candidates that collapse
    an alignment anchor get an infinite score.
    """
    mats = _channel_stack(ccps)
    icrfs = np.atleast_2d(np.asarray(icrfs, dtype=float))
    parts = [_channel_batch(v, icrfs, params) for v in mats]
    eta = np.mean([p[0] for p in parts], axis=0)
    phi = np.mean([p[1] for p in parts], axis=0)
    mu = np.mean([p[2] for p in parts], axis=0)
    bad = np.any([p[4] for p in parts], axis=0)
    n_set = {p[3].shape[1] for p in parts}
    dbar = np.mean([p[3] for p in parts], axis=0) if len(n_set) == 1 else parts[0][3]
    bold = np.where(bad, np.inf, _combine(eta, phi, mu, params))
    return bold, eta, phi, mu, dbar


def evaluate_candidate(ccps, icrf: ResponseCurve, params: BoldParams = BoldParams()) -> BoldBreakdown:
    """BoLD breakdown of a single candidate inverse response curve.

    For a channel stack the returned breakdown averages the per-channel
    components; the per-channel breakdowns are kept in ``channels``.
    """
    samples = np.asarray(getattr(icrf, "samples", icrf), dtype=float)
    mats = _channel_stack(ccps)
    per_channel = []
    for vals in mats:
        eta, phi, mu, dbar, bad = _channel_batch(vals, samples[None, :], params)
        b = np.inf if bad[0] else float(_combine(eta[0], phi[0], mu[0], params))
        per_channel.append(BoldBreakdown(b, float(eta[0]), float(phi[0]), float(mu[0]), dbar[0]))
    if len(per_channel) == 1:
        return per_channel[0]
    bold, eta, phi, mu, dbar = evaluate_batch(mats, samples[None, :], params)
    return BoldBreakdown(
        float(bold[0]), float(eta[0]), float(phi[0]), float(mu[0]), dbar[0], tuple(per_channel)
    )


def write_distance_csv(breakdown: BoldBreakdown, path, label: str = "candidate"):
    """Dump ``(column index, mean distance)`` rows for plotting."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["candidate", "column", "mean_distance"])
        for i, v in enumerate(breakdown.mean_distance_curve):
            w.writerow([label, i, repr(float(v))])


def channel_matrices(rows: Sequence[Sequence], channels=("R", "G", "B")) -> list:
    """Per-channel CCP matrices from per-image lists of :class:`ColorPatchSample`."""
    return [CcpMatrix.from_samples(rows, ch) for ch in channels]
