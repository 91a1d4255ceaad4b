"""Colour-difference metrics, handshake evaluation and white-balance baselines."""

from __future__ import annotations

import csv
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from itertools import combinations
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .core import ColorPatchSample, ImageBuffer, chromaticity, interp_uniform
from .errors import (
    DegenerateChannelError,
    DimensionError,
    InsufficientDataError,
    UndefinedRatioError,
    ValidationError,
    ZeroVectorError,
)

RGB_SCALE = 255.0

# sRGB primaries to XYZ, D65 white, 2 degree observer
_SRGB_TO_XYZ = np.array([
    [0.4124564, 0.3575761, 0.1804375],
    [0.2126729, 0.7151522, 0.0721750],
    [0.0193339, 0.1191920, 0.9503041],
])
D65_WHITE = np.array([0.95047, 1.0, 1.08883])


def _rgb_pairs(a, b):
    a = np.atleast_2d(np.asarray(getattr(a, "rgb", a), dtype=float))
    b = np.atleast_2d(np.asarray(getattr(b, "rgb", b), dtype=float))
    if a.shape != b.shape:
        raise DimensionError(f"colour sets differ in shape: {a.shape} vs {b.shape}")
    if a.shape[-1] != 3 or a.shape[0] < 1:
        raise DimensionError("expected one or more RGB triples")
    return a, b


def rmse(a, b) -> float:
    """Root mean squared Euclidean RGB distance, on the 0-255 scale."""
    a, b = _rgb_pairs(a, b)
    return float(np.sqrt(np.mean(np.sum((a - b) ** 2, axis=1)))) * RGB_SCALE


def rae(a, b) -> float:
    """Angle in degrees between RGB vectors; mean angle for sequences."""
    a, b = _rgb_pairs(a, b)
    na = np.linalg.norm(a, axis=1)
    nb = np.linalg.norm(b, axis=1)
    if np.any(na == 0) or np.any(nb == 0):
        raise ZeroVectorError("angular error undefined for a zero colour vector")
    # atan2 form stays accurate for nearly parallel vectors, unlike arccos
    cross = np.linalg.norm(np.cross(a, b), axis=1)
    return float(np.mean(np.degrees(np.arctan2(cross, np.sum(a * b, axis=1)))))


def srgb_to_lab(rgb) -> np.ndarray:
    """sRGB in [0, 1] to CIELAB under D65."""
    c = np.asarray(rgb, dtype=float)
    lin = np.where(c <= 0.04045, c / 12.92, ((c + 0.055) / 1.055) ** 2.4)
    xyz = lin @ _SRGB_TO_XYZ.T / D65_WHITE
    eps, kappa = 216 / 24389, 24389 / 27
    f = np.where(xyz > eps, np.cbrt(xyz), (kappa * xyz + 16) / 116)
    L = 116 * f[..., 1] - 16
    A = 500 * (f[..., 0] - f[..., 1])
    B = 200 * (f[..., 1] - f[..., 2])
    return np.stack([L, A, B], axis=-1)


def delta_e2000_lab(lab1, lab2, kL: float = 1.0, kC: float = 1.0, kH: float = 1.0):
    """CIEDE2000 colour difference between CIELAB colours (vectorised)."""
    lab1 = np.asarray(lab1, dtype=float)
    lab2 = np.asarray(lab2, dtype=float)
    L1, a1, b1 = lab1[..., 0], lab1[..., 1], lab1[..., 2]
    L2, a2, b2 = lab2[..., 0], lab2[..., 1], lab2[..., 2]

    c_bar = 0.5 * (np.hypot(a1, b1) + np.hypot(a2, b2))
    g = 0.5 * (1 - np.sqrt(c_bar ** 7 / (c_bar ** 7 + 25.0 ** 7)))
    a1p, a2p = (1 + g) * a1, (1 + g) * a2
    c1p, c2p = np.hypot(a1p, b1), np.hypot(a2p, b2)
    h1p = np.degrees(np.arctan2(b1, a1p)) % 360
    h2p = np.degrees(np.arctan2(b2, a2p)) % 360
    h1p = np.where((a1p == 0) & (b1 == 0), 0.0, h1p)
    h2p = np.where((a2p == 0) & (b2 == 0), 0.0, h2p)

    dL = L2 - L1
    dC = c2p - c1p
    cprod = c1p * c2p
    dh = h2p - h1p
    dh = np.where(dh > 180, dh - 360, np.where(dh < -180, dh + 360, dh))
    dh = np.where(cprod == 0, 0.0, dh)
    dH = 2 * np.sqrt(cprod) * np.sin(np.radians(dh / 2))

    L_bar = 0.5 * (L1 + L2)
    C_bar = 0.5 * (c1p + c2p)
    hsum = h1p + h2p
    h_bar = np.where(
        cprod == 0,
        hsum,
        np.where(np.abs(h1p - h2p) <= 180, hsum / 2,
                 np.where(hsum < 360, (hsum + 360) / 2, (hsum - 360) / 2)),
    )
    t = (1 - 0.17 * np.cos(np.radians(h_bar - 30)) + 0.24 * np.cos(np.radians(2 * h_bar))
         + 0.32 * np.cos(np.radians(3 * h_bar + 6)) - 0.20 * np.cos(np.radians(4 * h_bar - 63)))
    d_theta = 30 * np.exp(-(((h_bar - 275) / 25) ** 2))
    r_c = 2 * np.sqrt(C_bar ** 7 / (C_bar ** 7 + 25.0 ** 7))
    s_l = 1 + 0.015 * (L_bar - 50) ** 2 / np.sqrt(20 + (L_bar - 50) ** 2)
    s_c = 1 + 0.045 * C_bar
    s_h = 1 + 0.015 * C_bar * t
    r_t = -np.sin(np.radians(2 * d_theta)) * r_c

    tl = dL / (kL * s_l)
    tc = dC / (kC * s_c)
    th = dH / (kH * s_h)
    out = np.sqrt(tl ** 2 + tc ** 2 + th ** 2 + r_t * tc * th)
    return float(out) if out.ndim == 0 else out


def delta_e2000(a, b):
    """CIEDE2000 between sRGB colours (triples or arrays of triples)."""
    return delta_e2000_lab(srgb_to_lab(getattr(a, "rgb", a)), srgb_to_lab(getattr(b, "rgb", b)))


def mean_delta_e2000(a, b) -> float:
    a, b = _rgb_pairs(a, b)
    return float(np.mean(delta_e2000(a, b)))


def br_ratio(sample) -> float:
    """``max(b/r, r/b)`` of a patch sample or RGB triple."""
    if isinstance(sample, ColorPatchSample):
        r, b = sample.chroma_r, sample.chroma_b
        if sum(sample.rgb) <= 0:
            raise UndefinedRatioError("BR ratio undefined for a black patch")
    else:
        r, b = chromaticity(sample)
    if r <= 0 or b <= 0:
        raise UndefinedRatioError(f"BR ratio undefined for chromaticity r={r}, b={b}")
    return max(b / r, r / b)


METRICS: dict[str, Callable] = {"rmse": rmse, "rae": rae, "de2000": mean_delta_e2000}


# -- handshake protocol ----------------------------------------------------------

def identity_pipeline(src: np.ndarray, tgt: np.ndarray, src_cam: int, tgt_cam: int):
    return src, tgt


def _spread_features(c):
    total = c.sum(axis=1)
    safe = np.where(total > 0, total, 1.0)
    feats = np.stack([total, c[:, 0] / safe, c[:, 2] / safe], axis=1)
    span = np.ptp(feats, axis=0)
    return feats / np.where(span > 0, span, 1.0)


def choose_match_patches(src, tgt=None) -> tuple:
    """Pick the two patches that best span intensity and chromaticity.

    A pair scores the smallest of its intensity, r and b separations, each
    relative to that quantity's range over all patches. With ``tgt`` the
    score is the worse of the two sides, and pairs whose intensity order
    differs between the sides are excluded. Lowest indices win ties.
    """
    sides = [np.asarray(src, dtype=float)]
    if tgt is not None:
        sides.append(np.asarray(tgt, dtype=float))
    if sides[0].ndim != 2 or sides[0].shape[0] < 2:
        raise InsufficientDataError("need at least two patches to choose a matching pair")
    score = None
    order = None
    for c in sides:
        f = _spread_features(c)
        diff = f[:, None, :] - f[None, :, :]
        gap = np.abs(diff).min(axis=2)
        score = gap if score is None else np.minimum(score, gap)
        sign = np.sign(diff[..., 0])
        order = sign if order is None else order * sign
    score = np.where(order > 0, score, 0.0) if tgt is not None else score
    i, j = np.unravel_index(np.argmax(np.triu(score, 1)), score.shape)
    return int(i), int(j)


@dataclass(frozen=True, eq=False)
class AlignmentPipeline:
    """Linearise both sides with their camera's inverse curve, then match on a few patches.

    ``icrfs`` holds one curve per camera (``None`` skips linearisation).
    ``match_patches`` are the patch indices used to fit the matching
    coefficients (``"auto"`` chooses them per comparison from the
    linearised colours of both sides); all patches are then modified and compared. With
    ``target_domain`` the matched colours are mapped back through the
    target camera's forward curve so they are compared with the target's
    recorded values, in the same domain as an unaligned comparison;
    otherwise both sides are compared linearised.
    """

    icrfs: Sequence | None = None
    match_patches: tuple | str = "auto"
    target_domain: bool = True

    def __call__(self, src, tgt, src_cam, tgt_cam):
        from .alignment import fit_linear_match, modify_pixels
        from .core import invert_curve

        cs = ct = None
        if self.icrfs is not None:
            cs, ct = self.icrfs[src_cam], self.icrfs[tgt_cam]
        lin_src = interp_uniform(cs.samples, src) if cs is not None else src
        lin_tgt = interp_uniform(ct.samples, tgt) if ct is not None else tgt
        if isinstance(self.match_patches, str):
            idx = list(choose_match_patches(lin_src, lin_tgt))
        else:
            idx = list(self.match_patches)
        coeffs = fit_linear_match(
            [ColorPatchSample.from_rgb(v) for v in lin_src[idx]],
            [ColorPatchSample.from_rgb(v) for v in lin_tgt[idx]],
        )
        matched = np.clip(modify_pixels(lin_src, coeffs), 0.0, 1.0)
        if not self.target_domain:
            return matched, lin_tgt
        if ct is not None:
            matched = interp_uniform(invert_curve(ct).samples, matched)
        return matched, tgt


@dataclass(frozen=True, eq=False)
class HandshakeReport:
    metric: str
    pairwise: np.ndarray  # (c, c) medians, source camera rows, target camera columns
    pooled: np.ndarray
    median: float
    count: int
    within: np.ndarray = field(default_factory=lambda: np.empty(0))
    pairs: list = field(default_factory=list, repr=False)

    def to_json(self, **extra) -> dict:
        return {
            **extra,
            "metric": self.metric,
            "median": self.median,
            "count": self.count,
            "cameras": int(self.pairwise.shape[0]),
            "rgb_scale": RGB_SCALE if self.metric == "rmse" else None,
        }

    def write(self, directory, **extra):
        """``pairwise.csv`` (heatmap), ``pairs.csv`` (per comparison) and ``summary.json``."""
        out = Path(directory)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "pairwise.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            c = self.pairwise.shape[0]
            w.writerow(["source\\target"] + [f"cam{j}" for j in range(c)])
            for i in range(c):
                w.writerow([f"cam{i}"] + [repr(float(v)) for v in self.pairwise[i]])
        with open(out / "pairs.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["source_camera", "source_item", "target_camera", "target_item", "value", "pooled"])
            for row in self.pairs:
                w.writerow(row)
        (out / "summary.json").write_text(json.dumps(self.to_json(**extra), indent=1))


def _as_rgb(item) -> np.ndarray:
    if isinstance(item, np.ndarray):
        arr = item.astype(float)
    else:
        arr = np.array([getattr(s, "rgb", s) for s in item], dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise DimensionError("each CCP set must be a sequence of RGB triples")
    return arr


def handshake_jobs(sizes: Sequence[int]):
    """Comparison jobs ``(src_cam, i, tgt_cam, j, pooled)``.

    Within a camera every unordered pair ``i < j`` is compared once. Across
    cameras ``a != b`` every ``i < j`` compares item ``i`` of ``a`` with item
    ``j`` of ``b``; only ``a < b`` enters the pooled vector, the reverse
    direction fills the other half of the heatmap.
    """
    c = len(sizes)
    jobs = []
    for cam, size in enumerate(sizes):
        for i, j in combinations(range(size), 2):
            jobs.append((cam, i, cam, j, c == 1))
    for a in range(c):
        for b in range(c):
            if a == b:
                continue
            size = min(sizes[a], sizes[b])
            for i, j in combinations(range(size), 2):
                jobs.append((a, i, b, j, a < b))
    return jobs


def handshake_evaluate(groups: Sequence[Sequence], metric: str = "de2000",
                       pipeline: Callable = identity_pipeline, workers: int = 1) -> HandshakeReport:
    """All-pairs comparison of CCP sets, grouped by camera.

    With one camera the pooled vector holds the ``N(N-1)/2`` within-camera
    comparisons; with several cameras of ``m`` items each it holds the
    ``m(m-1)c(c-1)/4`` cross-camera ones.
    """
    if metric not in METRICS:
        raise ValidationError(f"unknown metric {metric!r}; choose from {sorted(METRICS)}")
    sets = [[_as_rgb(it) for it in grp] for grp in groups]
    sizes = [len(g) for g in sets]
    if sum(sizes) < 2 or not sizes:
        raise InsufficientDataError("handshake comparison needs at least two items")
    if len(sizes) > 1 and len(set(sizes)) != 1:
        raise ValidationError(f"cross-camera comparison needs equal item counts, got {sizes}")
    fn = METRICS[metric]
    jobs = handshake_jobs(sizes)

    def run(job):
        a, i, b, j, _ = job
        src, tgt = pipeline(sets[a][i], sets[b][j], a, b)
        return fn(src, tgt)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            values = list(pool.map(run, jobs))
    else:
        values = [run(j) for j in jobs]

    c = len(sizes)
    cells = [[[] for _ in range(c)] for _ in range(c)]
    for (a, _, b, _, _), v in zip(jobs, values):
        cells[a][b].append(v)
    pairwise = np.array([[np.median(cells[a][b]) if cells[a][b] else np.nan for b in range(c)] for a in range(c)])
    pooled = np.array([v for job, v in zip(jobs, values) if job[4]])
    within = np.array([v for job, v in zip(jobs, values) if job[0] == job[2]])
    median = float(np.median(pooled)) if pooled.size else float("nan")
    rows = [(a, i, b, j, repr(float(v)), int(p)) for (a, i, b, j, p), v in zip(jobs, values)]
    return HandshakeReport(metric, pairwise, pooled, median, int(pooled.size), within, rows)


def expected_count(m: int, c: int) -> int:
    """Closed-form pooled size: ``N(N-1)/2`` for one camera, ``m(m-1)c(c-1)/4`` otherwise."""
    if c == 1:
        return m * (m - 1) // 2
    return m * (m - 1) * c * (c - 1) // 4


# -- white-balance baselines ---------------------------------------------------------

def _pixels(image):
    return np.asarray(getattr(image, "pixels", image), dtype=float)


def grey_world_gains(image) -> np.ndarray:
    means = _pixels(image).reshape(-1, 3).mean(axis=0)
    if np.any(means <= 0):
        raise DegenerateChannelError(f"channel mean is zero: {means}")
    return means.mean() / means


def white_patch_gains(image) -> np.ndarray:
    peaks = _pixels(image).reshape(-1, 3).max(axis=0)
    if np.any(peaks <= 0):
        raise DegenerateChannelError(f"channel maximum is zero: {peaks}")
    return 1.0 / peaks


def wb_grey_world(image: ImageBuffer) -> ImageBuffer:
    """Scale channels so each channel mean equals the mean intensity."""
    return ImageBuffer(np.clip(_pixels(image) * grey_world_gains(image), 0.0, 1.0))


def wb_white_patch(image: ImageBuffer) -> ImageBuffer:
    """Scale channels so each channel maximum maps to 1."""
    return ImageBuffer(np.clip(_pixels(image) * white_patch_gains(image), 0.0, 1.0))
