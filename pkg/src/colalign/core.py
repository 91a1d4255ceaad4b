"""Colour and response-curve primitives used throughout the package.

Images are float RGB rasters in [0, 1]. Response curves are sampled on a
uniform grid over [0, 1]; every curve evaluation is piecewise linear.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import (
    BoundsError,
    DegenerateRegionError,
    DimensionError,
    DomainError,
    MonotonicityError,
    ValidationError,
    ZeroIntensityError,
)

DEFAULT_SAMPLES = 1024
ENDPOINT_TOL = 1e-6


def _frozen(a, dtype=float):
    arr = np.array(a, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class ImageBuffer:
    """Floating-point RGB raster of shape ``(height, width, 3)``.

    Values are clamped into [0, 1] on construction so every buffer handed
    around satisfies the range invariant.
    """

    pixels: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.pixels, dtype=float)
        if arr.ndim != 3 or arr.shape[2] != 3:
            raise DimensionError(f"expected (H, W, 3) pixels, got {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValidationError("image contains non-finite values")
        object.__setattr__(self, "pixels", _frozen(np.clip(arr, 0.0, 1.0)))

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @classmethod
    def from_uint8(cls, data) -> "ImageBuffer":
        return cls(np.asarray(data, dtype=float) / 255.0)

    def to_uint8(self) -> np.ndarray:
        return np.round(self.pixels * 255.0).astype(np.uint8)


@dataclass(frozen=True)
class PatchAnnotation:
    """Axis-aligned patch rectangle ``(x, y, w, h)`` in pixel coordinates."""

    image_id: str
    patch_id: int
    rect: tuple

    def __post_init__(self):
        if len(self.rect) != 4:
            raise DimensionError("rect must be [x, y, w, h]")
        object.__setattr__(self, "rect", tuple(int(v) for v in self.rect))

    def check_bounds(self, image: ImageBuffer):
        x, y, w, h = self.rect
        if w <= 0 or h <= 0:
            raise DegenerateRegionError(f"patch {self.patch_id} of {self.image_id!r} has zero area")
        if x < 0 or y < 0 or x + w > image.width or y + h > image.height:
            raise BoundsError(
                f"patch {self.patch_id} rect {self.rect} outside "
                f"{image.width}x{image.height} image {self.image_id!r}"
            )


@dataclass(frozen=True)
class ColorPatchSample:
    rgb: tuple
    intensity: float
    chroma_r: float
    chroma_b: float

    @classmethod
    def from_rgb(cls, rgb) -> "ColorPatchSample":
        rgb = tuple(float(v) for v in rgb)
        try:
            r, b = chromaticity(rgb)
        except ZeroIntensityError:
            # black patch: report neutral chromaticity
            r = b = 1.0 / 3.0
        return cls(rgb=rgb, intensity=sum(rgb) / 3.0, chroma_r=r, chroma_b=b)


@dataclass(frozen=True, eq=False)
class CcpMatrix:
    """``m x n`` corresponding-colour-patch matrix for one scalar channel.

    Rows are images, columns are patches. ``channel`` names what each cell
    holds (``"intensity"``, ``"R"``, ``"G"``, ``"B"``, ``"r"`` or ``"b"``).
    """

    values: np.ndarray
    channel: str = "intensity"

    def __post_init__(self):
        arr = np.asarray(self.values, dtype=float)
        if arr.ndim != 2:
            raise DimensionError(f"CCP matrix must be 2-D, got shape {arr.shape}")
        if arr.size == 0:
            raise DimensionError("CCP matrix is empty")
        if not np.all(np.isfinite(arr)):
            raise ValidationError("CCP matrix contains non-finite entries")
        if self.channel in ("intensity", "R", "G", "B") and (arr.min() < 0 or arr.max() > 1):
            raise ValidationError(f"{self.channel} CCP entries must lie in [0, 1]")
        object.__setattr__(self, "values", _frozen(arr))

    @property
    def m(self) -> int:
        return self.values.shape[0]

    @property
    def n(self) -> int:
        return self.values.shape[1]

    @classmethod
    def from_samples(cls, rows: Sequence[Sequence[ColorPatchSample]], channel="intensity"):
        """Build a matrix from per-image lists of patch samples."""
        getters = {
            "intensity": lambda s: s.intensity,
            "R": lambda s: s.rgb[0],
            "G": lambda s: s.rgb[1],
            "B": lambda s: s.rgb[2],
            "r": lambda s: s.chroma_r,
            "b": lambda s: s.chroma_b,
        }
        if channel not in getters:
            raise ValidationError(f"unknown channel {channel!r}")
        lengths = {len(r) for r in rows}
        if len(lengths) != 1:
            raise DimensionError(f"rows have differing patch counts {sorted(lengths)}")
        get = getters[channel]
        return cls(np.array([[get(s) for s in row] for row in rows]), channel)


def uniform_grid(count: int = DEFAULT_SAMPLES) -> np.ndarray:
    return np.linspace(0.0, 1.0, count)


@dataclass(frozen=True, eq=False)
class ResponseCurve:
    """Monotone map on [0, 1] sampled at ``len(samples)`` uniform abscissae.

    With ``check=False`` only shape, finiteness and range are enforced; this
    is used for intermediate reconstructions that the optimiser later repairs.
    """

    samples: np.ndarray
    name: str = ""
    check: bool = field(default=True, repr=False)

    def __post_init__(self):
        arr = np.asarray(self.samples, dtype=float)
        if arr.ndim != 1 or arr.size < 2:
            raise DimensionError("curve samples must be a 1-D sequence of length >= 2")
        if not np.all(np.isfinite(arr)):
            raise ValidationError(f"curve {self.name!r} has non-finite samples")
        if arr.min() < -ENDPOINT_TOL or arr.max() > 1 + ENDPOINT_TOL:
            raise ValidationError(f"curve {self.name!r} leaves [0, 1]")
        if self.check:
            if np.any(np.diff(arr) < 0):
                raise MonotonicityError(f"curve {self.name!r} is not monotone non-decreasing")
            if abs(arr[0]) > ENDPOINT_TOL or abs(arr[-1] - 1) > ENDPOINT_TOL:
                raise ValidationError(
                    f"curve {self.name!r} endpoints ({arr[0]:.3g}, {arr[-1]:.3g}) are not (0, 1)"
                )
        object.__setattr__(self, "samples", _frozen(np.clip(arr, 0.0, 1.0)))

    def __len__(self):
        return self.samples.size

    @property
    def grid(self) -> np.ndarray:
        return uniform_grid(self.samples.size)

    def __call__(self, x):
        return eval_curve(self, x)

    @classmethod
    def identity(cls, count: int = DEFAULT_SAMPLES) -> "ResponseCurve":
        return cls(uniform_grid(count), "identity")

    @classmethod
    def gamma(cls, exponent: float, count: int = DEFAULT_SAMPLES) -> "ResponseCurve":
        """Samples of ``t ** exponent``."""
        return cls(uniform_grid(count) ** exponent, f"gamma-{exponent:g}")


@dataclass(frozen=True, eq=False)
class EmorBasis:
    """Mean curve plus ``k`` eigenvector curves, all on the same grid."""

    mean: np.ndarray
    eigenvectors: np.ndarray
    kind: str = "inverse"

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=float)
        vecs = np.atleast_2d(np.asarray(self.eigenvectors, dtype=float))
        if self.kind not in ("forward", "inverse"):
            raise ValidationError(f"basis kind must be forward or inverse, got {self.kind!r}")
        if mean.ndim != 1 or vecs.shape[1] != mean.size:
            raise DimensionError(
                f"eigenvectors {vecs.shape} do not match mean curve of {mean.size} samples"
            )
        if vecs.shape[0] < 1:
            raise DimensionError("basis needs at least one eigenvector")
        object.__setattr__(self, "mean", _frozen(mean))
        object.__setattr__(self, "eigenvectors", _frozen(vecs))

    @property
    def k(self) -> int:
        return self.eigenvectors.shape[0]

    @property
    def samples(self) -> int:
        return self.mean.size

    def truncated(self, k: int) -> "EmorBasis":
        if not 1 <= k <= self.k:
            raise DimensionError(f"cannot truncate a {self.k}-vector basis to k={k}")
        return EmorBasis(self.mean, self.eigenvectors[:k], self.kind)

    def project(self, curve) -> np.ndarray:
        """Least-squares coefficients of ``curve - mean`` on the eigenvectors."""
        y = np.asarray(getattr(curve, "samples", curve), dtype=float) - self.mean
        theta, *_ = np.linalg.lstsq(self.eigenvectors.T, y, rcond=None)
        return theta


@dataclass(frozen=True, eq=False)
class EmorCoefficients:
    theta: np.ndarray

    def __post_init__(self):
        arr = np.atleast_1d(np.asarray(self.theta, dtype=float))
        if arr.ndim != 1 or not np.all(np.isfinite(arr)):
            raise ValidationError("theta must be a finite 1-D vector")
        object.__setattr__(self, "theta", _frozen(arr))

    def __len__(self):
        return self.theta.size


def chromaticity(rgb) -> tuple:
    """Blue-and-red chromaticity ``(R/(R+G+B), B/(R+G+B))``."""
    r, g, b = (float(v) for v in rgb)
    total = r + g + b
    if total <= 0:
        raise ZeroIntensityError(f"chromaticity undefined for zero-sum colour {rgb!r}")
    return r / total, b / total


def extract_patch(image: ImageBuffer, annotation: PatchAnnotation, trim: float = 0.0) -> ColorPatchSample:
    """Average the pixels of an annotated region.

    ``trim`` discards that fraction of pixels from each tail (per channel)
    before averaging; 0 gives the plain mean.
    """
    annotation.check_bounds(image)
    x, y, w, h = annotation.rect
    region = image.pixels[y:y + h, x:x + w].reshape(-1, 3)
    if trim > 0:
        if not 0 <= trim < 0.5:
            raise ValidationError("trim fraction must lie in [0, 0.5)")
        cut = int(region.shape[0] * trim)
        srt = np.sort(region, axis=0)
        region = srt[cut:region.shape[0] - cut] if cut else srt
    return ColorPatchSample.from_rgb(region.mean(axis=0))


def interp_uniform(samples: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Piecewise-linear evaluation of uniformly sampled curve(s).

    ``samples`` is ``(S,)`` or a batch ``(K, S)``; for a batch the result has
    shape ``(K,) + x.shape``. ``x`` must already lie in [0, 1].
    """
    samples = np.asarray(samples, dtype=float)
    x = np.asarray(x, dtype=float)
    count = samples.shape[-1]
    pos = x * (count - 1)
    lo = np.clip(np.floor(pos).astype(np.intp), 0, count - 2)
    frac = pos - lo
    if samples.ndim == 1:
        return samples[lo] + frac * (samples[lo + 1] - samples[lo])
    left = samples[:, lo]
    right = samples[:, lo + 1]
    return left + frac * (right - left)


def eval_curve(curve: ResponseCurve, x):
    """Evaluate ``curve`` at ``x`` by linear interpolation; no extrapolation."""
    xa = np.asarray(x, dtype=float)
    if np.any(~np.isfinite(xa)) or np.any(xa < 0) or np.any(xa > 1):
        raise DomainError("curve input must lie in [0, 1]")
    out = np.interp(xa, curve.grid, curve.samples)
    return float(out) if np.ndim(out) == 0 else out


def invert_curve(curve: ResponseCurve, name: str | None = None) -> ResponseCurve:
    """Numerical inverse of a monotone curve on the same uniform grid.

    Runs of equal samples are collapsed to their midpoint abscissa before
    interpolating, so flat stretches invert to the centre of the stretch.
    """
    y = np.asarray(curve.samples, dtype=float)
    if np.any(np.diff(y) < 0):
        raise MonotonicityError(f"cannot invert non-monotone curve {curve.name!r}")
    x = curve.grid
    change = np.flatnonzero(np.diff(y) > 0)
    starts = np.concatenate([[0], change + 1])
    ends = np.concatenate([change, [y.size - 1]])
    yu = y[starts]
    xu = 0.5 * (x[starts] + x[ends])
    if yu.size < 2:
        raise MonotonicityError(f"curve {curve.name!r} is constant")
    xu[0], xu[-1] = 0.0, 1.0
    inv = np.interp(x, yu, xu)
    inv[0], inv[-1] = 0.0, 1.0
    return ResponseCurve(inv, name if name is not None else f"inverse({curve.name})")


def emor_reconstruct(basis: EmorBasis, theta) -> ResponseCurve:
    """Mean curve plus the theta-weighted eigenvectors, clamped to [0, 1].

    Monotonicity is not enforced, so the result is an unchecked curve.
    """
    raw = emor_samples(basis, theta)
    return ResponseCurve(np.clip(raw, 0.0, 1.0), "emor", check=False)


def emor_samples(basis: EmorBasis, theta) -> np.ndarray:
    """Unclamped ``mean + theta @ eigenvectors``; accepts a ``(K, k)`` batch."""
    theta = np.asarray(getattr(theta, "theta", theta), dtype=float)
    if theta.shape[-1:] != (basis.k,) or theta.ndim > 2:
        raise DimensionError(f"theta has shape {theta.shape}, basis has k={basis.k}")
    return basis.mean + theta @ basis.eigenvectors
