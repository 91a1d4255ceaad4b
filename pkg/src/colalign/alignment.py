"""Response linearisation and pixel-wise linear colour matching.

Matching works on the raw channel sum ``I = R + G + B`` and the red/blue
chromaticities ``r = R / I``, ``b = B / I``. Coefficients are fitted on
corresponding patches and then applied to every pixel in two stages: an
intensity stage that keeps chromaticity fixed and a chromaticity stage that
keeps the channel sum fixed. Clamping happens once, at the very end.
"""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .bold import channel_matrices
from .core import (
    ColorPatchSample,
    ImageBuffer,
    ResponseCurve,
    extract_patch,
    interp_uniform,
)
from .errors import (
    DegenerateRegressionError,
    DimensionError,
    InsufficientDataError,
    ValidationError,
)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class MatchCoefficients:
    alpha_i: float = 1.0
    beta_i: float = 0.0
    alpha_r: float = 1.0
    beta_r: float = 0.0
    alpha_b: float = 1.0
    beta_b: float = 0.0

    def __post_init__(self):
        if not all(np.isfinite(v) for v in asdict(self).values()):
            raise ValidationError("match coefficients must be finite")
        if self.alpha_i <= 0:
            log.warning("intensity scale %.4g is not positive; match flips orientation", self.alpha_i)

    def to_json(self) -> dict:
        return {k: float(v) for k, v in asdict(self).items()}

    @classmethod
    def from_json(cls, doc: dict) -> "MatchCoefficients":
        return cls(**{k: float(doc[k]) for k in asdict(cls()).keys()})


def extract_ccps(image: ImageBuffer, annotations: Sequence, trim: float = 0.0) -> list:
    """Patch samples in annotation order; patch ids must be unique."""
    ids = [a.patch_id for a in annotations]
    if len(set(ids)) != len(ids):
        raise ValidationError("duplicate patch ids in annotations")
    return [extract_patch(image, a, trim) for a in annotations]


def collect_ccps(images: Sequence[ImageBuffer], annotations: Sequence[Sequence], trim: float = 0.0) -> list:
    """Per-image patch sample rows, aligned by patch id."""
    if len(images) != len(annotations):
        raise DimensionError("one annotation list per image is required")
    rows = []
    reference = None
    for img, anns in zip(images, annotations):
        anns = sorted(anns, key=lambda a: a.patch_id)
        ids = [a.patch_id for a in anns]
        if reference is None:
            reference = ids
        elif ids != reference:
            raise DimensionError("images are annotated with different patch ids")
        rows.append(extract_ccps(img, anns, trim))
    return rows


def scene_ccps(scene, channels=("R", "G", "B")) -> list:
    """Per-channel CCP matrices of a synthetic scene."""
    rows = collect_ccps(scene.images, [scene.annotations[i] for i in scene.image_ids])
    return channel_matrices(rows, channels)


def linearise_image(image: ImageBuffer, icrf: ResponseCurve, per_channel: bool = True) -> ImageBuffer:
    """Map pixel values through the inverse response curve.

    With ``per_channel=False`` only the mean intensity ``(R+G+B)/3`` goes
    through the curve and each pixel is rescaled by the resulting gain,
    which keeps its chromaticity.
    """
    px = image.pixels
    if per_channel:
        return ImageBuffer(interp_uniform(icrf.samples, px))
    inten = px.mean(axis=2)
    lin = interp_uniform(icrf.samples, inten)
    with np.errstate(invalid="ignore", divide="ignore"):
        gain = np.where(inten > 0, lin / inten, 0.0)
    return ImageBuffer(px * gain[..., None])


def _ols(x: np.ndarray, y: np.ndarray, what: str):
    xc = x - x.mean()
    sxx = float(xc @ xc)
    if sxx <= 1e-24 * max(1.0, float(x @ x)):
        raise DegenerateRegressionError(f"{what} of the source patches has zero variance")
    alpha = float(xc @ (y - y.mean())) / sxx
    return alpha, float(y.mean() - alpha * x.mean())


def _sample_arrays(samples: Sequence[ColorPatchSample]):
    rgb = np.array([s.rgb for s in samples], dtype=float)
    inten = rgb.sum(axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        r = np.where(inten > 0, rgb[:, 0] / inten, 1.0 / 3.0)
        b = np.where(inten > 0, rgb[:, 2] / inten, 1.0 / 3.0)
    return inten, r, b


def fit_linear_match(source: Sequence[ColorPatchSample], target: Sequence[ColorPatchSample]) -> MatchCoefficients:
    """Least-squares target-on-source fits for intensity sum, r and b."""
    if len(source) != len(target):
        raise DimensionError(f"{len(source)} source patches but {len(target)} target patches")
    if len(source) < 2:
        raise InsufficientDataError("at least two corresponding patches are needed")
    si, sr, sb = _sample_arrays(source)
    ti, tr, tb = _sample_arrays(target)
    ai, bi = _ols(si, ti, "intensity")
    ar, br = _ols(sr, tr, "red chromaticity")
    ab, bb = _ols(sb, tb, "blue chromaticity")
    return MatchCoefficients(ai, bi, ar, br, ab, bb)


def intensity_stage(rgb: np.ndarray, coeffs: MatchCoefficients) -> np.ndarray:
    """Scale by alpha_I and share the beta_I offset in proportion to each channel."""
    rgb = np.asarray(rgb, dtype=float)
    total = rgb.sum(axis=-1, keepdims=True)
    scaled = coeffs.alpha_i * rgb
    with np.errstate(invalid="ignore", divide="ignore"):
        share = np.where(total > 0, rgb / total, 0.0)
    out = scaled + coeffs.beta_i * share
    return np.where(total > 0, out, rgb)


def chromaticity_stage(rgb: np.ndarray, coeffs: MatchCoefficients) -> np.ndarray:
    """Rewrite r and b linearly; green takes the remainder so R+G+B is kept."""
    rgb = np.asarray(rgb, dtype=float)
    total = rgb.sum(axis=-1)
    pos = total > 0
    safe = np.where(pos, total, 1.0)
    r = coeffs.alpha_r * rgb[..., 0] / safe + coeffs.beta_r
    b = coeffs.alpha_b * rgb[..., 2] / safe + coeffs.beta_b
    red = r * total
    blue = b * total
    green = total - red - blue
    out = np.stack([red, green, blue], axis=-1)
    return np.where(pos[..., None], out, rgb)


def modify_pixels(rgb: np.ndarray, coeffs: MatchCoefficients) -> np.ndarray:
    """Both stages without the final clamp."""
    return chromaticity_stage(intensity_stage(rgb, coeffs), coeffs)


def apply_colour_modification(image: ImageBuffer, coeffs: MatchCoefficients) -> ImageBuffer:
    """Apply the matched intensity and chromaticity maps to every pixel.

    Pixels with a zero channel sum pass through unchanged.
    """
    return ImageBuffer(np.clip(modify_pixels(image.pixels, coeffs), 0.0, 1.0))


def match_images(source: ImageBuffer, target: ImageBuffer, source_anns: Sequence, target_anns: Sequence,
                 trim: float = 0.0):
    """Fit source-to-target coefficients on the annotated patches and apply them."""
    if len(source_anns) != len(target_anns):
        raise DimensionError(f"{len(source_anns)} source annotations but {len(target_anns)} target annotations")
    src = extract_ccps(source, source_anns, trim)
    tgt = extract_ccps(target, target_anns, trim)
    coeffs = fit_linear_match(src, tgt)
    return apply_colour_modification(source, coeffs), coeffs


def save_match(image: ImageBuffer, coeffs: MatchCoefficients, path, **extra):
    """Write the corrected PNG and a JSON sidecar with the coefficients."""
    from .io import write_image

    path = Path(path)
    write_image(image, path)
    sidecar = path.with_suffix(".json")
    sidecar.write_text(json.dumps({**extra, "coefficients": coeffs.to_json()}, indent=1))
    return sidecar
