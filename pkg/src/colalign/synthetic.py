"""Synthetic scenes with known ground truth, plus surrogate reference data.

Image formation is collapsed to ``value = crf(clip(gain * reflectance + noise))``
per channel: illumination and sensor sensitivity become one positive gain per
image and channel, noise is Gaussian in the linear domain, and each patch is a
uniform rectangle on a fixed grid.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .bold import BoldParams
from .core import (
    DEFAULT_SAMPLES,
    EmorBasis,
    ImageBuffer,
    PatchAnnotation,
    ResponseCurve,
    interp_uniform,
    invert_curve,
    uniform_grid,
)
from .errors import ValidationError
from .reference import DorfDatabase, format_dorf, format_emor

PATCH_SIZE = 8
PATCH_GAP = 2
GRID_COLUMNS = 6
BACKGROUND = 0.5


@dataclass(frozen=True, eq=False)
class SyntheticSceneSpec:
    """Everything needed to render one calibration set."""

    gains: np.ndarray  # (m, 3)
    reflectances: np.ndarray  # (n, 3)
    crf: ResponseCurve
    noise_sigma: float = 0.0
    seed: int = 0
    patch_size: int = PATCH_SIZE
    columns: int = GRID_COLUMNS

    def __post_init__(self):
        gains = np.atleast_2d(np.asarray(self.gains, dtype=float))
        refl = np.atleast_2d(np.asarray(self.reflectances, dtype=float))
        if gains.shape[1] != 3 or refl.shape[1] != 3:
            raise ValidationError("gains and reflectances must be RGB triples")
        if np.any(gains <= 0) or not np.all(np.isfinite(gains)):
            raise ValidationError("illumination gains must be positive")
        if np.any(refl < 0) or np.any(refl > 1):
            raise ValidationError("reflectances must lie in [0, 1]")
        if not self.noise_sigma >= 0:
            raise ValidationError("noise sigma must be >= 0")
        if self.patch_size < 1 or self.columns < 1:
            raise ValidationError("patch size and grid columns must be positive")
        object.__setattr__(self, "gains", gains)
        object.__setattr__(self, "reflectances", refl)

    @property
    def m(self) -> int:
        return self.gains.shape[0]

    @property
    def n(self) -> int:
        return self.reflectances.shape[0]


@dataclass(frozen=True, eq=False)
class SyntheticScene:
    images: list
    annotations: dict  # image id -> list of PatchAnnotation
    linear: np.ndarray  # (m, n, 3) noise-free linear patch values
    observed_linear: np.ndarray  # (m, n, 3) after noise, before the CRF
    crf: ResponseCurve
    image_ids: list = field(default_factory=list)

    @property
    def icrf(self) -> ResponseCurve:
        return invert_curve(self.crf)


def chart_reflectances(n: int, rng: np.random.Generator, lo: float = 0.02, hi: float = 1.0,
                       layout: str = "stratified") -> np.ndarray:
    """Chart reflectances, ``(n, 3)``.

    ``stratified`` spreads each channel evenly over ``[lo, hi]`` and shuffles
    the channels independently; ``uniform`` draws i.i.d. values; ``chart``
    mimics a test chart, with a row of neutral greys from ``lo`` to ``hi``
    (the last ``min(6, n // 4)`` patches) after stratified colourful patches.
    """
    if layout == "chart":
        k = min(6, n // 4)
        colour = chart_reflectances(n - k, rng, lo, hi, "stratified")
        greys = np.repeat(np.linspace(hi, lo, k)[:, None], 3, axis=1)
        return np.vstack([colour, greys])
    if layout == "stratified":
        levels = np.linspace(lo, hi, n)
        return np.stack([rng.permutation(levels) for _ in range(3)], axis=1)
    if layout == "uniform":
        return rng.uniform(lo, hi, (n, 3))
    raise ValidationError(f"unknown reflectance layout {layout!r}")


def random_gains(m: int, rng: np.random.Generator, lo: float = 0.3, hi: float = 1.0) -> np.ndarray:
    return rng.uniform(lo, hi, (m, 3))


def make_spec(crf: ResponseCurve, m: int = 8, n: int = 24, sigma: float = 0.005, seed: int = 0,
              gain_range=(0.3, 1.0), layout: str = "stratified") -> SyntheticSceneSpec:
    """Random gains and chart drawn from ``seed``."""
    rng = np.random.default_rng(seed)
    gains = random_gains(m, rng, *gain_range)
    refl = chart_reflectances(n, rng, layout=layout)
    return SyntheticSceneSpec(gains, refl, crf, sigma, seed)


def generate_camera_set(crfs, m: int = 6, n: int = 24, sigma: float = 0.005, seed: int = 0,
                        gain_range=(0.3, 1.0), sensitivity_range=(0.7, 1.0),
                        layout: str = "chart") -> list:
    """One scene per camera: shared chart and illuminants, per-camera response.

    Each camera sees the same ``m`` illuminants and chart; its own channel
    sensitivities multiply the illuminant gains and its own response curve
    renders the values. Noise is drawn independently per camera.
    """
    root = np.random.SeedSequence(seed)
    shared, *cams = root.spawn(len(crfs) + 1)
    rng = np.random.default_rng(shared)
    illum = random_gains(m, rng, *gain_range)
    refl = chart_reflectances(n, rng, layout=layout)
    scenes = []
    for crf, child in zip(crfs, cams):
        crng = np.random.default_rng(child)
        sens = crng.uniform(*sensitivity_range, 3)
        spec = SyntheticSceneSpec(illum * sens, refl, crf, sigma, int(crng.integers(2 ** 31)))
        scenes.append(generate_scene(spec))
    return scenes


def patch_rects(n: int, patch_size: int = PATCH_SIZE, columns: int = GRID_COLUMNS) -> list:
    pitch = patch_size + PATCH_GAP
    return [
        (PATCH_GAP + (j % columns) * pitch, PATCH_GAP + (j // columns) * pitch, patch_size, patch_size)
        for j in range(n)
    ]


def generate_scene(spec: SyntheticSceneSpec) -> SyntheticScene:
    rng = np.random.default_rng(spec.seed)
    linear = np.clip(spec.gains[:, None, :] * spec.reflectances[None, :, :], 0.0, 1.0)
    noisy = linear
    if spec.noise_sigma > 0:
        noisy = np.clip(linear + rng.normal(0.0, spec.noise_sigma, linear.shape), 0.0, 1.0)
    values = interp_uniform(spec.crf.samples, noisy)

    rects = patch_rects(spec.n, spec.patch_size, spec.columns)
    pitch = spec.patch_size + PATCH_GAP
    width = PATCH_GAP + min(spec.n, spec.columns) * pitch
    height = PATCH_GAP + -(-spec.n // spec.columns) * pitch
    images, annotations, ids = [], {}, []
    for i in range(spec.m):
        image_id = f"img{i:03d}"
        canvas = np.full((height, width, 3), BACKGROUND)
        anns = []
        for j, (x, y, w, h) in enumerate(rects):
            canvas[y:y + h, x:x + w] = values[i, j]
            anns.append(PatchAnnotation(image_id, j, (x, y, w, h)))
        images.append(ImageBuffer(canvas))
        annotations[image_id] = anns
        ids.append(image_id)
    return SyntheticScene(images, annotations, linear, noisy, spec.crf, ids)


def save_scene(scene: SyntheticScene, directory, metadata: dict | None = None) -> Path:
    """Write PNGs, ``annotations.json`` and ``truth.json`` into ``directory``."""
    from .io import save_annotations, write_image

    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    for image_id, image in zip(scene.image_ids, scene.images):
        write_image(image, out / f"{image_id}.png", metadata)
    save_annotations(scene.annotations, out / "annotations.json")
    truth = {
        **(metadata or {}),
        "crf": {"name": scene.crf.name, "samples": [float(v) for v in scene.crf.samples]},
        "linear": scene.linear.tolist(),
    }
    (out / "truth.json").write_text(json.dumps(truth))
    return out


# -- surrogate reference data ------------------------------------------------

def surrogate_dorf_curves(count: int = 201, samples: int = DEFAULT_SAMPLES, seed: int = 0) -> list:
    """Forward response curves drawn from five parametric families.

    Stand-in for the measured database when it is not available: power laws,
    power laws with a linear toe, varying-exponent power laws, film-like
    logistic curves and power laws with a soft highlight shoulder.
    """
    rng = np.random.default_rng(seed)
    x = uniform_grid(samples)
    families = ("gamma", "toe", "varexp", "film", "knee")
    curves = []
    for i in range(count):
        fam = families[i % 5]
        if fam == "gamma":
            y = x ** (1 / rng.uniform(1.0, 3.0))
        elif fam == "toe":
            g, k = rng.uniform(1.6, 2.8), rng.uniform(0.002, 0.02)
            y = np.where(x < k, x / k * k ** (1 / g), x ** (1 / g))
        elif fam == "varexp":
            a, b = rng.uniform(0.3, 0.9), rng.uniform(-0.3, 0.3)
            y = x ** np.clip(a + b * x, 0.2, 1.5)
        elif fam == "film":
            c, e0 = rng.uniform(2, 6), rng.uniform(0.05, 0.5)
            with np.errstate(divide="ignore"):
                y = 1 / (1 + (e0 / x) ** (0.5 * c))
        else:
            g, kn = rng.uniform(1.2, 2.6), rng.uniform(0.5, 0.9)
            y = x ** (1 / g)
            y = np.where(y > kn, kn + (1 - kn) * np.tanh((y - kn) / (1 - kn) * 1.3) / np.tanh(1.3), y)
        y = np.maximum.accumulate(y)
        y = (y - y[0]) / (y[-1] - y[0])
        curves.append(ResponseCurve(y, f"surrogate-{fam}-{i:03d}"))
    return curves


def build_emor_basis(curves, k: int = 11, kind: str = "inverse") -> EmorBasis:
    """Mean curve plus the leading ``k`` principal directions of ``curves``."""
    data = np.stack([np.asarray(getattr(c, "samples", c), dtype=float) for c in curves])
    mean = data.mean(axis=0)
    _, _, vt = np.linalg.svd(data - mean, full_matrices=False)
    vecs = vt[:k]
    # deterministic sign: largest-magnitude entry positive
    signs = np.sign(vecs[np.arange(vecs.shape[0]), np.argmax(np.abs(vecs), axis=1)])
    return EmorBasis(mean, vecs * signs[:, None], kind)


def write_surrogate_reference(directory, count: int = 201, samples: int = DEFAULT_SAMPLES,
                              seed: int = 0, k: int = 11) -> dict:
    """Write ``dorf.txt``, ``emor.txt`` and ``invemor.txt``; returns their paths."""
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    forward = surrogate_dorf_curves(count, samples, seed)
    inverse = [invert_curve(c) for c in forward]
    paths = {"dorf": out / "dorf.txt", "emor": out / "emor.txt", "invemor": out / "invemor.txt"}
    paths["dorf"].write_text(format_dorf(forward))
    paths["emor"].write_text(format_emor(build_emor_basis(forward, k, "forward")))
    paths["invemor"].write_text(format_emor(build_emor_basis(inverse, k, "inverse")))
    return paths


def surrogate_database(count: int = 201, samples: int = DEFAULT_SAMPLES, seed: int = 0) -> DorfDatabase:
    return DorfDatabase(tuple(surrogate_dorf_curves(count, samples, seed)))


# -- recovery study ------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class RecoveryReport:
    deviations: np.ndarray
    true_indices: np.ndarray
    chosen_indices: np.ndarray
    seconds: np.ndarray
    tolerance: float
    root_seed: int

    @property
    def fraction(self) -> float:
        return float(np.mean(self.deviations <= self.tolerance))

    def to_json(self) -> dict:
        return {
            "root_seed": self.root_seed,
            "tolerance": self.tolerance,
            "fraction_within_tolerance": self.fraction,
            "median_deviation": float(np.median(self.deviations)),
            "max_seconds": float(self.seconds.max()),
            "trials": [
                {"true": int(t), "chosen": int(c), "deviation": float(d), "seconds": float(s)}
                for t, c, d, s in zip(self.true_indices, self.chosen_indices, self.deviations, self.seconds)
            ],
        }


def recovery_study(dorf: DorfDatabase, trials: int = 20, m: int = 8, n: int = 24,
                   sigma: float = 0.005, seed: int = 0, params: BoldParams = BoldParams(),
                   tolerance: float = 0.02, gain_range=(0.3, 1.0),
                   layout: str = "stratified") -> RecoveryReport:
    """Render scenes through sampled database curves and check Selection recovers them.

    Each trial draws its curve, gains, chart and noise from its own child of
    the root seed, so results do not depend on trial order.
    """
    from .alignment import scene_ccps
    from .calibration import select_icrf

    children = np.random.SeedSequence(seed).spawn(trials)
    devs, true_idx, chosen, secs = [], [], [], []
    for child in children:
        rng = np.random.default_rng(child)
        j = int(rng.integers(len(dorf)))
        spec = SyntheticSceneSpec(
            random_gains(m, rng, *gain_range),
            chart_reflectances(n, rng, layout=layout),
            dorf[j],
            sigma,
            int(rng.integers(2 ** 31)),
        )
        scene = generate_scene(spec)
        t0 = time.perf_counter()
        result = select_icrf(scene_ccps(scene), dorf, params)
        secs.append(time.perf_counter() - t0)
        truth = dorf.inverse_curves[j].samples
        devs.append(float(np.mean(np.abs(result.icrf.samples - truth))))
        true_idx.append(j)
        chosen.append(result.index)
    return RecoveryReport(np.array(devs), np.array(true_idx), np.array(chosen), np.array(secs),
                          tolerance, seed)
