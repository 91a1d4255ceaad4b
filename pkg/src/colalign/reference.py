"""Readers for the DoRF response-curve database and EMoR basis text files.

DoRF layout: repeated records of

    <curve name>
    <curve type>
    I =
    <S ascending irradiance values>
    B =
    <S brightness values>

The ``I =`` / ``B =`` marker lines are optional; without them the
irradiance and brightness vectors are the next two numeric lines.

EMoR layout: named blocks ``E =``, ``f0 =`` (``g0 =`` for the inverse
model) and ``h(1)=`` ... ``h(k)=`` (``hinv(i)=`` for the inverse model),
each followed by whitespace-separated reals that may span several lines.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

from .core import EmorBasis, ResponseCurve, invert_curve, uniform_grid
from .errors import DimensionError, ParseError

log = logging.getLogger(__name__)

DORF_CURVE_COUNT = 201
REPAIR_TOL = 1e-4

_NUMBER = re.compile(r"^[\s+\-.\deE]+$")
_EMOR_HEADER = re.compile(r"^\s*([A-Za-z]\w*(?:\s*\(\s*\d+\s*\))?)\s*=\s*(.*)$")


def _is_numeric(line: str) -> bool:
    return bool(line.strip()) and bool(_NUMBER.match(line))


def _floats(text: str, where, block=None) -> list:
    try:
        return [float(tok) for tok in text.split()]
    except ValueError as exc:
        raise ParseError(f"bad number in {where}: {exc}", block) from None


@dataclass(frozen=True, eq=False)
class DorfDatabase:
    """Forward response curves, with inverses computed on first use."""

    curves: tuple
    rejected: tuple = field(default=())

    def __len__(self):
        return len(self.curves)

    def __getitem__(self, i) -> ResponseCurve:
        return self.curves[i]

    @property
    def names(self) -> list:
        return [c.name for c in self.curves]

    @cached_property
    def inverse_curves(self) -> tuple:
        return tuple(invert_curve(c, name=c.name) for c in self.curves)

    @cached_property
    def inverse_matrix(self) -> np.ndarray:
        """All inverse curves stacked as a ``(len, S)`` array."""
        return np.stack([c.samples for c in self.inverse_curves])


def _normalise_record(name, irradiance, brightness, samples, block):
    irr = np.asarray(irradiance, dtype=float)
    bri = np.asarray(brightness, dtype=float)
    if irr.size != bri.size:
        raise ParseError(
            f"irradiance has {irr.size} values but brightness has {bri.size}", block
        )
    if irr.size < 2:
        raise ParseError("record has fewer than two samples", block)
    if np.any(np.diff(irr) <= 0):
        raise ParseError("irradiance axis is not strictly ascending", block)

    drop = float(np.max(np.maximum.accumulate(bri) - bri))
    if drop > REPAIR_TOL:
        return None, f"{name!r}: brightness decreases by {drop:.3g}"
    bri = np.maximum.accumulate(bri)

    span = bri[-1] - bri[0]
    if span <= 0:
        return None, f"{name!r}: constant brightness"
    bri = (bri - bri[0]) / span
    irr = (irr - irr[0]) / (irr[-1] - irr[0])

    grid = uniform_grid(samples or irr.size)
    if irr.size != grid.size or not np.allclose(irr, grid, atol=1e-9, rtol=0):
        bri = np.interp(grid, irr, bri)
    bri[0], bri[-1] = 0.0, 1.0
    return ResponseCurve(bri, name), None


def parse_dorf(text, samples: int | None = None) -> DorfDatabase:
    """Parse a DoRF text distribution.

    Curves whose brightness dips by at most ``1e-4`` are repaired with a
    running maximum; larger dips reject the curve with a warning. Curves on
    a non-uniform irradiance axis are resampled onto the uniform grid of
    ``samples`` points (default: the record's own length).
    """
    if hasattr(text, "read"):
        text = text.read()
    lines = [ln.rstrip() for ln in text.splitlines()]
    lines = [ln for ln in lines if ln.strip()]
    if not lines:
        raise ParseError("empty DoRF stream")

    curves, rejected = [], []
    i, block = 0, 0
    while i < len(lines):
        if _is_numeric(lines[i]):
            raise ParseError(f"expected a curve name, found numbers at line {i + 1}", block)
        name = lines[i].strip()
        i += 1
        if i >= len(lines) or _is_numeric(lines[i]):
            raise ParseError(f"record {name!r} is missing its type line", block)
        i += 1  # type line carries no information the pipeline uses

        vectors = []
        for marker in ("I", "B"):
            if i < len(lines) and re.fullmatch(rf"\s*{marker}\s*=\s*", lines[i]):
                i += 1
                chunk = []
                while i < len(lines) and _is_numeric(lines[i]):
                    chunk.append(lines[i])
                    i += 1
            elif i < len(lines) and _is_numeric(lines[i]):
                chunk = [lines[i]]
                i += 1
            else:
                raise ParseError(f"record {name!r} is truncated before its {marker} vector", block)
            values = _floats(" ".join(chunk), f"record {name!r}", block)
            if not values:
                raise ParseError(f"record {name!r} has an empty {marker} vector", block)
            vectors.append(values)

        curve, reason = _normalise_record(name, vectors[0], vectors[1], samples, block)
        if curve is None:
            log.warning("rejecting DoRF curve %d %s", block, reason)
            rejected.append(name)
        else:
            curves.append(curve)
        block += 1

    counts = {c.samples.size for c in curves}
    if len(counts) > 1:
        raise DimensionError(f"DoRF curves have mixed sample counts {sorted(counts)}")
    log.info("parsed %d DoRF curves (%d rejected)", len(curves), len(rejected))
    return DorfDatabase(tuple(curves), tuple(rejected))


def parse_emor(text, kind: str = "inverse") -> EmorBasis:
    """Parse an EMoR (``kind="forward"``) or inverse EMoR basis file."""
    if hasattr(text, "read"):
        text = text.read()
    blocks: dict[str, list] = {}
    order: list[str] = []
    current = None
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        head = _EMOR_HEADER.match(line)
        if head and not _is_numeric(line):
            current = re.sub(r"\s+", "", head.group(1)).lower()
            if current in blocks:
                raise ParseError(f"duplicate block {current!r} at line {lineno}")
            blocks[current] = []
            order.append(current)
            rest = head.group(2)
            if rest.strip():
                blocks[current].extend(_floats(rest, f"block {current!r}"))
            continue
        if current is None or not _is_numeric(line):
            raise ParseError(f"unexpected content at line {lineno}: {line[:40]!r}")
        blocks[current].extend(_floats(line, f"block {current!r}"))

    if not blocks:
        raise ParseError("empty EMoR stream")
    mean_key = next((k for k in ("g0", "f0", "h0") if k in blocks), None)
    if mean_key is None:
        raise ParseError("EMoR stream has no mean-curve block (f0 or g0)")
    mean = np.array(blocks[mean_key])
    if mean.size < 2:
        raise ParseError(f"mean block {mean_key!r} is empty")

    eig = []
    for key in order:
        m = re.fullmatch(r"h(?:inv)?\((\d+)\)", key)
        if m:
            eig.append((int(m.group(1)), key))
    if not eig:
        raise ParseError("EMoR stream has no eigenvector blocks")
    eig.sort()
    vectors = []
    for idx, key in eig:
        vec = blocks[key]
        if len(vec) != mean.size:
            raise DimensionError(
                f"eigenvector {key!r} has {len(vec)} samples, mean curve has {mean.size}"
            )
        vectors.append(vec)
    if "e" in blocks and len(blocks["e"]) != mean.size:
        raise DimensionError(f"abscissa block E has {len(blocks['e'])} samples, expected {mean.size}")
    return EmorBasis(mean, np.array(vectors), kind)


def load_dorf(path, samples: int | None = None) -> DorfDatabase:
    with open(path, encoding="utf-8", errors="replace") as fh:
        return parse_dorf(fh, samples)


def load_emor(path, kind: str = "inverse") -> EmorBasis:
    with open(path, encoding="utf-8", errors="replace") as fh:
        return parse_emor(fh, kind)


def _fmt(values) -> str:
    return " ".join(f"{v:.6e}" for v in values)


def format_dorf(curves) -> str:
    """Render curves in the DoRF text layout (uniform irradiance axis)."""
    out = []
    for c in curves:
        out += [c.name, "synthetic", "I =", _fmt(c.grid), "B =", _fmt(c.samples)]
    return "\n".join(out) + "\n"


def format_emor(basis: EmorBasis, per_line: int = 4) -> str:
    """Render a basis in the EMoR text layout."""
    mean_key, vec_key = ("f0", "h") if basis.kind == "forward" else ("g0", "hinv")

    def block(header, values):
        rows = [_fmt(values[i:i + per_line]) for i in range(0, len(values), per_line)]
        return [header] + rows

    lines = block("E =", uniform_grid(basis.samples)) + block(f"{mean_key} =", basis.mean)
    for i, vec in enumerate(basis.eigenvectors, 1):
        lines += block(f"{vec_key}({i})=", vec)
    return "\n".join(lines) + "\n"


def curve_to_json(curve: ResponseCurve, **extra) -> dict:
    return {"name": curve.name, **extra, "samples": [float(v) for v in curve.samples]}


def curve_from_json(doc: dict) -> ResponseCurve:
    if "samples" not in doc:
        raise ParseError("curve document has no 'samples' field")
    return ResponseCurve(np.asarray(doc["samples"], dtype=float), str(doc.get("name", "")))


def save_curve(curve: ResponseCurve, path, **extra):
    Path(path).write_text(json.dumps(curve_to_json(curve, **extra), indent=1))


def load_curve(path) -> ResponseCurve:
    return curve_from_json(json.loads(Path(path).read_text()))
