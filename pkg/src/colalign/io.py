"""Image and annotation file helpers."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
from PIL import Image
from PIL.PngImagePlugin import PngInfo

from .core import ImageBuffer, PatchAnnotation
from .errors import ConfigurationError, ParseError


def read_image(path) -> ImageBuffer:
    """8-bit PNG/JPEG as a float buffer (``v / 255``)."""
    path = Path(path)
    if not path.is_file():
        raise ConfigurationError(f"image not found: {path}")
    try:
        with Image.open(path) as im:
            data = np.asarray(im.convert("RGB"))
    except OSError as exc:
        raise ConfigurationError(f"cannot read image {path}: {exc}") from None
    return ImageBuffer.from_uint8(data)


def write_image(image: ImageBuffer, path, metadata: dict | None = None):
    """Save as 8-bit RGB; ``metadata`` goes into PNG text chunks."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    kwargs = {}
    if metadata and path.suffix.lower() == ".png":
        info = PngInfo()
        for k, v in metadata.items():
            info.add_text(str(k), str(v))
        kwargs["pnginfo"] = info
    Image.fromarray(image.to_uint8(), "RGB").save(path, **kwargs)


IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg")


def list_images(directory) -> list:
    """Image files of a directory, sorted by name."""
    directory = Path(directory)
    if not directory.is_dir():
        raise ConfigurationError(f"image directory not found: {directory}")
    return sorted(p for p in directory.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)


def parse_annotations(doc: dict) -> dict:
    """``{image id: [{"patch-id": int, "rect": [x, y, w, h]}, ...]}`` to annotation lists."""
    if not isinstance(doc, dict):
        raise ParseError("annotation document must map image ids to patch lists")
    out = {}
    for image_id, entries in doc.items():
        anns = []
        for e in entries:
            try:
                pid = e.get("patch-id", e.get("patch_id"))
                anns.append(PatchAnnotation(str(image_id), int(pid), tuple(e["rect"])))
            except (KeyError, TypeError, ValueError) as exc:
                raise ParseError(f"bad annotation for image {image_id!r}: {exc}") from None
        ids = [a.patch_id for a in anns]
        if len(set(ids)) != len(ids):
            raise ParseError(f"duplicate patch ids for image {image_id!r}")
        out[str(image_id)] = anns
    return out


def load_annotations(path) -> dict:
    path = Path(path)
    if not path.is_file():
        raise ConfigurationError(f"annotation file not found: {path}")
    try:
        return parse_annotations(json.loads(path.read_text()))
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: {exc}") from None


def save_annotations(annotations: dict, path):
    doc = {
        image_id: [{"patch-id": a.patch_id, "rect": list(a.rect)} for a in anns]
        for image_id, anns in annotations.items()
    }
    Path(path).write_text(json.dumps(doc, indent=1))
