"""Command-line front end: calibrate, linearise, match, evaluate, synth.

Every command accepts ``--config`` (TOML or JSON); command-line flags
override config values. Exit codes: 0 success, 2 invalid input or
configuration, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import fields
from pathlib import Path

import numpy as np

from . import __version__
from .alignment import collect_ccps, linearise_image, match_images, save_match
from .bold import BoldParams, channel_matrices
from .calibration import OptimParams, load_icrf, optimise_icrf, params_to_json, select_icrf
from .core import ResponseCurve
from .errors import ColalignError, ConfigurationError, InsufficientDataError, NumericalError
from .io import list_images, load_annotations, read_image, write_image
from .metrics import METRICS, AlignmentPipeline, handshake_evaluate, identity_pipeline
from .reference import load_dorf, load_emor
from .synthetic import generate_scene, make_spec, save_scene, surrogate_database, write_surrogate_reference

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

log = logging.getLogger("colalign")

EXIT_OK, EXIT_INVALID, EXIT_NUMERICAL = 0, 2, 3
MIN_CALIBRATION_IMAGES = 2
DORF_ENV = "COLALIGN_DORF"
EMOR_ENV = "COLALIGN_EMOR"


def load_config(path) -> dict:
    if path is None:
        return {}
    path = Path(path)
    if not path.is_file():
        raise ConfigurationError(f"config file not found: {path}")
    text = path.read_text()
    try:
        if path.suffix.lower() == ".toml":
            return tomllib.loads(text)
        return json.loads(text)
    except (ValueError, tomllib.TOMLDecodeError) as exc:
        raise ConfigurationError(f"cannot parse config {path}: {exc}") from None


def _setting(args, cfg, name, default=None):
    """Flag value if given, else config value, else default."""
    val = getattr(args, name, None)
    if val is not None:
        return val
    return cfg.get(name, default)


def _dataclass_from(cls, section: dict, **overrides):
    known = {f.name for f in fields(cls)}
    unknown = set(section) - known
    if unknown:
        raise ConfigurationError(f"unknown {cls.__name__} keys: {sorted(unknown)}")
    return cls(**{**section, **{k: v for k, v in overrides.items() if v is not None}})


def _load_image_set(images, annotations_path):
    """Images (files or one directory) with their annotation lists keyed by file stem."""
    paths = []
    for item in images:
        p = Path(item)
        paths.extend(list_images(p) if p.is_dir() else [p])
    if annotations_path is None:
        dirs = {p.parent for p in paths}
        if len(dirs) != 1:
            raise ConfigurationError("--annotations is required when images come from several directories")
        annotations_path = dirs.pop() / "annotations.json"
    anns = load_annotations(annotations_path)
    bufs, lists = [], []
    for p in paths:
        if p.stem not in anns:
            raise ConfigurationError(f"no annotations for image {p.stem!r} in {annotations_path}")
        bufs.append(read_image(p))
        lists.append(anns[p.stem])
    return paths, bufs, lists


def _database(path):
    if path is None:
        raise ConfigurationError(f"no DoRF path given (--dorf, config 'dorf' or ${DORF_ENV})")
    return load_dorf(path)


# -- commands -------------------------------------------------------------------

def cmd_calibrate(args, cfg) -> int:
    seed = int(_setting(args, cfg, "seed", 0))
    method = _setting(args, cfg, "method", "select")
    workers = int(_setting(args, cfg, "workers", os.cpu_count() or 1))
    out = Path(_setting(args, cfg, "out", "."))
    images = args.images or cfg.get("images")
    if not images:
        raise ConfigurationError("no calibration images given")
    paths, bufs, lists = _load_image_set(images, _setting(args, cfg, "annotations"))
    if len(bufs) < MIN_CALIBRATION_IMAGES:
        raise InsufficientDataError(
            f"calibration needs at least {MIN_CALIBRATION_IMAGES} images, got {len(bufs)}"
        )
    ccps = channel_matrices(collect_ccps(bufs, lists, float(cfg.get("trim", 0.0))))
    bold_params = _dataclass_from(BoldParams, cfg.get("bold", {}))
    if method == "select":
        dorf_path = _setting(args, cfg, "dorf", os.environ.get(DORF_ENV))
        result = select_icrf(ccps, _database(dorf_path), bold_params, workers)
        opt = None
    elif method == "optimise":
        emor_path = _setting(args, cfg, "emor", os.environ.get(EMOR_ENV))
        if emor_path is None:
            raise ConfigurationError(f"no inverse EMoR path given (--emor, config 'emor' or ${EMOR_ENV})")
        opt = _dataclass_from(OptimParams, cfg.get("optimisation", {}), seed=seed, workers=workers)
        result = optimise_icrf(ccps, load_emor(emor_path, "inverse"), bold_params, opt)
    else:
        raise ConfigurationError(f"unknown method {method!r}")
    out.mkdir(parents=True, exist_ok=True)
    result.save(out / "icrf.json", seed=seed, images=[p.name for p in paths],
                params=params_to_json(bold_params, opt))
    with open(out / "bold.csv", "w") as fh:
        fh.write(f"# seed={seed}\n")
    with open(out / "bold.csv", "a", newline="") as fh:
        _append_distance_csv(fh, result)
    print(f"{method}: {result.name} score={result.score:.6g} -> {out / 'icrf.json'}")
    return EXIT_OK


def _append_distance_csv(fh, result):
    import csv

    w = csv.writer(fh)
    w.writerow(["candidate", "column", "mean_distance"])
    for i, v in enumerate(result.diagnostics.mean_distance_curve):
        w.writerow([result.name, i, repr(float(v))])


def cmd_linearise(args, cfg) -> int:
    seed = int(_setting(args, cfg, "seed", 0))
    icrf = load_icrf(args.icrf)
    image = read_image(args.image)
    out = Path(args.output) if args.output else Path(_setting(args, cfg, "out", ".")) / f"{Path(args.image).stem}_linear.png"
    write_image(linearise_image(image, icrf, per_channel=not args.per_intensity), out,
                {"seed": seed, "icrf": icrf.name})
    print(f"linearised {args.image} -> {out}")
    return EXIT_OK


def cmd_match(args, cfg) -> int:
    seed = int(_setting(args, cfg, "seed", 0))
    src_anns = load_annotations(args.annotations)
    tgt_anns = load_annotations(args.target_annotations or args.annotations)
    src_id, tgt_id = Path(args.source).stem, Path(args.target).stem
    for iid, anns, path in ((src_id, src_anns, args.annotations),
                            (tgt_id, tgt_anns, args.target_annotations or args.annotations)):
        if iid not in anns:
            raise ConfigurationError(f"no annotations for image {iid!r} in {path}")
    source, target = read_image(args.source), read_image(args.target)
    if args.source_icrf:
        source = linearise_image(source, load_icrf(args.source_icrf))
    if args.target_icrf:
        target = linearise_image(target, load_icrf(args.target_icrf))
    s_list, t_list = src_anns[src_id], tgt_anns[tgt_id]
    if args.patches:
        keep = {int(v) for v in args.patches.split(",")}
        s_list = [a for a in s_list if a.patch_id in keep]
        t_list = [a for a in t_list if a.patch_id in keep]
    corrected, coeffs = match_images(source, target, s_list, t_list)
    out = Path(_setting(args, cfg, "out", "."))
    path = out / f"{src_id}_to_{tgt_id}.png"
    save_match(corrected, coeffs, path, seed=seed, source=src_id, target=tgt_id)
    print(f"matched {src_id} -> {tgt_id}: {path}")
    return EXIT_OK


def _camera_sets(directory, icrf_name="icrf.json"):
    directory = Path(directory)
    paths, bufs, lists = _load_image_set([directory], None)
    rows = collect_ccps(bufs, lists)
    sets = [np.array([s.rgb for s in row]) for row in rows]
    icrf_path = directory / icrf_name
    return sets, (load_icrf(icrf_path) if icrf_path.is_file() else None)


def cmd_evaluate(args, cfg) -> int:
    seed = int(_setting(args, cfg, "seed", 0))
    metric = _setting(args, cfg, "metric", "de2000")
    workers = int(_setting(args, cfg, "workers", os.cpu_count() or 1))
    cameras = args.camera or cfg.get("cameras")
    if not cameras:
        raise ConfigurationError("no camera directories given (--camera)")
    groups, icrfs = [], []
    for cam in cameras:
        sets, icrf = _camera_sets(cam)
        groups.append(sets)
        icrfs.append(icrf)
    pipeline_name = _setting(args, cfg, "pipeline", "identity")
    if pipeline_name == "identity":
        pipeline = identity_pipeline
    elif pipeline_name == "align":
        spec = str(_setting(args, cfg, "patches", "auto"))
        patches = spec if spec == "auto" else tuple(int(v) for v in spec.split(","))
        pipeline = AlignmentPipeline(icrfs, patches)
    else:
        raise ConfigurationError(f"unknown pipeline {pipeline_name!r}")
    report = handshake_evaluate(groups, metric, pipeline, workers)
    out = Path(_setting(args, cfg, "out", "."))
    report.write(out, seed=seed, pipeline=pipeline_name, camera_dirs=[str(c) for c in cameras])
    print(f"{metric} handshake: count={report.count} median={report.median:.6g} -> {out}")
    return EXIT_OK


def _parse_crf(spec: str) -> ResponseCurve:
    if spec == "identity":
        return ResponseCurve.identity()
    if spec.startswith("gamma:"):
        return ResponseCurve.gamma(1.0 / float(spec.split(":", 1)[1]))
    if spec.startswith("dorf:"):
        _, _, rest = spec.partition(":")
        path, _, idx = rest.rpartition(":")
        db = load_dorf(path) if path else surrogate_database()
        return db[int(idx)]
    if spec.startswith("surrogate:"):
        return surrogate_database()[int(spec.split(":", 1)[1])]
    return load_icrf(spec)


def cmd_synth(args, cfg) -> int:
    seed = int(_setting(args, cfg, "seed", 0))
    out = Path(_setting(args, cfg, "out", "."))
    if args.reference:
        paths = write_surrogate_reference(out)
        print("wrote " + ", ".join(str(p) for p in paths.values()))
        return EXIT_OK
    crf = _parse_crf(_setting(args, cfg, "crf", "identity"))
    spec = make_spec(
        crf,
        m=int(_setting(args, cfg, "images", 8)),
        n=int(_setting(args, cfg, "patches", 24)),
        sigma=float(_setting(args, cfg, "sigma", 0.005)),
        seed=seed,
        layout=_setting(args, cfg, "layout", "stratified"),
    )
    scene = generate_scene(spec)
    save_scene(scene, out, {"seed": seed, "sigma": spec.noise_sigma})
    print(f"wrote {spec.m} images with {spec.n} patches to {out}")
    return EXIT_OK


# -- argument parsing -------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML or JSON config file")
    common.add_argument("--workers", type=int)
    common.add_argument("--seed", type=int)
    common.add_argument("--out", help="output directory")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="colalign", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("calibrate", parents=[common], help="estimate an inverse response curve")
    p.add_argument("images", nargs="*", help="image files or one directory")
    p.add_argument("--annotations")
    p.add_argument("--method", choices=["select", "optimise"])
    p.add_argument("--dorf", help=f"DoRF text file (or ${DORF_ENV})")
    p.add_argument("--emor", help=f"inverse EMoR text file (or ${EMOR_ENV})")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("linearise", parents=[common], help="apply an inverse response curve")
    p.add_argument("image")
    p.add_argument("--icrf", required=True)
    p.add_argument("-o", "--output")
    p.add_argument("--per-intensity", action="store_true")
    p.set_defaults(func=cmd_linearise)

    p = sub.add_parser("match", parents=[common], help="match source colours to a target")
    p.add_argument("source")
    p.add_argument("target")
    p.add_argument("--annotations", required=True)
    p.add_argument("--target-annotations")
    p.add_argument("--source-icrf")
    p.add_argument("--target-icrf")
    p.add_argument("--patches", help="comma-separated patch ids used for the fit")
    p.set_defaults(func=cmd_match)

    p = sub.add_parser("evaluate", parents=[common], help="handshake comparison across cameras")
    p.add_argument("--camera", action="append", help="camera directory (repeatable)")
    p.add_argument("--metric", choices=sorted(METRICS))
    p.add_argument("--pipeline", choices=["identity", "align"])
    p.add_argument("--patches", help="two patch indices for matching, or 'auto' (default)")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("synth", parents=[common], help="render a synthetic calibration set")
    p.add_argument("--crf", help="identity, gamma:G, dorf:[PATH:]INDEX, surrogate:INDEX or a curve JSON")
    p.add_argument("--images", type=int)
    p.add_argument("--patches", type=int)
    p.add_argument("--sigma", type=float)
    p.add_argument("--layout", choices=["stratified", "uniform", "chart"])
    p.add_argument("--reference", action="store_true", help="write surrogate DoRF/EMoR files instead")
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
        return args.func(args, cfg)
    except NumericalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ColalignError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
