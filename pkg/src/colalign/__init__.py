"""Relative colour alignment: response calibration, linearisation and colour matching."""

__version__ = "0.1.0"

from .alignment import (
    MatchCoefficients,
    apply_colour_modification,
    fit_linear_match,
    linearise_image,
    match_images,
)
from .bold import BoldBreakdown, BoldParams, align_rows, bold_value, evaluate_candidate, mean_distance_curve, sort_columns
from .calibration import CalibrationResult, OptimParams, optimisation_cost, optimise_icrf, select_icrf
from .core import (
    CcpMatrix,
    ColorPatchSample,
    EmorBasis,
    EmorCoefficients,
    ImageBuffer,
    PatchAnnotation,
    ResponseCurve,
    chromaticity,
    emor_reconstruct,
    eval_curve,
    extract_patch,
    invert_curve,
)
from .metrics import br_ratio, delta_e2000, handshake_evaluate, rae, rmse, wb_grey_world, wb_white_patch
from .reference import DorfDatabase, parse_dorf, parse_emor
from .synthetic import SyntheticSceneSpec, generate_scene, recovery_study
