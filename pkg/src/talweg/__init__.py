"""Gradient extremals, talwegs, valleys and directional convergence of gradient dynamics."""

from .errors import *  # noqa: F401,F403
from .field import (  # noqa: F401
    ScalarField,
    builtin,
    eval_derivatives,
    estimate_hessian_bounds,
    third_directional,
    polynomial_field,
    critical_point_info,
)
from .spectra import SpectralFrame, decompose, align_frame, frame_along_curve, check_nonresonance  # noqa: F401

__version__ = "0.1.0"
