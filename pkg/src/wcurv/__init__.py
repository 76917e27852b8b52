"""Weighted curvature invariants, W3/V3 functionals and their variations
on manifolds with density."""

from __future__ import annotations

__version__ = "0.1.0"

from .functionals import V3, W3, FunctionalSpec, el_residual, evaluate, measure, normalize_to_C1
from .geometry import (
    MetricDensity,
    build_backend,
    curvature_pack,
    flat_torus,
    gaussian_soliton,
    min_bakry_emery_gap,
    product,
    round_sphere,
)
from .invariants import bach, bach_alt, cotton, invariant_pack, sigma_tilde, v_coeffs

__all__ = [
    "__version__",
    "MetricDensity",
    "FunctionalSpec",
    "W3",
    "V3",
    "bach",
    "bach_alt",
    "build_backend",
    "cotton",
    "curvature_pack",
    "el_residual",
    "evaluate",
    "flat_torus",
    "gaussian_soliton",
    "invariant_pack",
    "measure",
    "min_bakry_emery_gap",
    "normalize_to_C1",
    "product",
    "round_sphere",
    "sigma_tilde",
    "v_coeffs",
]
