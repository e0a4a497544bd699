"""Triangulation-agnostic Matern noise on triangle meshes."""

__version__ = "0.1.0"

from .fem import (
    MassMatrix,
    NoiseParams,
    ScreenedOperator,
    assemble,
    cotan_laplacian,
    lumped_mass,
    normalization_gamma,
    screened_operator,
)
from .linalg import SPDFactor, Spectrum, factorize, generalized_eigs, solve
from .mesh import (
    TriMesh,
    ValidationReport,
    bisect_edges,
    load_obj,
    load_ply,
    save_obj,
    save_ply,
    scale,
    subdivide_midpoint,
    validate,
)
from .rng import RngStream
from .samplers import (
    NoiseSampler,
    sample_explicit,
    sample_matern,
    sample_matern_normalized,
    sample_naive,
    sample_white,
)
from .spectral import (
    inner_product_m,
    reconstruct,
    spectral_coeffs,
    theoretical_variance,
    weyl_tail,
)
