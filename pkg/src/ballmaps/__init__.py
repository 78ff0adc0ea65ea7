"""Complex hyperbolic geometry of the unit ball and rescaling of proper maps."""

from .errors import (
    DiagnosticError,
    InputError,
    NumericError,
    PatternViolationError,
    SymmetryError,
)
from .group_models import (
    Automorphism,
    BallPoint,
    SiegelPoint,
    apply_ball,
    cartan,
    cartan_siegel,
    cayley_to_ball,
    cayley_to_siegel,
    compose,
    hermitian_form,
    inverse,
    rotation_mapping_e1,
    siegel_rho,
    transport_to_origin,
    verify_membership,
)
from .kobayashi import (
    HausdorffEstimate,
    QuasiGeodesicCertificate,
    RadialBoundConstants,
    SampledCurve,
    certify_quasi_geodesic,
    dist_ball,
    estimate_morse_constant,
    hausdorff_pseudo_distance,
    radial_geodesic,
)
from .proper_maps import (
    JetExpansion,
    ProperMapSpec,
    SymmetryPair,
    TransformedMap,
    beta_constant,
    block_extend,
    catalog,
    jet_at_zero,
    lipschitz_boundary_constant,
    load_map_spec,
    save_map_spec,
    siegel_conjugate,
    standard_catalog,
    verify_symmetry_pair,
)
from .rescaling import (
    QuadraticNormalForm,
    RescalingTrace,
    ScalingProfile,
    build_sequence,
    cartan_sequence,
    escape_check,
    extract_limit_jet,
    final_normalization,
    normalize_map,
    quadratic_normal_form,
    run_pipeline,
    scaling_factors,
    scaling_profile,
    verify_boundary_identity,
    verify_scaling_law,
)

__version__ = "0.1.0"
