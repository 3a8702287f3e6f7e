"""Decoupling of multivariate polynomial maps through tensor decompositions."""

from .cpd import (
    CpdFactors,
    best_rank_one,
    cp_als,
    cpd_reconstruct,
    inverse_transfer,
    match_factors,
    transfer_third_factor,
)
from .decouple import (
    DecoupleReport,
    VerificationRecord,
    coupled_psym_cpd,
    decouple_via_J,
    decouple_via_Q,
    fit_g_from_h,
    rank_one_extract,
    verify_relations,
)
from .estimators import CPALS, PolynomialDecoupler
from .exceptions import DegenerateSamplingError, DimensionError, UnderSampledError
from .polymap import (
    DecoupledModel,
    GradedSymmetric,
    PolyMap,
    eval_decoupled,
    eval_polymap,
    expand_decoupled,
    from_graded,
    jacobian,
    jacobian_decoupled,
    map_residual,
    normalize_model,
    polymap_from_terms,
    report_compression,
    to_graded,
)
from .tensorize import (
    SamplePlan,
    build_J,
    build_Q,
    build_sample_plan,
    build_Ts,
    default_points,
    h_factors,
    mode_n_product,
    psi_matrix,
    reshape_Ts_12,
    stack_Q_from_Ts,
    unfold_mode1,
    z_factors,
)

__version__ = "0.1.0"
