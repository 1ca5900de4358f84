"""Numerical laboratory for Laplacian-type flows of G2-structures on T^7."""

from .forms import (
    DIM,
    KForm,
    Metric,
    flat,
    hodge,
    inner,
    interior,
    norm,
    num_components,
    sharp,
    volume_form,
    wedge,
)
from .g2 import (
    G2Structure,
    bilinear_matrix,
    decompose_137,
    inverse_linearized_psi,
    is_positive,
    linearized_metric,
    linearized_psi,
    metric_from_phi,
    standard_phi,
    tr_torsion,
)
from .grid import (
    FormField,
    MetricField,
    TorusGrid,
    codiff,
    dual_field,
    ext_d,
    hodge_field,
    hodge_laplacian,
    l2_inner,
    l2_norm,
    load_snapshot,
    make_initial_data,
    save_snapshot,
    sup_norm,
)
from .flows import (
    FLOW_KINDS,
    Diagnostics,
    FlowKind,
    FlowState,
    default_dt,
    deturck_vector,
    diagnostics_header,
    evaluate_rhs,
    lie_derivative,
    monitors,
    phi_velocity,
    rhs_coflow,
    rhs_deturck,
    rhs_laplacian,
    rhs_modified_coflow,
    step,
    tr_torsion_field,
)
from .symbol import (
    SYMBOL_KINDS,
    SymbolProblem,
    SymbolReport,
    assemble_symbol_exact,
    check_integrability,
    discrete_covector,
    extract_symbol_planewave,
    random_problem,
    sigma_L,
    spectra_csv,
)

__all__ = [
    "DIM",
    "KForm",
    "Metric",
    "flat",
    "hodge",
    "inner",
    "interior",
    "norm",
    "num_components",
    "sharp",
    "volume_form",
    "wedge",
    "G2Structure",
    "bilinear_matrix",
    "decompose_137",
    "inverse_linearized_psi",
    "is_positive",
    "linearized_metric",
    "linearized_psi",
    "metric_from_phi",
    "standard_phi",
    "tr_torsion",
    "FormField",
    "MetricField",
    "TorusGrid",
    "codiff",
    "dual_field",
    "ext_d",
    "hodge_field",
    "hodge_laplacian",
    "l2_inner",
    "l2_norm",
    "load_snapshot",
    "make_initial_data",
    "save_snapshot",
    "sup_norm",
    "FLOW_KINDS",
    "Diagnostics",
    "FlowKind",
    "FlowState",
    "default_dt",
    "deturck_vector",
    "diagnostics_header",
    "evaluate_rhs",
    "lie_derivative",
    "monitors",
    "phi_velocity",
    "rhs_coflow",
    "rhs_deturck",
    "rhs_laplacian",
    "rhs_modified_coflow",
    "step",
    "tr_torsion_field",
    "SYMBOL_KINDS",
    "SymbolProblem",
    "SymbolReport",
    "assemble_symbol_exact",
    "check_integrability",
    "discrete_covector",
    "extract_symbol_planewave",
    "random_problem",
    "sigma_L",
    "spectra_csv",
]

__version__ = "0.1.0"
