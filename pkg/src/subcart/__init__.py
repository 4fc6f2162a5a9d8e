"""Flows, orbits, strata, brackets and torsion on subsets of R^n.

The package works with spaces presented as finite unions of constraint
cells in an ambient R^n, tangent fields with symbolic expression
components, and a guard-aware adaptive integrator whose exit detection
distinguishes attained from open interval endpoints.  On top of that
sit the orbit sampler for finite field families, stratification audits,
Poisson brackets with invariant-based reduction, and almost complex
torsion residuals.
"""

from __future__ import annotations

from .almostcomplex import (
    AlmostComplexError,
    AlmostComplexStructure,
    KahlerReport,
    cauchy_riemann_residual,
    eigenspace_closure_field,
    eigenspace_closure_residual,
    kahler_check,
    tensoriality_residual,
    torsion,
    torsion_residual,
)
from .expr import (
    Const,
    DomainError,
    Expr,
    ExprError,
    ParseError,
    Var,
    compile_scalar,
    compile_vector,
    diff,
    eval_jet,
    parse,
    to_text,
)
from .field import FieldError, TangentField, lie_bracket, pushforward_at
from .flow import (
    ExitWitness,
    FlowDomainError,
    FlowOptions,
    INCONCLUSIVE,
    IntegralCurve,
    IntegrationError,
    NOT_VECTOR_FIELD,
    ProbeOptions,
    VECTOR_FIELD,
    VectorFieldVerdict,
    classify_vector_field,
    flow_map,
    integrate,
    transport_vector,
)
from .orbit import (
    Chart,
    CompletenessReport,
    DependentBasisError,
    DimensionReport,
    FieldFamily,
    OrbitError,
    OrbitSample,
    ReachError,
    chart_jacobian,
    dimension_constancy_report,
    local_completeness_probe,
    orbits_connected,
    reach,
    sample_orbit,
    span_dimension,
)
from .poisson import (
    InvarianceReport,
    PoissonError,
    PoissonStructure,
    ReductionError,
    ReductionSetup,
    bracket,
    hamiltonian_field,
    invariance_residual,
    jacobi_residual,
    jacobi_sample_residual,
    leaf_sample,
    reduce,
)
from .space import (
    Constraint,
    Rel,
    SpaceError,
    SubcartesianSpace,
    sample_near,
)
from .strata import (
    DimensionAudit,
    FrontierReport,
    StrataError,
    StratifiedSpace,
    Stratum,
    bump_expr,
    dimension_audit,
    extend_stratum_field,
    frontier_check,
    orbit_vs_strata,
    strongly_stratified_check,
)

__all__ = [
    "AlmostComplexError",
    "AlmostComplexStructure",
    "Chart",
    "CompletenessReport",
    "Const",
    "Constraint",
    "DependentBasisError",
    "DimensionAudit",
    "DimensionReport",
    "DomainError",
    "ExitWitness",
    "Expr",
    "ExprError",
    "FieldError",
    "FieldFamily",
    "FlowDomainError",
    "FlowOptions",
    "FrontierReport",
    "INCONCLUSIVE",
    "IntegralCurve",
    "IntegrationError",
    "InvarianceReport",
    "KahlerReport",
    "NOT_VECTOR_FIELD",
    "OrbitError",
    "OrbitSample",
    "ParseError",
    "PoissonError",
    "PoissonStructure",
    "ProbeOptions",
    "ReachError",
    "ReductionError",
    "ReductionSetup",
    "Rel",
    "SpaceError",
    "StrataError",
    "StratifiedSpace",
    "Stratum",
    "SubcartesianSpace",
    "TangentField",
    "VECTOR_FIELD",
    "Var",
    "VectorFieldVerdict",
    "bracket",
    "bump_expr",
    "cauchy_riemann_residual",
    "chart_jacobian",
    "classify_vector_field",
    "compile_scalar",
    "compile_vector",
    "diff",
    "dimension_audit",
    "dimension_constancy_report",
    "eigenspace_closure_field",
    "eigenspace_closure_residual",
    "eval_jet",
    "extend_stratum_field",
    "flow_map",
    "frontier_check",
    "hamiltonian_field",
    "integrate",
    "invariance_residual",
    "jacobi_residual",
    "jacobi_sample_residual",
    "kahler_check",
    "leaf_sample",
    "lie_bracket",
    "local_completeness_probe",
    "orbit_vs_strata",
    "orbits_connected",
    "parse",
    "pushforward_at",
    "reach",
    "reduce",
    "sample_near",
    "sample_orbit",
    "span_dimension",
    "strongly_stratified_check",
    "tensoriality_residual",
    "to_text",
    "torsion",
    "torsion_residual",
    "transport_vector",
]
