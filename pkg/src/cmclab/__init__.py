"""Spectral laboratory for quantitative rigidity of almost-CMC spheres."""

from .errors import (
    ConfigurationError,
    ConformalizationFailedError,
    DomainError,
    GaugeError,
    ImmersionDegenerateError,
    LabError,
    OptimizationFailedError,
    OrientationError,
    PipelineError,
    PreconditionError,
    RegimeError,
    ResolutionError,
    SolverError,
)
from .geometry import (
    GeometrySummary,
    Immersion,
    geometry_summary,
    h2_splitting_residual,
    make_immersion,
    minkowski_residual,
    normalize_volume,
    willmore_threshold_check,
)
from .mobius import (
    GaugeParams,
    MobiusElement,
    apply_phi_v,
    gauge_energy,
    minimize_gauge,
    orthogonality_residuals,
)
from .pipeline import FamilyConfig, load_config, parse_config, run_pipeline
from .rigidity import (
    DiagnosticsReport,
    energy_excess,
    grad_expansion_residual,
    hbar_control,
    quad_form_and_gap,
    stability_report,
    vec_defect,
    volume_balance,
)
from .sphere import (
    AmbientField,
    QuadratureGrid,
    ScalarField,
    SpectralCoeffs,
    analyze,
    build_grid,
    integrate,
    laplacian,
    sobolev_norm,
    surface_gradient,
    synthesize,
)
from .tangent import (
    Decomposition,
    TracelessTensorField,
    ckf_basis,
    conformalize,
    cr_apply,
    cr_solve,
    decompose,
    nu_residual,
    q_form,
)

__version__ = "0.1.0"
