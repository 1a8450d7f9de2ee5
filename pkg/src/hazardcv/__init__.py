"""Kernel hazard estimation from aggregated exposure data with cross-validated bandwidths."""

from .data import (
    DataError,
    GridSample,
    IndividualRecord,
    IngestionError,
    ParseError,
    ValidationError,
    WeightScheme,
    aggregate,
    load_grid_csv,
    load_records_csv,
    write_grid_csv,
)
from .estimators import (
    DegeneratePilotError,
    EstimatorKind,
    HazardEstimate,
    SideMode,
    bo_ll_hazard,
    bo_mbc_hazard,
    estimate,
    ll_hazard,
    mbc_hazard,
    one_sided_hazard,
    side_mask,
    side_select,
    stochastic_moments,
)
from .forecasting import (
    ComponentEstimates,
    DegenerateForecastError,
    Forecast,
    RunOffTriangle,
    chain_ladder,
    component_estimates,
    fit_components,
    forecast,
    load_triangle_csv,
    reverse_components,
    survival_and_density,
)
from .kernels import (
    Kernel,
    KernelError,
    Side,
    custom_kernel,
    epanechnikov,
    equivalent_local_linear,
    get_kernel,
    moments,
    one_sided,
    psi_factor,
    psi_table,
    quartic,
    rho,
    rho_ll,
    rho_mbc,
    sextic,
    twicing,
)
from .selection import (
    BandwidthGrid,
    ScoreUndefinedError,
    SelectionError,
    SelectionMethod,
    SelectionResult,
    cv_score,
    score_trace,
    select,
    select_bo,
    select_cv,
    select_do,
    select_oscv,
)
from .simulation import (
    ConfigurationError,
    HazardModel,
    SimulationConfig,
    StudyConfig,
    UnboundedBandwidthError,
    default_model,
    generate,
    generate_replication,
    mise_optimal_bandwidth,
    run_study,
    theorem_constants,
)

__version__ = "0.1.0"
