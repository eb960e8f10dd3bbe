"""Conditional co-risk measures (CoVaR, CoES, MES) via bivariate copulas.

The package splits along the representation itself: marginal loss models
(:mod:`corisk.margins`), dependence models (:mod:`corisk.copulas`), the
conditional measures built from the two (:mod:`corisk.measures`),
simulation studies (:mod:`corisk.simlab`), returns-panel tooling
(:mod:`corisk.panel`), and a command-line front end (:mod:`corisk.cli`).
"""

from .copulas import (
    ComonotoneCopula,
    CopulaModel,
    CountermonotoneCopula,
    EmpiricalBetaCopula,
    GumbelCopula,
    IndependenceCopula,
    PseudoObservations,
    fit_beta_copula,
    gumbel_cdf,
    pseudo_observations,
    sample_gumbel,
    tau_to_theta,
)
from .exceptions import (
    CoriskError,
    InfiniteTailError,
    InsufficientDataError,
    PanelFormatError,
    SolverError,
)
from .margins import (
    GpdTail,
    LossSample,
    NormalParams,
    StudentTParams,
    gpd_es_beyond,
    gpd_var_beyond,
    hist_es,
    hist_var,
    t_es,
    t_quantile,
)
from .measures import (
    CoRiskEstimates,
    EqCondPair,
    OmegaSolution,
    RiskLevelPair,
    SensitivityInput,
    analytic_normal_eqcond,
    analytic_t_eqcond,
    coes,
    covar,
    delta_measures,
    estimate_from_losses,
    gpd_corisk_closed_forms,
    gumbel_omega_equation,
    hist_mes,
    mes,
    sensitivity_coes,
    sensitivity_covar,
    sensitivity_dcoes,
    slide_covar,
    solve_omega,
    xi_from_ratio,
)
from .panel import (
    MIN_SAMPLE_FLOOR,
    NetworkGrid,
    ReturnsPanel,
    RollingConfig,
    load_panel,
    network_grid,
    rolling_estimate,
    system_loss_index,
    weekly_aggregate,
)
from .simlab import (
    BiasExperimentConfig,
    ExperimentSummary,
    OutlierSweepConfig,
    OutlierSweepResult,
    run_bias_experiment,
    run_outlier_sweep,
    summarize,
)

__version__ = "0.1.0"
