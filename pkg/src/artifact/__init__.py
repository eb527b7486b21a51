"""Post-processing for fair regression under relaxed demographic parity.

Base predictions are transported between two signed pseudo-measures with
closed-form pair costs (W2 or TV relaxation), then averaged back into
pseudo-labels and smoothed by a k-NN map.  Aware-setting maps are closed
form.  See the README for a walkthrough.
"""

from .aware import (
    AwareTransport,
    EmpiricalDistribution,
    aware_tv_map,
    aware_tv_predict,
    cdf,
    exact_fair_aware,
    interpolate_w2_aware,
    quantile,
)
from .baselines import plug_in_hard, plug_in_soft
from .data import (
    TargetScaler,
    gen_synthetic_1d,
    gen_synthetic_2d,
    load_csv,
    oracle_eta_1d,
    oracle_posterior_1d,
    read_schema,
    shipped_schema,
    stratified_split,
)
from .decomposition import build_partition, estimate_delta
from .domain import (
    INFINITE,
    Dataset,
    FairnessReport,
    Group,
    GroupPriors,
    Penalty,
    PseudoMeasure,
    PseudoPoint,
    RelaxationConfig,
    Setting,
    TransportPlan,
    ValidationError,
    validate_dataset,
)
from .estimators import fit_logistic, fit_nonparametric, fit_ols, predict_nonparametric
from .metrics import build_report, ks, ks_grid, mse, tv_binned, w2_empirical
from .ot import SolverError, solve_discrete_ot, solve_monotone_1d
from .relaxation import (
    FairPredictor,
    assemble_relaxed_problem,
    barycentric_project,
    cost_tv_unaware,
    cost_w2_unaware,
    fit_fair_predictor,
    predict_fair,
    targets_tv,
    targets_w2,
)

__version__ = "0.1.0"
