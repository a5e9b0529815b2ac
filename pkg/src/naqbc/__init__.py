"""Deep active learning for regression: query-by-committee pool selection,
gradient-based query synthesis and sample-efficiency metrics."""

__version__ = "0.1.0"

from .acquisition import (  # noqa: E402
    Pool,
    sample_pool,
    select_bald_mcdropout,
    select_coreset,
    select_dendiv_qbc,
    select_div_qbc,
    select_qbc,
)
from .ensemble import (  # noqa: E402
    Committee,
    DropoutMLPRegressor,
    ModelSpec,
    QBCCommitteeRegressor,
    train_committee,
)
from .exceptions import (  # noqa: E402
    ConfigurationError,
    NumericDivergenceError,
    ShapeError,
    UndefinedEfficiencyError,
    UnsupportedOracleError,
)
from .harness import ActiveRun, StepRecord, TrialSettings, evaluate_mse, run_trial  # noqa: E402
from .metrics import (  # noqa: E402
    EfficiencyTable,
    annotation_burden,
    cross_validate,
    efficiency,
    gamma_sweep_summary,
)
from .nn import MlpModel, TrainConfig, adam_step, forward, init_model, input_gradient, train  # noqa: E402
from .oracles import DatasetOracle, Problem, arm_oracle, get_problem, make_test_set, sine_oracle  # noqa: E402
from .synthesis import (  # noqa: E402
    HyperRectangle,
    SynthesisConfig,
    boundary_loss,
    boundary_loss_gradient,
    synthesize_queries,
)

