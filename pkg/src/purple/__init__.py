"""Relative prevalence estimation for underreported conditions from
positive-unlabeled data, with generators, baselines, assumption checks,
and a benchmark harness."""

from ._version import VERSION as __version__
from .baselines import (
    EmConfig,
    GroupPrevalenceEstimate,
    baseline_relative_prevalence,
    fit_em,
    fit_negative,
    fit_supervised,
    group_prevalences,
    register_estimator,
)
from .checks import (
    AssumptionCheckReport,
    ModelFitComparison,
    assumption_check_report,
    compare_constrained_unconstrained,
)
from .data import (
    FeatureMatrix,
    LabeledDataset,
    ParseError,
    SplitSpec,
    group_summary,
    load_dataset,
    split,
    write_dataset,
)
from .gauss import (
    GaussSynthConfig,
    generate_gauss,
    generate_violation,
    make_separable,
    shift_sweep_config,
)
from .harness import (
    ExperimentSuite,
    RunReport,
    emit_report,
    make_suite,
    run_suite,
    true_relative_prevalence,
)
from .metrics import auc, auprc, calibration
from .model import (
    FitResult,
    PurpleModel,
    RelativePrevalenceEstimate,
    TrainConfig,
    fit,
    gradients,
    loss,
    predict_condition_score,
    predict_diagnosis,
    relative_prevalence,
    relative_prevalence_vs_complement,
)
from .stats import paired_t_test, student_t_cdf
from .visits import (
    SemiSynthConfig,
    SymptomSet,
    generate_visit_corpus,
    select_common_symptoms,
    select_correlated_symptoms,
    select_high_rp_symptoms,
    simulate_labels,
)
