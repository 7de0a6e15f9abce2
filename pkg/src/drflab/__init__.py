"""drflab: a numerical laboratory for deep random-feature regression.

Builds L-layer random-feature pipelines and their moment-matched Gaussian
surrogates, fits ridge / elastic-net readouts on both, predicts the same
train and generalization errors from a scalar saddle-point problem, and
computes the surrogate covariance eigendistribution empirically and via a
recursive Stieltjes-transform fixed point.
"""

from . import activations
from .moments import (
    LayerConstants,
    QuadratureRule,
    MomentInconsistencyError,
    constants_chain,
    eta1,
    eta2,
    gauss_hermite,
    layer_constants,
)
from .pipeline import (
    CovarianceMatrix,
    FeatureSet,
    NetworkShape,
    WeightStack,
    covariance_recursion,
    drf_forward,
    dump_binary,
    kernel_linearization_gap,
    load_binary,
    regularity_check,
    regularity_preservation_probe,
    sample_weights,
    surrogate_forward,
)
from .regression import (
    FitResult,
    LabelModel,
    RegressionProblem,
    Regularizer,
    default_label_model,
    fit_elastic_net,
    fit_ridge,
    generalization_error_analytic,
    generalization_error_empirical,
    synthesize_labels,
    training_error,
)
from .cgmt import (
    CgmtConstants,
    CgmtNonConvergence,
    CgmtSolution,
    SaddleState,
    moreau_envelope,
    predict_with_averaging,
    predicted_errors,
    solve_general,
    solve_same_size,
)
from .spectral import (
    FixedPointSettings,
    SpectralDensity,
    StieltjesEvaluator,
    StieltjesNonConvergence,
    density_from_stieltjes,
    density_richardson,
    density_tsv,
    empirical_spectrum,
    ks_distance,
    mp_stieltjes,
    omega_fixed_point,
    refined_grid,
    stieltjes_chain,
)
from .experiments import (
    ConfigError,
    ExperimentConfig,
    ExperimentOutcome,
    parse_config,
    run_cgmt_vs_mc,
    run_figure_sweep,
    run_spectra,
    run_universality_gap,
)

__version__ = "0.1.0"
