"""Zeroth-order optimizers with prior-informed perturbations.

MeZO-style SPSA with seed-regenerated directions, plus guided-vector and
greedy-probe variants, synthetic test problems, and Monte Carlo checks of
the directional alignment of each estimator.
"""

from zoguide.errors import ConfigError, EstimationError, NumericOverflowError, TraceIOError, ZOError
from zoguide.estimators import (
    DirectionalEstimate,
    GuidingVector,
    LossOracle,
    Minibatch,
    compute_greedy_perturbation,
    compute_guiding_vector,
    greedy_estimate,
    gv_estimate,
    spsa_estimate,
)
from zoguide.optimizers import (
    VARIANTS,
    OptimizerConfig,
    mezo_greedy_step,
    mezo_gv_step,
    mezo_step,
    run_training,
    steps_for_budget,
)
from zoguide.prng import derive_seed, gaussian_stream, perturb_in_place
from zoguide.problems import (
    logreg_synthetic,
    lora_linear_problem,
    make_problem,
    quadratic_problem,
    rosenbrock_problem,
)
from zoguide.trace import RunSummary, TraceRow, cosine_similarity, emit_csv, emit_json, materialize_estimate

__version__ = "0.1.0"
