"""Continuous expression-editing benchmark metrics, embedding algebra for
intensity control, reference loss implementations with analytic gradients,
and a deterministic desk-scale symmetric trainer on a synthetic manifold."""

from .affect import (
    AffectVector,
    BASIC_SIX,
    ConfusingPairRegistry,
    DEFAULT_REGISTRY,
    ExpressionId,
    SampleRecord,
    TARGET_TWELVE,
    dominant_expression,
    validate_affect_vector,
)
from .interp import blend, interpolate, residual_direction
from .losses import (
    FeatureTriplet,
    LossWeights,
    TripletConfig,
    cosine_dist,
    cosine_sim,
    flow_matching_loss,
    gradient,
    identity_loss,
    normalize,
    symmetric_contrastive,
    total_loss,
    triplet_hinge,
    triplet_infonce,
    triplet_logratio,
)
from .metrics import (
    ConfusionMatrix,
    EvalRecord,
    MetricReport,
    accuracy,
    bcr,
    build_confusion,
    cls_score,
    directed_confusion,
    hes,
    identity_similarity,
    mscr,
    pearson,
    report,
)
from .pipeline import (
    build_triplets,
    load_predictions,
    mead_intensity,
    parse_annotations,
    quality_filter,
)
from .trainer import (
    EvalConfig,
    SymmetricBatch,
    TrainingConfig,
    VelocityNet,
    evaluate_synthetic,
    net_generator,
    one_step_generate,
    oracle_generator,
    train,
    train_step,
)
from .world import FrozenEncoders, SyntheticWorldConfig, World, generate_world

__version__ = "0.1.0"
