"""Single-positive multi-label learning lab.

Pipeline pieces: embedding storage and synthesis, single-positive
dataset simulation, similarity-based pseudo-labeling, the entropy /
pseudo-label loss family with analytic gradients, a small Adam-trained
probe, mAP evaluation, and a resumable hyperparameter sweep harness.
"""

from ._backend import active_backend, available_backends, set_backend
from .dataset import (
    AnnotationMatrix,
    DatasetSplit,
    LabelState,
    dataset_stats,
    simulate_single_positive,
    split_validation,
)
from .embedding_store import (
    EmbeddingMatrix,
    Manifest,
    SyntheticSpec,
    load_embeddings,
    normalize,
    save_embeddings,
    synthesize,
)
from .losses import (
    LossConfig,
    LossResult,
    LossVariant,
    assume_negative_loss,
    batch_loss,
    em_loss,
    entropy_term,
    sigmoid_probs,
    smoothed_pseudo_term,
    vlpl_loss,
)
from .metrics import EvalReport, average_precision, mean_average_precision
from .probe import AdamState, ProbeModel, TrainConfig, adam_step, forward, init, train
from .pseudo_label import (
    PseudoLabelConfig,
    assign_pseudo_labels,
    merge_with_observed,
    pseudo_label_quality,
    similarity_probs,
)

__version__ = "0.1.0"
