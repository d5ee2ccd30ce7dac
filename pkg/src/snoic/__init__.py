"""Open intent classification with soft labeling and noisy manifold mixup.

The package trains an (M+1)-way classifier over a compact from-scratch
text encoder in two stages: known-class pretraining, then joint training
that relocates target probability onto the open class while pushing
noisy mixed hidden-state pairs toward it. See the README for the CLI
workflow (split / pretrain / train / eval / report).
"""

__version__ = "0.1.0"

from .augment import MixOutcome, MixupConfig, inject_noise, mixup, noisy_mixup_batch, sample_lambda, select_mix_layer
from .corpus import (
    Batch,
    Dataset,
    EncodedDataset,
    LabeledExample,
    PairedBatch,
    SplitSpec,
    TokenSeq,
    Vocab,
    apply_split,
    build_vocab,
    encode_dataset,
    load_dataset,
    make_batches,
    make_split,
    ordered_batches,
    pair_batches,
    subsample_labeled,
    tokenize,
)
from .encoder import (
    EncoderConfig,
    EncoderParams,
    HiddenState,
    forward,
    forward_from_layer,
    forward_to_layer,
    init_params,
    load_checkpoint,
    save_checkpoint,
)
from .errors import CheckpointError, ConfigError, DataError, PairingError, SnoicError, TrainingError
from .losses import kl_loss, mixup_loss, pretrain_loss, soft_target, softmax, total_loss
from .metrics import ConfusionCounts, MetricsReport, confusion, evaluate
from .trainer import (
    Model,
    OptimizerState,
    TrainConfig,
    TrainLog,
    load_model,
    optimizer_step,
    predict,
    pretrain,
    save_model,
    threshold_baseline_predict,
    train_open,
    train_two_stage,
)

__all__ = [
    "__version__",
    "MixOutcome",
    "MixupConfig",
    "inject_noise",
    "mixup",
    "noisy_mixup_batch",
    "sample_lambda",
    "select_mix_layer",
    "Batch",
    "Dataset",
    "EncodedDataset",
    "LabeledExample",
    "PairedBatch",
    "SplitSpec",
    "TokenSeq",
    "Vocab",
    "apply_split",
    "build_vocab",
    "encode_dataset",
    "load_dataset",
    "make_batches",
    "make_split",
    "ordered_batches",
    "pair_batches",
    "subsample_labeled",
    "tokenize",
    "EncoderConfig",
    "EncoderParams",
    "HiddenState",
    "forward",
    "forward_from_layer",
    "forward_to_layer",
    "init_params",
    "load_checkpoint",
    "save_checkpoint",
    "CheckpointError",
    "ConfigError",
    "DataError",
    "PairingError",
    "SnoicError",
    "TrainingError",
    "kl_loss",
    "mixup_loss",
    "pretrain_loss",
    "soft_target",
    "softmax",
    "total_loss",
    "ConfusionCounts",
    "MetricsReport",
    "confusion",
    "evaluate",
    "Model",
    "OptimizerState",
    "TrainConfig",
    "TrainLog",
    "load_model",
    "optimizer_step",
    "predict",
    "pretrain",
    "save_model",
    "threshold_baseline_predict",
    "train_open",
    "train_two_stage",
]
