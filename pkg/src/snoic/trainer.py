"""Two-stage training of the (M+1)-way open intent classifier.

Stage one pretrains the encoder and the known part of the head with
cross-entropy over the first M logits; the open column stays out of the
normalizer, so it only moves through weight decay. Stage two restarts
the optimizer and minimizes

    gamma * KL(soft targets || softmax over M+1)
    + (1 - gamma) * open-class cross-entropy on noisy mixed pairs

where the soft targets relocate probability rho from the gold class to
the open class. Both stages validate with known-class accuracy and keep
the best parameters under early stopping (a non-improving epoch bumps a
counter; any strict improvement resets it).

All randomness flows from one master seed through fixed purpose streams,
so a rerun of the same configuration reproduces every shuffle, pairing,
and noise draw exactly.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import asdict, dataclass, field

import numpy as np

from .augment import MixupConfig, NoisyMixupPass
from .corpus import EncodedDataset, Vocab, make_batches, ordered_batches, pair_batches
from .encoder import EncoderParams, TapedForward, forward, load_checkpoint, save_checkpoint
from .errors import ConfigError, DataError, PairingError, TrainingError
from .losses import kl_loss, mixup_loss, pretrain_loss, soft_targets, softmax, total_loss

BETA1 = 0.9
BETA2 = 0.999
ADAM_EPS = 1e-8

# purpose streams carved out of the master seed
_STREAM_PRETRAIN_SHUFFLE = 1
_STREAM_OPEN_SHUFFLE = 2
_STREAM_PAIRING = 3
_STREAM_MIXING = 4

CHECKPOINT_FILE = "model.ckpt"
VOCAB_FILE = "vocab.json"
META_FILE = "meta.json"
LOG_FILE = "train_log.jsonl"


def _stream_seed(seed: int, stream: int) -> int:
    """Stable derived seed for one purpose stream of the master seed."""
    return int(np.random.default_rng([seed, stream]).integers(0, 2**63))


@dataclass
class TrainConfig:
    lr: float = 1e-3
    weight_decay: float = 0.01
    batch_size: int = 32
    max_epochs: int = 60
    patience: int = 10
    rho: float = 0.3
    alpha: float = 2.0
    gamma_mode: str = "fixed"
    gamma: float = 0.5
    delta_add: float = 0.4
    delta_mul: float = 0.2
    seed: int = 0
    use_soft_labels: bool = True
    use_additive_noise: bool = True
    use_multiplicative_noise: bool = True

    def __post_init__(self):
        if self.lr < 0:
            raise ConfigError(f"lr must be >= 0, got {self.lr}")
        if self.weight_decay < 0:
            raise ConfigError(f"weight_decay must be >= 0, got {self.weight_decay}")
        for name in ("batch_size", "max_epochs", "patience"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        if not 0.0 <= self.rho < 1.0:
            raise ConfigError(f"rho must be in [0, 1), got {self.rho}")
        if not self.alpha > 0:
            raise ConfigError(f"alpha must be positive, got {self.alpha}")
        if self.gamma_mode not in ("fixed", "lambda"):
            raise ConfigError(f"gamma_mode must be 'fixed' or 'lambda', got {self.gamma_mode!r}")
        if not 0.0 <= self.gamma <= 1.0:
            raise ConfigError(f"gamma must be in [0, 1], got {self.gamma}")
        if self.delta_add < 0 or self.delta_mul < 0:
            raise ConfigError("noise magnitudes must be non-negative")
        if self.seed < 0:
            raise ConfigError(f"seed must be non-negative, got {self.seed}")

    def mixup_config(self) -> MixupConfig:
        return MixupConfig(
            alpha=self.alpha,
            delta_add=self.delta_add if self.use_additive_noise else 0.0,
            delta_mul=self.delta_mul if self.use_multiplicative_noise else 0.0,
        )

    def effective_rho(self) -> float:
        return self.rho if self.use_soft_labels else 0.0


@dataclass
class OptimizerState:
    """Decoupled-weight-decay Adam moments, one slot per parameter."""

    step: int
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]

    @classmethod
    def for_params(cls, params: EncoderParams) -> "OptimizerState":
        return cls(
            step=0,
            m={n: np.zeros_like(params[n]) for n in params.names()},
            v={n: np.zeros_like(params[n]) for n in params.names()},
        )


def optimizer_step(
    params: EncoderParams,
    grads: dict,
    state: OptimizerState,
    lr: float,
    weight_decay: float,
) -> None:
    """One bias-corrected Adam step with decoupled decay on matrices.

    Every parameter advances its moments each step; a parameter without a
    gradient entry contributes zero. Biases and normalization parameters
    are exempt from weight decay.
    """
    state.step += 1
    t = state.step
    c1 = 1.0 - BETA1**t
    c2 = 1.0 - BETA2**t
    for name in params.names():
        p = params.tensors[name]
        g = grads.get(name)
        if g is None:
            g = np.zeros_like(p)
        else:
            if not np.all(np.isfinite(g)):
                raise TrainingError(f"non-finite gradient in tensor {name!r}")
            g = g.astype(p.dtype, copy=False)
        m = state.m[name]
        v = state.v[name]
        m *= BETA1
        m += (1.0 - BETA1) * g
        v *= BETA2
        v += (1.0 - BETA2) * g * g
        p -= lr * (m / c1) / (np.sqrt(v / c2) + ADAM_EPS)
        if weight_decay and p.ndim >= 2:
            p -= lr * weight_decay * p


@dataclass
class EpochRecord:
    epoch: int
    stage: str
    mean_loss: float
    val_known_acc: float
    best: bool


@dataclass
class TrainLog:
    records: list[EpochRecord] = field(default_factory=list)

    def add(self, epoch: int, stage: str, mean_loss: float, val_known_acc: float, best: bool) -> None:
        self.records.append(EpochRecord(epoch, stage, float(mean_loss), float(val_known_acc), best))

    def save(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as f:
            for rec in self.records:
                f.write(json.dumps(asdict(rec), sort_keys=True))
                f.write("\n")

    def __len__(self) -> int:
        return len(self.records)


def known_accuracy(params: EncoderParams, enc: EncodedDataset, batch_size: int, known_only: bool) -> float:
    """Fraction of examples whose argmax matches the gold known class.

    known_only restricts the argmax to the first M logits (the stage-one
    view); otherwise all M+1 logits compete and an open prediction counts
    as a miss.
    """
    correct = 0
    for batch in ordered_batches(enc, batch_size):
        _, logits = forward(params, batch)
        scores = logits[:, : params.M] if known_only else logits
        preds = np.argmax(scores, axis=1) + 1
        correct += int((preds == batch.labels).sum())
    return correct / len(enc)


def _early_stopped_loop(params, cfg: TrainConfig, stage, epoch_fn, val_fn, log: TrainLog) -> EncoderParams:
    best_val = -math.inf
    best = params.copy()
    bad_epochs = 0
    for epoch in range(1, cfg.max_epochs + 1):
        mean_loss = epoch_fn(epoch)
        val = val_fn()
        improved = val > best_val
        if improved:
            best_val = val
            best = params.copy()
            bad_epochs = 0
        else:
            bad_epochs += 1
        log.add(epoch, stage, mean_loss, val, improved)
        if bad_epochs >= cfg.patience:
            break
    return best


def _check_training_inputs(params: EncoderParams, train_enc: EncodedDataset, val_enc: EncodedDataset) -> None:
    if len(train_enc) == 0:
        raise DataError("empty training set")
    if len(val_enc) == 0:
        raise DataError("empty validation set")
    for name, enc in (("training", train_enc), ("validation", val_enc)):
        ids = enc.class_ids
        if ids.min() < 1 or ids.max() > params.M:
            raise DataError(f"{name} set contains class ids outside 1..{params.M}")


def pretrain(
    params: EncoderParams,
    train_enc: EncodedDataset,
    val_enc: EncodedDataset,
    cfg: TrainConfig,
    log: TrainLog | None = None,
) -> tuple[EncoderParams, TrainLog]:
    """Stage one: known-class cross-entropy over the first M logits."""
    _check_training_inputs(params, train_enc, val_enc)
    params = params.copy()
    log = TrainLog() if log is None else log
    opt = OptimizerState.for_params(params)
    shuffle_seed = _stream_seed(cfg.seed, _STREAM_PRETRAIN_SHUFFLE)

    def epoch_fn(epoch: int) -> float:
        total = 0.0
        count = 0
        for batch in make_batches(train_enc, cfg.batch_size, shuffle_seed, epoch):
            tape = TapedForward(params, batch)
            value, dlogits = pretrain_loss(tape.logits, batch.labels, params.M)
            if not math.isfinite(value):
                raise TrainingError(f"non-finite pretraining loss at epoch {epoch}")
            optimizer_step(params, tape.backward(dlogits), opt, cfg.lr, cfg.weight_decay)
            total += value
            count += 1
        return total / count

    def val_fn() -> float:
        return known_accuracy(params, val_enc, cfg.batch_size, known_only=True)

    best = _early_stopped_loop(params, cfg, "pretrain", epoch_fn, val_fn, log)
    return best, log


def train_open(
    params: EncoderParams,
    train_enc: EncodedDataset,
    val_enc: EncodedDataset,
    cfg: TrainConfig,
    log: TrainLog | None = None,
) -> tuple[EncoderParams, TrainLog]:
    """Stage two: soft-target KL blended with mixed pseudo open data.

    The optimizer restarts with fresh moments. Each step consumes one
    soft-target batch and one different-intent pair batch; the blend
    weight is cfg.gamma, or the step's own mixing weight when
    gamma_mode is 'lambda'.
    """
    _check_training_inputs(params, train_enc, val_enc)
    if len(np.unique(train_enc.class_ids)) < 2:
        raise PairingError("stage two requires at least 2 distinct known intents")
    params = params.copy()
    log = TrainLog() if log is None else log
    opt = OptimizerState.for_params(params)
    shuffle_seed = _stream_seed(cfg.seed, _STREAM_OPEN_SHUFFLE)
    pair_seed = _stream_seed(cfg.seed, _STREAM_PAIRING)
    mix_rng = np.random.default_rng([cfg.seed, _STREAM_MIXING])
    mix_cfg = cfg.mixup_config()
    rho = cfg.effective_rho()

    def epoch_fn(epoch: int) -> float:
        total = 0.0
        count = 0
        soft = make_batches(train_enc, cfg.batch_size, shuffle_seed, epoch)
        pairs = pair_batches(train_enc, cfg.batch_size, pair_seed, epoch)
        for batch, pair in zip(soft, pairs):
            tape = TapedForward(params, batch)
            targets = soft_targets(batch.labels, params.M, rho)
            kl_value, dkl = kl_loss(targets, tape.logits)
            mix_pass = NoisyMixupPass(params, pair, mix_cfg, mix_rng)
            open_value, dopen = mixup_loss(mix_pass.logits)
            gamma = cfg.gamma if cfg.gamma_mode == "fixed" else mix_pass.lam
            value = total_loss(kl_value, open_value, gamma)
            if not math.isfinite(value):
                raise TrainingError(f"non-finite open-training loss at epoch {epoch}")
            grads = tape.backward(gamma * dkl)
            mix_pass.backward((1.0 - gamma) * dopen, grads)
            optimizer_step(params, grads, opt, cfg.lr, cfg.weight_decay)
            total += value
            count += 1
        return total / count

    def val_fn() -> float:
        return known_accuracy(params, val_enc, cfg.batch_size, known_only=False)

    best = _early_stopped_loop(params, cfg, "open", epoch_fn, val_fn, log)
    return best, log


def train_two_stage(
    params: EncoderParams,
    train_enc: EncodedDataset,
    val_enc: EncodedDataset,
    cfg: TrainConfig,
) -> tuple[EncoderParams, TrainLog]:
    best1, log = pretrain(params, train_enc, val_enc, cfg)
    best2, log = train_open(best1, train_enc, val_enc, cfg, log=log)
    return best2, log


def predict(params: EncoderParams, enc: EncodedDataset, batch_size: int = 128) -> np.ndarray:
    """Argmax class ids over all M+1 logits; ties go to the smaller id."""
    preds = []
    for batch in ordered_batches(enc, batch_size):
        _, logits = forward(params, batch)
        preds.append((np.argmax(logits, axis=1) + 1).astype(np.int32))
    return np.concatenate(preds)


def threshold_baseline_predict(
    params: EncoderParams, enc: EncodedDataset, threshold: float, batch_size: int = 128
) -> np.ndarray:
    """Known-class softmax with a confidence floor for rejecting to open.

    Rows whose maximum known-class probability falls below the threshold
    are assigned the open id M+1.
    """
    if not 0.0 <= threshold <= 1.0:
        raise ConfigError(f"threshold must be in [0, 1], got {threshold}")
    preds = []
    for batch in ordered_batches(enc, batch_size):
        _, logits = forward(params, batch)
        probs = softmax(logits[:, : params.M])
        top = (np.argmax(probs, axis=1) + 1).astype(np.int32)
        conf = probs.max(axis=1)
        preds.append(np.where(conf < threshold, params.M + 1, top).astype(np.int32))
    return np.concatenate(preds)


@dataclass
class Model:
    """Trained parameters together with the vocabulary they assume."""

    params: EncoderParams
    vocab: Vocab


def save_model(model: Model, dirpath: str, meta: dict | None = None, log: TrainLog | None = None) -> None:
    os.makedirs(dirpath, exist_ok=True)
    save_checkpoint(model.params, os.path.join(dirpath, CHECKPOINT_FILE))
    model.vocab.save(os.path.join(dirpath, VOCAB_FILE))
    with open(os.path.join(dirpath, META_FILE), "w", encoding="utf-8") as f:
        json.dump(meta or {}, f, sort_keys=True)
        f.write("\n")
    if log is not None:
        log.save(os.path.join(dirpath, LOG_FILE))


def load_model(dirpath: str) -> tuple[Model, dict]:
    params = load_checkpoint(os.path.join(dirpath, CHECKPOINT_FILE))
    vocab = Vocab.load(os.path.join(dirpath, VOCAB_FILE))
    meta_path = os.path.join(dirpath, META_FILE)
    meta = {}
    if os.path.exists(meta_path):
        with open(meta_path, "r", encoding="utf-8") as f:
            meta = json.load(f)
    return Model(params=params, vocab=vocab), meta
