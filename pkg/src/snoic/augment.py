"""Pseudo open-class data: noisy convex mixing of paired hidden states.

Each training step draws one mix layer rl (uniform over the encoder
blocks) and one mixing weight lambda (Beta(alpha, alpha), realized as
g1 / (g1 + g2) from two Gamma(alpha, 1) draws), shared by the whole
batch. The two paired sequences are encoded up to block rl, their
token-level hidden states are combined as lam * h1 + (1 - lam) * h2
under the union of the padding masks, and element-wise noise is
injected:

    noisy = (1 + delta_mul * xi_mul) * mixed + delta_add * xi_add

with xi_mul and xi_add i.i.d. standard normal, drawn in that order and
always drawn even when a delta is zero, so RNG consumption does not
depend on the noise settings. Padded positions are re-zeroed afterward.
The result resumes the encoder from block rl; noise draws act as
constants for gradient purposes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .corpus import PairedBatch
from .encoder import (
    EncoderParams,
    Grads,
    backward_to_layer,
    backward_from_layer,
    head_backward,
    head_logits,
    run_from_layer,
    run_to_layer,
)
from .errors import DataError


@dataclass
class MixupConfig:
    alpha: float = 2.0
    delta_add: float = 0.4
    delta_mul: float = 0.2
    layer_range: tuple[int, int] | None = None  # defaults to all blocks 1..L

    def __post_init__(self):
        if not self.alpha > 0:
            raise DataError(f"alpha must be positive, got {self.alpha}")
        if self.delta_add < 0 or self.delta_mul < 0:
            raise DataError("noise magnitudes must be non-negative")
        if self.layer_range is not None:
            low, high = self.layer_range
            if not 1 <= low <= high:
                raise DataError(f"invalid mix layer range {self.layer_range}")


def sample_lambda(rng: np.random.Generator, alpha: float) -> float:
    """Beta(alpha, alpha) via the two-gamma construction."""
    if not alpha > 0:
        raise DataError(f"alpha must be positive, got {alpha}")
    g1 = rng.standard_gamma(alpha)
    g2 = rng.standard_gamma(alpha)
    total = g1 + g2
    if total == 0.0:
        return 0.5
    return float(g1 / total)


def select_mix_layer(rng: np.random.Generator, low: int, high: int) -> int:
    """Uniform draw from blocks low..high inclusive."""
    if not 1 <= low <= high:
        raise DataError(f"invalid mix layer range ({low}, {high})")
    return int(rng.integers(low, high + 1))


def mixup(
    h1: np.ndarray, mask1: np.ndarray, h2: np.ndarray, mask2: np.ndarray, lam: float
) -> tuple[np.ndarray, np.ndarray]:
    """Convex combination of hidden states under the union padding mask."""
    if h1.shape != h2.shape:
        raise DataError(f"hidden state shapes differ: {h1.shape} vs {h2.shape}")
    if mask1.shape != mask2.shape or mask1.shape != h1.shape[:2]:
        raise DataError("mask shapes do not match hidden states")
    if not 0.0 <= lam <= 1.0:
        raise DataError(f"mixing weight must be in [0, 1], got {lam}")
    mixed = lam * h1 + (1.0 - lam) * h2
    union = np.maximum(mask1, mask2)
    return mixed * union[:, :, None], union


def inject_noise(
    mixed: np.ndarray,
    mask: np.ndarray,
    rng: np.random.Generator,
    delta_add: float,
    delta_mul: float,
) -> tuple[np.ndarray, np.ndarray]:
    """Multiplicative-then-additive Gaussian noise, re-zeroed off-mask.

    Returns the noisy state and the multiplicative factor (1 + delta_mul
    * xi_mul), which is the local derivative of the output with respect
    to the mixed input.
    """
    xi_mul = rng.standard_normal(mixed.shape)
    xi_add = rng.standard_normal(mixed.shape)
    scale = 1.0 + delta_mul * xi_mul.astype(mixed.dtype)
    noisy = scale * mixed + delta_add * xi_add.astype(mixed.dtype)
    return noisy * mask[:, :, None].astype(mixed.dtype), scale


@dataclass
class MixOutcome:
    """What one mixing step produced, for logging and tests."""

    hidden: np.ndarray  # noisy mixed state at the mix layer
    lam: float
    layer: int
    mask: np.ndarray


class NoisyMixupPass:
    """One recorded pseudo-data pass over a paired batch.

    Draw order per step: mix layer, lambda (two gammas), xi_mul, xi_add.
    backward(dlogits) routes gradients through the resumed segment and
    both encoder branches, scaling by the noise factor and lam / (1-lam).
    """

    def __init__(
        self,
        p: EncoderParams,
        pair: PairedBatch,
        mix_cfg: MixupConfig,
        rng: np.random.Generator,
    ):
        self.p = p
        low, high = mix_cfg.layer_range or (1, p.cfg.num_layers)
        if high > p.cfg.num_layers:
            raise DataError(
                f"mix layer range ({low}, {high}) exceeds encoder depth {p.cfg.num_layers}"
            )
        self.layer = select_mix_layer(rng, low, high)
        self.lam = sample_lambda(rng, mix_cfg.alpha)
        dtype = p["token_embedding"].dtype
        mask1 = pair.first.mask.astype(dtype)
        mask2 = pair.second.mask.astype(dtype)
        self.c1: dict = {}
        self.c2: dict = {}
        h1 = run_to_layer(p, pair.first.tokens, mask1, self.layer, cache=self.c1)
        h2 = run_to_layer(p, pair.second.tokens, mask2, self.layer, cache=self.c2)
        mixed, self.union = mixup(h1, mask1, h2, mask2, self.lam)
        self.noisy, self.scale = inject_noise(
            mixed, self.union, rng, mix_cfg.delta_add, mix_cfg.delta_mul
        )
        self.cres: dict = {}
        self.e = run_from_layer(p, self.noisy, self.union, self.layer, cache=self.cres)
        self.logits = head_logits(p, self.e)

    @property
    def outcome(self) -> MixOutcome:
        return MixOutcome(hidden=self.noisy, lam=self.lam, layer=self.layer, mask=self.union)

    def backward(self, dlogits: np.ndarray, grads: Grads | None = None) -> Grads:
        grads = Grads() if grads is None else grads
        de = head_backward(self.p, self.e, dlogits, grads)
        dh = backward_from_layer(self.p, self.cres, de, grads)
        dmixed = dh * self.union[:, :, None] * self.scale
        backward_to_layer(self.p, self.c1, self.lam * dmixed, grads)
        backward_to_layer(self.p, self.c2, (1.0 - self.lam) * dmixed, grads)
        return grads


def noisy_mixup_batch(
    p: EncoderParams,
    pair: PairedBatch,
    mix_cfg: MixupConfig,
    rng: np.random.Generator,
) -> tuple[np.ndarray, MixOutcome]:
    """Pseudo intent representations (B x dim) for a paired batch."""
    out = NoisyMixupPass(p, pair, mix_cfg, rng)
    return out.e, out.outcome
