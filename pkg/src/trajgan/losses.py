"""Training objectives: adversarial BCE, squared-L2 regression, variety loss.

The per-step L2 term is the squared Euclidean distance between predicted
and ground-truth states, averaged over agents and steps. The adversarial
term is binary cross-entropy; training uses the logits form for numerical
stability, and the generator maximizes log D(fake) (non-saturating form).
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor

LN2 = float(np.log(2.0))


def l2_loss(pred_steps: list[Tensor], target: np.ndarray) -> Tensor:
    """Mean over agents and steps of the squared distance per step.

    pred_steps: list of T tensors (A, 2); target: (A, T, 2) in the same
    coordinate space.
    """
    target = np.asarray(target, dtype=np.float64)
    t_len = len(pred_steps)
    if t_len == 0 or target.shape[:2] != (pred_steps[0].shape[0], t_len):
        raise ad.ShapeError(f"l2_loss: target {target.shape} vs {t_len} prediction steps")
    a = pred_steps[0].shape[0]
    total = None
    for t, p in enumerate(pred_steps):
        sq = ad.sum_all(ad.square(ad.sub(p, Tensor(target[:, t, :]))))
        total = sq if total is None else ad.add(total, sq)
    return ad.scale(total, 1.0 / (a * t_len))


def variety_l2_loss(sample_steps: list[list[Tensor]], target: np.ndarray) -> Tensor:
    """Minimum of l2_loss over k sampled trajectories (opt-in, k >= 1)."""
    if not sample_steps:
        raise ValueError("variety_l2_loss: need at least one sample")
    losses = [l2_loss(steps, target) for steps in sample_steps]
    best = min(range(len(losses)), key=lambda i: float(losses[i].data))
    return losses[best]


def adversarial_loss(scores: Tensor, labels) -> Tensor:
    """Mean BCE on probability scores (strictly inside (0, 1)).

    Exact at moderate scores (0.5 vs any label gives ln 2); training paths
    should prefer ``adversarial_loss_from_logits``.
    """
    y = np.asarray(labels, dtype=np.float64)
    if y.shape != scores.shape:
        raise ad.ShapeError(f"adversarial_loss: scores {scores.shape} vs labels {y.shape}")
    if np.any((y != 0.0) & (y != 1.0)):
        raise ValueError("adversarial_loss: labels must be 0 or 1")
    n = scores.size
    pos = ad.mul(ad.log(scores), Tensor(y))
    neg = ad.mul(ad.log(ad.add_const(ad.scale(scores, -1.0), 1.0)), Tensor(1.0 - y))
    return ad.scale(ad.sum_all(ad.add(pos, neg)), -1.0 / n)


def adversarial_loss_from_logits(logits: Tensor, labels) -> Tensor:
    """Mean BCE computed from logits (numerically stable)."""
    return ad.mean_all(ad.bce_with_logits(logits, labels))


def discriminator_loss(real_logits: Tensor, fake_logits: Tensor) -> Tensor:
    """BCE(real, 1) + BCE(fake, 0); about 2 ln 2 at initialization."""
    real = adversarial_loss_from_logits(real_logits, np.ones(real_logits.shape[0]))
    fake = adversarial_loss_from_logits(fake_logits, np.zeros(fake_logits.shape[0]))
    return ad.add(real, fake)


def generator_loss(fake_logits: Tensor, pred_steps: list[Tensor],
                   target_steps: np.ndarray, lambda_l2: float = 1.0
                   ) -> tuple[Tensor, Tensor, Tensor]:
    """Non-saturating adversarial term plus lambda * L2.

    Returns (total, adversarial part, l2 part).
    """
    adv = adversarial_loss_from_logits(fake_logits, np.ones(fake_logits.shape[0]))
    reg = l2_loss(pred_steps, target_steps)
    total = ad.add(adv, ad.scale(reg, lambda_l2))
    return total, adv, reg


def paired_objective(real_logits: Tensor, fake_logits: Tensor,
                     pred_steps: list[Tensor], target_steps: np.ndarray,
                     lambda_l2: float = 1.0) -> Tensor:
    """Sum of both players' objectives, as one scalar.

    Used by the end-to-end gradient check: every trainable tensor of the
    model (generator side through the fake path, discriminator side through
    the BCE terms) receives a gradient from this single value.
    """
    d_part = discriminator_loss(real_logits, fake_logits)
    g_total, _, _ = generator_loss(fake_logits, pred_steps, target_steps, lambda_l2)
    return ad.add(d_part, g_total)
