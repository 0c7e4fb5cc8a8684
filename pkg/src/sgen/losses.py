"""Training objectives: pixel MSE and the adversarial pair.

Discriminator outputs are clamped to [1e-7, 1 - 1e-7] before any log so
a saturated score cannot produce infinities.  The generator objective is
the adversarial term plus lambda_mse times the pixel MSE; two adversarial
variants are supported:

    minimax:        mean(log(1 - d_fake))
    nonsaturating: -mean(log d_fake)
"""

from __future__ import annotations

from .autodiff import Tensor, add, clamp, const_minus, log, mean_all, mul, mul_const, sub

__all__ = ["mse_loss", "d_loss", "g_loss", "CLAMP_EPS", "G_LOSS_VARIANTS"]

CLAMP_EPS = 1e-7
G_LOSS_VARIANTS = ("minimax", "nonsaturating")


def mse_loss(pred: Tensor, target: Tensor) -> Tensor:
    """Mean of squared differences over every element, as a scalar tensor."""
    if pred.shape != target.shape:
        raise ValueError(f"mse_loss: shape mismatch {pred.shape} vs {target.shape}")
    diff = sub(pred, target)
    return mean_all(mul(diff, diff))


def _squash(scores: Tensor) -> Tensor:
    return clamp(scores, CLAMP_EPS, 1.0 - CLAMP_EPS)


def d_loss(d_real: Tensor, d_fake: Tensor) -> Tensor:
    """-mean(log d_real) - mean(log(1 - d_fake)); minimized by a sharp critic."""
    real = _squash(d_real)
    fake = _squash(d_fake)
    total = add(mean_all(log(real)), mean_all(log(const_minus(1.0, fake))))
    return mul_const(total, -1.0)


def g_loss(
    d_fake: Tensor, pred: Tensor, target: Tensor, lambda_mse: float, variant: str
) -> Tensor:
    """Adversarial term (see module docstring) plus lambda_mse * mse."""
    if variant not in G_LOSS_VARIANTS:
        raise ValueError(f"g_loss: unknown variant {variant!r}; expected one of {G_LOSS_VARIANTS}")
    if lambda_mse < 0:
        raise ValueError(f"g_loss: lambda_mse must be >= 0, got {lambda_mse}")
    fake = _squash(d_fake)
    if variant == "minimax":
        adv = mean_all(log(const_minus(1.0, fake)))
    else:
        adv = mul_const(mean_all(log(fake)), -1.0)
    return add(adv, mul_const(mse_loss(pred, target), lambda_mse))
