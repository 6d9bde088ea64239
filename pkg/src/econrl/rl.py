"""Returns, advantages, policy/value losses with their gradient seeds, and Adam.

Every loss here returns both its scalar value and the per-sample seed
derivatives the network backward pass consumes (d loss / d log-prob,
d loss / d value, d loss / d entropy). Losses are means over the batch, so
gradient magnitudes do not grow with batch size.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .nets import Gradients, MlpParams, map_params, zeros_like_params

ADVANTAGE_EPS = 1e-8


def discounted_returns(rewards: np.ndarray, gamma: float) -> np.ndarray:
    """Episodic reward-to-go along axis 0: G_t = r_t + gamma * G_{t+1}, G_T = 0."""
    out = np.empty_like(np.asarray(rewards, dtype=np.float64))
    acc = np.zeros(out.shape[1:], dtype=np.float64)
    for t in range(out.shape[0] - 1, -1, -1):
        acc = rewards[t] + gamma * acc
        out[t] = acc
    return out


def standardized_advantages(returns: np.ndarray, values: np.ndarray) -> np.ndarray:
    """Centered, standardized advantages over the whole batch."""
    adv = np.asarray(returns, dtype=np.float64) - np.asarray(values, dtype=np.float64)
    if adv.size < 2:
        raise ValueError("advantage standardization needs at least 2 samples")
    return (adv - adv.mean()) / (adv.std() + ADVANTAGE_EPS)


def huber_value_loss(
    values: np.ndarray, returns: np.ndarray, delta: float = 1.0
) -> tuple[float, np.ndarray]:
    """Mean Huber loss between value predictions and returns, plus d loss/d values."""
    err = np.asarray(values, dtype=np.float64) - np.asarray(returns, dtype=np.float64)
    small = np.abs(err) <= delta
    loss = np.where(small, 0.5 * err**2, delta * (np.abs(err) - 0.5 * delta))
    dvalues = np.where(small, err, delta * np.sign(err)) / err.size
    return float(loss.mean()), dvalues


def ppo_surrogate(
    logp_new: np.ndarray, logp_old: np.ndarray, adv: np.ndarray, clip: float
) -> tuple[float, np.ndarray]:
    """Clipped-surrogate policy loss -mean(A_PPO), plus d loss/d logp_new.

    A_PPO takes the pointwise min of ratio * adv and clip(ratio) * adv; the
    gradient flows only where the unclipped branch attains the min.
    """
    ratio = np.exp(np.asarray(logp_new, dtype=np.float64) - np.asarray(logp_old, dtype=np.float64))
    unclipped = ratio * adv
    clipped = np.clip(ratio, 1.0 - clip, 1.0 + clip) * adv
    surrogate = np.minimum(unclipped, clipped)
    active = unclipped <= clipped
    dlogp = -np.where(active, ratio * adv, 0.0) / ratio.size
    return float(-surrogate.mean()), dlogp


def reinforce_loss(
    logp: np.ndarray, adv: np.ndarray, entropy: np.ndarray, alpha: float
) -> tuple[float, np.ndarray, np.ndarray]:
    """Policy-gradient loss -mean(adv * logp) - alpha * mean(H), with seeds.

    Returns (loss, d loss/d logp, d loss/d entropy). Matches the PPO surrogate
    gradient at ratio 1, up to the entropy term.
    """
    logp = np.asarray(logp, dtype=np.float64)
    n = logp.size
    loss = float(-(adv * logp).mean() - alpha * np.asarray(entropy).mean())
    return loss, -adv / n, np.full(n, -alpha / n)


def entropy_term(entropy: np.ndarray, alpha: float) -> tuple[float, np.ndarray]:
    """Entropy bonus -alpha * mean(H) as a loss term, plus d loss/d entropy."""
    entropy = np.asarray(entropy, dtype=np.float64)
    return float(-alpha * entropy.mean()), np.full(entropy.size, -alpha / entropy.size)


def gradient_norm(grads: Gradients) -> float:
    return float(np.sqrt(sum(float((a.astype(np.float64) ** 2).sum()) for _, a in grads.flat())))


def clip_gradients(grads: Gradients, max_norm: float) -> tuple[Gradients, float]:
    """Scale gradients so the global L2 norm is at most max_norm.

    Direction is preserved; returns (grads, pre-clip norm). Clipping is
    idempotent up to rounding.
    """
    norm = gradient_norm(grads)
    if norm <= max_norm or norm == 0.0:
        return grads, norm
    scale = max_norm / norm
    return map_params(lambda a: a * np.asarray(scale, dtype=a.dtype), grads), norm


@dataclass
class OptimizerState:
    """Adam moments and step counter for one network."""

    m: Gradients
    v: Gradients
    step: int
    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def init_optimizer(
    params: MlpParams, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8
) -> OptimizerState:
    return OptimizerState(
        m=zeros_like_params(params), v=zeros_like_params(params), step=0,
        lr=lr, beta1=beta1, beta2=beta2, eps=eps,
    )


def copy_optimizer(opt: OptimizerState) -> OptimizerState:
    return OptimizerState(
        m=opt.m.copy(), v=opt.v.copy(), step=opt.step,
        lr=opt.lr, beta1=opt.beta1, beta2=opt.beta2, eps=opt.eps,
    )


def adam_step(params: MlpParams, grads: Gradients, opt: OptimizerState) -> MlpParams:
    """One bias-corrected Adam update. Mutates `opt`, returns new parameters."""
    opt.step += 1
    b1, b2 = opt.beta1, opt.beta2
    opt.m = map_params(lambda m, g: b1 * m + (1.0 - b1) * g.astype(m.dtype), opt.m, grads)
    opt.v = map_params(lambda v, g: b2 * v + (1.0 - b2) * g.astype(v.dtype) ** 2, opt.v, grads)
    correction1 = 1.0 - b1**opt.step
    correction2 = 1.0 - b2**opt.step
    step_size = opt.lr / correction1

    def update(p, m, v):
        denom = np.sqrt(v / correction2) + opt.eps
        return (p - step_size * m / denom).astype(p.dtype)

    return map_params(update, params, opt.m, opt.v)
