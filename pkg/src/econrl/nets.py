"""Three-layer MLP policies with factorized categorical heads and a value head.

Forward, sampling, entropy, and the exact analytic backward pass are written
out by hand against numpy; there is no autodiff. The trunk is three
fully-connected tanh layers producing a shared feature that feeds every
action head and the scalar value head. Heads can be masked: masked logits
become -inf before the softmax, masked probabilities are exactly zero, and
their gradient contribution is defined to be zero.

float32 is the training dtype; gradient-check tests build float64 instances.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class MlpParams:
    w1: np.ndarray  # (obs_dim, hidden)
    b1: np.ndarray
    w2: np.ndarray  # (hidden, hidden)
    b2: np.ndarray
    w3: np.ndarray  # (hidden, hidden)
    b3: np.ndarray
    head_w: list[np.ndarray]  # per head (hidden, n_actions)
    head_b: list[np.ndarray]
    value_w: np.ndarray  # (hidden,)
    value_b: np.ndarray  # shape ()

    def flat(self) -> list[tuple[str, np.ndarray]]:
        """Stable (name, array) view over every parameter tensor."""
        out = [
            ("w1", self.w1),
            ("b1", self.b1),
            ("w2", self.w2),
            ("b2", self.b2),
            ("w3", self.w3),
            ("b3", self.b3),
        ]
        for h, (w, b) in enumerate(zip(self.head_w, self.head_b)):
            out.append((f"head_w{h}", w))
            out.append((f"head_b{h}", b))
        out.append(("value_w", self.value_w))
        out.append(("value_b", self.value_b))
        return out

    @property
    def head_sizes(self) -> tuple[int, ...]:
        return tuple(w.shape[1] for w in self.head_w)

    def copy(self) -> "MlpParams":
        return map_params(lambda a: a.copy(), self)


# Gradients mirror the parameter structure exactly.
Gradients = MlpParams


def map_params(fn, *params: MlpParams) -> MlpParams:
    """Apply `fn` elementwise over one or more parameter structures."""
    p0 = params[0]
    return MlpParams(
        w1=fn(*(p.w1 for p in params)),
        b1=fn(*(p.b1 for p in params)),
        w2=fn(*(p.w2 for p in params)),
        b2=fn(*(p.b2 for p in params)),
        w3=fn(*(p.w3 for p in params)),
        b3=fn(*(p.b3 for p in params)),
        head_w=[fn(*(p.head_w[h] for p in params)) for h in range(len(p0.head_w))],
        head_b=[fn(*(p.head_b[h] for p in params)) for h in range(len(p0.head_b))],
        value_w=fn(*(p.value_w for p in params)),
        value_b=fn(*(p.value_b for p in params)),
    )


def zeros_like_params(params: MlpParams) -> Gradients:
    return map_params(np.zeros_like, params)


def init_params(
    rng: np.random.Generator,
    obs_dim: int,
    head_sizes: tuple[int, ...],
    hidden: int = 128,
    dtype=np.float32,
) -> MlpParams:
    """Uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)) weights, zero biases."""

    def w(fan_in, fan_out):
        bound = 1.0 / np.sqrt(fan_in)
        return rng.uniform(-bound, bound, size=(fan_in, fan_out)).astype(dtype)

    return MlpParams(
        w1=w(obs_dim, hidden),
        b1=np.zeros(hidden, dtype=dtype),
        w2=w(hidden, hidden),
        b2=np.zeros(hidden, dtype=dtype),
        w3=w(hidden, hidden),
        b3=np.zeros(hidden, dtype=dtype),
        head_w=[w(hidden, n) for n in head_sizes],
        head_b=[np.zeros(n, dtype=dtype) for n in head_sizes],
        value_w=w(hidden, 1)[:, 0],
        value_b=np.zeros((), dtype=dtype),
    )


@dataclass
class Forward:
    """Outputs plus the cached activations the backward pass needs."""

    phi: np.ndarray  # (B, hidden) shared feature
    logits: list[np.ndarray]  # per head, unmasked (B, n_h)
    value: np.ndarray  # (B,)
    x: np.ndarray
    a1: np.ndarray
    a2: np.ndarray


def forward(params: MlpParams, obs: np.ndarray) -> Forward:
    x = np.atleast_2d(np.asarray(obs, dtype=params.w1.dtype))
    if x.shape[1] != params.w1.shape[0]:
        raise ValueError(
            f"observation width {x.shape[1]} does not match net input {params.w1.shape[0]}"
        )
    a1 = np.tanh(x @ params.w1 + params.b1)
    a2 = np.tanh(a1 @ params.w2 + params.b2)
    phi = np.tanh(a2 @ params.w3 + params.b3)
    logits = [phi @ w + b for w, b in zip(params.head_w, params.head_b)]
    value = phi @ params.value_w + params.value_b
    return Forward(phi=phi, logits=logits, value=value, x=x, a1=a1, a2=a2)


def masked_probs(logits: np.ndarray, mask: np.ndarray | None) -> np.ndarray:
    """Softmax with masked entries at exactly zero probability."""
    z = np.asarray(logits, dtype=np.float64)
    if mask is not None:
        m = np.broadcast_to(np.asarray(mask, dtype=bool), z.shape)
        if not m.any(axis=-1).all():
            raise ValueError("fully-masked action head")
        z = np.where(m, z, -np.inf)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def categorical_entropy(probs: np.ndarray) -> np.ndarray:
    plogp = np.where(probs > 0.0, probs * np.log(np.where(probs > 0.0, probs, 1.0)), 0.0)
    return -plogp.sum(axis=-1)


@dataclass
class ActionDistribution:
    """Per-head categorical distributions for a batch of observations."""

    probs: list[np.ndarray]  # per head (B, n_h), rows sum to 1, masked entries 0
    masks: list[np.ndarray | None] = field(default_factory=list)

    @classmethod
    def from_logits(
        cls, logits: list[np.ndarray], masks: list[np.ndarray | None] | None = None
    ) -> "ActionDistribution":
        if masks is None:
            masks = [None] * len(logits)
        return cls(probs=[masked_probs(z, m) for z, m in zip(logits, masks)], masks=list(masks))

    @property
    def batch_size(self) -> int:
        return self.probs[0].shape[0]

    def sample(self, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
        """Draw one action index per head; returns (indices (B, H), joint log-prob (B,))."""
        B = self.batch_size
        idx = np.empty((B, len(self.probs)), dtype=np.int64)
        logp = np.zeros(B)
        for h, p in enumerate(self.probs):
            cdf = np.cumsum(p, axis=1)
            u = rng.random((B, 1))
            k = np.minimum((cdf < u).sum(axis=1), p.shape[1] - 1)
            # Floating-point u landing in a zero-mass gap is vanishingly rare;
            # fall back to the mode rather than return a masked action.
            dead = p[np.arange(B), k] <= 0.0
            if dead.any():
                k[dead] = p[dead].argmax(axis=1)
            idx[:, h] = k
            logp += np.log(p[np.arange(B), k])
        return idx, logp

    def log_prob(self, idx: np.ndarray) -> np.ndarray:
        B = self.batch_size
        logp = np.zeros(B)
        for h, p in enumerate(self.probs):
            logp += np.log(p[np.arange(B), idx[:, h]])
        return logp

    def entropy(self) -> np.ndarray:
        """Sum of per-head entropies over the unmasked support, per batch row."""
        return np.sum([categorical_entropy(p) for p in self.probs], axis=0)

    def entropy_per_head(self) -> list[np.ndarray]:
        return [categorical_entropy(p) for p in self.probs]


def policy_logit_grads(
    dist: ActionDistribution, idx: np.ndarray, dlogp: np.ndarray
) -> list[np.ndarray]:
    """d(loss)/d(logits) for a loss whose per-sample seed is d(loss)/d(log pi)."""
    out = []
    B = dist.batch_size
    for h, p in enumerate(dist.probs):
        onehot = np.zeros_like(p)
        onehot[np.arange(B), idx[:, h]] = 1.0
        out.append(dlogp[:, np.newaxis] * (onehot - p))
    return out


def entropy_logit_grads(dist: ActionDistribution, dentropy: np.ndarray) -> list[np.ndarray]:
    """d(loss)/d(logits) for a loss with per-sample seed d(loss)/d(entropy).

    dH/dz_k = -p_k (log p_k + H); zero at uniform rows and on masked entries.
    """
    out = []
    for p in dist.probs:
        h_val = categorical_entropy(p)[:, np.newaxis]
        logp = np.log(np.where(p > 0.0, p, 1.0))
        out.append(dentropy[:, np.newaxis] * (-p * (logp + h_val)))
    return out


def backward(
    params: MlpParams,
    cache: Forward,
    dlogits: list[np.ndarray],
    dvalue: np.ndarray,
) -> Gradients:
    """Exact gradients of a scalar loss given its seeds on head logits and value."""
    dt = params.w1.dtype
    dlogits = [np.asarray(d, dtype=dt) for d in dlogits]
    dvalue = np.asarray(dvalue, dtype=dt)
    dphi = dvalue[:, np.newaxis] * params.value_w[np.newaxis, :]
    head_gw, head_gb = [], []
    for h, d in enumerate(dlogits):
        head_gw.append(cache.phi.T @ d)
        head_gb.append(d.sum(axis=0))
        dphi = dphi + d @ params.head_w[h].T
    dz3 = dphi * (1.0 - cache.phi**2)
    da2 = dz3 @ params.w3.T
    dz2 = da2 * (1.0 - cache.a2**2)
    da1 = dz2 @ params.w2.T
    dz1 = da1 * (1.0 - cache.a1**2)
    return MlpParams(
        w1=cache.x.T @ dz1,
        b1=dz1.sum(axis=0),
        w2=cache.a1.T @ dz2,
        b2=dz2.sum(axis=0),
        w3=cache.a2.T @ dz3,
        b3=dz3.sum(axis=0),
        head_w=head_gw,
        head_b=head_gb,
        value_w=cache.phi.T @ dvalue,
        value_b=np.asarray(dvalue.sum(), dtype=dt),
    )


def params_to_arrays(params: MlpParams, prefix: str = "") -> dict[str, np.ndarray]:
    return {prefix + name: arr for name, arr in params.flat()}


def params_from_arrays(
    arrays: dict[str, np.ndarray], num_heads: int, prefix: str = ""
) -> MlpParams:
    def get(name):
        return np.asarray(arrays[prefix + name])

    return MlpParams(
        w1=get("w1"),
        b1=get("b1"),
        w2=get("w2"),
        b2=get("b2"),
        w3=get("w3"),
        b3=get("b3"),
        head_w=[get(f"head_w{h}") for h in range(num_heads)],
        head_b=[get(f"head_b{h}") for h in range(num_heads)],
        value_w=get("value_w"),
        value_b=get("value_b"),
    )
