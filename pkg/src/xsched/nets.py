"""Small MLPs with analytic backprop and multi-head categorical policies.

Hidden layers are tanh, outputs are linear.  The actor's output layer is
partitioned into per-decision heads, each a softmax over that head's options;
the joint log-probability of an action is the sum of per-head log terms.

Batched math runs on NumPy (BLAS is the right tool for it); the per-slot
single-state policy step has a fused compiled kernel in ``_kernels``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

HIDDEN_LAYERS = (128, 128)


@dataclass
class MlpParams:
    weights: list  # list of (in, out) float64 arrays
    biases: list   # list of (out,) float64 arrays

    @property
    def dims(self) -> tuple[int, ...]:
        return (self.weights[0].shape[0],) + tuple(w.shape[1] for w in self.weights)

    def arrays(self) -> list:
        """Flat parameter list in declared order: w0, b0, w1, b1, ..."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend([w, b])
        return out

    def copy(self) -> "MlpParams":
        return MlpParams([w.copy() for w in self.weights], [b.copy() for b in self.biases])


def init_mlp(dims, rng: np.random.Generator, zero_output: bool = False) -> MlpParams:
    """Xavier-uniform weights, zero biases.

    zero_output=True zeroes the final layer so a fresh actor starts from the
    uniform policy (and a fresh critic from zero value).
    """
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, (fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    if zero_output:
        weights[-1] = np.zeros_like(weights[-1])
    return MlpParams(weights=weights, biases=biases)


def _as_batch(x: np.ndarray):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        return x[None, :], True
    if x.ndim == 2:
        return x, False
    raise ValueError("input must be a vector or a batch of vectors")


def mlp_forward(params: MlpParams, x: np.ndarray) -> np.ndarray:
    """Deterministic forward pass; returns the same rank as the input."""
    h, squeeze = _as_batch(x)
    if h.shape[1] != params.weights[0].shape[0]:
        raise ValueError(
            f"input width {h.shape[1]} does not match first layer {params.weights[0].shape[0]}"
        )
    last = len(params.weights) - 1
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        h = h @ w + b
        if i < last:
            h = np.tanh(h)
    return h[0] if squeeze else h


def mlp_forward_cached(params: MlpParams, x: np.ndarray):
    """Forward pass keeping every layer input; returns (output, cache)."""
    h, _ = _as_batch(x)
    if h.shape[1] != params.weights[0].shape[0]:
        raise ValueError("input width does not match first layer")
    cache = [h]
    last = len(params.weights) - 1
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        h = h @ w + b
        if i < last:
            h = np.tanh(h)
            cache.append(h)
    return h, cache


def mlp_backward(params: MlpParams, cache: list, dout: np.ndarray):
    """Backprop from d(loss)/d(output); returns gradients in arrays() order."""
    grads_w = [None] * len(params.weights)
    grads_b = [None] * len(params.biases)
    dy = np.asarray(dout, dtype=np.float64)
    for i in range(len(params.weights) - 1, -1, -1):
        x = cache[i]
        grads_w[i] = x.T @ dy
        grads_b[i] = dy.sum(axis=0)
        if i > 0:
            dx = dy @ params.weights[i].T
            dy = dx * (1.0 - x * x)  # x is the tanh output feeding layer i
    out = []
    for dw, db in zip(grads_w, grads_b):
        out.extend([dw, db])
    return out


def _softmax_rows(z: np.ndarray) -> np.ndarray:
    shifted = z - z.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


@dataclass
class PolicyOutput:
    """Per-head categorical distributions produced by one actor forward pass.

    ``logits``/``probs`` are (heads, size) matrices when every head has the
    same size (the only case the shipped xApps and schedulers use), otherwise
    lists of per-head vectors.
    """

    head_sizes: tuple
    logits: object
    probs: object

    @property
    def uniform(self) -> bool:
        return isinstance(self.probs, np.ndarray)

    @property
    def num_heads(self) -> int:
        return len(self.head_sizes)

    def head_probs(self, head: int) -> np.ndarray:
        return self.probs[head]

    def head_logits(self, head: int) -> np.ndarray:
        return self.logits[head]


def split_heads(flat: np.ndarray, head_sizes) -> PolicyOutput:
    """Partition a flat logit vector into per-head softmax distributions."""
    head_sizes = tuple(int(s) for s in head_sizes)
    total = sum(head_sizes)
    flat = np.asarray(flat, dtype=np.float64)
    if flat.shape[-1] != total:
        raise ValueError(f"logit width {flat.shape[-1]} != sum of head sizes {total}")
    if len(set(head_sizes)) == 1:
        logits = flat.reshape(len(head_sizes), head_sizes[0])
        return PolicyOutput(head_sizes, logits, _softmax_rows(logits))
    bounds = np.cumsum(head_sizes)[:-1]
    logits = np.split(flat, bounds)
    return PolicyOutput(head_sizes, logits, [_softmax_rows(z) for z in logits])


def actor_forward(params: MlpParams, state_vec: np.ndarray, head_sizes) -> PolicyOutput:
    """Run the actor net and partition its output layer into heads."""
    return split_heads(mlp_forward(params, state_vec), head_sizes)


def sample_action(policy: PolicyOutput, rng: np.random.Generator):
    """Sample every head independently (inverse CDF); returns (indices, log_prob).

    The joint log-probability is exactly the sum of the chosen per-head log
    probabilities.
    """
    if policy.uniform:
        probs = policy.probs
        u = rng.random(policy.num_heads)
        cdf = np.cumsum(probs, axis=1)
        idx = np.minimum((cdf < u[:, None]).sum(axis=1), probs.shape[1] - 1)
        chosen = probs[np.arange(policy.num_heads), idx]
    else:
        idx = np.empty(policy.num_heads, dtype=np.int64)
        chosen = np.empty(policy.num_heads)
        for h, p in enumerate(policy.probs):
            u = rng.random()
            k = int(np.minimum((np.cumsum(p) < u).sum(), len(p) - 1))
            idx[h] = k
            chosen[h] = p[k]
    log_prob = float(np.log(chosen).sum())
    return idx.astype(np.int64), log_prob


def greedy_action(policy: PolicyOutput) -> np.ndarray:
    """Most likely option per head; ties break toward the lowest index."""
    if policy.uniform:
        return np.argmax(policy.probs, axis=1).astype(np.int64)
    return np.array([int(np.argmax(p)) for p in policy.probs], dtype=np.int64)


def action_log_prob(policy: PolicyOutput, indices: np.ndarray) -> float:
    """Joint log-probability of a given per-head index vector."""
    if policy.uniform:
        chosen = policy.probs[np.arange(policy.num_heads), np.asarray(indices)]
        return float(np.log(chosen).sum())
    return float(sum(np.log(p[i]) for p, i in zip(policy.probs, indices)))
