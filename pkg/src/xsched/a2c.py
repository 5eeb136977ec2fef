"""Advantage actor-critic: returns, advantages, the combined loss, and Adam.

One update per episode from the full on-policy trajectory.  The advantage is
treated as a constant in the actor term; the critic learns from the squared
return error only.  Gradients are clipped jointly (actor plus critic) by
global norm before the adaptive-moment update.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, InvariantError
from .nets import MlpParams, mlp_backward, mlp_forward_cached, _softmax_rows

FULL_RETURN = "full-return"
ONE_STEP = "one-step"


@dataclass(frozen=True)
class A2CHyper:
    learning_rate: float = 1e-4
    discount: float = 0.95
    value_weight: float = 0.5
    clip_norm: float = 1.0
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    advantage_mode: str = FULL_RETURN

    def validate(self) -> "A2CHyper":
        if self.learning_rate <= 0.0:
            raise ConfigError("learning_rate must be positive")
        if not 0.0 < self.discount < 1.0:
            raise ConfigError("discount must be in (0, 1)")
        if self.value_weight <= 0.0:
            raise ConfigError("value_weight must be positive")
        if self.advantage_mode not in (FULL_RETURN, ONE_STEP):
            raise ConfigError(f"unknown advantage_mode {self.advantage_mode!r}")
        return self

    def to_dict(self) -> dict:
        return {
            "learning_rate": self.learning_rate,
            "discount": self.discount,
            "value_weight": self.value_weight,
            "clip_norm": self.clip_norm,
            "adam_beta1": self.adam_beta1,
            "adam_beta2": self.adam_beta2,
            "adam_eps": self.adam_eps,
            "advantage_mode": self.advantage_mode,
        }


def discounted_returns(rewards, gamma: float) -> np.ndarray:
    """Discounted tail sums G_t computed by the backward recursion."""
    rewards = np.asarray(rewards, dtype=np.float64)
    if rewards.size == 0:
        raise ValueError("rewards must be non-empty")
    if not 0.0 <= gamma <= 1.0:
        raise ValueError("gamma must be in [0, 1]")
    out = np.empty_like(rewards)
    acc = 0.0
    for t in range(len(rewards) - 1, -1, -1):
        acc = rewards[t] + gamma * acc
        out[t] = acc
    return out


def advantages(rewards, values, gamma: float, mode: str = FULL_RETURN) -> np.ndarray:
    """Advantage estimates with a zero terminal bootstrap.

    full-return: G_t - V(s_t); one-step: r_t + gamma*V(s_{t+1}) - V(s_t).
    """
    rewards = np.asarray(rewards, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    if values.shape != rewards.shape:
        raise ValueError("rewards and values must have equal length")
    if mode == FULL_RETURN:
        return discounted_returns(rewards, gamma) - values
    if mode == ONE_STEP:
        next_values = np.append(values[1:], 0.0)
        return rewards + gamma * next_values - values
    raise ValueError(f"unknown advantage mode {mode!r}")


def _head_layout(head_sizes):
    head_sizes = tuple(int(s) for s in head_sizes)
    return head_sizes, len(set(head_sizes)) == 1


def combined_loss(actor: MlpParams, critic: MlpParams, head_sizes,
                  states, actions, adv, returns, value_weight: float):
    """Policy loss plus weighted value loss with analytic gradients.

    L = -sum_t adv_t * log pi(a_t|s_t) + value_weight * sum_t (G_t - V(s_t))^2,
    with adv treated as constants.  Returns (loss, actor_grads, critic_grads)
    where the gradient lists follow MlpParams.arrays() order.
    """
    states = np.asarray(states, dtype=np.float64)
    actions = np.asarray(actions, dtype=np.int64)
    adv = np.asarray(adv, dtype=np.float64)
    returns = np.asarray(returns, dtype=np.float64)
    steps = states.shape[0]
    head_sizes, uniform = _head_layout(head_sizes)

    logits, actor_cache = mlp_forward_cached(actor, states)
    values, critic_cache = mlp_forward_cached(critic, states)
    values = values[:, 0]

    if uniform:
        heads, size = len(head_sizes), head_sizes[0]
        z = logits.reshape(steps, heads, size)
        probs = _softmax_rows(z)
        t_idx = np.arange(steps)[:, None]
        h_idx = np.arange(heads)[None, :]
        chosen = probs[t_idx, h_idx, actions]
        log_pi = np.log(chosen).sum(axis=1)
        one_hot = np.zeros_like(probs)
        one_hot[t_idx, h_idx, actions] = 1.0
        dlogits = (-adv[:, None, None] * (one_hot - probs)).reshape(steps, -1)
    else:
        bounds = np.cumsum(head_sizes)[:-1]
        log_pi = np.zeros(steps)
        dlogits = np.zeros_like(logits)
        for t in range(steps):
            for h, z in enumerate(np.split(logits[t], bounds)):
                p = _softmax_rows(z)
                a = actions[t, h]
                log_pi[t] += np.log(p[a])
                grad = p.copy()
                grad[a] -= 1.0
                lo = 0 if h == 0 else bounds[h - 1]
                dlogits[t, lo:lo + head_sizes[h]] = adv[t] * grad

    value_err = returns - values
    loss = float(-(adv * log_pi).sum() + value_weight * (value_err * value_err).sum())
    if not np.isfinite(loss):
        raise InvariantError("non-finite loss")

    actor_grads = mlp_backward(actor, actor_cache, dlogits)
    dvalues = (-2.0 * value_weight * value_err)[:, None]
    critic_grads = mlp_backward(critic, critic_cache, dvalues)
    return loss, actor_grads, critic_grads


def clip_global_norm(grads, max_norm: float):
    """Scale the gradient list so its joint L2 norm is at most max_norm."""
    total = float(np.sqrt(sum(float((g * g).sum()) for g in grads)))
    if max_norm > 0.0 and total > max_norm:
        scale = max_norm / total
        return [g * scale for g in grads], total
    return list(grads), total


@dataclass
class AdamState:
    step: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)


def init_adam(arrays) -> AdamState:
    return AdamState(
        step=0,
        m=[np.zeros_like(a) for a in arrays],
        v=[np.zeros_like(a) for a in arrays],
    )


def optimizer_step(arrays, grads, hyper: A2CHyper, state: AdamState):
    """One adaptive-moment update; returns the new parameter arrays.

    Moment buffers in ``state`` are updated in place; ``state.step`` counts
    applied updates for bias correction.
    """
    if len(arrays) != len(grads):
        raise ValueError("parameter and gradient lists differ in length")
    state.step += 1
    b1, b2, eps = hyper.adam_beta1, hyper.adam_beta2, hyper.adam_eps
    corr1 = 1.0 - b1 ** state.step
    corr2 = 1.0 - b2 ** state.step
    out = []
    for i, (a, g) in enumerate(zip(arrays, grads)):
        if a.shape != g.shape:
            raise ValueError("parameter/gradient shape mismatch")
        state.m[i] = b1 * state.m[i] + (1.0 - b1) * g
        state.v[i] = b2 * state.v[i] + (1.0 - b2) * (g * g)
        m_hat = state.m[i] / corr1
        v_hat = state.v[i] / corr2
        out.append(a - hyper.learning_rate * m_hat / (np.sqrt(v_hat) + eps))
    return out


def _write_back(params: MlpParams, arrays, offset: int) -> int:
    for i in range(len(params.weights)):
        params.weights[i] = arrays[offset]
        params.biases[i] = arrays[offset + 1]
        offset += 2
    return offset


class A2CLearner:
    """Owns one actor/critic pair and applies one update per episode."""

    def __init__(self, actor: MlpParams, critic: MlpParams, head_sizes, hyper: A2CHyper):
        self.actor = actor
        self.critic = critic
        self.head_sizes = tuple(int(s) for s in head_sizes)
        self.hyper = hyper.validate()
        self._adam = init_adam(actor.arrays() + critic.arrays())

    def values(self, states) -> np.ndarray:
        out, _ = mlp_forward_cached(self.critic, np.asarray(states, dtype=np.float64))
        return out[:, 0]

    def update(self, states, actions, rewards) -> dict:
        rewards = np.asarray(rewards, dtype=np.float64)
        values = self.values(states)
        returns = discounted_returns(rewards, self.hyper.discount)
        adv = advantages(rewards, values, self.hyper.discount, self.hyper.advantage_mode)
        loss, actor_grads, critic_grads = combined_loss(
            self.actor, self.critic, self.head_sizes,
            states, actions, adv, returns, self.hyper.value_weight,
        )
        grads, grad_norm = clip_global_norm(actor_grads + critic_grads, self.hyper.clip_norm)
        arrays = optimizer_step(self.actor.arrays() + self.critic.arrays(),
                                grads, self.hyper, self._adam)
        offset = _write_back(self.actor, arrays, 0)
        _write_back(self.critic, arrays, offset)
        return {"loss": loss, "grad_norm": grad_norm, "mean_return": float(returns.mean())}
