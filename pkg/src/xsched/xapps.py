"""The four xApps: trained power and RBG allocators plus the equal baselines.

Both trainable xApps observe four per-(O-RU, RBG) statistics of the owning
user (CSI, realized rate, power, arrivals), scaled to ~[0, 1] before the tanh
network.  The power xApp sees them as a flat (B, R, 4) grid; the RBG xApp
sees them placed in the owning user's slice of a (B, R, U, 4) grid, so the
current assignment is part of its state.  Actions are one categorical head
per (O-RU, RBG): a power-level index for the power xApp, a connected-user
slot for the RBG xApp, which makes every emitted assignment satisfy the
one-owner rule by construction.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from . import _kernels as kernels
from .a2c import A2CHyper, A2CLearner
from .checkpoint import PolicyCheckpoint
from .config import NetworkConfig
from .env import (
    Allocation,
    NetworkState,
    PowerSet,
    equal_power_index,
    equal_rbg_owner,
    power_set_for,
    reset_episode,
    step_env,
)
from .nets import HIDDEN_LAYERS, MlpParams, init_mlp

FEATURES_PER_RBG = 4


class XAppKind(enum.Enum):
    POWER_A2C = "power"
    RBG_A2C = "rbg"
    POWER_BASELINE = "power_baseline"
    RBG_BASELINE = "rbg_baseline"


def feature_dim(cfg: NetworkConfig) -> int:
    return FEATURES_PER_RBG * cfg.num_orus * cfg.rbgs_per_oru


def _feature_grid(state: NetworkState) -> np.ndarray:
    # every feature lands in ~[0, 1]: rates by the peak per-RBG arrival rate,
    # bit counts by the corresponding per-slot bits, powers by the top level
    cfg = state.cfg
    bits_norm = cfg.max_arrival_rate_bps * cfg.slot_duration_s
    grid = np.empty((cfg.num_orus, cfg.rbgs_per_oru, FEATURES_PER_RBG))
    grid[:, :, 0] = state.links.csi / cfg.csi_clamp
    grid[:, :, 1] = state.links.rate_bps / cfg.max_arrival_rate_bps
    grid[:, :, 2] = state.power_set.levels_mw[state.power_idx] / cfg.p_max_mw
    grid[:, :, 3] = state.links.arrivals_bits / bits_norm
    return grid


def power_observe(state: NetworkState) -> np.ndarray:
    """Flattened (O-RU-major, RBG-minor) feature vector for the power xApp."""
    return _feature_grid(state).reshape(-1)


def rbg_feature_dim(cfg: NetworkConfig) -> int:
    return FEATURES_PER_RBG * cfg.num_orus * cfg.rbgs_per_oru * cfg.num_users


def rbg_observe(state: NetworkState) -> np.ndarray:
    """Owner-resolved features for the RBG xApp.

    The same four per-(O-RU, RBG) statistics as the power xApp, but placed in
    the owning user's slice of a (B, R, U, 4) grid (all other user slices are
    zero).  The nonzero position carries the current owner's identity, which
    is what lets the allocator keep good assignments and move away from bad
    ones.
    """
    cfg = state.cfg
    grid = _feature_grid(state)
    out = np.zeros((cfg.num_orus, cfg.rbgs_per_oru, cfg.num_users, FEATURES_PER_RBG))
    rows = np.arange(cfg.num_orus)[:, None]
    cols = np.arange(cfg.rbgs_per_oru)[None, :]
    out[rows, cols, state.owner, :] = grid
    return out.reshape(-1)


@dataclass
class XAppPolicy:
    """Frozen actor-critic pair plus the head layout it was built with."""

    kind: XAppKind
    actor: MlpParams
    critic: MlpParams
    head_sizes: tuple
    feature_dim: int


def new_xapp_policy(kind: XAppKind, cfg: NetworkConfig, rng: np.random.Generator) -> XAppPolicy:
    heads = cfg.num_orus * cfg.rbgs_per_oru
    if kind is XAppKind.POWER_A2C:
        head_size = cfg.power_levels
        dim = feature_dim(cfg)
    elif kind is XAppKind.RBG_A2C:
        head_size = cfg.users_per_oru
        dim = rbg_feature_dim(cfg)
    else:
        raise ValueError(f"{kind} is not a trainable xApp")
    actor = init_mlp((dim, *HIDDEN_LAYERS, heads * head_size), rng, zero_output=True)
    critic = init_mlp((dim, *HIDDEN_LAYERS, 1), rng, zero_output=True)
    return XAppPolicy(kind=kind, actor=actor, critic=critic,
                      head_sizes=(head_size,) * heads, feature_dim=dim)


def _act(policy: XAppPolicy, features: np.ndarray, rng, explore: bool) -> np.ndarray:
    head_count = len(policy.head_sizes)
    uniforms = rng.random(head_count) if explore else None
    idx, _ = kernels.actor_step(policy.actor.weights, policy.actor.biases,
                                features, head_count, policy.head_sizes[0], uniforms)
    return idx


def power_act(policy: XAppPolicy, cfg: NetworkConfig, features: np.ndarray,
              power_set: PowerSet, rng=None, explore: bool = False) -> np.ndarray:
    """Power-level index per (O-RU, RBG); sampled when exploring, else argmax."""
    if policy.head_sizes[0] != power_set.num_levels:
        raise ValueError("actor head size does not match the power set")
    if len(policy.head_sizes) != cfg.num_orus * cfg.rbgs_per_oru:
        raise ValueError("actor head count does not match the RBG grid")
    idx = _act(policy, features, rng, explore)
    return idx.reshape(cfg.num_orus, cfg.rbgs_per_oru)


def rbg_act(policy: XAppPolicy, cfg: NetworkConfig, features: np.ndarray,
            rng=None, explore: bool = False) -> np.ndarray:
    """Owning user per (O-RU, RBG), chosen among the O-RU's connected users."""
    if policy.head_sizes[0] != cfg.users_per_oru:
        raise ValueError("actor head size does not match users per O-RU")
    if len(policy.head_sizes) != cfg.num_orus * cfg.rbgs_per_oru:
        raise ValueError("actor head count does not match the RBG grid")
    idx = _act(policy, features, rng, explore)
    local = idx.reshape(cfg.num_orus, cfg.rbgs_per_oru)
    base = np.arange(cfg.num_orus, dtype=np.int64)[:, None] * cfg.users_per_oru
    return base + local


def baseline_power(state: NetworkState, power_set: PowerSet) -> np.ndarray:
    """Equal-power baseline: every (O-RU, RBG) at the mid-ladder level."""
    cfg = state.cfg
    return np.full((cfg.num_orus, cfg.rbgs_per_oru), equal_power_index(power_set),
                   dtype=np.int64)


def baseline_rbg(state: NetworkState) -> np.ndarray:
    """Equal-split baseline: round-robin RBG ownership per O-RU."""
    return equal_rbg_owner(state.cfg)


def episode_reward(slot_rates, d_e: float, rbgs: int, orus: int, slots: int) -> float:
    """Normalized episode throughput in [0, ~1].

    Sum of slot rates over the ideal total d_e * rbgs * orus * slots; equals
    1.0 when every RBG delivers exactly d_e for every slot.
    """
    denom = d_e * rbgs * orus * slots
    if denom <= 0.0:
        raise ValueError("normalizer d_e * R * B * T must be positive")
    return float(np.asarray(slot_rates, dtype=np.float64).sum() / denom)


def slot_reward(throughput_bps: float, d_e: float, cfg: NetworkConfig) -> float:
    """Per-slot reward; summing over an episode gives episode_reward."""
    return throughput_bps / (d_e * cfg.rbgs_per_oru * cfg.num_orus * cfg.slots_per_episode)


def train_xapp(kind: XAppKind, cfg: NetworkConfig, hyper: A2CHyper,
               episodes: int, seed: int):
    """Train one xApp with the counterpart resource held at its equal baseline.

    Episode contexts (mean arrival rate, mean speed) are drawn uniformly from
    the configured training sets.  Returns (PolicyCheckpoint, history) where
    history has one row per episode: episode, d_e, mean_speed, tau_e.
    """
    if kind not in (XAppKind.POWER_A2C, XAppKind.RBG_A2C):
        raise ValueError(f"{kind} is not a trainable xApp")
    cfg.validate()
    hyper.validate()
    rng = np.random.default_rng(seed)
    power_set = power_set_for(cfg)
    policy = new_xapp_policy(kind, cfg, rng)
    learner = A2CLearner(policy.actor, policy.critic, policy.head_sizes, hyper)

    arrival_set = np.asarray(cfg.arrival_rate_set_bps)
    speed_set = np.asarray(cfg.mean_speed_set_mps)
    steps = cfg.slots_per_episode
    history = []

    for episode in range(episodes):
        d_e = float(rng.choice(arrival_set))
        mean_speed = float(rng.choice(speed_set))
        state = reset_episode(cfg, d_e, mean_speed, rng)
        equal_owner = equal_rbg_owner(cfg)
        equal_power = baseline_power(state, power_set)

        states = np.empty((steps, policy.feature_dim))
        actions = np.empty((steps, len(policy.head_sizes)), dtype=np.int64)
        rewards = np.empty(steps)
        for t in range(steps):
            if kind is XAppKind.POWER_A2C:
                feats = power_observe(state)
                idx = power_act(policy, cfg, feats, power_set, rng, explore=True)
                alloc = Allocation(owner=equal_owner, power_idx=idx)
            else:
                feats = rbg_observe(state)
                owner = rbg_act(policy, cfg, feats, rng, explore=True)
                idx = (owner - np.arange(cfg.num_orus)[:, None] * cfg.users_per_oru).reshape(-1)
                alloc = Allocation(owner=owner, power_idx=equal_power)
            state, throughput, _ = step_env(state, alloc, rng)
            states[t] = feats
            actions[t] = idx.reshape(-1)
            rewards[t] = slot_reward(throughput, d_e, cfg)
        learner.update(states, actions, rewards)
        history.append({
            "episode": episode,
            "d_e": d_e,
            "mean_speed": mean_speed,
            "tau_e": float(rewards.sum()),
        })

    ckpt = PolicyCheckpoint(
        kind=kind.value,
        head_sizes=policy.head_sizes,
        feature_dim=policy.feature_dim,
        actor=policy.actor,
        critic=policy.critic,
        hyper=hyper,
        trained_episodes=episodes,
        seed=seed,
        meta={"backend": kernels.BACKEND},
    )
    return ckpt, history


def policy_from_checkpoint(ckpt: PolicyCheckpoint) -> XAppPolicy:
    kind = XAppKind(ckpt.kind)
    return XAppPolicy(kind=kind, actor=ckpt.actor, critic=ckpt.critic,
                      head_sizes=ckpt.head_sizes, feature_dim=ckpt.feature_dim)
