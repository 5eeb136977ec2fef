"""Context-aware activation scheduler with a confidence-gated fallback.

Every scheduling period the scheduler observes [normalized arrival rate,
normalized mean speed, previous period's normalized rate] and emits a binary
activation message:

* Method 1 chooses among {(1,0), (0,1), (1,1)} over the two trained xApps;
  a deactivated xApp's resource stays frozen at its last emitted action
  (the equal division before it ever acted).
* Method 2 picks one power controller (trained or baseline) and one RBG
  controller (trained or baseline): four valid messages.

The safety gate tracks the critic value with exponentially weighted mean and
absolute-deviation estimates; an anomalously low z-score swaps in a
deterministic fallback for a fixed number of decisions while the statistics
stay frozen.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import _kernels as kernels
from .a2c import A2CHyper, A2CLearner
from .checkpoint import PolicyCheckpoint
from .config import NetworkConfig, RunConfig, SafetyConfig
from .env import Allocation, NetworkState, PowerSet, power_set_for, reset_episode, step_env
from .errors import ConfigError, InvariantError
from .nets import HIDDEN_LAYERS, MlpParams, init_mlp, mlp_forward
from .xapps import (
    XAppPolicy,
    baseline_power,
    baseline_rbg,
    power_act,
    power_observe,
    rbg_act,
    rbg_observe,
)

METHOD1_MESSAGES = ((1, 0), (0, 1), (1, 1))
METHOD2_MESSAGES = ((1, 1, 0, 0), (1, 0, 0, 1), (0, 1, 1, 0), (0, 0, 1, 1))
SCHEDULER_FEATURES = 3

SIGMA_FLOOR = 1e-6

A2C_SOURCE = "a2c"
BASELINE_SOURCE = "baseline"
RETAINED_SOURCE = "retained"


def messages_for(method: int):
    if method == 1:
        return METHOD1_MESSAGES
    if method == 2:
        return METHOD2_MESSAGES
    raise ConfigError(f"scheduler method must be 1 or 2, got {method}")


def scheduler_observe(cfg: NetworkConfig, d_e: float, mean_speed: float,
                      previous_period_rate: float) -> np.ndarray:
    """Normalized scheduler state [arrival context, speed context, last rate]."""
    return np.array([
        d_e / cfg.max_arrival_rate_bps,
        mean_speed / cfg.speed_max_mps,
        previous_period_rate,
    ])


def scheduler_act(method: int, actor: MlpParams, state_vec: np.ndarray,
                  rng=None, explore: bool = False):
    """Pick an activation message; returns (message, head_index)."""
    messages = messages_for(method)
    uniforms = rng.random(1) if explore else None
    idx, _ = kernels.actor_step(actor.weights, actor.biases, state_vec,
                                1, len(messages), uniforms)
    choice = int(idx[0])
    return messages[choice], choice


@dataclass(frozen=True)
class PeriodPlan:
    """How each resource family is controlled during one scheduling period."""

    power_source: str
    rbg_source: str


def plan_for_message(method: int, message) -> PeriodPlan:
    message = tuple(int(bit) for bit in message)
    if method == 1:
        if message not in METHOD1_MESSAGES:
            raise InvariantError(f"invalid Method 1 activation message {message}")
        return PeriodPlan(
            power_source=A2C_SOURCE if message[0] else RETAINED_SOURCE,
            rbg_source=A2C_SOURCE if message[1] else RETAINED_SOURCE,
        )
    if method == 2:
        if message not in METHOD2_MESSAGES:
            raise InvariantError(f"invalid Method 2 activation message {message}")
        return PeriodPlan(
            power_source=A2C_SOURCE if message[0] else BASELINE_SOURCE,
            rbg_source=A2C_SOURCE if message[1] else BASELINE_SOURCE,
        )
    raise ConfigError(f"scheduler method must be 1 or 2, got {method}")


def fallback_message(method: int, fallback: str):
    """Deterministic safety action: equal allocation or one named xApp alone."""
    if fallback == "equal":
        return (0, 0) if method == 1 else (0, 0, 1, 1)
    if fallback == "power":
        return (1, 0) if method == 1 else (1, 0, 0, 1)
    if fallback == "rbg":
        return (0, 1) if method == 1 else (0, 1, 1, 0)
    raise ConfigError(f"unknown fallback policy {fallback!r}")


def fallback_plan(fallback: str) -> PeriodPlan:
    if fallback == "equal":
        return PeriodPlan(BASELINE_SOURCE, BASELINE_SOURCE)
    if fallback == "power":
        return PeriodPlan(A2C_SOURCE, BASELINE_SOURCE)
    if fallback == "rbg":
        return PeriodPlan(BASELINE_SOURCE, A2C_SOURCE)
    raise ConfigError(f"unknown fallback policy {fallback!r}")


@dataclass(frozen=True)
class SafetyGateState:
    """EWMA statistics and back-off bookkeeping of the confidence gate."""

    mean: float = 0.0
    dispersion: float = 1.0
    updates: int = 0
    frozen: bool = False
    timer: int = 0


def safety_update(gate: SafetyGateState, value: float, beta: float) -> SafetyGateState:
    """Fold one critic value into the EWMA mean/dispersion; frozen gates pass through."""
    if gate.frozen:
        return gate
    prev_mean = gate.mean
    mean = (1.0 - beta) * gate.mean + beta * value
    dispersion = (1.0 - beta) * gate.dispersion + beta * abs(value - prev_mean)
    return replace(gate, mean=mean, dispersion=max(dispersion, SIGMA_FLOOR),
                   updates=gate.updates + 1)


def safety_gate(gate: SafetyGateState, value: float, proposed, method: int,
                safety: SafetyConfig):
    """Gate one decision; returns (message, new gate state, gated flag).

    The update happens first (unless frozen), then the z-score of ``value``
    against the updated statistics decides.  A trigger overrides this decision
    and the next t_back - 1, freezing the statistics until the timer elapses.
    """
    gate = safety_update(gate, value, safety.beta)
    if gate.frozen:
        timer = gate.timer - 1
        gate = replace(gate, timer=timer, frozen=timer > 0)
        return fallback_message(method, safety.fallback), gate, True
    z = (value - gate.mean) / gate.dispersion
    if gate.updates >= safety.warmup and z < safety.z_threshold:
        gate = replace(gate, frozen=safety.t_back > 1, timer=safety.t_back - 1)
        return fallback_message(method, safety.fallback), gate, True
    return proposed, gate, False


@dataclass
class XAppPool:
    """The frozen policies a scheduler can activate."""

    power: XAppPolicy
    rbg: XAppPolicy


class ActivationRuntime:
    """Applies period plans to the per-slot control loop of one episode.

    Deployed xApps act greedily.  The runtime tracks each trained xApp's last
    emitted action so Method 1 can freeze a deactivated xApp's resource; the
    retained actions start from the equal-division initial condition.
    """

    def __init__(self, cfg: NetworkConfig, pool: XAppPool, power_set: PowerSet):
        self.cfg = cfg
        self.pool = pool
        self.power_set = power_set
        self._last_power = None
        self._last_owner = None

    def begin_episode(self, state: NetworkState) -> None:
        self._last_power = state.power_idx.copy()
        self._last_owner = state.owner.copy()

    def slot_allocation(self, state: NetworkState, plan: PeriodPlan) -> Allocation:
        if self._last_power is None:
            raise InvariantError("begin_episode must run before slot_allocation")
        if plan.power_source == A2C_SOURCE:
            power_idx = power_act(self.pool.power, self.cfg, power_observe(state),
                                  self.power_set, explore=False)
            self._last_power = power_idx
        elif plan.power_source == BASELINE_SOURCE:
            power_idx = baseline_power(state, self.power_set)
        else:
            power_idx = self._last_power
        if plan.rbg_source == A2C_SOURCE:
            owner = rbg_act(self.pool.rbg, self.cfg, rbg_observe(state), explore=False)
            self._last_owner = owner
        elif plan.rbg_source == BASELINE_SOURCE:
            owner = baseline_rbg(state)
        else:
            owner = self._last_owner
        return Allocation(owner=owner, power_idx=power_idx)


def new_scheduler_policy(method: int, rng: np.random.Generator):
    """Fresh actor/critic pair for a scheduler of the given method."""
    choices = len(messages_for(method))
    actor = init_mlp((SCHEDULER_FEATURES, *HIDDEN_LAYERS, choices), rng,
                     zero_output=True)
    critic = init_mlp((SCHEDULER_FEATURES, *HIDDEN_LAYERS, 1), rng,
                      zero_output=True)
    return actor, critic


def run_period(state: NetworkState, runtime: ActivationRuntime, plan: PeriodPlan,
               period_slots: int, d_e: float, rng: np.random.Generator):
    """Advance one scheduling period.

    Returns (state, period reward, per-slot throughputs, leftover bits).
    """
    cfg = runtime.cfg
    rewards = np.empty(period_slots)
    leftover = 0
    for i in range(period_slots):
        alloc = runtime.slot_allocation(state, plan)
        state, throughput, slot_leftover = step_env(state, alloc, rng)
        rewards[i] = throughput
        leftover += slot_leftover
    period_rate = float(rewards.sum()
                        / (d_e * cfg.rbgs_per_oru * cfg.num_orus * period_slots))
    return state, period_rate, rewards, leftover


def train_scheduler(method: int, pool: XAppPool, run_cfg: RunConfig, hyper: A2CHyper,
                    episodes: int, seed: int, gate_enabled: bool = False):
    """Train the activation scheduler against the frozen xApp pool.

    Contexts are drawn per episode from the training sets; each episode yields
    slots_per_episode / scheduling_period decisions and one update.  Returns
    (PolicyCheckpoint, history, trace) where trace rows follow the
    activation-trace schema (episode, period, c1, c2, f, mu_bits, gated,
    period_reward).

    gate_enabled superimposes the safety gate during training; gated periods
    keep the sampled action in the trajectory, so leave it off (the default)
    unless that bias is acceptable.
    """
    run_cfg.validate()
    hyper.validate()
    cfg = run_cfg.network
    period = run_cfg.scheduling_period
    periods = cfg.slots_per_episode // period
    rng = np.random.default_rng(seed)
    actor, critic = new_scheduler_policy(method, rng)
    learner = A2CLearner(actor, critic, (len(messages_for(method)),), hyper)
    runtime = ActivationRuntime(cfg, pool, power_set_for(cfg))
    gate = SafetyGateState()

    arrival_set = np.asarray(cfg.arrival_rate_set_bps)
    speed_set = np.asarray(cfg.mean_speed_set_mps)
    history, trace = [], []

    for episode in range(episodes):
        d_e = float(rng.choice(arrival_set))
        mean_speed = float(rng.choice(speed_set))
        state = reset_episode(cfg, d_e, mean_speed, rng)
        runtime.begin_episode(state)
        context = scheduler_observe(cfg, d_e, mean_speed, 0.0)

        states = np.empty((periods, SCHEDULER_FEATURES))
        actions = np.empty((periods, 1), dtype=np.int64)
        rewards = np.empty(periods)
        slot_total = 0.0
        for p in range(periods):
            message, choice = scheduler_act(method, actor, context, rng, explore=True)
            gated = False
            if gate_enabled:
                value = float(mlp_forward(critic, context)[0])
                message, gate, gated = safety_gate(gate, value, message, method,
                                                   run_cfg.safety)
            plan = (fallback_plan(run_cfg.safety.fallback) if gated
                    else plan_for_message(method, message))
            state, period_rate, slot_rates, _ = run_period(
                state, runtime, plan, period, d_e, rng)
            states[p] = context
            actions[p, 0] = choice
            rewards[p] = period_rate
            slot_total += float(slot_rates.sum())
            trace.append({
                "episode": episode, "period": p,
                "c1": context[0], "c2": context[1], "f": context[2],
                "mu_bits": "".join(str(bit) for bit in message),
                "gated": int(gated), "period_reward": period_rate,
            })
            context = scheduler_observe(cfg, d_e, mean_speed, period_rate)
        learner.update(states, actions, rewards)
        history.append({
            "episode": episode,
            "d_e": d_e,
            "mean_speed": mean_speed,
            "tau_e": slot_total / (d_e * cfg.rbgs_per_oru * cfg.num_orus
                                   * cfg.slots_per_episode),
        })

    ckpt = PolicyCheckpoint(
        kind=f"scheduler_method{method}",
        head_sizes=(len(messages_for(method)),),
        feature_dim=SCHEDULER_FEATURES,
        actor=actor,
        critic=critic,
        hyper=hyper,
        trained_episodes=episodes,
        seed=seed,
        meta={"backend": kernels.BACKEND, "method": method,
              "scheduling_period": period},
    )
    return ckpt, history, trace
