"""Experiment orchestration: scenario grids, regimes, metrics, persistence.

Five regimes share one episode machinery: the single-xApp and conflicting
regimes are the Method 1 runtime pinned to a fixed activation message, the
scheduler regimes consult a trained scheduler every period.  Environment
randomness is seeded per (seed, cell, episode) independently of the regime,
so any two regimes consume identical arrival/mobility draws (paired seeds).
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .checkpoint import PolicyCheckpoint, load_checkpoint
from .config import RunConfig, SafetyConfig
from .env import power_set_for, reset_episode
from .errors import ConfigError, InvariantError
from .nets import mlp_forward
from .scheduler import (
    ActivationRuntime,
    SafetyGateState,
    XAppPool,
    fallback_plan,
    plan_for_message,
    run_period,
    safety_gate,
    scheduler_act,
    scheduler_observe,
)
from .xapps import XAppKind, policy_from_checkpoint

REGIMES = ("power_only", "rbg_only", "both", "method1", "method2")
_PINNED = {"power_only": (1, 0), "rbg_only": (0, 1), "both": (1, 1)}

METRICS_HEADER = ["regime", "d_bps", "v_mps", "seed", "episode", "tau_e", "leftover_bits"]
SUMMARY_HEADER = ["regime", "d_bps", "v_mps", "mean_tau", "mean_leftover", "degradation_pct"]
TRACE_HEADER = ["episode", "period", "c1", "c2", "f", "mu_bits", "gated", "period_reward"]
HISTORY_HEADER = ["episode", "d_e", "mean_speed", "tau_e"]


@dataclass(frozen=True)
class ExperimentSpec:
    """One evaluation campaign over a context grid."""

    regimes: tuple
    arrival_rates_bps: tuple
    speeds_mps: tuple
    episodes_per_cell: int
    seeds: tuple
    checkpoints: dict
    safety: SafetyConfig | None = None

    def validate(self) -> "ExperimentSpec":
        if not self.regimes:
            raise ConfigError("spec.regimes must be non-empty")
        for regime in self.regimes:
            if regime not in REGIMES:
                raise ConfigError(f"unknown regime {regime!r}")
        if not self.arrival_rates_bps or not self.speeds_mps:
            raise ConfigError("spec grid must be non-empty")
        if self.episodes_per_cell < 1:
            raise ConfigError("spec.episodes_per_cell must be >= 1")
        if len(set(self.seeds)) != len(self.seeds) or not self.seeds:
            raise ConfigError("spec.seeds must be non-empty and distinct")
        return self

    def cells(self):
        return [(d, v) for d in self.arrival_rates_bps for v in self.speeds_mps]

    @classmethod
    def from_json(cls, path: str | Path) -> "ExperimentSpec":
        try:
            raw = json.loads(Path(path).read_text(encoding="utf-8"))
        except OSError as exc:
            raise ConfigError(f"cannot read spec file {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid spec file {path}: {exc}") from exc
        safety = None
        if "safety" in raw and raw["safety"] is not None:
            safety = SafetyConfig(**raw["safety"]).validate()
        return cls(
            regimes=tuple(raw["regimes"]),
            arrival_rates_bps=tuple(float(x) for x in raw["arrival_rates_bps"]),
            speeds_mps=tuple(float(x) for x in raw["speeds_mps"]),
            episodes_per_cell=int(raw["episodes_per_cell"]),
            seeds=tuple(int(s) for s in raw["seeds"]),
            checkpoints={k: str(v) for k, v in raw.get("checkpoints", {}).items()},
            safety=safety,
        ).validate()


@dataclass
class MetricsRow:
    regime: str
    d_bps: float
    v_mps: float
    seed: int
    episode: int
    tau_e: float
    leftover_bits: int
    trace: str = ""
    period_rows: list = field(default_factory=list)


def env_rng_for(seed: int, cell_index: int, episode: int) -> np.random.Generator:
    """Regime-independent environment stream for one evaluation episode."""
    return np.random.default_rng(np.random.SeedSequence((seed, cell_index, episode)))


@dataclass
class RegimePolicies:
    pool: XAppPool
    scheduler: PolicyCheckpoint | None = None


def load_regime_policies(regime: str, checkpoints: dict,
                         run_cfg: RunConfig | None = None) -> RegimePolicies:
    for key in ("power", "rbg"):
        if key not in checkpoints:
            raise ConfigError(f"regime {regime!r} needs a {key!r} checkpoint")
    power = load_checkpoint(checkpoints["power"])
    rbg = load_checkpoint(checkpoints["rbg"])
    if XAppKind(power.kind) is not XAppKind.POWER_A2C:
        raise ConfigError(f"{checkpoints['power']}: expected a power xApp checkpoint")
    if XAppKind(rbg.kind) is not XAppKind.RBG_A2C:
        raise ConfigError(f"{checkpoints['rbg']}: expected an RBG xApp checkpoint")
    if run_cfg is not None:
        cfg = run_cfg.network
        heads = cfg.num_orus * cfg.rbgs_per_oru
        if power.head_sizes != (cfg.power_levels,) * heads:
            raise ConfigError(
                f"{checkpoints['power']}: trained for head layout {power.head_sizes[:1]}"
                f"x{len(power.head_sizes)}, config needs {cfg.power_levels}x{heads}")
        if rbg.head_sizes != (cfg.users_per_oru,) * heads:
            raise ConfigError(
                f"{checkpoints['rbg']}: trained for head layout {rbg.head_sizes[:1]}"
                f"x{len(rbg.head_sizes)}, config needs {cfg.users_per_oru}x{heads}")
    pool = XAppPool(power=policy_from_checkpoint(power), rbg=policy_from_checkpoint(rbg))
    if regime in ("method1", "method2"):
        if regime not in checkpoints:
            raise ConfigError(f"regime {regime!r} needs a scheduler checkpoint")
        sched = load_checkpoint(checkpoints[regime])
        expected = f"scheduler_{regime}"
        if sched.kind != expected:
            raise ConfigError(f"{checkpoints[regime]}: expected kind {expected!r}, "
                              f"got {sched.kind!r}")
        return RegimePolicies(pool=pool, scheduler=sched)
    return RegimePolicies(pool=pool)


def run_regime(regime: str, spec: ExperimentSpec, run_cfg: RunConfig,
               policies: RegimePolicies | None = None) -> list:
    """Evaluate one regime over the whole grid; returns MetricsRow per episode.

    Deployed policies act greedily, so every episode is a pure function of its
    environment stream and the loaded checkpoints.
    """
    run_cfg.validate()
    spec.validate()
    if regime not in REGIMES:
        raise ConfigError(f"unknown regime {regime!r}")
    if policies is None:
        policies = load_regime_policies(regime, spec.checkpoints, run_cfg)
    cfg = run_cfg.network
    period = run_cfg.scheduling_period
    periods = cfg.slots_per_episode // period
    method = 2 if regime == "method2" else 1
    scheduled = regime in ("method1", "method2")
    if scheduled and policies.scheduler is None:
        raise ConfigError(f"regime {regime!r} needs a scheduler checkpoint")
    safety = spec.safety if spec.safety is not None else run_cfg.safety
    runtime = ActivationRuntime(cfg, policies.pool, power_set_for(cfg))

    rows = []
    for cell_index, (d_e, v) in enumerate(spec.cells()):
        for seed in spec.seeds:
            gate = SafetyGateState()
            for episode in range(spec.episodes_per_cell):
                rng = env_rng_for(seed, cell_index, episode)
                state = reset_episode(cfg, d_e, v, rng)
                runtime.begin_episode(state)
                context = scheduler_observe(cfg, d_e, v, 0.0)
                slot_total = 0.0
                leftover_total = 0
                mu_trace = []
                period_rows = []
                for p in range(periods):
                    gated = False
                    if scheduled:
                        message, _ = scheduler_act(method, policies.scheduler.actor,
                                                   context, explore=False)
                        if safety.enabled:
                            value = float(mlp_forward(policies.scheduler.critic, context)[0])
                            message, gate, gated = safety_gate(gate, value, message,
                                                               method, safety)
                    else:
                        message = _PINNED[regime]
                    plan = (fallback_plan(safety.fallback) if gated
                            else plan_for_message(method, message))
                    state, period_rate, slot_rates, leftover = run_period(
                        state, runtime, plan, period, d_e, rng)
                    slot_total += float(slot_rates.sum())
                    leftover_total += leftover
                    mu_bits = "".join(str(bit) for bit in message)
                    mu_trace.append(mu_bits)
                    period_rows.append({
                        "episode": episode, "period": p,
                        "c1": context[0], "c2": context[1], "f": context[2],
                        "mu_bits": mu_bits, "gated": int(gated),
                        "period_reward": period_rate,
                    })
                    context = scheduler_observe(cfg, d_e, v, period_rate)
                tau_e = slot_total / (d_e * cfg.rbgs_per_oru * cfg.num_orus
                                      * cfg.slots_per_episode)
                rows.append(MetricsRow(
                    regime=regime, d_bps=d_e, v_mps=v, seed=seed, episode=episode,
                    tau_e=tau_e, leftover_bits=leftover_total,
                    trace="|".join(mu_trace), period_rows=period_rows,
                ))
    return rows


def moving_average(series, window: int) -> np.ndarray:
    """Trailing mean; the first window-1 entries average the available prefix."""
    series = np.asarray(series, dtype=np.float64)
    if series.size == 0:
        raise ValueError("series must be non-empty")
    if window < 1:
        raise ValueError("window must be >= 1")
    if window == 1:
        return series.copy()
    cumulative = np.cumsum(series)
    out = np.empty_like(series)
    head = min(window, series.size)
    out[:head] = cumulative[:head] / np.arange(1, head + 1)
    if series.size > window:
        out[window:] = (cumulative[window:] - cumulative[:-window]) / window
    return out


def summarize(rows) -> list:
    """Per-cell regime means and degradation against the best single xApp.

    degradation_pct is 100 * (1 - mean_tau / max(power_only, rbg_only)) for
    the cell, or None when neither single-xApp regime is present.
    """
    cells = {}
    for row in rows:
        cells.setdefault((row.regime, row.d_bps, row.v_mps), []).append(row)
    if any(not group for group in cells.values()):
        raise InvariantError("summarize requires at least one row per cell")
    means = {
        key: (float(np.mean([r.tau_e for r in group])),
              float(np.mean([r.leftover_bits for r in group])))
        for key, group in cells.items()
    }
    summary = []
    for (regime, d, v), (mean_tau, mean_left) in sorted(means.items()):
        singles = [means[(single, d, v)][0]
                   for single in ("power_only", "rbg_only")
                   if (single, d, v) in means]
        degradation = None
        if singles and max(singles) > 0.0:
            degradation = 100.0 * (1.0 - mean_tau / max(singles))
        summary.append({
            "regime": regime, "d_bps": d, "v_mps": v,
            "mean_tau": mean_tau, "mean_leftover": mean_left,
            "degradation_pct": degradation,
        })
    return summary


def _format(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def write_csv(path: str | Path, header, rows) -> None:
    """UTF-8 CSV with a mandatory header row and repr-formatted floats."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            if isinstance(row, dict):
                writer.writerow([_format(row[k]) for k in header])
            else:
                writer.writerow([_format(getattr(row, k)) for k in header])


def write_metrics_csv(path, rows) -> None:
    write_csv(path, METRICS_HEADER, rows)


def write_summary_csv(path, summary) -> None:
    write_csv(path, SUMMARY_HEADER, summary)


def write_trace_csv(path, trace_rows) -> None:
    write_csv(path, TRACE_HEADER, trace_rows)


def write_history_csv(path, history) -> None:
    write_csv(path, HISTORY_HEADER, history)
