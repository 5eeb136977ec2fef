"""Acceptance suite: one test per criterion, each printing a PASS line.

Criteria 5-7 train the full desk-scale artifact set (two xApps, two
schedulers) and evaluate all five regimes over the 3x3 context grid with
paired seeds; expect roughly 15 minutes on the compiled backend.  Set
XSCHED_ACCEPT_DIR to a writable directory to cache the trained artifacts
between runs (delete it to retrain).

Run with: pytest tests/test_acceptance.py -v -s
"""

import itertools
import json
import math
import os
import time
from pathlib import Path

import numpy as np
import pytest

from xsched.a2c import advantages, combined_loss, discounted_returns
from xsched.checkpoint import load_checkpoint, save_checkpoint, sha256_file
from xsched.cli import main
from xsched.config import SafetyConfig, desk_config, desk_training_hyper
from xsched.env import Allocation, power_set_for, reset_episode, step_env
from xsched.harness import ExperimentSpec, moving_average, run_regime
from xsched.nets import init_mlp
from xsched.scheduler import (
    SafetyGateState,
    XAppPool,
    safety_gate,
    train_scheduler,
)
from xsched.xapps import (
    XAppKind,
    policy_from_checkpoint,
    power_act,
    power_observe,
    train_xapp,
)

XAPP_EPISODES = 20_000
SCHEDULER_EPISODES = 10_000
EVAL_SEEDS = (0, 1, 2, 3, 4)
EVAL_EPISODES = 50
GRID_ARRIVALS = (2e6, 5e6, 8e6)
GRID_SPEEDS = (5.0, 25.0, 45.0)


def _ok(criterion: str, detail: str) -> None:
    print(f"\n[PASS] {criterion}: {detail}")


# ---------------------------------------------------------------- criterion 1

def test_c01_gradient_correctness(rng):
    start = time.perf_counter()
    worst = 0.0
    for _ in range(100):
        steps = int(rng.integers(2, 6))
        head_sizes = (int(rng.integers(2, 5)),) * int(rng.integers(1, 4))
        feat = int(rng.integers(2, 5))
        actor = init_mlp((feat, 6, sum(head_sizes)), rng)
        critic = init_mlp((feat, 6, 1), rng)
        states = rng.normal(size=(steps, feat))
        actions = np.stack([rng.integers(0, s, size=steps) for s in head_sizes], axis=1)
        adv = rng.normal(size=steps)
        returns = rng.normal(size=steps)

        _, actor_grads, critic_grads = combined_loss(
            actor, critic, head_sizes, states, actions, adv, returns, 0.5)

        def loss_at():
            return combined_loss(actor, critic, head_sizes, states, actions,
                                 adv, returns, 0.5)[0]

        numeric = []
        for params in (actor, critic):
            for arr in params.arrays():
                flat = arr.reshape(-1)
                grad = np.empty_like(flat)
                for i in range(flat.size):
                    keep = flat[i]
                    flat[i] = keep + 1e-5
                    plus = loss_at()
                    flat[i] = keep - 1e-5
                    minus = loss_at()
                    flat[i] = keep
                    grad[i] = (plus - minus) / 2e-5
                numeric.append(grad)
        analytic = np.concatenate([g.reshape(-1) for g in actor_grads + critic_grads])
        numeric = np.concatenate(numeric)
        err = np.linalg.norm(analytic - numeric) / max(
            np.linalg.norm(analytic), np.linalg.norm(numeric), 1e-12)
        worst = max(worst, err)
    elapsed = time.perf_counter() - start
    assert worst < 1e-4
    assert elapsed < 60.0
    _ok("criterion 1", f"max relative gradient error {worst:.2e} over 100 instances "
                       f"in {elapsed:.1f}s")


# ---------------------------------------------------------------- criterion 2

def test_c02_return_and_advantage_oracle(rng):
    worst = 0.0
    for _ in range(1000):
        steps = int(rng.integers(1, 60))
        rewards = rng.uniform(-1.0, 1.0, steps)
        values = rng.normal(size=steps)
        gamma = float(rng.uniform(0.5, 0.999))
        brute = np.array([
            sum(gamma**j * rewards[t + j] for j in range(steps - t))
            for t in range(steps)
        ])
        got = discounted_returns(rewards, gamma)
        worst = max(worst, float(np.abs(got - brute).max()))
        full = advantages(rewards, values, gamma, "full-return")
        worst = max(worst, float(np.abs(full - (brute - values)).max()))
        one = advantages(rewards, values, gamma, "one-step")
        by_hand = np.array([
            rewards[t] + gamma * (values[t + 1] if t + 1 < steps else 0.0) - values[t]
            for t in range(steps)
        ])
        worst = max(worst, float(np.abs(one - by_hand).max()))
    assert worst < 1e-12
    _ok("criterion 2", f"returns/advantages match brute force, max |diff| {worst:.2e} "
                       f"over 1000 trajectories")


# ---------------------------------------------------------------- criterion 3

def test_c03_environment_conservation():
    cfg = desk_config().network
    rng = np.random.default_rng(20)
    users_per = cfg.users_per_oru
    rows = np.arange(cfg.num_orus, dtype=np.int64)[:, None]
    slots = 0
    state = None
    while slots < 10_000:
        d_e = float(rng.choice(cfg.arrival_rate_set_bps))
        speed = float(rng.choice(cfg.mean_speed_set_mps))
        state = reset_episode(cfg, d_e, speed, rng)
        for _ in range(cfg.slots_per_episode):
            alloc = Allocation(
                owner=rows * users_per + rng.integers(

                    0, users_per, (cfg.num_orus, cfg.rbgs_per_oru)),
                power_idx=rng.integers(0, cfg.power_levels,
                                       (cfg.num_orus, cfg.rbgs_per_oru)),
            )
            state, _, _ = step_env(state, alloc, rng)
            links = state.links
            assert np.array_equal(links.arrivals_bits,
                                  links.sent_bits + links.leftover_bits)
            assert (links.leftover_bits >= 0).all()
            assert (links.sent_bits >= 0).all()
            # exactly one owner per (O-RU, RBG), from the serving pool
            assert state.owner.shape == (cfg.num_orus, cfg.rbgs_per_oru)
            assert (state.owner // users_per == rows).all()
            slots += 1
    _ok("criterion 3", f"bit conservation and single ownership held for {slots} "
                       f"fuzzed slots")


# ---------------------------------------------------------------- criterion 4

def test_c04_statistical_models():
    from xsched.env import draw_arrivals, step_mobility
    import dataclasses
    from helpers import craft_state

    rng = np.random.default_rng(5)
    d_e, t_s, n = 3e6, 0.1, 100_000
    draws = draw_arrivals(rng, d_e, t_s, (n, 1))
    lam = d_e * t_s
    standard_error = math.sqrt(lam / n)
    offset = abs(draws.mean() - lam)
    assert offset < 3 * standard_error

    cfg = dataclasses.replace(desk_config().network, num_orus=1, num_users=100,
                              rbgs_per_oru=1, direction_change_prob=0.3)
    state = craft_state(cfg, speed=np.zeros(cfg.num_users))
    rng = np.random.default_rng(6)
    changes, steps = 0, 1000
    for _ in range(steps):
        before = state.direction.copy()
        state = step_mobility(state, rng)
        changes += int((state.direction != before).sum())
    freq = changes / (steps * cfg.num_users)
    assert abs(freq - 0.3) < 0.01
    _ok("criterion 4", f"Poisson mean offset {offset:.2f} bits (< {3*standard_error:.2f}); "
                       f"turn frequency {freq:.4f} (target 0.3 +/- 0.01)")


# ------------------------------------------------- desk-scale artifact fixture

@pytest.fixture(scope="session")
def desk_artifacts(tmp_path_factory):
    run_cfg = desk_config()
    cache = os.environ.get("XSCHED_ACCEPT_DIR")
    out = Path(cache) if cache else tmp_path_factory.mktemp("desk_artifacts")
    out.mkdir(parents=True, exist_ok=True)
    paths = {name: out / f"{name}.ckpt"
             for name in ("power", "rbg", "method1", "method2")}

    if not all(p.exists() for p in paths.values()):
        power, power_history = train_xapp(XAppKind.POWER_A2C, run_cfg.network,
                                          desk_training_hyper("power"),
                                          XAPP_EPISODES, seed=101)
        save_checkpoint(paths["power"], power)
        (out / "power_history.json").write_text(json.dumps(power_history),
                                                encoding="utf-8")
        rbg, rbg_history = train_xapp(XAppKind.RBG_A2C, run_cfg.network,
                                      desk_training_hyper("rbg"),
                                      XAPP_EPISODES, seed=202)
        save_checkpoint(paths["rbg"], rbg)
        (out / "rbg_history.json").write_text(json.dumps(rbg_history),
                                              encoding="utf-8")
        pool = XAppPool(power=policy_from_checkpoint(power),
                        rbg=policy_from_checkpoint(rbg))
        pool_digests_before = {k: sha256_file(paths[k]) for k in ("power", "rbg")}
        m1, _, _ = train_scheduler(1, pool, run_cfg, desk_training_hyper("scheduler"),
                                   SCHEDULER_EPISODES, seed=303)
        save_checkpoint(paths["method1"], m1)
        m2, _, _ = train_scheduler(2, pool, run_cfg, desk_training_hyper("scheduler"),
                                   SCHEDULER_EPISODES, seed=404)
        save_checkpoint(paths["method2"], m2)
        digests = {k: sha256_file(paths[k]) for k in ("power", "rbg")}
        (out / "pool_digests.json").write_text(json.dumps({
            "before_scheduler_training": pool_digests_before,
            "after_scheduler_training": digests,
        }), encoding="utf-8")

    checkpoints = {k: str(p) for k, p in paths.items()}
    spec = ExperimentSpec(
        regimes=("power_only", "rbg_only", "both", "method1", "method2"),
        arrival_rates_bps=GRID_ARRIVALS,
        speeds_mps=GRID_SPEEDS,
        episodes_per_cell=EVAL_EPISODES,
        seeds=EVAL_SEEDS,
        checkpoints=checkpoints,
    ).validate()

    rows_path = out / "eval_rows.json"
    if rows_path.exists():
        raw = json.loads(rows_path.read_text(encoding="utf-8"))
        from xsched.harness import MetricsRow

        rows = [MetricsRow(**r) for r in raw]
    else:
        rows = []
        for regime in spec.regimes:
            rows.extend(run_regime(regime, spec, run_cfg))
        rows_path.write_text(json.dumps([
            {"regime": r.regime, "d_bps": r.d_bps, "v_mps": r.v_mps,
             "seed": r.seed, "episode": r.episode, "tau_e": r.tau_e,
             "leftover_bits": r.leftover_bits}
            for r in rows
        ]), encoding="utf-8")
    return {"run_cfg": run_cfg, "out": out, "checkpoints": checkpoints,
            "spec": spec, "rows": rows}


def _cell_means(rows, value):
    means = {}
    for regime in ("power_only", "rbg_only", "both", "method1", "method2"):
        for d, v in itertools.product(GRID_ARRIVALS, GRID_SPEEDS):
            sample = [getattr(r, value) for r in rows
                      if r.regime == regime and r.d_bps == d and r.v_mps == v]
            if sample:
                means[(regime, d, v)] = float(np.mean(sample))
    return means


# ------------------------------------------------------- training progression

def test_training_progress_at_desk_scale(desk_artifacts):
    """Final MA(500) reward clears the first-500 MA by each xApp's headroom.

    The power allocator has >= 20% of relative headroom at desk scale
    (untrained policies sample harmful low/zero levels); the RBG allocator
    starts from the already-strong equal split at MA ~ 0.86, so its ceiling
    is ~ +16% and the asserted floor is 3% (measured ~6%).
    """
    floors = {"power": 0.20, "rbg": 0.03}
    for name, floor in floors.items():
        history_path = desk_artifacts["out"] / f"{name}_history.json"
        if not history_path.exists():
            pytest.skip("training histories not cached alongside the checkpoints")
        history = json.loads(history_path.read_text(encoding="utf-8"))
        tau = np.array([row["tau_e"] for row in history])
        ma = moving_average(tau, 500)
        uplift = ma[-1] / ma[499] - 1.0
        assert uplift >= floor, f"{name}: uplift {uplift*100:.1f}% < {floor*100:.0f}%"
        _ok("training progress", f"{name} xApp MA rose {ma[499]:.3f} -> "
                                 f"{ma[-1]:.3f} (+{uplift*100:.1f}%)")


# ---------------------------------------------------------------- criterion 5

def test_c05_conflict_reproduction(desk_artifacts):
    means = _cell_means(desk_artifacts["rows"], "tau_e")
    cells = list(itertools.product(GRID_ARRIVALS, GRID_SPEEDS))
    below = 0
    degradation = {}
    for d, v in cells:
        best_single = max(means[("power_only", d, v)], means[("rbg_only", d, v)])
        both = means[("both", d, v)]
        degradation[(d, v)] = 1.0 - both / best_single
        if both < best_single:
            below += 1
    high = degradation[(8e6, 45.0)]
    low = degradation[(2e6, 5.0)]
    assert below >= 8, f"conflict visible in only {below}/9 cells"
    assert high > low, f"degradation high={high:.3f} not above low={low:.3f}"
    _ok("criterion 5", f"conflict in {below}/9 cells; degradation high cell "
                       f"{high*100:.1f}% > low cell {low*100:.1f}%")


# ---------------------------------------------------------------- criterion 6

def test_c06_scheduler_ordering(desk_artifacts):
    means = _cell_means(desk_artifacts["rows"], "tau_e")
    cells = list(itertools.product(GRID_ARRIVALS, GRID_SPEEDS))
    ordered = sum(
        1 for d, v in cells
        if means[("method2", d, v)] >= means[("method1", d, v)]
        >= means[("both", d, v)]
    )
    grid_mean = {
        regime: float(np.mean([means[(regime, d, v)] for d, v in cells]))
        for regime in ("power_only", "rbg_only", "both", "method1", "method2")
    }
    best_other = max(v for k, v in grid_mean.items() if k != "method2")
    assert ordered >= 7, f"M2 >= M1 >= conflicting held in only {ordered}/9 cells"
    assert grid_mean["method2"] >= best_other, grid_mean
    _ok("criterion 6", f"ordering held in {ordered}/9 cells; grid means "
                       + ", ".join(f"{k}={v:.3f}" for k, v in grid_mean.items())
                       + f"; method2 {grid_mean['method2']:.4f} >= best other "
                       + f"{best_other:.4f}")


# ---------------------------------------------------------------- criterion 7

def test_c07_leftover_ordering(desk_artifacts):
    means = _cell_means(desk_artifacts["rows"], "leftover_bits")
    cells = list(itertools.product(GRID_ARRIVALS, GRID_SPEEDS))
    grid = {regime: float(np.mean([means[(regime, d, v)] for d, v in cells]))
            for regime in ("both", "method1", "method2")}
    assert grid["method2"] <= grid["method1"] <= grid["both"], grid
    _ok("criterion 7", f"grid-mean leftover bits method2={grid['method2']:.0f} "
                       f"<= method1={grid['method1']:.0f} <= both={grid['both']:.0f}")


# ---------------------------------------------------------------- criterion 8

def test_c08_safety_gate(desk_artifacts):
    safety = SafetyConfig(enabled=True, beta=0.05, z_threshold=-2.0, t_back=3,
                          fallback="equal", warmup=20)
    gate = SafetyGateState()
    rng = np.random.default_rng(1)
    proposed = (1, 1)
    for _ in range(40):
        _, gate, gated = safety_gate(gate, float(rng.normal(2.0, 0.1)),
                                     proposed, 1, safety)
        assert not gated
    trigger_value = gate.mean - 10.0 * gate.dispersion
    overridden = []
    stats = []
    for k in range(8):
        value = trigger_value if k == 0 else 2.0
        message, gate, gated = safety_gate(gate, value, proposed, 1, safety)
        overridden.append(gated)
        stats.append((gate.mean, gate.dispersion))
        if gated:
            assert message == (0, 0)
        else:
            assert message == proposed
    assert overridden == [True, True, True, False, False, False, False, False]
    assert stats[0] == stats[1] == stats[2]  # frozen during back-off
    assert stats[3] != stats[0]              # re-armed and updating again

    # disabled gate vs threshold at -infinity: identical decision traces
    run_cfg = desk_artifacts["run_cfg"]
    base_spec = desk_artifacts["spec"]
    import dataclasses

    small = dataclasses.replace(
        base_spec, regimes=("method1",), arrival_rates_bps=(8e6,),
        speeds_mps=(45.0,), episodes_per_cell=5, seeds=(0,))
    disabled = dataclasses.replace(small, safety=SafetyConfig(enabled=False))
    minus_inf = dataclasses.replace(
        small, safety=SafetyConfig(enabled=True, z_threshold=-math.inf))
    rows_disabled = run_regime("method1", disabled, run_cfg)
    rows_inf = run_regime("method1", minus_inf, run_cfg)
    assert [r.trace for r in rows_disabled] == [r.trace for r in rows_inf]
    assert [r.tau_e for r in rows_disabled] == [r.tau_e for r in rows_inf]
    _ok("criterion 8", "anomaly triggers exactly t_back overrides with frozen "
                       "statistics, re-arms, and z=-inf matches the ungated trace")


# ---------------------------------------------------------------- criterion 9

def test_c09_immutability(desk_artifacts):
    digests_path = desk_artifacts["out"] / "pool_digests.json"
    if digests_path.exists():
        recorded = json.loads(digests_path.read_text(encoding="utf-8"))
        assert recorded["before_scheduler_training"] \
            == recorded["after_scheduler_training"]

    checkpoints = desk_artifacts["checkpoints"]
    run_cfg = desk_artifacts["run_cfg"]
    cfg = run_cfg.network
    before = sha256_file(checkpoints["power"])
    ckpt = load_checkpoint(checkpoints["power"])
    policy = policy_from_checkpoint(ckpt)
    power_set = power_set_for(cfg)
    rng = np.random.default_rng(77)
    state = reset_episode(cfg, 5e6, 25.0, rng)
    features = power_observe(state)
    snapshot = [a.copy() for a in policy.actor.arrays() + policy.critic.arrays()]
    for _ in range(10_000):
        power_act(policy, cfg, features, power_set, rng, explore=True)
    assert all(np.array_equal(a, b) for a, b in
               zip(snapshot, policy.actor.arrays() + policy.critic.arrays()))
    assert sha256_file(checkpoints["power"]) == before
    _ok("criterion 9", "pool checkpoints unchanged by scheduler training and "
                       "10k inference calls")


# --------------------------------------------------------------- criterion 10

def test_c10_determinism(desk_artifacts, tmp_path, monkeypatch):
    monkeypatch.delenv("XSCHED_CONFIG", raising=False)
    cfg_path = tmp_path / "desk.cfg"
    cfg_path.write_text(
        "num_orus=2\nrbgs_per_oru=6\nnum_users=8\npower_levels=6\n",
        encoding="utf-8")

    train_outs = []
    for name in ("t1", "t2"):
        out = tmp_path / name
        assert main(["train-xapp", "--config", str(cfg_path), "--kind", "power",
                     "--episodes", "25", "--seed", "11", "--out", str(out)]) == 0
        train_outs.append(out)
    assert (train_outs[0] / "power.ckpt").read_bytes() \
        == (train_outs[1] / "power.ckpt").read_bytes()
    assert (train_outs[0] / "history.csv").read_bytes() \
        == (train_outs[1] / "history.csv").read_bytes()

    spec = {
        "regimes": ["both", "method1"],
        "arrival_rates_bps": [8e6],
        "speeds_mps": [45.0],
        "episodes_per_cell": 5,
        "seeds": [0, 1],
        "checkpoints": desk_artifacts["checkpoints"],
    }
    spec_path = tmp_path / "spec.json"
    spec_path.write_text(json.dumps(spec), encoding="utf-8")
    eval_outs = []
    for name in ("e1", "e2"):
        out = tmp_path / name
        assert main(["evaluate", "--config", str(cfg_path), "--spec",
                     str(spec_path), "--out", str(out)]) == 0
        eval_outs.append(out)
    for filename in ("metrics.csv", "summary.csv", "trace_method1.csv"):
        assert (eval_outs[0] / filename).read_bytes() \
            == (eval_outs[1] / filename).read_bytes()
    _ok("criterion 10", "training and evaluation commands rerun byte-identically")
