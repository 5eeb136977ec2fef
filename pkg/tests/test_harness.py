import dataclasses
import random

import numpy as np
import pytest

from xsched.a2c import A2CHyper
from xsched.checkpoint import save_checkpoint, sha256_file
from xsched.config import SafetyConfig
from xsched.errors import ConfigError
from xsched.harness import (
    METRICS_HEADER,
    ExperimentSpec,
    MetricsRow,
    moving_average,
    run_regime,
    summarize,
    write_metrics_csv,
)
from xsched.scheduler import XAppPool, train_scheduler
from xsched.xapps import XAppKind, train_xapp


@pytest.fixture(scope="module")
def tiny_artifacts(tmp_path_factory):
    """Quickly trained checkpoints for harness-level tests."""
    from xsched.config import NetworkConfig, RunConfig

    run_cfg = RunConfig(
        network=NetworkConfig(num_orus=2, rbgs_per_oru=3, num_users=4,
                              power_levels=4, slots_per_episode=10),
        scheduling_period=5,
    ).validate()
    out = tmp_path_factory.mktemp("tiny_artifacts")
    hyper = A2CHyper()
    power, _ = train_xapp(XAppKind.POWER_A2C, run_cfg.network, hyper, 3, seed=0)
    rbg, _ = train_xapp(XAppKind.RBG_A2C, run_cfg.network, hyper, 3, seed=1)
    save_checkpoint(out / "power.ckpt", power)
    save_checkpoint(out / "rbg.ckpt", rbg)
    from xsched.xapps import policy_from_checkpoint

    pool = XAppPool(power=policy_from_checkpoint(power),
                    rbg=policy_from_checkpoint(rbg))
    m1, _, _ = train_scheduler(1, pool, run_cfg, hyper, episodes=2, seed=2)
    m2, _, _ = train_scheduler(2, pool, run_cfg, hyper, episodes=2, seed=3)
    save_checkpoint(out / "method1.ckpt", m1)
    save_checkpoint(out / "method2.ckpt", m2)
    checkpoints = {
        "power": str(out / "power.ckpt"),
        "rbg": str(out / "rbg.ckpt"),
        "method1": str(out / "method1.ckpt"),
        "method2": str(out / "method2.ckpt"),
    }
    return run_cfg, checkpoints


def _spec(checkpoints, **overrides):
    base = dict(
        regimes=("power_only", "rbg_only", "both"),
        arrival_rates_bps=(2e6, 5e6),
        speeds_mps=(5.0, 25.0),
        episodes_per_cell=2,
        seeds=(0, 1),
        checkpoints=checkpoints,
    )
    base.update(overrides)
    return ExperimentSpec(**base).validate()


class TestRunRegime:
    def test_row_count(self, tiny_artifacts):
        run_cfg, checkpoints = tiny_artifacts
        spec = _spec(checkpoints)
        rows = run_regime("power_only", spec, run_cfg)
        # cells x seeds x episodes
        assert len(rows) == 4 * 2 * 2
        keys = {(r.d_bps, r.v_mps, r.seed, r.episode) for r in rows}
        assert len(keys) == len(rows)

    def test_rerun_is_identical(self, tiny_artifacts):
        run_cfg, checkpoints = tiny_artifacts
        spec = _spec(checkpoints, regimes=("both",), arrival_rates_bps=(5e6,),
                     speeds_mps=(25.0,))
        a = run_regime("both", spec, run_cfg)
        b = run_regime("both", spec, run_cfg)
        assert [(r.tau_e, r.leftover_bits) for r in a] \
            == [(r.tau_e, r.leftover_bits) for r in b]

    def test_scheduler_regime_produces_trace(self, tiny_artifacts):
        run_cfg, checkpoints = tiny_artifacts
        spec = _spec(checkpoints, regimes=("method1",), arrival_rates_bps=(5e6,),
                     speeds_mps=(5.0,), episodes_per_cell=1, seeds=(0,))
        rows = run_regime("method1", spec, run_cfg)
        assert len(rows) == 1
        periods = run_cfg.network.slots_per_episode // run_cfg.scheduling_period
        assert len(rows[0].period_rows) == periods
        assert rows[0].trace.count("|") == periods - 1
        for period_row in rows[0].period_rows:
            assert period_row["mu_bits"] in ("10", "01", "11")

    def test_checkpoint_files_untouched_by_evaluation(self, tiny_artifacts):
        run_cfg, checkpoints = tiny_artifacts
        digests = {k: sha256_file(p) for k, p in checkpoints.items()}
        spec = _spec(checkpoints, regimes=("method2",), episodes_per_cell=1,
                     seeds=(0,))
        run_regime("method2", spec, run_cfg)
        assert digests == {k: sha256_file(p) for k, p in checkpoints.items()}

    def test_unknown_regime_rejected(self, tiny_artifacts):
        run_cfg, checkpoints = tiny_artifacts
        with pytest.raises(ConfigError):
            _spec(checkpoints, regimes=("bogus",))

    def test_missing_checkpoint_key(self, tiny_artifacts):
        run_cfg, checkpoints = tiny_artifacts
        spec = _spec({"power": checkpoints["power"]})
        with pytest.raises(ConfigError):
            run_regime("power_only", spec, run_cfg)


class TestMovingAverage:
    def test_constant_series(self):
        assert np.allclose(moving_average(np.full(40, 3.3), 7), 3.3)

    def test_window_one_is_identity(self, rng):
        series = rng.normal(size=25)
        assert np.array_equal(moving_average(series, 1), series)

    def test_matches_brute_force(self, rng):
        series = rng.normal(size=10_000)
        window = 500
        got = moving_average(series, window)
        want = np.array([
            series[max(0, i - window + 1): i + 1].mean()
            for i in range(len(series))
        ])
        assert np.allclose(got, want, rtol=0.0, atol=1e-12)

    def test_empty_series_rejected(self):
        with pytest.raises(ValueError):
            moving_average([], 5)


def _row(regime, tau, leftover=100, d=5e6, v=25.0, seed=0, episode=0):
    return MetricsRow(regime=regime, d_bps=d, v_mps=v, seed=seed, episode=episode,
                      tau_e=tau, leftover_bits=leftover)


class TestSummarize:
    def test_identical_regimes_have_zero_degradation(self):
        rows = [_row("power_only", 0.8), _row("rbg_only", 0.8), _row("both", 0.8)]
        summary = summarize(rows)
        both = next(s for s in summary if s["regime"] == "both")
        assert both["degradation_pct"] == pytest.approx(0.0, abs=1e-12)

    def test_sixteen_percent_case(self):
        best = 0.75
        rows = [_row("power_only", best), _row("rbg_only", 0.70),
                _row("both", 0.84 * best)]
        both = next(s for s in summarize(rows) if s["regime"] == "both")
        assert both["degradation_pct"] == pytest.approx(16.0, rel=1e-9)

    def test_five_percent_case(self):
        best = 0.9
        rows = [_row("power_only", 0.85), _row("rbg_only", best),
                _row("both", 0.95 * best)]
        both = next(s for s in summarize(rows) if s["regime"] == "both")
        assert both["degradation_pct"] == pytest.approx(5.0, rel=1e-9)

    def test_permutation_invariant(self):
        rows = [
            _row("power_only", 0.7, episode=0), _row("power_only", 0.9, episode=1),
            _row("rbg_only", 0.6, episode=0), _row("rbg_only", 0.7, episode=1),
            _row("both", 0.5, episode=0), _row("both", 0.8, episode=1),
        ]
        shuffled = rows[:]
        random.Random(4).shuffle(shuffled)
        assert summarize(rows) == summarize(shuffled)

    def test_no_single_regimes_leaves_degradation_empty(self):
        summary = summarize([_row("method1", 0.7)])
        assert summary[0]["degradation_pct"] is None


class TestCsv:
    def test_metrics_header_and_formatting(self, tmp_path):
        path = tmp_path / "metrics.csv"
        write_metrics_csv(path, [_row("both", 0.5)])
        lines = path.read_text(encoding="utf-8").splitlines()
        assert lines[0] == ",".join(METRICS_HEADER)
        assert lines[1].startswith("both,5000000.0,25.0,0,0,0.5,100")


class TestCheckpointCompatibility:
    def test_mismatched_power_levels_rejected(self, tiny_artifacts):
        import dataclasses

        from xsched.harness import load_regime_policies

        run_cfg, checkpoints = tiny_artifacts
        swept = dataclasses.replace(
            run_cfg, network=dataclasses.replace(run_cfg.network,
                                                 power_levels=5).validate())
        with pytest.raises(ConfigError, match="head layout"):
            load_regime_policies("power_only", checkpoints, swept)


class TestGatedRegime:
    def test_always_triggering_gate_overrides_after_warmup(self, tiny_artifacts):
        # z is always finite, so a +inf threshold forces a trigger at every
        # armed decision once the warm-up completes
        run_cfg, checkpoints = tiny_artifacts
        spec = _spec(checkpoints, regimes=("method1",), arrival_rates_bps=(5e6,),
                     speeds_mps=(25.0,), episodes_per_cell=15, seeds=(0,),
                     safety=SafetyConfig(enabled=True, z_threshold=float("inf"),
                                         t_back=3, fallback="equal", warmup=20))
        rows = run_regime("method1", spec, run_cfg)
        period_rows = [pr for row in rows for pr in row.period_rows]
        gated = [pr["gated"] for pr in period_rows]
        # the 20th update lands during decision index 19, arming the gate there
        assert gated[:19] == [0] * 19
        assert all(gated[19:])
        assert all(pr["mu_bits"] == "00" for pr in period_rows[19:])
