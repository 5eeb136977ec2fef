"""Command-line entry point: training, evaluation, and sweep runs.

Exit codes: 0 success, 2 usage, 3 config, 4 I/O, 5 invariant violation.
Every run writes a manifest.json sufficient to replay it; flags take
precedence over the config file, which takes precedence over defaults.  The
XSCHED_CONFIG environment variable supplies the default --config path.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import os
import sys
from datetime import datetime, timezone
from pathlib import Path

from . import __version__
from . import _kernels as kernels
from .a2c import A2CHyper
from .checkpoint import load_checkpoint, save_checkpoint, sha256_file
from .config import RunConfig, config_sha256, load_config, render_config
from .errors import CheckpointError, ConfigError, InvariantError
from .harness import (
    ExperimentSpec,
    load_regime_policies,
    run_regime,
    summarize,
    write_history_csv,
    write_metrics_csv,
    write_summary_csv,
    write_trace_csv,
)
from .scheduler import XAppPool, train_scheduler
from .xapps import XAppKind, policy_from_checkpoint, train_xapp

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_CONFIG = 3
EXIT_IO = 4
EXIT_INVARIANT = 5


def _utc_now() -> str:
    return datetime.now(timezone.utc).isoformat()


def _resolve_config(args) -> tuple[RunConfig, str | None, str]:
    path = args.config or os.environ.get("XSCHED_CONFIG")
    if path:
        cfg = load_config(path)
        digest = hashlib.sha256(Path(path).read_bytes()).hexdigest()
        return cfg, str(path), digest
    cfg = RunConfig().validate()
    return cfg, None, config_sha256(cfg)


def _hyper(args, cfg: RunConfig) -> A2CHyper:
    hyper = A2CHyper()
    if getattr(args, "lr", None) is not None:
        hyper = dataclasses.replace(hyper, learning_rate=args.lr)
    if getattr(args, "clip_norm", None) is not None:
        hyper = dataclasses.replace(hyper, clip_norm=args.clip_norm)
    if getattr(args, "advantage_mode", None) is not None:
        hyper = dataclasses.replace(hyper, advantage_mode=args.advantage_mode)
    return hyper.validate()


def _write_manifest(out_dir: Path, args, subcommand: str, cfg: RunConfig,
                    config_path, config_digest: str, seed,
                    checkpoints: dict, outputs: dict, started: str) -> None:
    manifest = {
        "command": list(sys.argv),
        "subcommand": subcommand,
        "tool_version": __version__,
        "backend": kernels.BACKEND,
        "config_path": config_path,
        "config_sha256": config_digest,
        "resolved_config": render_config(cfg),
        "seed": seed,
        "checkpoints": checkpoints,
        "outputs": outputs,
        "out_dir": str(out_dir),
        "started_utc": started,
        "finished_utc": _utc_now(),
    }
    with open(out_dir / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _checkpoint_entry(path: Path) -> dict:
    return {"path": str(path), "sha256": sha256_file(path)}


def cmd_train_xapp(args) -> int:
    started = _utc_now()
    cfg, config_path, digest = _resolve_config(args)
    hyper = _hyper(args, cfg)
    kind = XAppKind.POWER_A2C if args.kind == "power" else XAppKind.RBG_A2C
    ckpt, history = train_xapp(kind, cfg.network, hyper, args.episodes, args.seed)

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    ckpt_path = out_dir / f"{args.kind}.ckpt"
    save_checkpoint(ckpt_path, ckpt)
    write_history_csv(out_dir / "history.csv", history)
    _write_manifest(out_dir, args, "train-xapp", cfg, config_path, digest, args.seed,
                    {args.kind: _checkpoint_entry(ckpt_path)},
                    {"checkpoint": str(ckpt_path), "history": str(out_dir / "history.csv")},
                    started)
    return EXIT_OK


def _load_pool(pool_dir: Path) -> tuple[XAppPool, dict]:
    entries = {}
    policies = {}
    for kind in ("power", "rbg"):
        path = pool_dir / f"{kind}.ckpt"
        if not path.exists():
            raise CheckpointError(f"missing pool checkpoint {path}")
        ckpt = load_checkpoint(path)
        expected = XAppKind.POWER_A2C if kind == "power" else XAppKind.RBG_A2C
        if XAppKind(ckpt.kind) is not expected:
            raise ConfigError(f"{path}: expected a {kind} xApp checkpoint")
        policies[kind] = policy_from_checkpoint(ckpt)
        entries[kind] = _checkpoint_entry(path)
    return XAppPool(power=policies["power"], rbg=policies["rbg"]), entries


def cmd_train_scheduler(args) -> int:
    started = _utc_now()
    cfg, config_path, digest = _resolve_config(args)
    hyper = _hyper(args, cfg)
    pool, entries = _load_pool(Path(args.pool))
    ckpt, history, trace = train_scheduler(args.method, pool, cfg, hyper,
                                           args.episodes, args.seed)

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    ckpt_path = out_dir / f"method{args.method}.ckpt"
    save_checkpoint(ckpt_path, ckpt)
    write_history_csv(out_dir / "history.csv", history)
    write_trace_csv(out_dir / "trace.csv", trace)
    entries[f"method{args.method}"] = _checkpoint_entry(ckpt_path)
    _write_manifest(out_dir, args, "train-scheduler", cfg, config_path, digest,
                    args.seed, entries,
                    {"checkpoint": str(ckpt_path),
                     "history": str(out_dir / "history.csv"),
                     "trace": str(out_dir / "trace.csv")},
                    started)
    return EXIT_OK


def _run_spec(spec: ExperimentSpec, cfg: RunConfig, out_dir: Path, tag: str = "") -> dict:
    all_rows = []
    outputs = {}
    for regime in spec.regimes:
        policies = load_regime_policies(regime, spec.checkpoints, cfg)
        rows = run_regime(regime, spec, cfg, policies)
        all_rows.extend(rows)
        if regime in ("method1", "method2"):
            trace_rows = [pr for row in rows for pr in row.period_rows]
            trace_path = out_dir / f"trace_{regime}{tag}.csv"
            write_trace_csv(trace_path, trace_rows)
            outputs[f"trace_{regime}"] = str(trace_path)
    metrics_path = out_dir / f"metrics{tag}.csv"
    summary_path = out_dir / f"summary{tag}.csv"
    write_metrics_csv(metrics_path, all_rows)
    write_summary_csv(summary_path, summarize(all_rows))
    outputs["metrics"] = str(metrics_path)
    outputs["summary"] = str(summary_path)
    return outputs


def cmd_evaluate(args) -> int:
    started = _utc_now()
    cfg, config_path, digest = _resolve_config(args)
    spec = ExperimentSpec.from_json(args.spec)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    outputs = _run_spec(spec, cfg, out_dir)
    checkpoints = {name: _checkpoint_entry(Path(p))
                   for name, p in spec.checkpoints.items()}
    _write_manifest(out_dir, args, "evaluate", cfg, config_path, digest, None,
                    checkpoints, outputs, started)
    return EXIT_OK


_NETWORK_SWEEPABLE = {"power_levels"}


def _apply_override(cfg: RunConfig, spec: ExperimentSpec, parameter: str, value):
    if parameter.startswith("safety."):
        name = parameter[len("safety."):]
        base = spec.safety if spec.safety is not None else cfg.safety
        if name not in {f.name for f in dataclasses.fields(base)}:
            raise ConfigError(f"unknown sweep parameter {parameter!r}")
        safety = dataclasses.replace(base, **{name: value}).validate()
        return cfg, dataclasses.replace(spec, safety=safety)
    if parameter in _NETWORK_SWEEPABLE:
        network = dataclasses.replace(cfg.network, **{parameter: int(value)}).validate()
        return dataclasses.replace(cfg, network=network), spec
    raise ConfigError(f"unknown sweep parameter {parameter!r}")


def cmd_sweep(args) -> int:
    started = _utc_now()
    cfg, config_path, digest = _resolve_config(args)
    try:
        grid = json.loads(Path(args.grid).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read grid file {args.grid}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid grid file {args.grid}: {exc}") from exc
    for key in ("parameter", "values", "spec"):
        if key not in grid:
            raise ConfigError(f"grid file must define {key!r}")
    spec = ExperimentSpec.from_json(grid["spec"])
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    outputs = {}
    for i, value in enumerate(grid["values"]):
        swept_cfg, swept_spec = _apply_override(cfg, spec, grid["parameter"], value)
        tag = f"_{i:03d}"
        outputs[f"value{tag}"] = {"value": value,
                                  **_run_spec(swept_spec, swept_cfg, out_dir, tag)}
    checkpoints = {name: _checkpoint_entry(Path(p))
                   for name, p in spec.checkpoints.items()}
    _write_manifest(out_dir, args, "sweep", cfg, config_path, digest, None,
                    checkpoints, outputs, started)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="xsched",
        description="Train and evaluate power/RBG allocation xApps and their "
                    "activation scheduler on the multi-cell downlink simulator.",
    )
    parser.add_argument("--version", action="version", version=f"xsched {__version__}")
    sub = parser.add_subparsers(dest="subcommand", required=True)
    # --config may come from the environment instead of the flag
    config_required = "XSCHED_CONFIG" not in os.environ

    train_x = sub.add_parser("train-xapp", help="train one allocation xApp")
    train_x.add_argument("--config", required=config_required,
                         help="config file (default: $XSCHED_CONFIG)")
    train_x.add_argument("--kind", required=True, choices=["power", "rbg"])
    train_x.add_argument("--episodes", type=int, required=True)
    train_x.add_argument("--seed", type=int, required=True)
    train_x.add_argument("--out", required=True)
    train_x.add_argument("--lr", type=float, help="override the learning rate")
    train_x.add_argument("--clip-norm", type=float, help="override the gradient clip")
    train_x.add_argument("--advantage-mode", choices=["full-return", "one-step"])
    train_x.set_defaults(func=cmd_train_xapp)

    train_s = sub.add_parser("train-scheduler", help="train an activation scheduler")
    train_s.add_argument("--config", required=config_required)
    train_s.add_argument("--method", required=True, type=int, choices=[1, 2])
    train_s.add_argument("--pool", required=True,
                         help="directory with power.ckpt and rbg.ckpt")
    train_s.add_argument("--episodes", type=int, required=True)
    train_s.add_argument("--seed", type=int, required=True)
    train_s.add_argument("--out", required=True)
    train_s.add_argument("--lr", type=float)
    train_s.add_argument("--clip-norm", type=float)
    train_s.add_argument("--advantage-mode", choices=["full-return", "one-step"])
    train_s.set_defaults(func=cmd_train_scheduler)

    evaluate = sub.add_parser("evaluate", help="run regimes over a context grid")
    evaluate.add_argument("--config", required=config_required)
    evaluate.add_argument("--spec", required=True, help="experiment spec JSON")
    evaluate.add_argument("--out", required=True)
    evaluate.set_defaults(func=cmd_evaluate)

    sweep = sub.add_parser("sweep", help="evaluate across a hyperparameter grid")
    sweep.add_argument("--config", required=config_required)
    sweep.add_argument("--grid", required=True,
                       help='JSON: {"parameter": ..., "values": [...], "spec": path}')
    sweep.add_argument("--out", required=True)
    sweep.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"xsched: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except CheckpointError as exc:
        print(f"xsched: checkpoint error: {exc}", file=sys.stderr)
        return EXIT_IO
    except FileNotFoundError as exc:
        print(f"xsched: {exc}", file=sys.stderr)
        return EXIT_IO
    except OSError as exc:
        print(f"xsched: i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    except InvariantError as exc:
        print(f"xsched: invariant violation: {exc}", file=sys.stderr)
        return EXIT_INVARIANT


if __name__ == "__main__":
    sys.exit(main())
