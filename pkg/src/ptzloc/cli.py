"""Command-line entry point.

Subcommands::

    ptzloc simulate    [--config FILE] [--scenario NAME] [--filter MODE] [--seed N] [--out DIR]
    ptzloc gen-dataset [--config FILE] --backgrounds DIR [--total N] [--positives N] [--out DIR]
    ptzloc replay      LOG.csv [--filter MODE] [--sigma-fixed S] [--out FILE]
    ptzloc eval        LOG.csv [--out FILE]

Any config field can be overridden with ``--set section.field=value``.
Exit status: 0 success, 2 bad config or input, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
import time
from pathlib import Path
from typing import Optional, Sequence

from . import __version__
from .config import AppConfig, apply_overrides, dump_config, load_config, resolve_seed, run_config
from .dataset import AugmentParams, DatasetManifest, default_workers, generate, list_backgrounds
from .errors import ConfigError, EmptyLog, NoBackgrounds, SchemaMismatch
from .sim import ESTIMATORS, RunLog, evaluate_vs_truth, replay, run, run_sweep, write_artifacts

log = logging.getLogger("ptzloc")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3


def _load(args) -> AppConfig:
    cfg = load_config(args.config) if args.config else AppConfig()
    overrides = list(args.overrides or [])
    for flag, key in (("scenario", "sim.scenario"), ("filter", "filter.mode"),
                      ("sigma_fixed", "filter.sigma_rbf_fixed"), ("out", "output_dir"),
                      ("total", "dataset.total"), ("positives", "dataset.positives"),
                      ("backgrounds", "dataset.backgrounds_dir"), ("runs", "sim.runs"),
                      ("workers", None)):
        value = getattr(args, flag, None)
        if value is None or (flag == "out" and args.command == "replay"):
            # replay's --out names the metrics file, not the output directory
            continue
        if flag == "workers":
            section = "sim" if args.command == "simulate" else "dataset"
            key = f"{section}.workers"
        overrides.append(f"{key}={json.dumps(value)}")
    return apply_overrides(cfg, overrides) if overrides else cfg


def cmd_simulate(args) -> int:
    cfg = _load(args)
    seed = resolve_seed(args.seed, cfg)
    rc = run_config(cfg, seed)
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.yaml").write_text(dump_config(dataclasses.replace(cfg, seed=seed)), encoding="utf-8")
    t0 = time.perf_counter()
    if cfg.sim.runs == 1:
        result = run(rc)
        csv_path, json_path = write_artifacts(result, out)
        for ev in result.events:
            log.warning("%s at t=%.3f s", ev["event"], ev["t"])
        m = result.metrics
        print(f"{csv_path}  {json_path}")
        print(f"rho RMSE {m.rho_rmse_m:.4f} m  median {m.rho_median_m:.4f} m  "
              f"3D RMSE {m.rmse_3d_m:.4f} m  detection rate {m.detection_rate:.3f}")
    else:
        results = run_sweep(rc, cfg.sim.runs, cfg.sim.workers)
        for i, r in enumerate(results):
            write_artifacts(r, out / f"run_{i:03d}")
        rmse = [r.metrics.rho_rmse_m for r in results]
        print(f"{len(results)} runs in {out}; rho RMSE mean {sum(rmse) / len(rmse):.4f} m")
    log.info("simulate finished in %.2f s", time.perf_counter() - t0)
    return EXIT_OK


def cmd_gen_dataset(args) -> int:
    cfg = _load(args)
    seed = resolve_seed(args.seed, cfg)
    d = cfg.dataset
    if d.backgrounds_dir is None:
        raise ConfigError("dataset.backgrounds_dir", "a background image directory is required")
    backgrounds = list_backgrounds(d.backgrounds_dir)
    manifest = DatasetManifest(d.total, d.positives, d.image_dir, d.label_file, seed)
    aug = AugmentParams(stroke_px=d.stroke_px, stroke_blur_sigma=d.stroke_blur_sigma)
    workers = d.workers if d.workers > 1 else default_workers()
    t0 = time.perf_counter()
    labels = generate(manifest, backgrounds, cfg.output_dir, aug, workers)
    print(f"{manifest.total} images ({manifest.positives} with marker) -> {labels} "
          f"in {time.perf_counter() - t0:.1f} s")
    return EXIT_OK


def cmd_replay(args) -> int:
    cfg = _load(args)
    seed = resolve_seed(args.seed, cfg)
    run_log = RunLog.from_csv(args.log, required=("t", "rho_obs", "phi", "detected"))
    new_log = replay(run_log, cfg.filter.mode, cfg.filter.params(), seed,
                     bw_f_crit_hz=cfg.filter.bw_f_crit_hz)
    metrics = evaluate_vs_truth(new_log)
    out = Path(args.out) if args.out else Path(args.log).with_name(f"metrics_{cfg.filter.mode}.json")
    metrics.to_json(out)
    if args.log_out:
        new_log.to_csv(args.log_out)
    print(f"{out}: rho RMSE {metrics.rho_rmse_m:.4f} m  median {metrics.rho_median_m:.4f} m")
    return EXIT_OK


def cmd_eval(args) -> int:
    metrics = evaluate_vs_truth(RunLog.from_csv(args.log))
    out = Path(args.out) if args.out else Path(args.log).with_name("metrics.json")
    metrics.to_json(out)
    print(f"{out}: rho RMSE {metrics.rho_rmse_m:.4f} m  3D median {metrics.median_3d_m:.4f} m")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ptzloc", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", type=str, default=None, help="YAML config file")
        p.add_argument("--set", dest="overrides", action="append", metavar="KEY=VALUE",
                       help="override a config field by dotted path (repeatable)")
        p.add_argument("--seed", type=int, default=None, help="overrides config and PTZLOC_SEED")

    p = sub.add_parser("simulate", help="run the closed-loop simulator")
    common(p)
    p.add_argument("--scenario", type=str, default=None, help="preset name")
    p.add_argument("--filter", type=str, choices=ESTIMATORS, default=None, help="range estimator")
    p.add_argument("--sigma-fixed", type=float, default=None, help="RBF width for --filter fixed")
    p.add_argument("--runs", type=int, default=None, help="independent seeded runs")
    p.add_argument("--workers", type=int, default=None, help="processes for multi-run sweeps")
    p.add_argument("--out", type=str, default=None, help="output directory")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("gen-dataset", help="render the synthetic training set")
    common(p)
    p.add_argument("--backgrounds", type=str, default=None, help="directory of background images")
    p.add_argument("--total", type=int, default=None)
    p.add_argument("--positives", type=int, default=None)
    p.add_argument("--workers", type=int, default=None, help="render threads")
    p.add_argument("--out", type=str, default=None, help="output directory")
    p.set_defaults(func=cmd_gen_dataset)

    p = sub.add_parser("replay", help="re-run range estimation over a recorded log")
    common(p)
    p.add_argument("log", type=str, help="log CSV written by simulate")
    p.add_argument("--filter", type=str, choices=ESTIMATORS, default=None)
    p.add_argument("--sigma-fixed", type=float, default=None)
    p.add_argument("--out", type=str, default=None, help="metrics JSON path")
    p.add_argument("--log-out", type=str, default=None, help="write the replayed log CSV here")
    p.set_defaults(func=cmd_replay)

    p = sub.add_parser("eval", help="metrics of a log against its ground truth")
    p.add_argument("log", type=str)
    p.add_argument("--out", type=str, default=None, help="metrics JSON path")
    p.set_defaults(func=cmd_eval)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, NoBackgrounds, SchemaMismatch, EmptyLog) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - report and map to the runtime exit code
        log.debug("unhandled error", exc_info=True)
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
