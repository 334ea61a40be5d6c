"""``ruralaccess`` command line: compute, stats, render, run."""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

from .config import ConfigError, PipelineConfig, load_config, parse_weights, with_overrides
from .pipeline import INDICATOR_FIELDS, StageError, _dump_json, _write_text, run_compute, run_render, run_stats

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_INPUT = 2
EXIT_CONFIG = 3

_EXIT_FOR_KIND = {"input": EXIT_INPUT, "config": EXIT_CONFIG, "internal": EXIT_INTERNAL}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def _positive_float(s):
    v = float(s)
    if not v > 0:
        raise argparse.ArgumentTypeError("must be > 0")
    return v


def _positive_int(s):
    v = int(s)
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def _weights_flag(s):
    try:
        parse_weights(s)
    except ConfigError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None
    return s


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", type=Path, help="TOML run configuration")
    common.add_argument("--threshold-m", type=_positive_float, dest="threshold_m")
    common.add_argument("--workers", type=_positive_int)
    common.add_argument("--seed", type=int)
    common.add_argument("--weights", type=_weights_flag, help="knn:<k> or queen")
    common.add_argument("--moran", help="normality, randomization or perm:<n>")
    common.add_argument("--output-dir", type=Path, dest="output_dir")
    for key in ("population", "urban", "roads", "regions", "dem", "covariates"):
        common.add_argument(f"--{key}", type=Path, help=f"{key} input (overrides config)")
    common.add_argument("--clip-roads-to-rural", action="store_true", default=None, dest="clip_roads_to_rural")
    common.add_argument("-v", "--verbose", action="store_true")

    p = _Parser(prog="ruralaccess", description="Rural access indicators from raster and vector inputs.")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("compute", parents=[common], help="write regions.csv and regions.json")
    s = sub.add_parser("stats", parents=[common], help="write stats.json")
    s.add_argument("--indicators", type=Path, help="regions.json or regions.csv (default: output dir)")
    r = sub.add_parser("render", parents=[common], help="write map_rai.svg / map_nsrp.svg")
    r.add_argument("--indicators", type=Path)
    r.add_argument("--field", choices=("rai", "nsrp", "both"), default="both")
    sub.add_parser("run", parents=[common], help="compute, stats and render in sequence")
    return p


def _config(args) -> PipelineConfig:
    cfg = load_config(args.config) if args.config else PipelineConfig()
    cfg = with_overrides(
        cfg,
        threshold_m=args.threshold_m, workers=args.workers, seed=args.seed, weights=args.weights,
        moran=args.moran, output_dir=args.output_dir, population=args.population, urban=args.urban,
        roads=args.roads, regions=args.regions, dem=args.dem, covariates=args.covariates,
        clip_roads_to_rural=args.clip_roads_to_rural,
    )
    need = ("population", "urban", "roads", "regions") if args.command in ("compute", "run") else ("regions",)
    return cfg.validate(need)


def _emit_error(payload: dict) -> None:
    sys.stderr.write(json.dumps(payload, ensure_ascii=False) + "\n")


def _dispatch(args, cfg: PipelineConfig) -> None:
    timings = {}
    t0 = time.perf_counter()
    if args.command in ("compute", "run"):
        timings["compute"] = run_compute(cfg)["timings"]
    if args.command in ("stats", "run"):
        run_stats(cfg, getattr(args, "indicators", None))
    if args.command in ("render", "run"):
        field = getattr(args, "field", "both")
        fields = INDICATOR_FIELDS if field == "both" else (field,)
        run_render(cfg, getattr(args, "indicators", None), fields)
    timings["total_s"] = round(time.perf_counter() - t0, 6)
    timings["workers"] = cfg.workers
    # wall-clock numbers live apart from the reports so those stay reproducible
    _write_text(Path(cfg.output_dir) / f"timings_{args.command}.json", _dump_json(timings))


def main(argv=None) -> int:
    stage = "config"
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(
            level=logging.INFO if args.verbose else logging.WARNING,
            format="%(levelname)s %(name)s: %(message)s",
        )
        cfg = _config(args)
        stage = args.command
        _dispatch(args, cfg)
    except ConfigError as exc:
        _emit_error({"error": str(exc), "stage": stage, "kind": "config"})
        return EXIT_CONFIG
    except StageError as exc:
        _emit_error(exc.as_dict())
        return _EXIT_FOR_KIND.get(exc.kind, EXIT_INTERNAL)
    except Exception as exc:  # noqa: BLE001
        _emit_error({"error": f"{type(exc).__name__}: {exc}", "stage": stage, "kind": "internal"})
        return EXIT_INTERNAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
