"""``damvol`` command line: clean, train, evaluate, blend-sweep, rating-threshold, report.

Exit status is 0 on success, 1 when a model fails to fit, 2 on input or
configuration errors.
"""

from __future__ import annotations

import argparse
import json
import sys

from . import __version__, metrics, pipeline
from .ingest import SchemaError

EXIT_OK, EXIT_MODEL, EXIT_INPUT = 0, 1, 2


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="damvol", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"damvol {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    def add(name, help_text):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("config", help="run configuration (JSON)")
        p.add_argument("--set", dest="overrides", action="append", default=[],
                       metavar="KEY=VALUE", help="override a config entry (dotted keys)")
        return p

    add("clean", "ingest, drop sentinels and IQR outliers; write cleaned CSV")
    add("train", "fit the configured models and write artifacts")
    ev = add("evaluate", "score artifacts on the test split")
    ev.add_argument("artifacts", nargs="*", help="artifact files (default: all in output_dir)")
    add("blend-sweep", "compare blend thresholds on the test split")
    rt = add("rating-threshold", "detect the rating-curve threshold stage")
    rt.add_argument("--curve", help="rating curve CSV (default: config rating_curve)")
    rt.add_argument("--stage", type=float, help="override the detected stage (m)")
    add("report", "collect stage outputs into run_report.txt")
    return ap


def _run(args) -> None:
    cfg = pipeline.load_config(args.config, args.overrides)
    cmd = args.command
    if cmd == "clean":
        s = pipeline.run_clean(cfg)
        print(f"raw rows {s['raw_rows']}: dropped {s['dropped_sentinel']} sentinel, "
              f"{s['dropped_malformed']} malformed, {s['dropped_outlier']} IQR outlier; "
              f"{s['n_clean']} clean ({s['n_train']} train / {s['n_test']} test)")
    elif cmd == "train":
        s = pipeline.run_train(cfg)
        for name in s["models"]:
            print(f"trained {name}")
        for w in s["warnings"]:
            print(f"warning: {w}", file=sys.stderr)
    elif cmd == "evaluate":
        report = pipeline.run_evaluate(cfg, args.artifacts or None)
        print(metrics.format_table(report), end="")
    elif cmd == "blend-sweep":
        doc = pipeline.run_sweep(cfg)
        best = doc["rows"][0]
        print(f"best threshold: {best['label']} (RMSE {best['rmse']:.3f})")
    elif cmd == "rating-threshold":
        doc = pipeline.run_rating_threshold(cfg, args.curve, args.stage)
        print(json.dumps({"stage_m": doc["stage_m"], "volume_mcm": doc["volume_mcm"]}))
    elif cmd == "report":
        print(pipeline.run_report(cfg), end="")


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        _run(args)
    except (pipeline.InputError, SchemaError, FileNotFoundError) as exc:
        print(f"damvol: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (ValueError, ArithmeticError, RuntimeError) as exc:
        print(f"damvol: model failure: {exc}", file=sys.stderr)
        return EXIT_MODEL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
