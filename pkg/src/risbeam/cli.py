"""Command-line entry points for the experiment pipelines.

Subcommands: generate, train, eval, protocol, datafrac.  Each takes
--config <json file> plus --seed and --out overrides.  On failure a
single machine-readable JSON error line goes to stderr and the exit
code is nonzero.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys

from . import experiments, protocol


def _add_common(parser):
    parser.add_argument("--config", help="JSON experiment config file")
    parser.add_argument("--seed", type=int, help="override the config seed")
    parser.add_argument("--out", required=False, help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="risbeam",
        description="Standalone-RIS beam selection experiments")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="generate a dataset + manifest")
    _add_common(p)

    p = sub.add_parser("train", help="train one beam-set network per camera")
    _add_common(p)
    p.add_argument("--data", required=True, help="dataset directory")

    p = sub.add_parser("eval", help="set metrics and rate tables")
    _add_common(p)
    p.add_argument("--data", required=True, help="dataset directory")
    p.add_argument("--model", required=True,
                   help="model directory, or 'oracle' for the "
                        "perfect-prediction test hook")

    p = sub.add_parser("protocol", help="initial-access overhead runs")
    _add_common(p)
    p.add_argument("--data", help="dataset directory")
    p.add_argument("--model", help="model directory or 'oracle'")
    p.add_argument("--runs", type=int, default=100)
    p.add_argument("--trace-dir", help="write per-run event traces here")
    p.add_argument("--diff", nargs=2, metavar=("TRACE_A", "TRACE_B"),
                   help="compare two saved traces event by event and exit")

    p = sub.add_parser("datafrac", help="accuracy/recall vs training fraction")
    _add_common(p)
    p.add_argument("--data", required=True, help="dataset directory")
    p.add_argument("--fractions", default="0.1,0.2,0.4,0.6,0.8,1.0",
                   help="comma-separated training fractions in (0, 1]")

    return parser


def _load_config(args) -> experiments.ExperimentConfig:
    config = (experiments.load_config(args.config) if args.config
              else experiments.ExperimentConfig())
    if args.seed is not None:
        config = dataclasses.replace(config, seed=args.seed)
    return config


def _resolve_models(arg, manifest_cameras):
    if arg == experiments.ORACLE_MODEL:
        return experiments.ORACLE_MODEL
    return experiments.load_models(arg, manifest_cameras)


def _require_out(args):
    if not args.out:
        raise ValueError("--out directory is required for this command")
    return args.out


def run(args) -> int:
    if args.command == "generate":
        config = _load_config(args)
        manifest = experiments.generate_dataset(config, _require_out(args))
        counts = {cam: manifest["split"][cam]["n_records"]
                  for cam in manifest["cameras"]}
        print(json.dumps({"out": args.out, "records": counts,
                          "codebook_hash": manifest["codebook_hash"]}))
        return 0

    if args.command == "train":
        config = _load_config(args)
        out = experiments.train_models(config, args.data, _require_out(args))
        last = {cam: res["curves"].rows[-1][1] for cam, res in out.items()}
        print(json.dumps({"out": args.out, "final_train_bits": last}))
        return 0

    if args.command == "eval":
        config = _load_config(args)
        manifest, _, _, _ = experiments.load_dataset(args.data)
        models = _resolve_models(args.model, manifest["cameras"])
        tables = experiments.evaluate(config, args.data, models,
                                      out_dir=_require_out(args))
        summary = {row[0]: {"accuracy": row[2], "recall": row[3]}
                   for row in tables["metrics"].rows}
        print(json.dumps({"out": args.out, "metrics": summary}))
        return 0

    if args.command == "protocol":
        if args.diff:
            a = protocol.load_trace(args.diff[0])
            b = protocol.load_trace(args.diff[1])
            diffs = protocol.diff_traces(a, b)
            if not diffs:
                print(json.dumps({"identical": True,
                                  "events": len(a.events)}))
                return 0
            first = diffs[0]
            print(json.dumps({
                "identical": False, "n_diffs": len(diffs),
                "first_index": first[0],
                "left": None if first[1] is None else dataclasses.asdict(first[1]),
                "right": None if first[2] is None else dataclasses.asdict(first[2]),
            }))
            return 1
        if not args.data or not args.model:
            raise ValueError("protocol runs need --data and --model")
        config = _load_config(args)
        manifest, _, _, _ = experiments.load_dataset(args.data)
        models = _resolve_models(args.model, manifest["cameras"])
        result = experiments.run_protocol_experiments(
            config, args.data, models, args.runs,
            out_dir=_require_out(args), trace_dir=args.trace_dir)
        rows = {row[0]: {"mean_beams_tried": row[3],
                         "reduction_factor": row[5]}
                for row in result["summary"].rows}
        print(json.dumps({"out": args.out, "summary": rows}))
        return 0

    if args.command == "datafrac":
        config = _load_config(args)
        fractions = [float(f) for f in args.fractions.split(",") if f]
        table = experiments.run_datafrac(config, args.data, fractions,
                                         out_dir=_require_out(args))
        print(json.dumps({"out": args.out, "rows": len(table.rows)}))
        return 0

    raise ValueError(f"unknown command {args.command!r}")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return run(args)
    except Exception as exc:  # surface one machine-readable error line
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}),
              file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
