"""Command line entry point: ``swiftnorm synth|run|sweep|eval|chunked-run``."""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .evaluation import evaluate, read_labels, write_report_json
from .ingest import MalformedField
from .pipeline import RunConfig, run, sweep
from .preprocess import EmptyCorpus
from .synth import OPERATORS, ConfigInvalid, SynthConfig, generate, write_outputs

log = logging.getLogger("swiftnorm")

# flag -> RunConfig field, for flags that map one-to-one
_RUN_FLAGS = {
    "input": "inputs", "format": "format", "tags": "tags", "families": "families",
    "ngram_max": "ngram_max", "lsa_k": "lsa_k", "lsa_variance": "lsa_variance",
    "lsa_base": "lsa_base", "weights": "weights", "normalize_rows": "normalize_rows",
    "threshold": "threshold", "linkage": "linkage", "strict_gate": "strict_gate",
    "on_block": "on_block", "max_distance": "max_distance", "chunk": "chunk",
    "gold": "gold", "out": "out", "seed": "seed", "threads": "threads",
    "cache_dir": "cache_dir",
}


def _csv_list(text: str) -> list[str]:
    return [t.strip() for t in text.split(",") if t.strip()]


def _weights(text: str) -> dict[str, float]:
    out = {}
    for item in _csv_list(text):
        name, sep, value = item.partition("=")
        if not sep:
            raise argparse.ArgumentTypeError(f"weight {item!r} is not family=value")
        try:
            out[name.strip()] = float(value)
        except ValueError:
            raise argparse.ArgumentTypeError(f"weight {item!r} has a non-numeric value") from None
    return out


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    # defaults are None so a --config file is only overridden by flags actually given
    p.add_argument("--config", help="manifest.json or config JSON to start from")
    p.add_argument("--input", nargs="+", help="input file(s)")
    p.add_argument("--format", choices=("plain", "mt"))
    p.add_argument("--tags", type=_csv_list, help="MT tags to extract, comma separated")
    p.add_argument("--families", type=_csv_list,
                   help="comma separated subset of onehot,tfidf,lsa,similarity")
    p.add_argument("--ngram-max", type=int, choices=(1, 2))
    p.add_argument("--lsa-k", type=int, help="number of LSA components")
    p.add_argument("--lsa-variance", type=float, help="explained-variance target for LSA")
    p.add_argument("--lsa-base", choices=("tfidf", "onehot"))
    p.add_argument("--weights", type=_weights, help="per-family weights, e.g. similarity=1,lsa=0.5")
    p.add_argument("--normalize-rows", action="store_const", const=True,
                   help="L2-normalise TF-IDF rows")
    p.add_argument("--threshold", type=float, help="merge gate threshold (default 0.75)")
    p.add_argument("--linkage", choices=("average", "single", "complete", "centroid"))
    p.add_argument("--strict-gate", action="store_const", const=True,
                   help="require every member pair to pass the gate")
    p.add_argument("--on-block", choices=("skip", "stop"))
    p.add_argument("--max-distance", type=float)
    p.add_argument("--chunk", choices=("off", "first-letter"))
    p.add_argument("--gold", help="gold CSV (unique_line_text, gold_id)")
    p.add_argument("--out", help="output directory")
    p.add_argument("--seed", type=int)
    p.add_argument("--threads", type=int)
    p.add_argument("--cache-dir", help="directory for similarity/distance matrix caches")


def config_from_args(args: argparse.Namespace) -> RunConfig:
    data: dict = {}
    if args.config:
        path = Path(args.config)
        if not path.is_file():
            raise FileNotFoundError(f"config file not found: {path}")
        loaded = json.loads(path.read_text(encoding="utf-8"))
        data = dict(loaded.get("config", loaded))
    for flag, name in _RUN_FLAGS.items():
        value = getattr(args, flag, None)
        if value is not None:
            data[name] = value
    if args.lsa_k is not None and args.lsa_variance is None:
        data["lsa_variance"] = None
    cfg = RunConfig.from_dict(data)
    if not cfg.inputs:
        raise ValueError("no input given (--input or --config)")
    return cfg


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="swiftnorm",
        description="Normalise SWIFT counterparty strings into entity clusters.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic corpus with gold labels")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--n-entities", type=int, default=1000)
    p.add_argument("--typo-rate", type=float, default=0.05)
    p.add_argument("--operators", default="all",
                   help=f"'all', 'none' or a comma separated subset of {','.join(OPERATORS)}")
    p.add_argument("--no-shuffle", action="store_true", help="keep records grouped by entity")
    p.add_argument("--mt", action="store_true", help="also write an MT block-4 rendering")

    for name, text in (("run", "cluster one configuration"),
                       ("chunked-run", "cluster per first letter, then across chunks")):
        _add_run_flags(sub.add_parser(name, help=text))

    p = sub.add_parser("sweep", help="evaluate a grid of configurations")
    _add_run_flags(p)
    p.add_argument("--grid", required=True, help="grid JSON (axes: families, ngram_max, "
                   "lsa_k, lsa_variance, threshold)")
    p.add_argument("--reference-rows", action="store_true",
                   help="add one-cluster, singleton and first-two-token baseline rows")

    p = sub.add_parser("eval", help="score a label file against gold")
    p.add_argument("--gold", required=True)
    p.add_argument("--labels", required=True, help="clusters.csv or any unique_line_text CSV")
    p.add_argument("--out", help="write metrics JSON here")
    return parser


def _cmd_synth(args) -> int:
    if args.operators == "all":
        ops = OPERATORS
    elif args.operators == "none":
        ops = ()
    else:
        ops = tuple(_csv_list(args.operators))
    cfg = SynthConfig(seed=args.seed, n_entities=args.n_entities, typo_rate=args.typo_rate,
                      operators=ops, shuffle=not args.no_shuffle)
    result = generate(cfg)
    paths = write_outputs(result, args.out, mt=args.mt)
    print(f"{len(result.raw_values)} records, {len(result.gold)} unique lines, "
          f"{result.n_gold} gold clusters -> {paths['input'].parent}")
    return 0


def _cmd_run(args, chunked: bool) -> int:
    cfg = config_from_args(args)
    if chunked:
        cfg = dataclasses.replace(cfg, chunk="first-letter")
    result = run(cfg)
    line = f"{len(result.corpus)} canonical forms -> {result.assignment.n_clusters} clusters"
    if result.report is not None:
        r = result.report
        line += f"; AMI {r.ami:.4f} recall {r.recall_hm:.4f} precision {r.precision_hm:.4f}"
    print(line)
    return 0


def _cmd_sweep(args) -> int:
    cfg = config_from_args(args)
    grid_path = Path(args.grid)
    if not grid_path.is_file():
        raise FileNotFoundError(f"grid file not found: {grid_path}")
    grid = json.loads(grid_path.read_text(encoding="utf-8"))
    out = Path(cfg.out or ".")
    rows = sweep(cfg, grid, reference_rows=args.reference_rows, out_csv=out / "sweep.csv")
    failed = sum(1 for r in rows if r["error"])
    print(f"{len(rows)} sweep rows ({failed} failed) -> {out / 'sweep.csv'}")
    return 0


def _cmd_eval(args) -> int:
    for path in (args.gold, args.labels):
        if not Path(path).is_file():
            raise FileNotFoundError(f"label file not found: {path}")
    gold = read_labels(args.gold)
    machine = read_labels(args.labels)
    common = [t for t in machine if t in gold]
    if not common:
        raise ValueError("the two label files share no unique_line_text")
    report = evaluate([gold[t] for t in common], [machine[t] for t in common],
                      {"n_lines_evaluated": len(common)})
    if args.out:
        write_report_json(args.out, report)
    print(json.dumps({"ami": report.ami, "recall": report.recall_hm,
                      "precision": report.precision_hm,
                      "n_clusters": report.n_clusters_machine,
                      "n_clusters_gold": report.n_clusters_gold}, sort_keys=True))
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "synth":
            return _cmd_synth(args)
        if args.command in ("run", "chunked-run"):
            return _cmd_run(args, args.command == "chunked-run")
        if args.command == "sweep":
            return _cmd_sweep(args)
        return _cmd_eval(args)
    except FileNotFoundError as exc:
        print(f"swiftnorm: error: {exc}", file=sys.stderr)
        return 2
    except EmptyCorpus as exc:
        print(f"swiftnorm: error: {exc}", file=sys.stderr)
        return 1
    except (ValueError, ConfigInvalid, MalformedField) as exc:
        print(f"swiftnorm: error: {exc}", file=sys.stderr)
        return 2

if __name__ == "__main__":
    sys.exit(main())
