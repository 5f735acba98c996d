"""Command-line front end: ``run``, ``analyze``, ``bench`` and ``validate-config``.

Exit codes: 0 success, 1 usage or configuration error, 2 runtime failure.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import diagnostics
from .bench import BENCH_COLUMNS, GENERATION_COLUMNS, run_bench
from .config import ConfigError, default_config, dump_config, evolution_config, load_config, make_env, seeds_of
from .core import RunLogError, runlog_read, runlog_write

logger = logging.getLogger("brns")

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def parse_seeds(text):
    """``"0-4"``, ``"1,3,9"`` or a mix like ``"0-2,7"``."""
    seeds = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        try:
            if "-" in part:
                lo, hi = (int(x) for x in part.split("-", 1))
                if hi < lo:
                    raise ValueError
                seeds.extend(range(lo, hi + 1))
            else:
                seeds.append(int(part))
        except ValueError:
            raise UsageError(f"bad seed spec {part!r}") from None
    if not seeds or any(s < 0 for s in seeds) or len(set(seeds)) != len(seeds):
        raise UsageError(f"seed list {text!r} must be non-empty, non-negative and distinct")
    return seeds


def _load(args):
    cfg = load_config(args.config) if args.config else default_config()
    if getattr(args, "seeds", None):
        cfg["seeds"] = parse_seeds(args.seeds)
        cfg["replicates"] = len(cfg["seeds"])
    if getattr(args, "out", None):
        cfg["output"] = args.out
    return cfg


def _summarize(diag):
    s = diag.summary()
    return {k: (None if isinstance(v, float) and not np.isfinite(v) else v) for k, v in s.items()}


def run_replicate(cfg, seed, outdir):
    """Run one replicate, write its log and return a status record."""
    name = f"{cfg['estimator']}_seed{seed}.jsonl"
    try:
        log = evolution_config(cfg).make_search(seed).fit(make_env(cfg)).runlog_
        runlog_write(log, Path(outdir) / name)
        record = {"seed": seed, "status": "ok", "runlog": name, "solutions": len(log.solutions)}
        if cfg["diagnostics"]["enabled"]:
            diag = diagnostics.analyze_log(log, tuple(cfg["diagnostics"]["grid"]), cfg["diagnostics"]["resolution"])
            record["metrics"] = _summarize(diag)
        return record
    except Exception as exc:  # reported per replicate; the others keep going
        logger.exception("replicate with seed %d failed", seed)
        return {"seed": seed, "status": "error", "error": f"{type(exc).__name__}: {exc}"}


def _aggregate(records):
    ok = [r for r in records if r["status"] == "ok" and "metrics" in r]
    agg = {}
    if ok:
        for key in ok[0]["metrics"]:
            vals = np.array([r["metrics"][key] for r in ok if r["metrics"][key] is not None], dtype=float)
            if vals.size:
                agg[key] = {"mean": float(vals.mean()), "std": float(vals.std())}
    return agg


def cmd_run(args):
    cfg = _load(args)
    outdir = Path(cfg["output"])
    outdir.mkdir(parents=True, exist_ok=True)
    seeds = seeds_of(cfg)
    jobs = max(1, args.jobs)
    if jobs == 1:
        records = [run_replicate(cfg, s, outdir) for s in seeds]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            records = list(pool.map(run_replicate, [cfg] * len(seeds), seeds, [outdir] * len(seeds)))
    (outdir / "config.yaml").write_text(dump_config(cfg))
    summary = {"estimator": cfg["estimator"], "replicates": records, "aggregate": _aggregate(records),
               "files": ["config.yaml"] + [r["runlog"] for r in records if r["status"] == "ok"]}
    (outdir / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True))
    failed = [r["seed"] for r in records if r["status"] != "ok"]
    print(f"{len(records) - len(failed)}/{len(records)} replicates written to {outdir}")
    if failed:
        print(f"failed seeds: {failed}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


def cmd_analyze(args):
    src = Path(args.runlog_dir)
    if not src.is_dir():
        raise UsageError(f"{src} is not a directory")
    out = Path(args.out) if args.out else src / "analysis"
    logs = sorted(p for p in src.glob("*.jsonl"))
    if not logs:
        print(f"no run logs found in {src}", file=sys.stderr)
        return EXIT_RUNTIME
    grid = tuple(args.grid)
    analyzed = 0
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "long.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(("generation", "metric", "value", "replicate"))
        for path in logs:
            try:
                log = runlog_read(path)
            except (RunLogError, OSError) as exc:
                logger.warning("skipping %s: %s", path.name, exc)
                continue
            diag = diagnostics.analyze_log(log, grid, args.resolution)
            diagnostics.write_csvs(diag, out / path.stem)
            writer.writerows(diagnostics.long_rows(diag, path.stem))
            analyzed += 1
    if not analyzed:
        print("every run log was skipped", file=sys.stderr)
        return EXIT_RUNTIME
    print(f"analyzed {analyzed}/{len(logs)} run logs into {out}")
    return EXIT_OK


def _write_rows(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def cmd_bench(args):
    cfg = _load(args)
    b = cfg["bench"]
    if args.quick:
        b = {**b, "archive_sizes": b["archive_sizes"][:2], "dims": b["dims"][:1], "trials": 3, "warmup": 1,
             "brns_generations": [1, 2]}
    out = Path(cfg["output"])
    out.mkdir(parents=True, exist_ok=True)
    rows, gen_rows = run_bench(b["archive_sizes"], b["dims"], b["population"], b["trials"], b["warmup"], b["k"],
                               b["brns_generations"], b["seed"], cfg["brns"])
    _write_rows(out / "bench.csv", BENCH_COLUMNS, rows)
    _write_rows(out / "bench_generations.csv", GENERATION_COLUMNS, gen_rows)
    print(f"wrote {out / 'bench.csv'} and {out / 'bench_generations.csv'}")
    return EXIT_OK


def cmd_validate(args):
    cfg = load_config(args.config) if args.config else default_config()
    print(dump_config(cfg), end="")
    return EXIT_OK


def build_parser():
    parser = _Parser(prog="brns", description="Archive-based and behavior-recognition novelty search.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("run", help="run replicates and write run logs plus summary.json")
    p.add_argument("--config", help="YAML experiment config (defaults if omitted)")
    p.add_argument("--out", help="output directory (overrides config)")
    p.add_argument("--seeds", help="seed list, e.g. 0-19 or 1,4,7 (overrides config)")
    p.add_argument("--jobs", type=int, default=1, help="parallel replicate workers")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("analyze", help="diagnostics CSVs for every run log in a directory")
    p.add_argument("runlog_dir")
    p.add_argument("--out", help="output directory (default: <runlog_dir>/analysis)")
    p.add_argument("--grid", type=int, nargs=2, default=[6, 6])
    p.add_argument("--resolution", type=int, default=10)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("bench", help="novelty-computation cost versus archive size and dimension")
    p.add_argument("--config")
    p.add_argument("--out")
    p.add_argument("--quick", action="store_true", help="tiny sweep for smoke testing")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("validate-config", help="check a config and print it with defaults filled in")
    p.add_argument("--config", required=True)
    p.set_defaults(func=cmd_validate)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:
        logger.debug("unhandled error", exc_info=True)
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
