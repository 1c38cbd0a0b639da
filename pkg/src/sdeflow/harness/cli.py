"""Command-line entry point ``sdeflow``.

Exit codes: 0 when every assertion passes, 1 on a failed assertion or a
numerical error, 2 on configuration errors.
"""
from __future__ import annotations

import argparse
import sys
import tempfile
from pathlib import Path

import numpy as np

from ..errors import ConfigError, SdeflowError
from ..montecarlo import resolve_workers
from ..paths import Partition, sample_path
from .config import load_config
from .report import SUMMARY_NAME, file_sha256, read_summary, write_csv, write_summary
from .studies import STUDIES, Assertion, Context, selected

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2


def run_config(config_path, out_dir=None, workers=None, quiet: bool = False) -> int:
    try:
        cfg = load_config(config_path)
        ctx = Context(cfg, resolve_workers(workers))
        names = selected(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = Path(out_dir if out_dir is not None else cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    results, hashes, errors = [], {}, []
    for name in names:
        try:
            res = STUDIES[name](ctx)
        except ConfigError as exc:
            print(f"config error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        except SdeflowError as exc:
            errors.append(Assertion(f"{name}.error", False, f"{type(exc).__name__}: {exc}"))
            continue
        results.append(res)
        hashes[name] = write_csv(out / f"{name}.csv", res.header, res.rows)
    meta = {"config_path": str(Path(config_path).resolve()), "config_hash": ctx.hash,
            "master_seed": ctx.seed, "experiment": cfg.experiment, "studies": ",".join(names)}
    passed = write_summary(out / SUMMARY_NAME, meta, results, hashes, errors)
    if not quiet:
        for a in [a for r in results for a in r.assertions] + errors:
            print(f"{'PASS' if a.passed else 'FAIL'} {a.id}: {a.detail}")
        print(f"summary written to {out / SUMMARY_NAME}")
    if not passed:
        failed = [a.id for r in results for a in r.assertions if not a.passed] + [e.id for e in errors]
        print(f"failed assertions: {', '.join(failed)}", file=sys.stderr)
        return EXIT_FAIL
    return EXIT_OK


def _dump_path(args) -> int:
    path = sample_path(args.seed, Partition.dyadic(args.level), args.dim)
    if args.format == "bin":
        data = path.to_bytes()
        if args.out:
            Path(args.out).write_bytes(data)
        else:
            sys.stdout.buffer.write(data)
        return EXIT_OK
    lines = ["t," + ",".join(f"B_{i + 1}" for i in range(args.dim))]
    for t, v in zip(path.grid.times, path.values):
        lines.append(",".join(repr(float(x)) for x in np.concatenate([[t], v])))
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def _replay(args) -> int:
    summary = read_summary(args.summary)
    try:
        cfg = load_config(summary["config_path"])
    except KeyError:
        print("summary has no config_path", file=sys.stderr)
        return EXIT_CONFIG
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if cfg.config_hash() != summary.get("config_hash"):
        print("config changed since the summary was written (hash mismatch)", file=sys.stderr)
        return EXIT_FAIL
    with tempfile.TemporaryDirectory() as tmp:
        out = Path(args.out) if args.out else Path(tmp)
        code = run_config(summary["config_path"], out, args.workers, quiet=True)
        if code == EXIT_CONFIG:
            return code
        mismatched = []
        for key, digest in summary.items():
            if key.startswith("csv.") and key.endswith(".sha256"):
                name = key[4:-7]
                f = out / f"{name}.csv"
                if not f.exists() or file_sha256(f) != digest:
                    mismatched.append(name)
    if mismatched:
        print(f"replay differs for: {', '.join(mismatched)}", file=sys.stderr)
        return EXIT_FAIL
    print("replay reproduced every report byte for byte")
    return EXIT_OK


def _report(args) -> int:
    d = Path(args.dir)
    f = d / SUMMARY_NAME if d.is_dir() else d
    if not f.exists():
        print(f"no summary at {f}", file=sys.stderr)
        return EXIT_CONFIG
    s = read_summary(f)
    print(f"experiment {s.get('experiment')}  seed {s.get('master_seed')}  config {s.get('config_hash', '')[:12]}")
    for k, v in s.items():
        if k.startswith("assert.") and not k.endswith(".detail"):
            print(f"  {v.upper():4} {k[7:]}: {s.get(k + '.detail', '')}")
    for k, v in s.items():
        if k.startswith("value."):
            print(f"  {k[6:]} = {v}")
    print(f"status: {s.get('status')}")
    return EXIT_OK if s.get("status") == "pass" else EXIT_FAIL


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="sdeflow", description="Reflected SDE experiments")
    sub = ap.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run the experiment(s) of a config file")
    r.add_argument("config")
    r.add_argument("--out", default=None, help="output directory (default: [experiment] output_dir)")
    r.add_argument("--workers", type=int, default=1, help="worker processes (SDEFLOW_WORKERS overrides)")
    d = sub.add_parser("dump-path", help="write a canonical Brownian path on a dyadic grid")
    d.add_argument("--seed", type=int, required=True)
    d.add_argument("--level", type=int, required=True)
    d.add_argument("--dim", type=int, default=1)
    d.add_argument("--format", choices=("csv", "bin"), default="csv")
    d.add_argument("--out", default=None)
    p = sub.add_parser("replay", help="re-run the config of a summary and compare reports")
    p.add_argument("summary")
    p.add_argument("--out", default=None)
    p.add_argument("--workers", type=int, default=1)
    q = sub.add_parser("report", help="print a run summary")
    q.add_argument("dir")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "run":
        return run_config(args.config, args.out, args.workers)
    if args.command == "dump-path":
        return _dump_path(args)
    if args.command == "replay":
        return _replay(args)
    return _report(args)


if __name__ == "__main__":
    sys.exit(main())
