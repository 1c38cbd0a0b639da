"""CSV reports and the flat key=value run summary."""
from __future__ import annotations

import csv
import hashlib
from pathlib import Path

import numpy as np

from .studies import Assertion, StudyResult

SUMMARY_NAME = "summary.txt"


def write_csv(path: Path, header: list[str], rows: list[list]) -> str:
    """Write rows with ``\\n`` line endings and return the file's sha256."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
    return file_sha256(path)


def file_sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _value(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, np.integer):
        return str(int(v))
    return str(v).replace("\n", " ")


def write_summary(path: Path, meta: dict, results: list[StudyResult], csv_hashes: dict[str, str],
                  errors: list[Assertion]) -> bool:
    """Write the summary; returns whether every assertion passed."""
    assertions = [a for r in results for a in r.assertions] + errors
    passed = all(a.passed for a in assertions)
    lines = ["# sdeflow run summary"]
    lines += [f"{k}={_value(v)}" for k, v in meta.items()]
    for a in assertions:
        lines.append(f"assert.{a.id}={'pass' if a.passed else 'fail'}")
        lines.append(f"assert.{a.id}.detail={_value(a.detail)}")
    for r in results:
        for k, v in r.values.items():
            lines.append(f"value.{k}={_value(v)}")
    for name, digest in csv_hashes.items():
        lines.append(f"csv.{name}={name}.csv")
        lines.append(f"csv.{name}.sha256={digest}")
    failed = [a.id for a in assertions if not a.passed]
    lines.append(f"failed={','.join(failed)}")
    lines.append(f"status={'pass' if passed else 'fail'}")
    Path(path).write_text("\n".join(lines) + "\n")
    return passed


def read_summary(path) -> dict[str, str]:
    out = {}
    for line in Path(path).read_text().splitlines():
        if not line or line.startswith("#") or "=" not in line:
            continue
        k, v = line.split("=", 1)
        out[k] = v
    return out
