"""Suite artifacts: CSV tables, confusion matrices, and the manifest.

results.csv carries only deterministic fields, so rerunning a suite with
the same spec and seeds reproduces it byte for byte; wall-clock numbers
go to timings.csv, which is explicitly non-reproducible. summary.csv and
plot.csv aggregate with the sample standard deviation (n-1); groups with
a single run leave std empty.
"""

from __future__ import annotations

import csv
import io
import json
from pathlib import Path

from . import __version__
from .data import DEFAULT_PROFILE
from .errors import FormatError
from .evaluation import save_confusion_csv
from .experiments import ResultRow, SuiteResult, spec_hash, summarize
from .federation import write_round_log

RESULT_COLUMNS = ("run_id", "kind", "method", "n_conditions",
                  "condition_set", "seed", "client", "accuracy")


def results_csv_text(rows) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(RESULT_COLUMNS)
    for row in sorted(rows, key=ResultRow.sort_key):
        writer.writerow([
            row.run_id, row.kind, row.method, row.n_conditions,
            row.condition_set, row.seed, row.client, repr(row.accuracy),
        ])
    return buffer.getvalue()


def parse_results_csv(text: str) -> list[ResultRow]:
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise FormatError("results csv: empty file") from None
    if tuple(header) != RESULT_COLUMNS:
        raise FormatError(f"results csv: bad header {header}")
    rows = []
    for lineno, record in enumerate(reader, start=2):
        if not record:
            continue
        if len(record) != len(RESULT_COLUMNS):
            raise FormatError(f"results csv: line {lineno} has {len(record)} fields")
        try:
            rows.append(ResultRow(
                run_id=record[0], kind=record[1], method=record[2],
                n_conditions=int(record[3]), condition_set=record[4],
                seed=int(record[5]), client=record[6], accuracy=float(record[7]),
            ))
        except ValueError as err:
            raise FormatError(f"results csv: line {lineno}: {err}") from None
    return rows


def summary_csv_text(rows) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(["kind", "method", "group", "n", "mean_accuracy", "std_accuracy"])
    for kind, method, group, n, mean, std in summarize(rows):
        writer.writerow([
            kind, method, group, n, repr(mean), "" if std is None else repr(std),
        ])
    return buffer.getvalue()


def plot_csv_text(rows) -> str:
    """One (group, mean, std) line per summary group, ready for external
    bar-chart tooling."""
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(["group", "mean", "std"])
    for kind, method, group, _n, mean, std in summarize(rows):
        writer.writerow([
            f"{kind}|{method}|{group}", repr(mean), "" if std is None else repr(std),
        ])
    return buffer.getvalue()


def representative_confusions(result: SuiteResult) -> dict:
    """First (set, seed, client) run of each summary group."""
    chosen = {}
    for row in sorted(result.rows, key=ResultRow.sort_key):
        key = (row.method, row.n_conditions if row.kind == "tl" else row.client)
        if key not in chosen and (row.run_id, row.client) in result.confusions:
            chosen[key] = (row, result.confusions[(row.run_id, row.client)])
    return chosen


def write_report(result: SuiteResult, out_dir) -> dict:
    """Write every artifact under ``out_dir``; returns path map."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {}

    paths["results"] = out / "results.csv"
    paths["results"].write_text(results_csv_text(result.rows))
    paths["summary"] = out / "summary.csv"
    paths["summary"].write_text(summary_csv_text(result.rows))
    paths["plot"] = out / "plot.csv"
    paths["plot"].write_text(plot_csv_text(result.rows))

    confusion_dir = out / "confusion"
    confusion_dir.mkdir(exist_ok=True)
    for (method, group), (row, matrix) in representative_confusions(result).items():
        suffix = f"_client{row.client}" if row.client else ""
        path = confusion_dir / f"{row.run_id}{suffix}.csv"
        save_confusion_csv(matrix, path)
        paths[f"confusion:{method}:{group}"] = path

    if result.round_logs:
        rounds_dir = out / "rounds"
        rounds_dir.mkdir(exist_ok=True)
        for run_id, records in sorted(result.round_logs.items()):
            write_round_log(records, rounds_dir / f"{run_id}.csv")

    timings = out / "timings.csv"
    with open(timings, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["run_id", "seconds"])  # wall clock; not reproducible
        for run_id, seconds in sorted(result.timings.items()):
            writer.writerow([run_id, f"{seconds:.3f}"])
    paths["timings"] = timings

    manifest = {
        "kind": result.spec.kind,
        "spec_hash": spec_hash(result.spec),
        "seeds": list(result.spec.seeds),
        "methods": list(result.spec.methods),
        "n_runs": len({row.run_id for row in result.rows}),
        "profile_version": DEFAULT_PROFILE.version,
        "software_version": __version__,
    }
    paths["manifest"] = out / "manifest.json"
    with open(paths["manifest"], "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return paths
