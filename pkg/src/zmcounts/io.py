"""File formats: count CSVs, filtered/residual/diagnostic tables, metadata.

Floats are written with 17 significant digits so outputs round-trip exactly
and golden files stay byte-stable.
"""

from __future__ import annotations

import csv
import hashlib
import json
from pathlib import Path

import numpy as np

from .errors import InvalidSpecError

FLOAT_FMT = "%.17g"


def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return FLOAT_FMT % float(x)


def read_counts_csv(path, column=None) -> np.ndarray:
    """Read one integer count column from a CSV with or without a header.

    ``column`` selects by header name or zero-based index; the default is a
    column named ``y`` when a header is present, else the last column.
    """
    path = Path(path)
    with path.open(newline="") as fh:
        rows = [row for row in csv.reader(fh) if row and any(cell.strip() for cell in row)]
    if not rows:
        raise InvalidSpecError(f"no data in {path}")
    header = None
    first = rows[0]
    try:
        [float(cell) for cell in first]
    except ValueError:
        header = [cell.strip() for cell in first]
        rows = rows[1:]
    if not rows:
        raise InvalidSpecError(f"no data rows in {path}")
    if column is None:
        if header and "y" in header:
            idx = header.index("y")
        else:
            idx = len(rows[0]) - 1
    elif isinstance(column, int) or (isinstance(column, str) and column.lstrip("-").isdigit()):
        idx = int(column)
    else:
        if header is None or column not in header:
            raise InvalidSpecError(f"column {column!r} not found in {path}")
        idx = header.index(column)
    try:
        values = [float(row[idx]) for row in rows]
    except (IndexError, ValueError) as err:
        raise InvalidSpecError(f"cannot parse counts from {path}: {err}") from err
    arr = np.asarray(values)
    if np.any(arr < 0) or np.any(arr != np.round(arr)):
        raise InvalidSpecError(f"column {idx} of {path} is not a non-negative integer series")
    return arr.astype(np.int64)


def write_counts_csv(path, counts, intensities=None) -> None:
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        if intensities is None:
            writer.writerow(["t", "y"])
            for t, y in enumerate(counts):
                writer.writerow([t, int(y)])
        else:
            writer.writerow(["t", "y", "lambda"])
            for t, (y, lam) in enumerate(zip(counts, intensities)):
                writer.writerow([t, int(y), _fmt(lam)])


def write_filtered_csv(path, counts, result) -> None:
    """Columns: t, y, lambda_filtered, error_var, innovation."""
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "y", "lambda_filtered", "error_var", "innovation"])
        for t in range(len(result)):
            writer.writerow(
                [
                    t,
                    int(counts[t]),
                    _fmt(result.lambda_filtered[t]),
                    _fmt(result.error_var[t]),
                    _fmt(result.innovation[t]),
                ]
            )


def write_residuals_csv(path, residuals) -> None:
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "pearson_residual"])
        for t, r in enumerate(residuals):
            writer.writerow([t, _fmt(r)])


def write_acf_pacf_csv(path, acf, pacf) -> None:
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["lag", "acf", "pacf"])
        for k in range(len(acf)):
            writer.writerow([k, _fmt(acf[k]), _fmt(pacf[k])])


def write_probtable_csv(path, table) -> None:
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["k", "fitted", "empirical"])
        for k, f, e in zip(table.support, table.fitted, table.empirical):
            writer.writerow([int(k), _fmt(f), _fmt(e)])
        writer.writerow(["tail", _fmt(table.fitted_tail), _fmt(0.0)])


def write_experiment_csv(path, results) -> None:
    """Rows mirror the simulation-table layout: true values, mean estimates,
    per-parameter MSEs and replicate accounting."""
    keys = ("rho", "omega", "beta", "p", "a")
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        header = (
            ["family", "intensity", "n", "replicates"]
            + [f"true_{k}" for k in keys]
            + [f"mean_{k}" for k in keys]
            + [f"mse_{k}" for k in keys]
            + ["completed", "discarded"]
        )
        writer.writerow(header)
        for res in results:
            row = res.row
            truth = row.true_values()
            writer.writerow(
                [row.family, row.intensity_family, row.n, row.replicates]
                + [_fmt(truth[k]) for k in keys]
                + [_fmt(res.mean[k]) for k in keys]
                + [_fmt(res.mse[k]) for k in keys]
                + [res.completed, res.discarded]
            )


def config_hash(config: dict) -> str:
    blob = json.dumps(config, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()


def write_metadata(path, command: str, config: dict, seed) -> None:
    from . import __version__

    meta = {
        "command": command,
        "seed": seed,
        "config_sha256": config_hash(config),
        "version": __version__,
    }
    Path(path).write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")


def write_fit_json(path, fit_result, se=None) -> None:
    doc = fit_result.to_dict()
    if se is not None:
        doc["se"] = se
    Path(path).write_text(json.dumps(doc, indent=2) + "\n")


def read_fit_json(path) -> dict:
    return json.loads(Path(path).read_text())
