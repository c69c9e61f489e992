"""CSV, JSON and histogram files written by the experiment commands."""
from __future__ import annotations

import csv
import dataclasses
import inspect
import json
import logging
import math
import pathlib
from typing import Any
from typing import Mapping
from typing import Sequence

import numpy as np

from latticeclt import __version__
from latticeclt.experiments import SampleRow
from latticeclt.statistics import StatisticsError
from latticeclt.statistics import normal_pdf


CSV_COLUMNS = (
    "sample_index",
    "raw_count",
    "volume",
    "discrepancy",
    "normalized",
    "boundary_flags",
    "alpha_proxy",
)


def format_number(value: Any) -> str:
    """Integers as integers, floats as their shortest round trip repr."""
    if isinstance(value, (int, np.integer)) and not isinstance(value, bool):
        return str(int(value))
    return repr(float(value))


def write_samples_csv(
    path: str | pathlib.Path,
    rows: Sequence[SampleRow],
    *,
    logger: logging.Logger,
) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for row in rows:
            writer.writerow(
                [format_number(getattr(row, column)) for column in CSV_COLUMNS],
            )
    logger.info("wrote %d samples to %s", len(rows), path)


def _jsonable(value: Any) -> Any:
    if isinstance(value, Mapping):
        return {str(key): _jsonable(item) for key, item in value.items()}
    elif isinstance(value, (list, tuple, np.ndarray)):
        return [_jsonable(item) for item in value]
    elif isinstance(value, (bool, np.bool_)):
        return bool(value)
    elif isinstance(value, (int, np.integer)):
        return int(value)
    elif isinstance(value, (float, np.floating)):
        value = float(value)
        # JSON has no nan or infinity
        return value if math.isfinite(value) else None
    elif value is None or isinstance(value, str):
        return value
    return str(value)


def report_fields(report: Any) -> dict[str, Any]:
    """Return the fields and public properties of a report dataclass."""
    fields = {
        field.name: getattr(report, field.name)
        for field in dataclasses.fields(report)
    }
    for name, member in inspect.getmembers(type(report)):
        if isinstance(member, property) and not name.startswith("_"):
            fields[name] = getattr(report, name)
    for name, value in fields.items():
        if dataclasses.is_dataclass(value) and not isinstance(value, type):
            fields[name] = report_fields(value)
    return fields


def summary_text(
    config: Mapping[str, Any],
    results: Mapping[str, Any],
) -> str:
    payload = {"version": __version__, "config": config, "results": results}
    return json.dumps(_jsonable(payload), indent=2, sort_keys=True, allow_nan=False)


def write_summary_json(
    path: str | pathlib.Path,
    config: Mapping[str, Any],
    results: Mapping[str, Any],
    *,
    logger: logging.Logger,
) -> None:
    """Write the resolved configuration and the results as sorted JSON."""
    text = summary_text(config, results)
    with open(path, "w") as f:
        f.write(text + "\n")
    logger.info("wrote summary to %s", path)


def emit_histogram(
    samples: np.ndarray,
    bins: int,
    path: str | pathlib.Path,
    sigma2: float = 1.0,
    *,
    logger: logging.Logger,
) -> None:
    """Write bin centers, densities and the normal density as text columns.

    Non-finite samples are dropped. The file is gnuplot readable.
    """
    values = np.asarray(samples, dtype=float)
    values = values[np.isfinite(values)]
    if not len(values):
        raise StatisticsError("cannot bin an empty sample")
    if bins < 1:
        raise StatisticsError(f"need at least one bin, got {bins}")

    density, edges = np.histogram(values, bins=bins, density=True)
    centers = (edges[:-1] + edges[1:]) / 2
    reference = normal_pdf(centers, sigma2)

    lines = ["# bin_center density normal_pdf"]
    lines.extend(
        " ".join(format_number(x) for x in line)
        for line in zip(centers, density, reference)
    )
    with open(path, "w") as f:
        f.write("\n".join(lines) + "\n")
    logger.info("wrote %d histogram bins to %s", bins, path)
