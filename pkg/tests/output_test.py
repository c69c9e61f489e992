from __future__ import annotations

import json
import logging
import math
import os
from contextlib import _GeneratorContextManager
from typing import Callable

import numpy as np
import pytest

from latticeclt import __version__
from latticeclt.experiments import RogersReport
from latticeclt.experiments import SampleRow
from latticeclt.experiments import SiegelReport
from latticeclt.geometry import VarianceResult
from latticeclt.output import CSV_COLUMNS
from latticeclt.output import emit_histogram
from latticeclt.output import format_number
from latticeclt.output import report_fields
from latticeclt.output import summary_text
from latticeclt.output import write_samples_csv
from latticeclt.output import write_summary_json
from latticeclt.statistics import StatisticsError
from latticeclt.statistics import normal_pdf


ROWS = (
    SampleRow(0, 3, 2.5, 0.5, 0.25, 0, 1.25),
    SampleRow(1, 1, 2.5, -1.5, -0.75, 1, 0.1 + 0.2),
)


@pytest.mark.parametrize(
    ("value", "expected"),
    (
        pytest.param(3, "3", id="int"),
        pytest.param(np.int64(-7), "-7", id="numpy int"),
        pytest.param(0.1 + 0.2, "0.30000000000000004", id="float"),
        pytest.param(np.float64(2.5), "2.5", id="numpy float"),
        pytest.param(math.nan, "nan", id="nan"),
    ),
)
def test_format_number(value: object, expected: str) -> None:
    assert format_number(value) == expected


def test_write_samples_csv(
    temporary_directory: Callable[..., _GeneratorContextManager[str]],
    logger: logging.Logger,
) -> None:
    with temporary_directory() as directory:
        path = os.path.join(directory, "samples.csv")

        write_samples_csv(path, ROWS, logger=logger)

        with open(path, "rb") as f:
            lines = f.read().split(b"\n")

    assert lines[0].decode() == ",".join(CSV_COLUMNS)
    assert lines[1] == b"0,3,2.5,0.5,0.25,0,1.25"
    assert lines[2] == b"1,1,2.5,-1.5,-0.75,1,0.30000000000000004"
    assert lines[3] == b""
    assert len(lines) == 4


def test_csv_is_reproducible(
    temporary_directory: Callable[..., _GeneratorContextManager[str]],
    logger: logging.Logger,
) -> None:
    with temporary_directory() as directory:
        first = os.path.join(directory, "first.csv")
        second = os.path.join(directory, "second.csv")

        write_samples_csv(first, ROWS, logger=logger)
        write_samples_csv(second, list(ROWS), logger=logger)

        with open(first, "rb") as f, open(second, "rb") as g:
            assert f.read() == g.read()


def test_summary_json(
    temporary_directory: Callable[..., _GeneratorContextManager[str]],
    logger: logging.Logger,
) -> None:
    config = {"seed": 42, "partition": "5,4", "T": [22026.0]}
    results = {"variance": np.float64(0.98), "cum4_se": math.nan, "n": np.int64(2)}

    with temporary_directory() as directory:
        path = os.path.join(directory, "summary.json")
        write_summary_json(path, config, results, logger=logger)
        with open(path) as f:
            text = f.read()

    payload = json.loads(text)
    assert payload["version"] == __version__
    assert payload["config"] == config
    assert payload["results"] == {"variance": 0.98, "cum4_se": None, "n": 2}
    assert text.index('"config"') < text.index('"results"') < text.index('"version"')
    assert text.endswith("}\n")


def test_summary_text_is_sorted() -> None:
    text = summary_text({"b": 1, "a": 2}, {})

    assert text.index('"a"') < text.index('"b"')


def test_report_fields() -> None:
    report = SiegelReport(n=10, mean=4.0, standard_error=0.5, integral=4.5)

    fields = report_fields(report)

    assert fields["n"] == 10
    assert fields["gap"] == -0.5
    assert fields["z_score"] == -1.0
    assert "passed" not in fields


def test_report_fields_nested() -> None:
    report = RogersReport(
        n=10,
        mean=4.0,
        variance=12.0,
        second_moment=28.0,
        formula=VarianceResult(10.0, 100, 0.1),
        l2_bound=100.0,
    )

    fields = report_fields(report)

    assert fields["formula"] == {
        "value": 10.0,
        "truncation_order": 100,
        "tail_bound": 0.1,
    }
    assert fields["relative_gap"] == pytest.approx(0.2)
    assert fields["within_l2_bound"] is True


def _read_histogram(path: str) -> np.ndarray:
    with open(path) as f:
        header = f.readline()
        assert header.startswith("#")
        return np.array([[float(x) for x in line.split()] for line in f])


def test_histogram_of_constant_samples(
    temporary_directory: Callable[..., _GeneratorContextManager[str]],
    logger: logging.Logger,
) -> None:
    with temporary_directory() as directory:
        path = os.path.join(directory, "histogram.dat")
        emit_histogram(np.full(50, 0.5), 10, path, logger=logger)
        table = _read_histogram(path)

    occupied = table[table[:, 1] > 0]
    width = table[1, 0] - table[0, 0]
    assert table.shape == (10, 3)
    assert len(occupied) == 1
    assert occupied[0, 1] == pytest.approx(1 / width)


def test_histogram_of_normal_draws(
    temporary_directory: Callable[..., _GeneratorContextManager[str]],
    logger: logging.Logger,
) -> None:
    samples = np.random.default_rng(0).normal(scale=math.sqrt(2), size=100_000)

    with temporary_directory() as directory:
        path = os.path.join(directory, "histogram.dat")
        emit_histogram(samples, 40, path, sigma2=2.0, logger=logger)
        table = _read_histogram(path)

    np.testing.assert_allclose(table[:, 2], normal_pdf(table[:, 0], 2.0))
    assert np.max(np.abs(table[:, 1] - table[:, 2])) < 0.05


@pytest.mark.parametrize(
    ("samples", "bins"),
    (
        pytest.param(np.array([]), 10, id="empty"),
        pytest.param(np.array([math.nan, math.inf]), 10, id="nonfinite"),
        pytest.param(np.array([1.0]), 0, id="no bins"),
    ),
)
def test_histogram_validation(
    temporary_directory: Callable[..., _GeneratorContextManager[str]],
    logger: logging.Logger,
    samples: np.ndarray,
    bins: int,
) -> None:
    with temporary_directory() as directory:
        path = os.path.join(directory, "histogram.dat")
        with pytest.raises(StatisticsError):
            emit_histogram(samples, bins, path, logger=logger)
        assert not os.path.exists(path)


def test_histogram_reports_path(
    temporary_directory: Callable[..., _GeneratorContextManager[str]],
    logger: logging.Logger,
) -> None:
    with temporary_directory() as directory:
        path = os.path.join(directory, "missing", "histogram.dat")
        with pytest.raises(OSError, match="histogram.dat"):
            emit_histogram(np.array([0.0, 1.0]), 2, path, logger=logger)
