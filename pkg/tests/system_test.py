from __future__ import annotations

import csv
import io
import json
import logging
import math
import os
import pathlib
import subprocess
from contextlib import _GeneratorContextManager
from typing import Callable

import numpy as np
import pytest

from latticeclt import __version__
from latticeclt.cli import _main
from latticeclt.cli import expand_config
from latticeclt.cli import make_logger
from latticeclt.cli import parse_test_function
from latticeclt.cli import set_logging_level
from latticeclt.counting import BallIndicator
from latticeclt.counting import BoxIndicator
from latticeclt.counting import RadialBump
from latticeclt.counting import discrepancy
from latticeclt.geometry import AngularRegion
from latticeclt.geometry import DimensionPartition
from latticeclt.geometry import DomainSpec
from latticeclt.geometry import Interval
from latticeclt.lattice import LatticeBasis
from latticeclt.lattice import write_lattice


E = repr(math.e)
E_SQUARED = repr(math.e**2)

VOLUME_ARGS = [
    "volume",
    "--partition",
    "1,1",
    "--interval",
    f"1,{E}",
    "--region",
    "+,+",
]

CLT_ARGS = [
    "clt",
    "--partition",
    "2,1",
    "--interval",
    "1,2",
    "--region",
    "hemisphere:e1,+1",
    "--T",
    repr(math.exp(2.5)),
    "--n",
    "12",
    "--seed",
    "42",
]


def _run(argv: list[str]) -> tuple[int, str, str]:
    stdout = io.StringIO()
    stderr = io.StringIO()
    logger = logging.Logger("latticeclt.system")
    logger.addHandler(logging.StreamHandler(stderr))

    status = _main(["latticeclt", *argv], stdout=stdout, logger=logger)

    return status, stdout.getvalue(), stderr.getvalue()


def _fields(output: str) -> dict[str, str]:
    return dict(line.split(" = ", 1) for line in output.splitlines())


def test_volume() -> None:
    status, output, _ = _run([*VOLUME_ARGS, "--T", E_SQUARED])

    fields = _fields(output)
    assert status == 0
    assert float(fields["volume"]) == pytest.approx(4 * math.e - 5, rel=1e-12)
    assert fields["coefficients"]
    assert float(fields["threshold"]) == pytest.approx(math.sqrt(math.e))


def test_volume_below_threshold() -> None:
    status, _, errors = _run([*VOLUME_ARGS, "--T", "1.2"])

    assert status == 1
    assert "must exceed" in errors


def test_variance() -> None:
    status, output, _ = _run(
        [
            "variance",
            "--partition",
            "2,1",
            "--interval",
            "1,8",
            "--region",
            "hemisphere:e1,+1",
            "--P",
            "200",
        ],
    )

    fields = _fields(output)
    assert status == 0
    assert float(fields["value"]) > 1
    assert float(fields["tail_bound"]) < 1e-4
    assert fields["truncation_order"] == "200"


def test_variance_rejects_planar_domains() -> None:
    status, _, errors = _run(
        ["variance", "--partition", "1,1", "--interval", "1,2"],
    )

    assert status == 1
    assert "d >= 3" in errors


def test_count(
    temporary_directory: Callable[..., _GeneratorContextManager[str]],
) -> None:
    with temporary_directory() as directory:
        lattice = pathlib.Path(directory) / "z2.txt"
        write_lattice(lattice, LatticeBasis(np.eye(2)))

        status, output, _ = _run(
            ["count", *VOLUME_ARGS[1:], "--T", E_SQUARED, "--lattice", str(lattice)],
        )

    fields = _fields(output)
    assert status == 0
    # (1, 2) and (2, 1)
    assert fields["count"] == "2"
    assert float(fields["discrepancy"]) == pytest.approx(2 - (4 * math.e - 5))


def test_count_linear_forms(
    temporary_directory: Callable[..., _GeneratorContextManager[str]],
) -> None:
    partition = DimensionPartition.parse("1,1")
    spec = DomainSpec(
        partition,
        Interval(1.5, 7.5),
        AngularRegion.full(partition),
        10.0,
    )
    expected = discrepancy(LatticeBasis(2 * np.eye(2)), spec).count

    with temporary_directory() as directory:
        lattice = pathlib.Path(directory) / "z2.txt"
        forms = pathlib.Path(directory) / "forms.txt"
        write_lattice(lattice, LatticeBasis(np.eye(2)))
        write_lattice(forms, LatticeBasis(2 * np.eye(2)))

        status, output, _ = _run(
            [
                "count",
                "--partition",
                "1,1",
                "--interval",
                "1.5,7.5",
                "--T",
                "10",
                "--lattice",
                str(lattice),
                "--forms",
                str(forms),
                "--method",
                "bruteforce",
            ],
        )

    assert status == 0
    assert _fields(output)["count"] == str(expected)


def test_count_refuses_huge_brute_force(
    temporary_directory: Callable[..., _GeneratorContextManager[str]],
) -> None:
    with temporary_directory() as directory:
        lattice = pathlib.Path(directory) / "z2.txt"
        write_lattice(lattice, LatticeBasis(np.eye(2)))

        status, _, errors = _run(
            [
                "count",
                *VOLUME_ARGS[1:],
                "--T",
                "1e5",
                "--lattice",
                str(lattice),
                "--method",
                "bruteforce",
            ],
        )

    assert status == 1
    assert "count_tiled" in errors


def test_count_with_missing_lattice_file() -> None:
    status, _, errors = _run(
        ["count", *VOLUME_ARGS[1:], "--T", "10", "--lattice", "nonexistent_file"],
    )

    assert status == 1
    assert "no such file" in errors.lower()


def test_tile_check() -> None:
    status, output, _ = _run(
        [
            "tile-check",
            "--partition",
            "1,2",
            "--interval",
            "1,2",
            "--T",
            E_SQUARED,
            "--n",
            "2000",
        ],
    )

    fields = _fields(output)
    assert status == 0
    assert fields["mismatches"] == "0"
    assert fields["passed"] == "True"


def test_siegel_check() -> None:
    argv = ["siegel-check", "--function", "ball:1", "--n", "200", "--seed", "3"]

    status, output, _ = _run([*argv, "--tolerance", "10"])
    strict_status, _, _ = _run([*argv, "--tolerance", "0"])

    fields = _fields(output)
    assert status == 0
    assert float(fields["integral"]) == pytest.approx(4 * math.pi / 3)
    assert fields["n"] == "200"
    assert strict_status == 2


def test_siegel_check_of_domain_needs_domain_flags() -> None:
    status, _, errors = _run(["siegel-check", "--function", "domain", "--n", "2"])

    assert status == 1
    assert "--partition" in errors


def test_rogers_check_rejects_planar_lattices() -> None:
    status, _, errors = _run(["rogers-check", "--dim", "2", "--n", "10"])

    assert status == 1
    assert "d >= 3" in errors


def test_clt_writes_outputs(
    temporary_directory: Callable[..., _GeneratorContextManager[str]],
) -> None:
    with temporary_directory() as directory:
        samples = os.path.join(directory, "samples.csv")
        summary = os.path.join(directory, "summary.json")
        histogram = os.path.join(directory, "histogram.dat")

        status, output, errors = _run(
            [
                *CLT_ARGS,
                "--csv",
                samples,
                "--summary",
                summary,
                "--histogram",
                histogram,
                "--bins",
                "5",
                "--check",
            ],
        )

        with open(samples, newline="") as f:
            rows = list(csv.DictReader(f))
        with open(summary) as f:
            payload = json.load(f)
        with open(histogram) as f:
            bins = [line for line in f if not line.startswith("#")]

    # exploratory runs never fail the check
    assert status == 0
    assert "exploratory" in errors
    assert [int(row["sample_index"]) for row in rows] == list(range(12))
    assert payload["version"] == __version__
    assert payload["config"]["seed"] == 42
    assert payload["config"]["command"] == "clt"
    assert payload["results"]["runs"][0]["n"] + payload["results"]["runs"][0][
        "nonfinite"
    ] == 12
    assert len(bins) == 5
    assert _fields(output)["exploratory"] == "True"


def test_clt_with_several_cutoffs(
    temporary_directory: Callable[..., _GeneratorContextManager[str]],
) -> None:
    with temporary_directory() as directory:
        samples = os.path.join(directory, "samples.csv")

        status, _, _ = _run(
            [*CLT_ARGS, "--T", "8", "12", "--n", "3", "--csv", samples],
        )

        assert status == 0
        assert sorted(os.listdir(directory)) == ["samples-0.csv", "samples-1.csv"]


@pytest.mark.parametrize("workers", ["2", "4"])
def test_clt_csv_does_not_depend_on_workers(
    temporary_directory: Callable[..., _GeneratorContextManager[str]],
    workers: str,
) -> None:
    with temporary_directory() as directory:
        serial = os.path.join(directory, "serial.csv")
        parallel = os.path.join(directory, "parallel.csv")

        _run([*CLT_ARGS, "--n", "6", "--csv", serial])
        _run([*CLT_ARGS, "--n", "6", "--csv", parallel, "--workers", workers])

        with open(serial, "rb") as f, open(parallel, "rb") as g:
            assert f.read() == g.read()


def test_alpha_check_in_the_plane() -> None:
    status, output, _ = _run(
        [
            "alpha-check",
            "--dim",
            "2",
            "--n",
            "200",
            "--power",
            "1",
            "--tolerance",
            "0.5",
        ],
    )

    fields = _fields(output)
    assert status == 0
    assert 1 / math.sqrt(2) <= float(fields["proxy_over_exact"]) <= 1
    worst = float(fields["worst_proxy_over_exact"])
    assert 1 / math.sqrt(2) - 1e-9 <= worst <= math.sqrt(2) + 1e-9
    assert 0.8 < float(fields["acceptance_rate"]) < 1
    assert abs(float(fields["shortest_vector_z"])) < 4


def test_config_file(
    temporary_file: Callable[..., _GeneratorContextManager[str]],
) -> None:
    contents = f"""\
# the positive quadrant
partition = 1,1
interval = 1,{E}
region = +,+
T = 100
"""
    with temporary_file(contents) as filename:
        status, output, _ = _run(
            ["volume", "--config", filename, "--T", E_SQUARED],
        )
        default_status, default_output, _ = _run(["volume", f"--config={filename}"])

    assert status == 0
    assert float(_fields(output)["volume"]) == pytest.approx(4 * math.e - 5)
    assert default_status == 0
    assert float(_fields(default_output)["volume"]) > 4 * math.e - 5


@pytest.mark.parametrize(
    "contents",
    (
        pytest.param("partition = 1,1\ncolour = blue\n", id="unknown key"),
        pytest.param("partition 1,1\n", id="no equals sign"),
    ),
)
def test_config_file_errors(
    temporary_file: Callable[..., _GeneratorContextManager[str]],
    contents: str,
) -> None:
    with temporary_file(contents) as filename:
        status, _, _ = _run([*VOLUME_ARGS, "--T", "10", "--config", filename])

    assert status == 1


def test_expand_config_places_file_flags_first(
    temporary_file: Callable[..., _GeneratorContextManager[str]],
) -> None:
    with temporary_file("T = 5\ncell_side = 0.5\n") as filename:
        argv = expand_config(["count", "--T", "7", "--config", filename])

    assert argv == ["count", "--T", "5", "--cell-side", "0.5", "--T", "7"]


@pytest.mark.parametrize(
    "argv",
    (
        pytest.param([], id="no command"),
        pytest.param(["volume", "--T", "5"], id="missing flags"),
        pytest.param([*VOLUME_ARGS, "--T", "5", "--colour", "blue"], id="unknown flag"),
        pytest.param(["siegel-check", "--function", "sphere:1"], id="bad function"),
        pytest.param(["clt", "--partition", "2,1", "--interval", "1,2"], id="no T"),
    ),
)
def test_rejected_input(argv: list[str]) -> None:
    status, _, _ = _run(argv)

    assert status == 1


@pytest.mark.parametrize(
    ("text", "expected"),
    (
        pytest.param("ball:1.5", BallIndicator(1.5), id="ball"),
        pytest.param("bump:2:3", RadialBump(2.0, 3), id="bump"),
        pytest.param("bump:2", RadialBump(2.0, 2), id="bump default"),
        pytest.param("cube:0.5", BoxIndicator((0.5, 0.5, 0.5)), id="cube"),
    ),
)
def test_parse_test_function(text: str, expected: object) -> None:
    assert parse_test_function(text, 3, lambda: None) == expected


def test_set_logging_level() -> None:
    logger = logging.getLogger("latticeclt.levels")

    set_logging_level(logger, 0)
    assert logger.level == logging.WARNING
    set_logging_level(logger, 1)
    assert logger.level == logging.INFO
    set_logging_level(logger, 5)
    assert logger.level == logging.DEBUG


def test_make_logger() -> None:
    stderr = io.StringIO()
    logger = make_logger(stderr)

    logger.error("reported")

    assert not logger.propagate
    assert "reported" in stderr.getvalue()


def test_version(latticeclt_command: list[str], root_dir: pathlib.Path) -> None:
    output = subprocess.check_output(
        [*latticeclt_command, "--version"],
        cwd=root_dir,
        encoding="utf-8",
    )

    assert output.strip() == f"latticeclt {__version__}"


def test_end_to_end(latticeclt_command: list[str], root_dir: pathlib.Path) -> None:
    process = subprocess.run(
        [*latticeclt_command, *VOLUME_ARGS, "--T", E_SQUARED],
        cwd=root_dir,
        capture_output=True,
        encoding="utf-8",
    )

    assert process.returncode == 0
    assert float(_fields(process.stdout)["volume"]) == pytest.approx(4 * math.e - 5)


def test_end_to_end_exit_status(
    latticeclt_command: list[str],
    root_dir: pathlib.Path,
) -> None:
    process = subprocess.run(
        [*latticeclt_command, "volume", "--partition", "1,0"],
        cwd=root_dir,
        capture_output=True,
        encoding="utf-8",
    )

    assert process.returncode == 1
    assert "usage" in process.stderr
