"""Lattice point counts, their limit law and the moment identities behind it."""
from __future__ import annotations

import argparse
import logging
import pathlib
import shlex
import signal
import sys
from typing import Any
from typing import Callable
from typing import IO
from typing import Mapping
from typing import NoReturn
from typing import Sequence

import numpy as np

from latticeclt import __version__
from latticeclt.counting import BallIndicator
from latticeclt.counting import BoxIndicator
from latticeclt.counting import DomainIndicator
from latticeclt.counting import RadialBump
from latticeclt.counting import TestFunctionSpec
from latticeclt.counting import count_linear_forms
from latticeclt.counting import discrepancy
from latticeclt.experiments import ALPHA_TOLERANCE
from latticeclt.experiments import DEFAULT_PRIME
from latticeclt.experiments import ROGERS_TOLERANCE
from latticeclt.experiments import SIEGEL_Z_TOLERANCE
from latticeclt.experiments import SamplerConfig
from latticeclt.experiments import alpha_d2_check
from latticeclt.experiments import alpha_moment_check
from latticeclt.experiments import clt_experiment
from latticeclt.experiments import rogers_check
from latticeclt.experiments import sampler_calibration
from latticeclt.experiments import siegel_mvt_check
from latticeclt.geometry import AngularRegion
from latticeclt.geometry import DimensionPartition
from latticeclt.geometry import DomainSpec
from latticeclt.geometry import Interval
from latticeclt.geometry import domain_volume
from latticeclt.geometry import variance_series
from latticeclt.geometry import volume_polynomial
from latticeclt.lattice import read_lattice
from latticeclt.output import emit_histogram
from latticeclt.output import format_number
from latticeclt.output import report_fields
from latticeclt.output import write_samples_csv
from latticeclt.output import write_summary_json
from latticeclt.tiling import tiling_check


EXIT_OK = 0
EXIT_ERROR = 1
EXIT_CHECK_FAILED = 2
EXIT_INTERRUPTED = 130

SUBCOMMANDS = (
    "volume",
    "variance",
    "count",
    "tile-check",
    "siegel-check",
    "rogers-check",
    "clt",
    "alpha-check",
)


class ConfigError(ValueError):
    ...


class _ArgumentParser(argparse.ArgumentParser):
    """Reports usage errors with exit status 1."""

    def error(self, message: str) -> NoReturn:
        self.print_usage(sys.stderr)
        self.exit(EXIT_ERROR, f"{self.prog}: error: {message}\n")


def _main(
    argv: Sequence[str],
    stdout: IO[str],
    logger: logging.Logger,
) -> int:
    """
    Returns exit status.

    0 means success, 1 a rejected input and 2 a violated tolerance.
    """
    parser = _build_parser()
    try:
        args = parser.parse_args(expand_config(list(argv[1:])))
    except OSError as exception:
        logger.error(str(exception))
        return EXIT_ERROR
    except ConfigError as exception:
        logger.error(str(exception))
        return EXIT_ERROR
    except SystemExit as exception:
        return exception.code if isinstance(exception.code, int) else EXIT_ERROR

    set_logging_level(logger, args.verbosity)
    config = resolved_config(args)
    logger.debug("resolved configuration: %s", config)

    try:
        return args.handler(args, config, stdout, logger)
    except (ValueError, OSError) as exception:
        logger.error(str(exception))
        return EXIT_ERROR


def _build_parser() -> argparse.ArgumentParser:
    parser = _ArgumentParser(description=__doc__, prog="latticeclt")
    parser.add_argument(
        "--version",
        action="version",
        version="%(prog)s " + __version__,
    )

    common = _ArgumentParser(add_help=False)
    common.add_argument(
        "--config",
        metavar="FILE",
        help="read `key = value` lines as flags; explicit flags win",
    )
    common.add_argument(
        "-v",
        "--verbose",
        action="count",
        dest="verbosity",
        default=0,
        help="print more verbose logs (you can repeat `-v` to make it more verbose)",
    )
    common.add_argument(
        "--summary",
        metavar="PATH",
        help="write the configuration and results as JSON to PATH",
    )

    domain = _ArgumentParser(add_help=False)
    domain.add_argument(
        "--partition",
        required=True,
        help="comma separated block sizes d_1,...,d_k",
    )
    domain.add_argument("--interval", required=True, help="lo,hi with 0 < lo < hi")
    domain.add_argument(
        "--region",
        default=None,
        help="comma separated factors: full, +1, -1, ±1, hemisphere:eK, "
        "cap:eK:THETA (default: full on every block)",
    )

    optional_domain = _ArgumentParser(add_help=False)
    optional_domain.add_argument(
        "--partition",
        help="block sizes, for --function domain",
    )
    optional_domain.add_argument("--interval", help="lo,hi, for --function domain")
    optional_domain.add_argument("--region", default=None, help="angular region")
    optional_domain.add_argument(
        "--T",
        type=float,
        help="cutoff, for --function domain",
    )

    sampling = _ArgumentParser(add_help=False)
    sampling.add_argument(
        "--n",
        type=int,
        default=10_000,
        help="number of random lattices (default: %(default)s)",
    )
    sampling.add_argument(
        "--p",
        type=int,
        default=DEFAULT_PRIME,
        help="Hecke prime (default: %(default)s)",
    )
    sampling.add_argument(
        "--seed",
        type=int,
        default=0,
        help="master seed (default: %(default)s)",
    )
    sampling.add_argument(
        "--workers",
        type=int,
        default=1,
        help="worker processes; results do not depend on it (default: %(default)s)",
    )

    subparsers = parser.add_subparsers(dest="command", metavar="COMMAND")
    subparsers.required = True

    volume = subparsers.add_parser(
        "volume",
        parents=[common, domain],
        help="volume of the domain and its polynomial in log T",
    )
    volume.add_argument("--T", type=float, required=True, help="cutoff T")
    volume.set_defaults(handler=_volume)

    variance = subparsers.add_parser(
        "variance",
        parents=[common, domain],
        help="limiting variance of the normalised discrepancy",
    )
    variance.add_argument(
        "--P",
        type=int,
        default=200,
        help="series truncation order (default: %(default)s)",
    )
    variance.set_defaults(handler=_variance)

    count = subparsers.add_parser(
        "count",
        parents=[common, domain],
        help="count the points of a lattice in the domain",
    )
    count.add_argument("--T", type=float, required=True, help="cutoff T")
    count.add_argument(
        "--lattice",
        required=True,
        metavar="FILE",
        help="lattice file: d, then d rows of d numbers",
    )
    count.add_argument(
        "--forms",
        metavar="FILE",
        help="count the z with L z in the domain, L read like a lattice file",
    )
    _add_counting_options(count)
    count.set_defaults(handler=_count)

    tile_check = subparsers.add_parser(
        "tile-check",
        parents=[common, domain],
        help="check the tiling identity at random points",
    )
    tile_check.add_argument("--T", type=float, required=True, help="cutoff T")
    tile_check.add_argument(
        "--n",
        type=int,
        default=100_000,
        help="number of points (default: %(default)s)",
    )
    tile_check.add_argument(
        "--seed",
        type=int,
        default=0,
        help="seed (default: %(default)s)",
    )
    tile_check.set_defaults(handler=_tile_check)

    siegel_check = subparsers.add_parser(
        "siegel-check",
        parents=[common, optional_domain, sampling],
        help="mean of a Siegel transform against the integral",
    )
    _add_function_options(siegel_check)
    siegel_check.add_argument(
        "--tolerance",
        type=float,
        default=SIEGEL_Z_TOLERANCE,
        help="largest accepted |z-score| (default: %(default)s)",
    )
    siegel_check.set_defaults(handler=_siegel_check)

    rogers = subparsers.add_parser(
        "rogers-check",
        parents=[common, optional_domain, sampling],
        help="variance of a Siegel transform against Rogers' formula",
    )
    _add_function_options(rogers)
    rogers.add_argument(
        "--P",
        type=int,
        default=100,
        help="truncation of the (p, q) sum (default: %(default)s)",
    )
    rogers.add_argument(
        "--tolerance",
        type=float,
        default=ROGERS_TOLERANCE,
        help="largest accepted relative gap (default: %(default)s)",
    )
    rogers.set_defaults(handler=_rogers_check)

    clt = subparsers.add_parser(
        "clt",
        parents=[common, domain, sampling],
        help="sample normalised discrepancies and compare with the normal law",
    )
    clt.add_argument(
        "--T",
        type=float,
        nargs="+",
        required=True,
        help="one or more cutoffs",
    )
    _add_counting_options(clt)
    clt.add_argument(
        "--P",
        type=int,
        default=200,
        help="truncation of the variance series (default: %(default)s)",
    )
    clt.add_argument(
        "--csv",
        metavar="PATH",
        help="per-sample rows; with several cutoffs PATH gets a -INDEX suffix",
    )
    clt.add_argument("--histogram", metavar="PATH", help="histogram data file")
    clt.add_argument(
        "--bins",
        type=int,
        default=40,
        help="histogram bins (default: %(default)s)",
    )
    clt.add_argument(
        "--check",
        action="store_true",
        help="exit 2 when a run at d >= 9 misses a tolerance",
    )
    clt.set_defaults(handler=_clt)

    alpha = subparsers.add_parser(
        "alpha-check",
        parents=[common, sampling],
        help="moments of the alpha proxy over random lattices",
    )
    alpha.add_argument(
        "--dim",
        type=int,
        default=3,
        help="dimension; 2 also compares with the exact planar alpha "
        "(default: %(default)s)",
    )
    alpha.add_argument(
        "--power",
        type=float,
        default=2.0,
        help="moment order, finite below the dimension (default: %(default)s)",
    )
    alpha.add_argument(
        "--tolerance",
        type=float,
        default=ALPHA_TOLERANCE,
        help="largest accepted relative gap (default: %(default)s)",
    )
    alpha.set_defaults(handler=_alpha_check)

    return parser


def _add_counting_options(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--method",
        choices=("tiled", "bruteforce"),
        default="tiled",
        help="counting method (default: %(default)s)",
    )
    parser.add_argument(
        "--cell-side",
        type=float,
        help="side of the flow cells (default: chosen from the partition)",
    )


def _add_function_options(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--function",
        default="ball:1",
        help="ball:R, bump:R:M, cube:H or domain (default: %(default)s)",
    )
    parser.add_argument(
        "--dim",
        type=int,
        default=3,
        help="dimension, ignored for domain (default: %(default)s)",
    )
    parser.add_argument(
        "--sampler",
        choices=("hecke", "exact"),
        default="hecke",
        help="lattice sampler; exact needs dimension 2 (default: %(default)s)",
    )


def expand_config(argv: list[str]) -> list[str]:
    """Replace ``--config FILE`` by the flags it holds.

    The flags go right after the subcommand, before every explicit flag,
    so that explicit flags win.
    """
    for index, arg in enumerate(argv):
        if arg == "--config" and index + 1 < len(argv):
            path = argv[index + 1]
            rest = argv[:index] + argv[index + 2 :]
            break
        elif arg.startswith("--config="):
            path = arg.partition("=")[2]
            rest = argv[:index] + argv[index + 1 :]
            break
    else:
        return argv

    tokens = read_config(pathlib.Path(path))
    position = next(
        (index + 1 for index, arg in enumerate(rest) if arg in SUBCOMMANDS),
        0,
    )
    return rest[:position] + tokens + rest[position:]


def read_config(path: pathlib.Path) -> list[str]:
    tokens = []
    for number, line in enumerate(path.read_text().splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, equals, value = line.partition("=")
        key = key.strip().replace("_", "-")
        if not equals or not key:
            raise ConfigError(f"{path}:{number}: expected `key = value`, got {line!r}")
        tokens.append(f"--{key}")
        tokens.extend(shlex.split(value))
    return tokens


def resolved_config(args: argparse.Namespace) -> dict[str, Any]:
    return {
        key: value
        for key, value in sorted(vars(args).items())
        if key not in ("handler", "config", "verbosity")
    }


def make_logger(stderr: IO[str]) -> logging.Logger:
    logger = logging.getLogger("latticeclt")
    logger.propagate = False
    logger.addHandler(logging.StreamHandler(stderr))

    return logger


def set_logging_level(logger: logging.Logger, verbosity: int) -> None:
    log_levels = [logging.WARNING, logging.INFO, logging.DEBUG]

    try:
        log_level = log_levels[verbosity]
    except IndexError:
        log_level = log_levels[-1]

    logger.setLevel(log_level)


def _domain(args: argparse.Namespace, T: float) -> DomainSpec:
    partition = DimensionPartition.parse(args.partition)
    region = (
        AngularRegion.full(partition)
        if args.region is None
        else AngularRegion.parse(args.region, partition)
    )
    return DomainSpec(partition, Interval.parse(args.interval), region, T)


def parse_test_function(
    text: str,
    dim: int,
    domain: Callable[[], DomainSpec],
) -> TestFunctionSpec:
    """Parse ball:R, bump:R:M, cube:H or domain."""
    name, _, rest = text.partition(":")
    parameters = rest.split(":") if rest else []
    try:
        if name == "ball" and len(parameters) == 1:
            return BallIndicator(float(parameters[0]))
        elif name == "bump" and len(parameters) in (1, 2):
            smoothness = int(parameters[1]) if len(parameters) == 2 else 2
            return RadialBump(float(parameters[0]), smoothness)
        elif name == "cube" and len(parameters) == 1:
            return BoxIndicator((float(parameters[0]),) * dim)
        elif name == "domain" and not parameters:
            return DomainIndicator(domain())
    except ValueError as exception:
        raise ConfigError(f"invalid test function {text!r}: {exception}")
    raise ConfigError(
        f"invalid test function {text!r}; use ball:R, bump:R:M, cube:H or domain",
    )


def _function_and_sampler(
    args: argparse.Namespace,
) -> tuple[TestFunctionSpec, SamplerConfig]:
    def domain() -> DomainSpec:
        if args.partition is None or args.interval is None or args.T is None:
            raise ConfigError("--function domain needs --partition, --interval and --T")
        return _domain(args, args.T)

    f = parse_test_function(args.function, args.dim, domain)
    dim = f.spec.partition.d if isinstance(f, DomainIndicator) else args.dim
    return f, SamplerConfig(args.sampler, dim, args.p, args.seed)


def _print_fields(stdout: IO[str], fields: Mapping[str, Any]) -> None:
    for key, value in fields.items():
        if isinstance(value, (bool, str)) or value is None:
            text = str(value)
        elif isinstance(value, (list, tuple)):
            text = " ".join(format_number(x) for x in value)
        else:
            text = format_number(value)
        stdout.write(f"{key} = {text}\n")


def _write_summary(
    args: argparse.Namespace,
    config: Mapping[str, Any],
    results: Mapping[str, Any],
    logger: logging.Logger,
) -> None:
    if args.summary is not None:
        write_summary_json(args.summary, config, results, logger=logger)


def _volume(
    args: argparse.Namespace,
    config: Mapping[str, Any],
    stdout: IO[str],
    logger: logging.Logger,
) -> int:
    spec = _domain(args, args.T)
    polynomial = volume_polynomial(spec.partition, spec.interval, spec.region)
    results = {
        "volume": domain_volume(spec),
        "coefficients": [float(c) for c in polynomial.coef],
        "threshold": spec.threshold,
    }
    _print_fields(stdout, results)
    _write_summary(args, config, results, logger)
    return EXIT_OK


def _variance(
    args: argparse.Namespace,
    config: Mapping[str, Any],
    stdout: IO[str],
    logger: logging.Logger,
) -> int:
    partition = DimensionPartition.parse(args.partition)
    region = (
        AngularRegion.full(partition)
        if args.region is None
        else AngularRegion.parse(args.region, partition)
    )
    result = variance_series(Interval.parse(args.interval), region, partition, args.P)
    results = report_fields(result)
    _print_fields(stdout, results)
    _write_summary(args, config, results, logger)
    return EXIT_OK


def _count(
    args: argparse.Namespace,
    config: Mapping[str, Any],
    stdout: IO[str],
    logger: logging.Logger,
) -> int:
    spec = _domain(args, args.T)
    basis = read_lattice(pathlib.Path(args.lattice))
    if args.forms is None:
        result = discrepancy(basis, spec, args.method, args.cell_side)
    else:
        forms = read_lattice(pathlib.Path(args.forms)).basis
        result = count_linear_forms(basis, forms, spec, args.method, args.cell_side)
    if result.boundary_flags:
        logger.warning(
            "%d counted points lie within rounding of the boundary",
            result.boundary_flags,
        )

    results = report_fields(result)
    _print_fields(stdout, results)
    _write_summary(args, config, results, logger)
    return EXIT_OK


def _tile_check(
    args: argparse.Namespace,
    config: Mapping[str, Any],
    stdout: IO[str],
    logger: logging.Logger,
) -> int:
    report = tiling_check(
        _domain(args, args.T),
        args.n,
        np.random.default_rng(args.seed),
    )
    results = {**report_fields(report), "passed": report.passed()}
    _print_fields(stdout, results)
    _write_summary(args, config, results, logger)
    if not report.passed():
        logger.error("the tiling identity failed at %d points", report.mismatches)
        return EXIT_CHECK_FAILED
    return EXIT_OK


def _siegel_check(
    args: argparse.Namespace,
    config: Mapping[str, Any],
    stdout: IO[str],
    logger: logging.Logger,
) -> int:
    f, sampler = _function_and_sampler(args)
    report = siegel_mvt_check(f, sampler, args.n, workers=args.workers, logger=logger)
    passed = report.passed(args.tolerance)
    results = {**report_fields(report), "passed": passed}
    _print_fields(stdout, results)
    _write_summary(args, config, results, logger)
    return EXIT_OK if passed else EXIT_CHECK_FAILED


def _rogers_check(
    args: argparse.Namespace,
    config: Mapping[str, Any],
    stdout: IO[str],
    logger: logging.Logger,
) -> int:
    f, sampler = _function_and_sampler(args)
    report = rogers_check(
        f,
        sampler,
        args.n,
        truncation=args.P,
        workers=args.workers,
        logger=logger,
    )
    passed = report.passed(args.tolerance)
    results = report_fields(report)
    formula = results.pop("formula")
    results.update(
        formula=formula["value"],
        tail_bound=formula["tail_bound"],
        truncation_order=formula["truncation_order"],
        passed=passed,
    )
    _print_fields(stdout, results)
    _write_summary(args, config, results, logger)
    return EXIT_OK if passed else EXIT_CHECK_FAILED


def _indexed_path(path: str, index: int, count: int) -> pathlib.Path:
    path = pathlib.Path(path)
    if count == 1:
        return path
    return path.with_name(f"{path.stem}-{index}{path.suffix}")


def _clt(
    args: argparse.Namespace,
    config: Mapping[str, Any],
    stdout: IO[str],
    logger: logging.Logger,
) -> int:
    spec = _domain(args, args.T[0])
    runs = clt_experiment(
        spec,
        args.T,
        SamplerConfig("hecke", spec.partition.d, args.p, args.seed),
        args.n,
        method=args.method,
        cell_side=args.cell_side,
        truncation=args.P,
        workers=args.workers,
        logger=logger,
    )

    results = []
    for index, run in enumerate(runs):
        if args.csv is not None:
            path = _indexed_path(args.csv, index, len(runs))
            write_samples_csv(path, run.rows, logger=logger)
        if args.histogram is not None:
            path = _indexed_path(args.histogram, index, len(runs))
            emit_histogram(
                run.normalized,
                args.bins,
                path,
                run.target.value,
                logger=logger,
            )
        fields = {
            "T": run.spec.T,
            "target_variance": run.target.value,
            "target_tail_bound": run.target.tail_bound,
            "exploratory": run.exploratory,
            "boundary_flags": run.boundary_flags,
            "passed": run.passed(),
            **report_fields(run.summary),
        }
        _print_fields(stdout, fields)
        results.append(fields)

    _write_summary(args, config, {"runs": results}, logger)
    gating = [run for run in runs if not run.exploratory]
    if args.check and not all(run.passed() for run in gating):
        logger.error("the normal law check failed")
        return EXIT_CHECK_FAILED
    return EXIT_OK


def _alpha_check(
    args: argparse.Namespace,
    config: Mapping[str, Any],
    stdout: IO[str],
    logger: logging.Logger,
) -> int:
    kind = "exact" if args.dim == 2 else "hecke"
    sampler = SamplerConfig(kind, args.dim, args.p, args.seed)
    report = alpha_moment_check(
        sampler,
        args.n,
        args.power,
        workers=args.workers,
        logger=logger,
    )
    passed = report.passed(args.tolerance)
    results = report_fields(report)
    if args.dim == 2:
        planar = alpha_d2_check(args.n, args.seed, workers=args.workers, logger=logger)
        calibration = sampler_calibration(
            args.n,
            args.seed,
            args.p,
            workers=args.workers,
            logger=logger,
        )
        results.update(
            proxy_over_exact=planar.ratio,
            worst_proxy_over_exact=planar.worst_ratio,
            acceptance_rate=calibration.acceptance_rate,
            shortest_vector_z=calibration.z_score,
        )
        passed = passed and planar.passed() and calibration.passed()
    results["passed"] = passed
    _print_fields(stdout, results)
    _write_summary(args, config, results, logger)
    return EXIT_OK if passed else EXIT_CHECK_FAILED


def main() -> int:
    try:
        signal.signal(signal.SIGPIPE, signal.SIG_DFL)
    except AttributeError:
        # SIGPIPE is not available on Windows.
        pass

    try:
        return _main(
            sys.argv,
            stdout=sys.stdout,
            logger=make_logger(sys.stderr),
        )
    except KeyboardInterrupt:
        return EXIT_INTERRUPTED


if __name__ == "__main__":
    sys.exit(main())
