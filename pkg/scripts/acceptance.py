"""Run the acceptance checks through the command line.

Every check is a latticeclt invocation whose exit status or summary file
decides the outcome: 0 passes, 2 means a tolerance was violated. The
tiling identity and the sampling checks run on a worker queue. Counts
are compared between the tiled and brute force methods, volumes against
a planar closed form and Monte Carlo, variances against their truncation
and symmetry, clt samples byte for byte across worker counts, and the
variance of a symmetric domain with that of its half.
"""
from __future__ import annotations

import argparse
import asyncio
import itertools
import json
import math
import pathlib
import shlex
import shutil
import sys
import tempfile
from typing import Any
from typing import NamedTuple
from typing import Sequence

import aiofiles
import numpy as np

from latticeclt.experiments import DEFAULT_PRIME
from latticeclt.geometry import AngularRegion
from latticeclt.geometry import DimensionPartition
from latticeclt.geometry import DomainSpec
from latticeclt.geometry import Interval
from latticeclt.geometry import membership_mask
from latticeclt.lattice import hecke_sample
from latticeclt.lattice import write_lattice


ROOT_PATH = pathlib.Path(__file__).parent.parent.absolute()
LATTICECLT_BIN = f"'{sys.executable}' -m latticeclt.cli"

THEOREM_DOMAIN = ["--partition", "5,4", "--interval", "1,2"]
THEOREM_T = repr(math.exp(10))
WORKER_COUNTS = (1, 4, 16)

TILING_PARTITIONS = ("1,1", "2,1", "1,2", "1,1,1", "2,1,1")
TILING_INTERVALS = ("0.5,2", "0.3,5")
TILING_LOG_T = (3.5, 8.0)

ORACLE_CASES = (("2,1", 100), ("2,2", 20))
ORACLE_INTERVAL = "0.5,2"
ORACLE_T = repr(math.exp(3))

PLANAR_CASES = ((1.0, math.e, math.exp(2)), (0.5, 2.0, math.exp(3)), (0.3, 4.0, 20.0))
VOLUME_PARTITIONS = ("1,1", "2,1", "1,2", "1,1,1", "2,2")
VOLUME_CUTOFFS = (4.0, 7.0)
VOLUME_INTERVAL = "0.5,3"
VOLUME_SAMPLES = 1_000_000

VARIANCE_INTERVALS = ("1,2", "1,8", "2,3", "1,16", "0.5,40")

if sys.stdout.isatty():
    YELLOW = "\x1b[33m"
    RED = "\x1b[31m"
    END = "\x1b[0m"
else:
    YELLOW = ""
    RED = ""
    END = ""


class AcceptanceError(Exception):
    ...


class Check(NamedTuple):
    name: str
    argv: Sequence[str]


class Worker:
    def __init__(
        self,
        queue: asyncio.Queue[Check],
        args: argparse.Namespace,
        failures: list[str],
    ) -> None:
        self.queue = queue
        self.args = args
        self.failures = failures

    async def run(self) -> None:
        self.running = True
        while self.running:
            try:
                check = await asyncio.wait_for(self.queue.get(), timeout=1)
            except asyncio.TimeoutError:
                continue
            else:
                try:
                    print(colored(f"--->  {check.name}", YELLOW), file=sys.stderr)
                    status = await run(self.args.command, check.argv, self.args)
                    if status != 0:
                        self.failures.append(f"{check.name} exited with {status}")
                finally:
                    self.queue.task_done()

    def stop(self) -> None:
        self.running = False


def colored(text: str, color: str) -> str:
    return color + text + END


async def run(
    command: str,
    argv: Sequence[str],
    args: argparse.Namespace,
) -> int:
    cmd = shlex.split(command)
    verbosity = ["-v"] if args.verbose else []
    proc = await asyncio.subprocess.create_subprocess_exec(
        cmd[0],
        *cmd[1:],
        *argv,
        *verbosity,
        cwd=ROOT_PATH,
    )
    return await proc.wait()


async def read_bytes(path: pathlib.Path) -> bytes:
    async with aiofiles.open(path, "rb") as f:
        return await f.read()


async def read_summary(path: pathlib.Path) -> dict:
    async with aiofiles.open(path) as f:
        return json.loads(await f.read())


async def run_summary(
    args: argparse.Namespace,
    argv: Sequence[str],
    path: pathlib.Path,
) -> dict[str, Any]:
    """Run a command with --summary and return its results."""
    status = await run(args.command, [*argv, "--summary", str(path)], args)
    if status != 0:
        raise AcceptanceError(f"`{' '.join(argv)}` exited with {status}")
    try:
        return (await read_summary(path))["results"]
    except (OSError, KeyError, ValueError) as exc:
        raise AcceptanceError(f"unreadable summary {path}") from exc


def report(exc: AcceptanceError) -> str:
    if exc.__cause__:
        print(f"caused by: {exc.__cause__}", file=sys.stderr)
    return str(exc)


def tiling_checks(n: int) -> list[Check]:
    specs = itertools.product(TILING_PARTITIONS, TILING_INTERVALS, TILING_LOG_T)
    return [
        Check(
            f"tile-check {partition} I=({interval}) log T={log_T}",
            [
                "tile-check",
                "--partition",
                partition,
                "--interval",
                interval,
                "--T",
                repr(math.exp(log_T)),
                "--n",
                str(n),
                "--seed",
                str(seed),
            ],
        )
        for seed, (partition, interval, log_T) in enumerate(specs)
    ]


def statistical_checks(n: int) -> list[Check]:
    sampling = ["--n", str(n), "--p", str(DEFAULT_PRIME)]
    checks = [
        Check(
            f"siegel-check {function}",
            ["siegel-check", "--function", function, "--dim", "3", *sampling],
        )
        for function in ("ball:1", "bump:1.5:2", "cube:0.6")
    ]
    checks.append(
        Check(
            "rogers-check ball:1",
            ["rogers-check", "--function", "ball:1", "--dim", "3", *sampling],
        ),
    )
    checks.append(Check("alpha-check d=3", ["alpha-check", "--dim", "3", *sampling]))
    checks.append(
        Check(
            "alpha-check d=2",
            ["alpha-check", "--dim", "2", "--n", str(max(n // 10, 1000))],
        ),
    )
    return checks


async def count_oracle(
    args: argparse.Namespace,
    directory: pathlib.Path,
) -> list[str]:
    """Tiled and brute force counts must agree on every lattice."""
    semaphore = asyncio.Semaphore(args.num_workers)

    async def compare(partition: str, index: int) -> list[str]:
        d = DimensionPartition.parse(partition).d
        name = f"lattice {index} at d={d}"
        lattice = directory / f"lattice-{d}-{index}.txt"
        rng = np.random.default_rng([args.seed, d, index])
        basis = hecke_sample(d, DEFAULT_PRIME, rng, rotate=True)
        await asyncio.to_thread(write_lattice, lattice, basis)

        counts = []
        async with semaphore:
            for method in ("tiled", "bruteforce"):
                argv = [
                    "count",
                    "--partition",
                    partition,
                    "--interval",
                    ORACLE_INTERVAL,
                    "--T",
                    ORACLE_T,
                    "--lattice",
                    str(lattice),
                    "--method",
                    method,
                ]
                summary = lattice.with_suffix(f".{method}.json")
                try:
                    counts.append((await run_summary(args, argv, summary))["count"])
                except AcceptanceError as exc:
                    return [f"{name}: {report(exc)}"]
        if counts[0] != counts[1]:
            return [f"{name}: tiled counted {counts[0]}, brute force {counts[1]}"]
        return []

    print(colored("--->  count oracle", YELLOW), file=sys.stderr)
    outcomes = await asyncio.gather(
        *(
            compare(partition, index)
            for partition, lattices in ORACLE_CASES
            for index in range(lattices)
        ),
    )
    return [failure for outcome in outcomes for failure in outcome]


def planar_volume(lo: float, hi: float, T: float) -> float:
    """Area of |x|, |y| < T with |xy| in (lo, hi), for hi <= T^2."""
    quadrant = 2 * math.log(T) * (hi - lo) - (
        hi * math.log(hi) - hi - lo * math.log(lo) + lo
    )
    return 4 * quadrant


def monte_carlo_volume(
    partition: str,
    interval: str,
    T: float,
    n: int,
    seed: int,
) -> tuple[float, float]:
    """Return a box sampling estimate of the volume and its standard error."""
    dims = DimensionPartition.parse(partition)
    spec = DomainSpec(dims, Interval.parse(interval), AngularRegion.full(dims), T)
    points = np.random.default_rng(seed).uniform(-T, T, size=(n, dims.d))
    fraction = float(membership_mask(points, spec).mean())
    box = (2 * T) ** dims.d
    return box * fraction, box * math.sqrt(fraction * (1 - fraction) / n)


async def volume_checks(
    args: argparse.Namespace,
    directory: pathlib.Path,
) -> list[str]:
    print(colored("--->  volume", YELLOW), file=sys.stderr)
    failures = []
    for index, (lo, hi, T) in enumerate(PLANAR_CASES):
        argv = ["volume", "--partition", "1,1", "--interval", f"{lo!r},{hi!r}"]
        argv += ["--T", repr(T)]
        try:
            results = await run_summary(args, argv, directory / f"planar-{index}.json")
        except AcceptanceError as exc:
            failures.append(report(exc))
            continue
        expected = planar_volume(lo, hi, T)
        if abs(results["volume"] - expected) > 1e-9 * expected:
            failures.append(
                f"planar volume {results['volume']!r} differs from {expected!r}",
            )

    specs = itertools.product(VOLUME_PARTITIONS, VOLUME_CUTOFFS)
    for seed, (partition, T) in enumerate(specs):
        argv = ["volume", "--partition", partition, "--interval", VOLUME_INTERVAL]
        argv += ["--T", repr(T)]
        try:
            results = await run_summary(args, argv, directory / f"volume-{seed}.json")
        except AcceptanceError as exc:
            failures.append(report(exc))
            continue
        estimate, standard_error = await asyncio.to_thread(
            monte_carlo_volume,
            partition,
            VOLUME_INTERVAL,
            T,
            VOLUME_SAMPLES,
            seed,
        )
        if abs(results["volume"] - estimate) > 3 * standard_error:
            failures.append(
                f"volume of {partition} at T={T!r} is {results['volume']!r}, "
                f"sampling gives {estimate!r} ± {standard_error!r}",
            )
    return failures


async def variance_checks(
    args: argparse.Namespace,
    directory: pathlib.Path,
) -> list[str]:
    print(colored("--->  variance", YELLOW), file=sys.stderr)
    failures = []
    try:
        # no two dilates of (1, 2) overlap once d >= 9
        for region, expected in (("hemisphere:e1,full", 1.0), ("full,full", 2.0)):
            results = await run_summary(
                args,
                ["variance", *THEOREM_DOMAIN, "--region", region],
                directory / f"variance-{expected!r}.json",
            )
            if abs(results["value"] - expected) > 1e-8 * expected:
                failures.append(
                    f"variance on {region} is {results['value']!r}, not {expected!r}",
                )

        for index, interval in enumerate(VARIANCE_INTERVALS):
            values = []
            for P in (100, 2000):
                argv = ["variance", "--partition", "2,1", "--interval", interval]
                argv += ["--region", "full,+1", "--P", str(P)]
                path = directory / f"variance-{index}-{P}.json"
                values.append(await run_summary(args, argv, path))
            coarse, fine = values
            gap = abs(coarse["value"] - fine["value"])
            if gap > coarse["tail_bound"] + fine["tail_bound"]:
                failures.append(
                    f"variance on I=({interval}) moves by {gap!r} with the truncation",
                )
    except AcceptanceError as exc:
        failures.append(report(exc))
    return failures


async def determinism(
    args: argparse.Namespace,
    directory: pathlib.Path,
) -> list[str]:
    """Compare the clt samples written with different worker counts."""
    print(colored("--->  determinism", YELLOW), file=sys.stderr)
    paths = [directory / f"samples-workers-{count}.csv" for count in WORKER_COUNTS]
    for count, path in zip(WORKER_COUNTS, paths):
        status = await run(
            args.command,
            [
                "clt",
                *THEOREM_DOMAIN,
                "--region",
                "hemisphere:e1,full",
                "--T",
                THEOREM_T,
                "--n",
                str(args.determinism_samples),
                "--seed",
                "42",
                "--workers",
                str(count),
                "--csv",
                str(path),
            ],
            args,
        )
        if status != 0:
            return [f"clt with {count} workers exited with {status}"]

    contents = [await read_bytes(path) for path in paths]
    return [
        f"clt samples with {count} workers differ from a serial run"
        for count, content in zip(WORKER_COUNTS[1:], contents[1:])
        if content != contents[0]
    ]


async def symmetric_doubling(
    args: argparse.Namespace,
    directory: pathlib.Path,
) -> list[str]:
    """The symmetric domain should have twice the variance of its half."""
    print(colored("--->  symmetric doubling", YELLOW), file=sys.stderr)
    variances = []
    for name, region in (("half", "hemisphere:e1,full"), ("whole", "full,full")):
        argv = [
            "clt",
            *THEOREM_DOMAIN,
            "--region",
            region,
            "--T",
            THEOREM_T,
            "--n",
            str(args.clt_samples),
            "--workers",
            str(args.num_workers),
            "--check",
        ]
        try:
            results = await run_summary(args, argv, directory / f"summary-{name}.json")
        except AcceptanceError as exc:
            return [f"clt on the {name} domain: {report(exc)}"]
        variances.append(results["runs"][0]["variance"])

    ratio = variances[1] / variances[0]
    print(f"symmetric over half variance ratio: {ratio!r}", file=sys.stderr)
    if abs(ratio - 2) > 0.2 * 2:
        return [f"symmetric domain variance ratio {ratio!r} is not close to 2"]
    return []


def process_args() -> argparse.Namespace:
    parser = argparse.ArgumentParser(description=__doc__)

    parser.add_argument(
        "--command",
        default=LATTICECLT_BIN,
        help="latticeclt command (default: %(default)s)",
    )
    parser.add_argument(
        "-n",
        "--num-workers",
        type=int,
        dest="num_workers",
        default=1,
        help="number of checks to run at once (default: %(default)d)",
    )
    parser.add_argument(
        "--samples",
        type=int,
        default=10_000,
        help="Monte Carlo samples per check (default: %(default)d)",
    )
    parser.add_argument(
        "--tiling-points",
        type=int,
        default=100_000,
        help="points per tiling identity check (default: %(default)d)",
    )
    parser.add_argument(
        "--clt-samples",
        type=int,
        default=2000,
        help="lattices per clt run (default: %(default)d)",
    )
    parser.add_argument(
        "--determinism-samples",
        type=int,
        default=50,
        help="lattices in the worker count comparison (default: %(default)d)",
    )
    parser.add_argument(
        "--seed",
        type=int,
        default=0,
        help="seed of the count oracle lattices (default: %(default)d)",
    )
    parser.add_argument(
        "--skip-clt",
        action="store_true",
        help="skip the slow runs at the theorem's dimension",
    )
    parser.add_argument(
        "-v",
        "--verbose",
        action="store_true",
        help="print the commands' progress",
    )

    return parser.parse_args()


async def check(args: argparse.Namespace) -> list[str]:
    failures: list[str] = []
    queue: asyncio.Queue[Check] = asyncio.Queue()

    workers = [Worker(queue, args, failures) for _ in range(args.num_workers)]
    worker_tasks = [asyncio.create_task(worker.run()) for worker in workers]

    for item in tiling_checks(args.tiling_points):
        queue.put_nowait(item)
    for item in statistical_checks(args.samples):
        queue.put_nowait(item)

    await queue.join()
    for w in workers:
        w.stop()
    await asyncio.gather(*worker_tasks)

    directory = pathlib.Path(await asyncio.to_thread(tempfile.mkdtemp))
    try:
        failures.extend(await count_oracle(args, directory))
        failures.extend(await volume_checks(args, directory))
        failures.extend(await variance_checks(args, directory))
        failures.extend(await determinism(args, directory))
        if not args.skip_clt:
            failures.extend(await symmetric_doubling(args, directory))
    finally:
        await asyncio.to_thread(shutil.rmtree, directory)

    return failures


def main() -> int:
    failures = asyncio.run(check(process_args()))
    for failure in failures:
        print(colored(f"FAILED: {failure}", RED), file=sys.stderr)
    return 1 if failures else 0


if __name__ == "__main__":
    try:
        sys.exit(main())
    except KeyboardInterrupt:
        sys.exit(1)
