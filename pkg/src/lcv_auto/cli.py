"""
Command line interface.

    python -m src.Main run --scenario data/scenarios/double_lane_change.ini --out results/dlc
    python -m src.Main validate --scenario data/scenarios/cacc_follow.ini
    python -m src.Main plot --trace results/dlc/trace.csv
    python -m src.Main sweep --scenario data/scenarios/cacc_follow.ini --out results/sweep \\
        --set channel.loss=0,0.1,0.2 --set channel.latency=0,0.1

Exit codes: 0 pass, 1 scenario failure (e.g. corridor violation, divergence), 2 error.
"""
import argparse
import itertools
import logging
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Dict, List, Sequence, Tuple

import pandas as pd
from tqdm import tqdm

from src.lcv_auto import __version__
from src.lcv_auto.engine import RunResult, SimulationEngine
from src.lcv_auto.exceptions import ConfigurationError, LcvError
from src.lcv_auto.outputs import replot
from src.lcv_auto.scenario import load_scenario

logger = logging.getLogger(__name__)

EXIT_PASS, EXIT_FAIL, EXIT_ERROR = 0, 1, 2
SWEEP_FILE = "sweep.csv"


def _seed(text: str) -> int:
    value = int(text, 0)
    if not 0 <= value < 2 ** 64:
        raise argparse.ArgumentTypeError(f"seed must be an unsigned 64-bit integer, got {text}")
    return value


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--quiet", "-q", action="store_true", help="only report warnings and errors")

    parser = argparse.ArgumentParser(prog="lcv_auto", description="Automated light commercial vehicle simulation.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    commands = parser.add_subparsers(dest="command", required=True)

    run = commands.add_parser("run", parents=[common], help="run a scenario and write its outputs")
    run.add_argument("--scenario", "-s", required=True, type=Path, help="scenario file")
    run.add_argument("--out", "-o", required=True, type=Path, help="output directory")
    run.add_argument("--seed", type=_seed, help="override the scenario seed")

    validate = commands.add_parser("validate", parents=[common], help="check a scenario file")
    validate.add_argument("--scenario", "-s", required=True, type=Path, help="scenario file")

    plot = commands.add_parser("plot", parents=[common], help="re-plot the figures of a written trace")
    plot.add_argument("--trace", "-t", required=True, type=Path, help="trace CSV file")
    plot.add_argument("--out", "-o", type=Path, help="output directory (default: next to the trace)")

    sweep = commands.add_parser("sweep", parents=[common], help="repeat a scenario over a parameter grid")
    sweep.add_argument("--scenario", "-s", required=True, type=Path, help="scenario file")
    sweep.add_argument("--out", "-o", required=True, type=Path, help="output root, one directory per grid point")
    sweep.add_argument("--set", dest="grid", action="append", default=[], metavar="SECTION.KEY=V1,V2,...",
                       help="values of one scenario key; repeat for a multi-dimensional grid "
                            "(profile breakpoints inside one value are separated by ';')")
    sweep.add_argument("--seed", type=_seed, help="override the scenario seed")
    sweep.add_argument("--workers", "-w", type=int, default=1, help="parallel scenario runs (default: 1)")

    return parser


# ---------------------------------------------------------------------------------------------------------- #
# Commands
# ---------------------------------------------------------------------------------------------------------- #
def _run_one(path: Path, out_dir: Path, seed: int = None, overrides: Dict[str, str] = None,
             verbose: bool = True) -> RunResult:
    scenario = load_scenario(path, overrides=overrides, seed=seed)
    engine = SimulationEngine().fit(scenario, verbose=verbose)
    result = engine.run()
    engine.write_to_file(out_dir)
    return result


def command_run(args) -> int:
    result = _run_one(args.scenario, args.out, args.seed)

    verdict = "PASS" if result.passed else "FAIL"
    logger.info("%s: %s (%s, %d rows, t_end = %.2f s)", result.name, verdict, result.status.value, result.rows,
                result.end_time)
    if result.message:
        logger.warning("%s", result.message)

    return EXIT_PASS if result.passed else EXIT_FAIL


def command_validate(args) -> int:
    scenario = load_scenario(args.scenario)
    logger.info("%s: valid %s scenario '%s', %.2f s, seed %d", args.scenario, scenario.kind.value, scenario.name,
                scenario.duration, scenario.seed)
    return EXIT_PASS


def command_plot(args) -> int:
    for path in replot(args.trace, args.out):
        logger.info("Wrote %s", path)
    return EXIT_PASS


def parse_grid(items: Sequence[str]) -> List[Tuple[str, List[str]]]:
    """
    ``["channel.loss=0,0.2"]`` to ``[("channel.loss", ["0", "0.2"])]``.
    """
    grid = []
    for item in items:
        key, sep, values = item.partition("=")
        key = key.strip()
        if not sep or "." not in key:
            raise ConfigurationError(f"Sweep entry {item!r} is not of the form section.key=v1,v2,...")

        values = [v.strip() for v in values.split(",") if v.strip()]
        if not values:
            raise ConfigurationError(f"Sweep entry {item!r} lists no values.")

        grid.append((key, values))
    return grid


def command_sweep(args) -> int:
    grid = parse_grid(args.grid)
    keys = [key for key, _ in grid]
    points = [dict(zip(keys, values)) for values in itertools.product(*(values for _, values in grid))]

    # validate the whole grid before running anything
    for overrides in points:
        load_scenario(args.scenario, overrides=overrides, seed=args.seed)

    def run_point(index: int) -> RunResult:
        return _run_one(args.scenario, args.out / f"point_{index:03d}", args.seed, points[index], verbose=False)

    with ThreadPoolExecutor(max_workers=max(args.workers, 1)) as pool:
        results = list(tqdm(pool.map(run_point, range(len(points))), total=len(points), desc="Sweep",
                            unit="run", disable=args.quiet))

    rows = []
    for index, (overrides, result) in enumerate(zip(points, results)):
        rows.append({"point": f"point_{index:03d}", **overrides, "status": result.status.value,
                     "passed": result.passed, "end_time": result.end_time,
                     **{k: v for k, v in result.metrics.items() if not isinstance(v, (list, dict))}})

    summary = args.out / SWEEP_FILE
    args.out.mkdir(parents=True, exist_ok=True)
    pd.DataFrame(rows).to_csv(summary, index=False, float_format="%.17g", lineterminator="\n")

    failed = sum(not r.passed for r in results)
    logger.info("%d of %d grid point(s) passed; summary in %s", len(results) - failed, len(results), summary)

    return EXIT_PASS if failed == 0 else EXIT_FAIL


COMMANDS = {"run": command_run, "validate": command_validate, "plot": command_plot, "sweep": command_sweep}


def main(argv: Sequence[str] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(format="%(levelname)s: %(message)s", level=logging.WARNING if args.quiet else logging.INFO)

    try:
        return COMMANDS[args.command](args)
    except LcvError as e:
        logger.error("%s", e)
        return EXIT_ERROR
