"""Benchmark command line.

Three subcommands: ``simulate`` runs one configuration (optionally repeated
across consecutive seeds) and emits one CSV row per run; ``sweep`` expands a
TOML config whose fields may hold value lists into their Cartesian product
and runs every cell in a worker pool; ``verify-fixtures`` sanity-checks the
bundled warehouse maps.

The CSV is flat with a fixed column order and round-trips exactly:
``read_results`` returns the very records ``write_results`` stored, with
``inf`` as the sentinel for unbounded horizons.  Nested data -- the horizon
actually used per episode, which escalation can raise above the configured
``w`` -- goes to a JSON file next to the CSV.  Rows always appear in spec
order no matter which worker finished first.

Exit codes: 0 all runs and checks succeeded, 1 a run failed or a fixture
check did not pass, 2 the configuration was invalid (nothing was run).
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, fields, replace
from importlib import resources
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10: same parser, published separately
    import tomli as tomllib

from .grid import Grid, MapError, generate_sorting_directions, load_map
from .replanning import HorizonConfig
from .search import INFINITE
from .sim import SimulationConfig, run_simulation
from .solvers import SOLVERS

COLUMNS = (
    "map", "solver", "m", "w", "h", "p", "seed",
    "throughput", "mean_runtime_s", "std_runtime_s", "episodes", "failed",
)

# friendly aliases for the bundled fixtures
BUNDLED_MAPS = {
    "fulfillment": "fulfillment_33x46.map",
    "sorting": "sorting_37x77.map",
    "ring": "ring_corridor.map",
}


def parse_horizon(value) -> int | float:
    """An integer number of timesteps, or the string ``inf``."""
    if isinstance(value, str):
        text = value.strip().lower()
        if text == "inf":
            return INFINITE
        try:
            value = int(text)
        except ValueError:
            raise ValueError(f"horizon must be an integer or 'inf', got {value!r}") from None
    if isinstance(value, bool) or not isinstance(value, int):
        raise ValueError(f"horizon must be an integer or 'inf', got {value!r}")
    return value


def format_horizon(w: int | float) -> str:
    return "inf" if w == INFINITE else str(int(w))


@dataclass(frozen=True)
class RunSpec:
    """One benchmark cell: a map, a solver, and every knob the loop takes."""

    map: str
    solver: str
    m: int
    w: int | float
    h: int
    p: int = 0
    subopt: float = 1.1
    timesteps: int = 500
    seed: int = 0
    reps: int = 1
    time_limit: float = 60.0

    def __post_init__(self):
        if self.solver not in SOLVERS:
            raise ValueError(f"unknown solver {self.solver!r}; pick one of {sorted(SOLVERS)}")
        HorizonConfig(w=self.w, h=self.h, p=self.p)  # validates w >= h >= 1, p >= 0
        if self.subopt < 1.0:
            raise ValueError(f"suboptimality factor must be >= 1, got {self.subopt}")
        if self.reps < 1:
            raise ValueError(f"repetitions must be >= 1, got {self.reps}")
        if self.m < 0:
            raise ValueError(f"agent count must be non-negative, got {self.m}")
        if self.timesteps < 1:
            raise ValueError(f"timestep budget must be positive, got {self.timesteps}")
        if self.time_limit <= 0:
            raise ValueError(f"time limit must be positive, got {self.time_limit}")


_SPEC_FIELDS = tuple(f.name for f in fields(RunSpec))
_GRID_CACHE: dict[str, Grid] = {}


def resolve_map(label: str) -> Grid:
    """A bundled fixture by alias or file name, or any map file on disk."""
    cached = _GRID_CACHE.get(label)
    if cached is not None:
        return cached
    name = BUNDLED_MAPS.get(label, label)
    bundled = resources.files("lifelong_mapf") / "maps" / name
    path = Path(label)
    if label in BUNDLED_MAPS or (not path.is_file() and bundled.is_file()):
        grid = load_map(bundled.read_text(), name=name)
    elif path.is_file():
        grid = load_map(path.read_text(), name=str(path))
    else:
        raise ValueError(f"map {label!r} is neither a bundled fixture nor a file")
    _GRID_CACHE[label] = grid
    return grid


def _simulation_config(spec: RunSpec) -> SimulationConfig:
    return SimulationConfig(
        resolve_map(spec.map),
        spec.m,
        HorizonConfig(w=spec.w, h=spec.h, p=spec.p),
        solver=spec.solver,
        subopt=spec.subopt,
        timesteps=spec.timesteps,
        seed=spec.seed,
        time_limit=spec.time_limit,
    )


def expand(spec: RunSpec) -> list[RunSpec]:
    """One single-repetition spec per run, on consecutive seeds."""
    return [replace(spec, seed=spec.seed + k, reps=1) for k in range(spec.reps)]


def run_cell(spec: RunSpec) -> tuple[dict, list]:
    """Execute one run; returns its CSV row and its per-episode horizon list."""
    result = run_simulation(_simulation_config(spec))
    row = {
        "map": spec.map,
        "solver": spec.solver,
        "m": spec.m,
        "w": spec.w,
        "h": spec.h,
        "p": spec.p,
        "seed": spec.seed,
        "throughput": result.throughput,
        "mean_runtime_s": result.mean_runtime_s,
        "std_runtime_s": result.std_runtime_s,
        "episodes": result.episodes,
        "failed": result.failed,
    }
    return row, list(result.w_used)


def execute(cells: list[RunSpec], jobs: int | None = None) -> list[tuple[dict, list]]:
    """Run every cell, in a worker pool when it helps, and return outcomes in
    the order the cells were given."""
    jobs = jobs if jobs is not None else (os.cpu_count() or 1)
    if jobs < 1:
        raise ValueError(f"worker count must be >= 1, got {jobs}")
    if jobs == 1 or len(cells) <= 1:
        return [run_cell(cell) for cell in cells]
    with ProcessPoolExecutor(max_workers=min(jobs, len(cells))) as pool:
        return list(pool.map(run_cell, cells))


# -- result tables -----------------------------------------------------------


def write_results(rows: list[dict], path: Path | str) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(COLUMNS)
        for row in rows:
            writer.writerow([_csv_value(row[c]) for c in COLUMNS])


def _csv_value(value) -> str:
    if isinstance(value, float):
        return format_horizon(value) if value == INFINITE else repr(value)
    return str(value)


_COLUMN_PARSERS = {
    "map": str,
    "solver": str,
    "m": int,
    "w": parse_horizon,
    "h": int,
    "p": int,
    "seed": int,
    "throughput": float,
    "mean_runtime_s": float,
    "std_runtime_s": float,
    "episodes": int,
    "failed": lambda s: s == "True",
}


def read_results(path: Path | str) -> list[dict]:
    """Inverse of write_results: the exact records that were stored."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if tuple(header) != COLUMNS:
            raise ValueError(f"{path}: unexpected columns {header}")
        return [
            {c: _COLUMN_PARSERS[c](cell) for c, cell in zip(COLUMNS, record)}
            for record in reader
        ]


def write_horizon_log(outcomes: list[tuple[dict, list]], path: Path | str) -> None:
    """JSON sidecar for the one nested field: the horizon each episode was
    actually planned with (escalation can push it past the configured w)."""
    entries = []
    for row, w_used in outcomes:
        entry = {c: row[c] for c in ("map", "solver", "m", "w", "h", "p", "seed")}
        entry["w"] = format_horizon(row["w"])
        entry["w_used"] = [format_horizon(w) if w == INFINITE else int(w) for w in w_used]
        entries.append(entry)
    with open(path, "w") as fh:
        json.dump(entries, fh, indent=2)
        fh.write("\n")


def _emit(outcomes: list[tuple[dict, list]], out: str | None) -> None:
    rows = [row for row, _ in outcomes]
    if out is None:
        writer = csv.writer(sys.stdout)
        writer.writerow(COLUMNS)
        for row in rows:
            writer.writerow([_csv_value(row[c]) for c in COLUMNS])
        return
    out_path = Path(out)
    if out_path.parent != Path(""):
        out_path.parent.mkdir(parents=True, exist_ok=True)
    write_results(rows, out_path)
    write_horizon_log(outcomes, out_path.with_suffix(".json"))
    print(f"wrote {len(rows)} rows to {out_path}")


# -- sweep configs -----------------------------------------------------------


def parse_sweep_config(text: str) -> list[RunSpec]:
    """Expand a TOML config into the Cartesian product of its value lists.

    Every RunSpec field may be a single value or a list; the product runs in
    field order, last field fastest, so output order is reproducible.
    """
    data = tomllib.loads(text)
    unknown = set(data) - set(_SPEC_FIELDS)
    if unknown:
        raise ValueError(f"unknown sweep fields: {sorted(unknown)}")
    for required in ("map", "solver", "m", "w", "h"):
        if required not in data:
            raise ValueError(f"sweep config is missing the {required!r} field")
    lists = {
        name: list(data[name]) if isinstance(data[name], list) else [data[name]]
        for name in _SPEC_FIELDS
        if name in data
    }
    for name, values in lists.items():
        if not values:
            raise ValueError(f"sweep field {name!r} has no values")
        if name == "w":
            lists[name] = [parse_horizon(v) for v in values]
    combos: list[dict] = [{}]
    for name in _SPEC_FIELDS:
        if name not in lists:
            continue
        combos = [dict(combo, **{name: value}) for combo in combos for value in lists[name]]
    return [RunSpec(**combo) for combo in combos]


# -- fixture verification ------------------------------------------------------


def verify_fixtures(folder=None) -> list[tuple[str, bool, str]]:
    """Check the bundled warehouse fixtures (or copies in ``folder``).

    Returns (check name, passed, detail) triples; details carry the
    file-and-line position when a map fails to parse.
    """
    if folder is None:
        folder = resources.files("lifelong_mapf") / "maps"
    else:
        folder = Path(folder)
    checks: list[tuple[str, bool, str]] = []

    def check(name: str, ok: bool, detail: str = "") -> None:
        checks.append((name, bool(ok), detail))

    expectations = (
        ("fulfillment_33x46.map", (33, 46), (0.14, 0.18)),
        ("sorting_37x77.map", (37, 77), (0.08, 0.12)),
    )
    grids: dict[str, Grid | None] = {}
    for fname, dims, (lo, hi) in expectations:
        entry = folder / fname
        grids[fname] = None
        if not entry.is_file():
            check(f"{fname}: present", False, "file missing")
            continue
        check(f"{fname}: present", True)
        try:
            g = load_map(entry.read_text(), name=fname)
        except MapError as err:
            # a file that cannot be parsed fails its dimension check, and the
            # detail pinpoints the offending line
            check(f"{fname}: dimensions {dims[0]}x{dims[1]}", False, str(err))
            continue
        grids[fname] = g
        check(f"{fname}: dimensions {dims[0]}x{dims[1]}", (g.height, g.width) == dims,
              f"got {g.height}x{g.width}")
        fraction = 1.0 - g.passable.sum() / g.passable.size
        check(f"{fname}: obstacle fraction in [{lo:.0%}, {hi:.0%}]", lo <= fraction <= hi,
              f"got {fraction:.1%}")

    sorting = grids.get("sorting_37x77.map")
    if sorting is not None:
        has_mask = sorting.move_mask is not None
        check("sorting_37x77.map: one-way pattern present", has_mask)
        if has_mask:
            fwd = sorting.neighbor_table()
            passable = sorting.passable.ravel().nonzero()[0]
            dead_ends = int(((fwd[passable] < 0).all(axis=1)).sum())
            check("sorting_37x77.map: no dead ends", dead_ends == 0,
                  f"{dead_ends} cells have no outgoing move")
            check(
                "sorting_37x77.map: directions match the band rule",
                sorting == generate_sorting_directions(sorting),
            )

    ring = folder / "ring_corridor.map"
    if ring.is_file():
        try:
            load_map(ring.read_text(), name="ring_corridor.map")
            check("ring_corridor.map: parses", True)
        except MapError as err:
            check("ring_corridor.map: parses", False, str(err))
    else:
        check("ring_corridor.map: present", False, "file missing")
    return checks


# -- entry points ---------------------------------------------------------------


def _cmd_simulate(args) -> int:
    spec = RunSpec(
        map=args.map, solver=args.solver, m=args.agents, w=parse_horizon(args.horizon),
        h=args.period, p=args.potential, subopt=args.subopt, timesteps=args.timesteps,
        seed=args.seed, reps=args.reps, time_limit=args.time_limit,
    )
    cells = expand(spec)
    for cell in cells:
        _simulation_config(cell)  # reject bad configs before any run starts
    outcomes = execute(cells, args.jobs)
    _emit(outcomes, args.out)
    return 1 if any(row["failed"] for row, _ in outcomes) else 0


def _cmd_sweep(args) -> int:
    config = Path(args.config)
    if not config.is_file():
        raise ValueError(f"config file {config} does not exist")
    try:
        specs = parse_sweep_config(config.read_text())
    except tomllib.TOMLDecodeError as err:
        raise ValueError(f"{config}: {err}") from None
    cells = [cell for spec in specs for cell in expand(spec)]
    for cell in cells:
        _simulation_config(cell)
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    outcomes = execute(cells, args.jobs)
    _emit(outcomes, str(outdir / "results.csv"))
    return 1 if any(row["failed"] for row, _ in outcomes) else 0


def _cmd_verify(args) -> int:
    checks = verify_fixtures(args.dir)
    for name, ok, detail in checks:
        mark = "ok" if ok else "FAIL"
        print(f"{mark:4s} {name}" + (f" ({detail})" if detail and not ok else ""))
    failed = sum(1 for _, ok, _ in checks if not ok)
    print(f"{len(checks) - failed}/{len(checks)} checks passed")
    return 0 if failed == 0 else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lifelong-mapf",
        description="Windowed multi-agent path-finding benchmarks.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run one configuration")
    sim.add_argument("--map", required=True,
                     help="bundled fixture (fulfillment, sorting, ring) or a map file")
    sim.add_argument("--solver", required=True, choices=sorted(SOLVERS))
    sim.add_argument("--agents", type=int, required=True, metavar="M")
    sim.add_argument("--horizon", required=True, metavar="W",
                     help="collision-resolution horizon; an integer or 'inf'")
    sim.add_argument("--period", type=int, required=True, metavar="H",
                     help="timesteps executed between replans")
    sim.add_argument("--potential", type=int, default=0, metavar="P",
                     help="minimum agents that must progress per window")
    sim.add_argument("--subopt", type=float, default=1.1, metavar="X",
                     help="suboptimality factor (ecbs only)")
    sim.add_argument("--timesteps", type=int, required=True, metavar="T")
    sim.add_argument("--seed", type=int, required=True, metavar="N")
    sim.add_argument("--reps", type=int, default=1, metavar="R",
                     help="repetitions on consecutive seeds")
    sim.add_argument("--out", default=None, metavar="results.csv",
                     help="CSV destination; horizon log goes next to it as .json")
    sim.add_argument("--time-limit", type=float, default=60.0, metavar="S",
                     help="per-episode solver budget in seconds")
    sim.add_argument("--jobs", type=int, default=None,
                     help="worker processes (default: all cores)")
    sim.set_defaults(run=_cmd_simulate)

    sweep = sub.add_parser("sweep", help="run the Cartesian product of a config file")
    sweep.add_argument("--config", required=True, metavar="FILE",
                       help="TOML file; every RunSpec field may hold a value list")
    sweep.add_argument("--out", required=True, metavar="DIR")
    sweep.add_argument("--jobs", type=int, default=None,
                       help="worker processes (default: all cores)")
    sweep.set_defaults(run=_cmd_sweep)

    verify = sub.add_parser("verify-fixtures", help="sanity-check the bundled maps")
    verify.add_argument("--dir", default=None,
                        help="check map copies in this directory instead")
    verify.set_defaults(run=_cmd_verify)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.run(args)
    except (ValueError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
