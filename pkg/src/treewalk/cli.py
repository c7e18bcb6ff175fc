"""
Command-line entry point.

Every command writes CSV or JSON to ``--out`` (stdout when omitted). Output
never contains timestamps or host details, so a fixed configuration always
produces byte-identical files. Exit status: 0 ok, 2 configuration error,
3 numerical failure, 4 I/O error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from typing import Optional

import numpy as np

from . import analytics, reduced, search, walk
from .errors import ConfigError, InvalidParameters, NoPeakError, NumericalFailure, TreeWalkError
from .maze import TreeMaze

COMMANDS = ("trace", "peaks", "eigen", "fit", "bench", "analytics")
SCHEMA_VERSION = 1

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4


@dataclass
class RunConfig:
    command: str
    n: Optional[int] = None
    m: Optional[int] = None
    n_range: Optional[list] = None
    m_range: Optional[list] = None
    f_leaf: object = 0
    frozen_root: Optional[list] = None
    seed: int = 0
    runs: int = 1000
    steps: Optional[int] = None
    out: Optional[str] = None
    format: str = "csv"
    threads: int = 1
    algorithms: list = field(default_factory=lambda: list(search.ALGORITHMS))
    engine: str = "reduced"
    p: list = field(default_factory=lambda: [1.0])

    def validate(self) -> "RunConfig":
        if self.command not in COMMANDS:
            raise ConfigError(f"unknown command {self.command!r}; choose from {', '.join(COMMANDS)}")
        if self.format not in ("csv", "json"):
            raise ConfigError("format must be csv or json")
        if not 0 <= int(self.seed) < 2 ** 64:
            raise ConfigError("seed must be a 64-bit unsigned integer")
        if self.threads < 1:
            raise ConfigError("threads must be >= 1")
        if self.steps is not None and self.steps < 0:
            raise ConfigError("steps must be >= 0")
        if not (self.f_leaf == "random" or isinstance(self.f_leaf, int)):
            raise ConfigError("f_leaf must be an integer or 'random'")
        return self

    def ns(self) -> list[int]:
        return _axis(self.n, self.n_range, "N", [2])

    def ms(self) -> list[int]:
        return _axis(self.m, self.m_range, "M", [4])


def _axis(single, rng, name, default) -> list[int]:
    if rng is not None:
        vals = sorted(set(int(v) for v in rng))
    elif single is not None:
        vals = [int(single)]
    else:
        vals = default
    if not vals:
        raise ConfigError(f"empty {name} grid")
    return vals


def parse_range(text: str) -> list[int]:
    """'2:6' (inclusive), '2-6' or '2,3,5'."""
    try:
        out = []
        for part in text.split(","):
            part = part.strip()
            for sep in (":", "-"):
                if sep in part[1:]:
                    lo, hi = part.split(sep, 1)
                    out.extend(range(int(lo), int(hi) + 1))
                    break
            else:
                out.append(int(part))
        return out
    except ValueError:
        raise ConfigError(f"cannot parse range {text!r}; use e.g. 1:10 or 2,3,4") from None


def _f_leaf_arg(text: str):
    if text == "random":
        return text
    try:
        return int(text)
    except ValueError:
        raise argparse.ArgumentTypeError("--f-leaf takes an integer or 'random'") from None


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="treewalk", description="Scattering quantum walks on N-Tree mazes.")
    ap.add_argument("--command", choices=COMMANDS)
    ap.add_argument("--config", help="RunConfig JSON file; flags override its values")
    ap.add_argument("--n", type=int)
    ap.add_argument("--m", type=int)
    ap.add_argument("--n-range", type=parse_range, dest="n_range")
    ap.add_argument("--m-range", type=parse_range, dest="m_range")
    ap.add_argument("--f-leaf", type=_f_leaf_arg, dest="f_leaf")
    ap.add_argument("--frozen-root", dest="frozen_root",
                    type=lambda s: [int(v) for v in s.split(",")],
                    help="parent,child of the live root edge (trace only)")
    ap.add_argument("--seed", type=int)
    ap.add_argument("--runs", type=int)
    ap.add_argument("--steps", type=int)
    ap.add_argument("--out")
    ap.add_argument("--format", choices=("csv", "json"))
    ap.add_argument("--threads", type=int)
    ap.add_argument("--algorithms", type=lambda s: s.split(","))
    ap.add_argument("--engine", choices=("reduced", "full"))
    ap.add_argument("--p", type=lambda s: [float(v) for v in s.split(",")])
    return ap


def load_config(argv=None) -> RunConfig:
    args = build_parser().parse_args(argv)
    values: dict = {}
    if args.config:
        try:
            with open(args.config) as fh:
                values = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file is not valid JSON: {exc}") from exc
        if not isinstance(values, dict):
            raise ConfigError("config file must hold a JSON object")
        known = {f.name for f in fields(RunConfig)}
        extra = sorted(set(values) - known)
        if extra:
            raise ConfigError(f"unknown config keys {extra}")
    for f in fields(RunConfig):
        v = getattr(args, f.name, None)
        if v is not None:
            values[f.name] = v
    if "command" not in values:
        raise ConfigError("no command given; pass --command or set it in --config")
    return RunConfig(**values).validate()


# -- output helpers -----------------------------------------------------------

def _num(v):
    return repr(float(v)) if isinstance(v, (float, np.floating)) else v


def _rows_csv(cols, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for r in rows:
        w.writerow([_num(r[c]) for c in cols])
    return buf.getvalue()


def _json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _jsonable(v):
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, np.generic):
        return v.item()
    return v


def _grid_map(fn, items, threads):
    if threads > 1 and len(items) > 1:
        with ProcessPoolExecutor(max_workers=threads) as ex:
            return list(ex.map(fn, items))
    return [fn(i) for i in items]


# -- commands -----------------------------------------------------------------

def _maze(cfg: RunConfig, N: int, M: int) -> TreeMaze:
    leaf = cfg.f_leaf
    if leaf == "random":
        leaf = int(np.random.default_rng(np.random.SeedSequence([cfg.seed, N, M])).integers(N ** M))
    maze = TreeMaze(N, M, leaf)
    if cfg.frozen_root is not None:
        maze = TreeMaze.from_dict({"N": N, "M": M, "f_leaf": leaf, "frozen_root": cfg.frozen_root})
    return maze


def cmd_trace(cfg: RunConfig) -> str:
    N, M = cfg.ns()[0], cfg.ms()[0]
    maze = _maze(cfg, N, M)
    n = cfg.steps if cfg.steps is not None else 4 * analytics.REFERENCE_STEP_MODEL.steps(N, maze.live_depth)
    f, p = walk.probability_trace(maze, n)
    if cfg.format == "csv":
        return walk.trace_csv_text(f, p)
    return _json({"schema_version": SCHEMA_VERSION, "maze": maze.to_dict(),
                  "f_prob": f.tolist(), "path_prob": p.tolist()})


def _peak_row(nm):
    N, M = nm
    ps, pp = search.path_peak(N, M)
    fs, fp = search.f_peak(N, M)
    return {"N": N, "M": M, "path_peak_step": ps, "path_peak_prob": pp,
            "f_peak_step": fs, "f_peak_prob": fp}


def cmd_peaks(cfg: RunConfig) -> str:
    grid = [(N, M) for N in cfg.ns() for M in cfg.ms()]
    rows = _grid_map(_peak_row, grid, cfg.threads)
    cols = ["N", "M", "path_peak_step", "path_peak_prob", "f_peak_step", "f_peak_prob"]
    if cfg.format == "csv":
        return _rows_csv(cols, rows)
    return _json({"schema_version": SCHEMA_VERSION, "peaks": rows})


def _eigen_row(nm):
    return reduced.eigen_report(*nm)


def cmd_eigen(cfg: RunConfig) -> str:
    grid = [(N, M) for N in cfg.ns() for M in cfg.ms()]
    rows = _grid_map(_eigen_row, grid, cfg.threads)
    if cfg.format == "json":
        if len(rows) == 1:
            return _json(rows[0])
        return _json({"schema_version": SCHEMA_VERSION, "reports": rows})
    cols = [k for k in rows[0] if k != "schema_version"]
    return _rows_csv(cols, rows)


def _theta(nm):
    N, M = nm
    return (N, M, reduced.eigensystem(reduced.reduced_engine(N, M)[1]).theta_lambda_degrees)


def cmd_fit(cfg: RunConfig) -> str:
    ns = cfg.ns() if (cfg.n is not None or cfg.n_range is not None) else list(range(2, 16))
    ms = cfg.ms() if (cfg.m is not None or cfg.m_range is not None) else list(range(1, 16))
    samples = _grid_map(_theta, [(N, M) for M in ms for N in ns], cfg.threads)
    model = analytics.fit_step_model(samples)
    if cfg.format == "json":
        grid = {"N": ns, "M": ms}
        return _json(analytics.fit_report(model, grid))
    rows = [{"N": N, "M": M, "theta_degrees": t, "fitted_degrees": model.epsilon(N, M),
             "relative_residual": model.residuals[f"{N},{M}"]} for N, M, t in samples]
    rows.sort(key=lambda r: (r["N"], r["M"]))
    return _rows_csv(["N", "M", "theta_degrees", "fitted_degrees", "relative_residual"], rows)


def cmd_bench(cfg: RunConfig) -> str:
    reports = []
    for N in cfg.ns():
        for M in cfg.ms():
            bc = search.BenchmarkConfig(N=N, M=M, runs=cfg.runs, seed=cfg.seed,
                                        algorithms=tuple(cfg.algorithms), engine=cfg.engine)
            reports.extend(search.run_benchmark(bc, workers=cfg.threads))
    reports.sort(key=lambda r: (r.N, r.M, r.algorithm))
    if cfg.format == "csv":
        return search.benchmark_csv(reports)
    out = []
    for r in reports:
        d = asdict(r)
        d["speedup"] = r.speedup
        out.append(d)
    return _json({"schema_version": SCHEMA_VERSION, "seed": cfg.seed, "results": _jsonable(out)})


def cmd_analytics(cfg: RunConfig) -> str:
    ms = cfg.ms() if (cfg.m is not None or cfg.m_range is not None) else [10, 20, 50]
    max_y = cfg.steps if cfg.steps else 10
    rows = analytics.analytics_table(ms, cfg.p, max_y)
    if cfg.format == "csv":
        return analytics.analytics_csv(rows)
    return _json({"schema_version": SCHEMA_VERSION, "rows": rows})


HANDLERS = {
    "trace": cmd_trace, "peaks": cmd_peaks, "eigen": cmd_eigen,
    "fit": cmd_fit, "bench": cmd_bench, "analytics": cmd_analytics,
}


def run(cfg: RunConfig) -> str:
    return HANDLERS[cfg.command](cfg)


def main(argv=None) -> int:
    try:
        cfg = load_config(argv)
        text = run(cfg)
    except (NumericalFailure, NoPeakError) as exc:
        print(f"treewalk: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ConfigError, InvalidParameters, TreeWalkError, ValueError, TypeError) as exc:
        print(f"treewalk: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"treewalk: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    try:
        if cfg.out:
            with open(cfg.out, "w", newline="") as fh:
                fh.write(text)
        else:
            sys.stdout.write(text)
    except OSError as exc:
        print(f"treewalk: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
