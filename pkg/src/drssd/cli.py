"""Command line and file plumbing.

JSON run configurations, scenario-matrix CSV ingestion, dispatch of the
bound pipelines (lower / upper / both), duality self-verification, and
parameter sweeps emitted as flat CSV tables for plotting.  Exit codes:
0 success, 1 solver failure, 2 configuration error.

Determinism contract: the same config and seed produce byte-identical CSV
outputs (reports carry wall-clock timings and are only value-identical).
"""

from __future__ import annotations

import argparse
import csv
import json
import shutil
import sys
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional

import numpy as np

from .ambiguity import worst_case_expectation_discrete
from .lower_bound import solve_lower
from .model import (
    Polyhedron,
    SsdInstance,
    SupportPolytope,
    WassersteinBall,
    eta_range,
    generate_grids,
)
from .oracle import transport_worst_case_lp
from .reports import BoundReport, PairedReport, relative_gap
from .upper_bound import sca_solve, split_eta_intervals

CONFIG_SCHEMA_VERSION = 1
EXIT_OK = 0
EXIT_SOLVER = 1
EXIT_CONFIG = 2
VERIFY_TOL = 1e-6

LOWER_DEFAULTS = {"n_xi": 100, "n_eta": 100, "mode": "grid", "seed": 0, "method": "auto"}
UPPER_DEFAULTS = {"k": 1, "start": "benchmark", "max_iter": 100, "tol": 1e-6}


class ConfigError(ValueError):
    """Bad configuration: wrong schema, missing field, missing file."""


class CsvParseError(ValueError):
    """Scenario CSV rejected; carries the file location of the offense."""

    def __init__(self, path, reason, row=None, column=None):
        self.path = str(path)
        self.row = row
        self.column = column
        self.reason = reason
        where = str(path)
        if row is not None:
            where += f": row {row}"
        if column is not None:
            where += f", column {column}"
        super().__init__(f"{where}: {reason}")


def load_returns_csv(path, has_header: bool = False, units: str = "fraction") -> np.ndarray:
    """Scenario matrix from CSV: rows are observations, columns assets.

    `units` declares what the file contains; "percent" entries are divided
    by 100 so everything downstream works in fractions, "fraction" entries
    pass through unchanged.
    """
    if units not in ("percent", "fraction"):
        raise ConfigError(f"units must be 'percent' or 'fraction', got {units!r}")
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"scenario file not found: {path}")
    rows = []
    width = None
    with open(path, newline="") as fh:
        for lineno, fields in enumerate(csv.reader(fh), start=1):
            if lineno == 1 and has_header:
                continue
            if not fields or all(not f.strip() for f in fields):
                continue
            if width is None:
                width = len(fields)
            if len(fields) != width:
                raise CsvParseError(
                    path, f"expected {width} fields, found {len(fields)}", row=lineno
                )
            parsed = []
            for cno, cell in enumerate(fields, start=1):
                try:
                    value = float(cell)
                except ValueError:
                    raise CsvParseError(
                        path, f"non-numeric cell {cell!r}", row=lineno, column=cno
                    ) from None
                if not np.isfinite(value):
                    raise CsvParseError(
                        path, f"nonfinite cell {cell!r}", row=lineno, column=cno
                    )
                parsed.append(value)
            rows.append(parsed)
    if not rows:
        raise CsvParseError(path, "no data rows")
    data = np.asarray(rows, dtype=float)
    if units == "percent":
        data = data / 100.0
    return data


@dataclass
class RunConfig:
    """Parsed run configuration: the instance plus pipeline settings."""

    instance: SsdInstance
    lower: dict
    upper: dict
    tolerances: Optional[dict]
    out_dir: Path
    sweep: dict = field(default_factory=dict)
    source: Optional[Path] = None
    raw: dict = field(default_factory=dict)


def _get(d: dict, dotted: str, default=None, required: bool = False):
    cur = d
    for part in dotted.split("."):
        if not isinstance(cur, dict) or part not in cur:
            if required:
                raise ConfigError(f"missing config field {dotted!r}")
            return default
        cur = cur[part]
    return cur


def _matrix(raw, dotted: str) -> np.ndarray:
    try:
        return np.asarray(raw, dtype=float)
    except (TypeError, ValueError):
        raise ConfigError(f"config field {dotted!r} is not a numeric array") from None


def parse_config(raw: dict, base_dir: Path, source: Optional[Path] = None,
                 units: Optional[str] = None) -> RunConfig:
    """Build a RunConfig from parsed JSON; all errors become ConfigError."""
    version = raw.get("schema_version")
    if version != CONFIG_SCHEMA_VERSION:
        raise ConfigError(
            f"unsupported schema_version {version!r} (expected {CONFIG_SCHEMA_VERSION})"
        )
    _get(raw, "instance", required=True)

    ball_d = _get(raw, "instance.ball", required=True)
    radius = float(_get(raw, "instance.ball.radius", required=True))
    if radius < 0:
        raise ConfigError("instance.ball.radius must be >= 0")
    if "samples" in ball_d:
        samples = _matrix(ball_d["samples"], "instance.ball.samples")
    elif "samples_csv" in ball_d:
        csv_path = Path(ball_d["samples_csv"])
        if not csv_path.is_absolute():
            csv_path = base_dir / csv_path
        samples = load_returns_csv(
            csv_path,
            has_header=bool(ball_d.get("csv_has_header", False)),
            units=units or ball_d.get("units", "fraction"),
        )
    else:
        raise ConfigError("instance.ball needs 'samples' or 'samples_csv'")

    decision_d = _get(raw, "instance.decision_set", required=True)
    objective = _get(raw, "instance.objective", required=True)
    half_norm = objective == "half_norm"
    benchmark = _matrix(_get(raw, "instance.benchmark", required=True), "instance.benchmark")
    n = benchmark.shape[0]
    try:
        instance = SsdInstance(
            objective=np.zeros(n) if half_norm else _matrix(objective, "instance.objective"),
            decision_set=Polyhedron(
                a_ub=_matrix(
                    _get(raw, "instance.decision_set.a_ub", required=True),
                    "instance.decision_set.a_ub",
                ),
                b_ub=_matrix(
                    _get(raw, "instance.decision_set.b_ub", required=True),
                    "instance.decision_set.b_ub",
                ),
                a_eq=_matrix(decision_d.get("a_eq", np.zeros((0, 0))), "decision_set.a_eq"),
                b_eq=_matrix(decision_d.get("b_eq", np.zeros(0)), "decision_set.b_eq"),
            ),
            benchmark=benchmark,
            ball=WassersteinBall(samples=samples, radius=radius),
            support=SupportPolytope(
                C=_matrix(_get(raw, "instance.support.C", required=True), "instance.support.C"),
                d=_matrix(_get(raw, "instance.support.d", required=True), "instance.support.d"),
            ),
            half_norm_objective=half_norm,
        )
    except ValueError as exc:
        raise ConfigError(f"invalid instance: {exc}") from None

    lower = dict(LOWER_DEFAULTS)
    lower.update(raw.get("lower", {}))
    upper = dict(UPPER_DEFAULTS)
    upper.update(raw.get("upper", {}))
    ks = upper["k"] if isinstance(upper["k"], list) else [upper["k"]]
    if not ks or any(int(k) < 1 for k in ks):
        raise ConfigError("upper.k must be a positive interval count (or list of them)")
    upper["k"] = [int(k) for k in ks]

    out_dir = Path(_get(raw, "output.dir", default="."))
    if not out_dir.is_absolute():
        out_dir = base_dir / out_dir
    return RunConfig(
        instance=instance,
        lower=lower,
        upper=upper,
        tolerances=raw.get("tolerances"),
        out_dir=out_dir,
        sweep=raw.get("sweep", {}),
        source=source,
        raw=raw,
    )


def load_config(path, units: Optional[str] = None) -> RunConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from None
    return parse_config(raw, base_dir=path.parent, source=path, units=units)


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _write_csv(path: Path, header: list, rows: list):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def _write_report(path: Path, payload: dict):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")


def _run_lower(cfg: RunConfig) -> tuple[BoundReport, dict]:
    grids = generate_grids(
        cfg.instance,
        mode=cfg.lower["mode"],
        n_xi=int(cfg.lower["n_xi"]),
        n_eta=int(cfg.lower["n_eta"]),
        seed=int(cfg.lower["seed"]),
    )
    report = solve_lower(
        cfg.instance, grids, method=cfg.lower["method"], tols=cfg.tolerances
    )
    return report, {"n_xi": grids.n_xi, "n_eta": grids.n_eta}


def _run_upper(cfg: RunConfig) -> list[BoundReport]:
    start = cfg.upper["start"]
    z_start = None if start == "benchmark" else np.asarray(start, dtype=float)
    rng = eta_range(cfg.instance)
    reports = []
    for k in cfg.upper["k"]:
        split = split_eta_intervals(rng, int(k))
        reports.append(
            sca_solve(
                cfg.instance,
                split,
                z_start=z_start,
                max_iter=int(cfg.upper["max_iter"]),
                tol=float(cfg.upper["tol"]),
                tols=cfg.tolerances,
            )
        )
    return reports


def run(cfg: RunConfig, command: str) -> int:
    """Execute one pipeline command and write report.json / results.csv."""
    out = cfg.out_dir
    if command == "lower":
        report, sizes = _run_lower(cfg)
        _write_report(out / "report.json", {"command": "lower", "lower": report.to_dict()})
        _write_csv(
            out / "results.csv",
            ["n_xi", "n_eta", "value", "iterations", "status"],
            [[sizes["n_xi"], sizes["n_eta"], report.value, report.iterations, report.status]],
        )
        return EXIT_OK
    if command == "upper":
        reports = _run_upper(cfg)
        _write_report(
            out / "report.json",
            {"command": "upper", "upper": [r.to_dict() for r in reports]},
        )
        _write_csv(
            out / "results.csv",
            ["K", "value", "iterations", "status"],
            [[r.config["K"], r.value, r.iterations, r.status] for r in reports],
        )
        return EXIT_OK
    if command == "both":
        lower, sizes = _run_lower(cfg)
        uppers = _run_upper(cfg)
        paired = PairedReport(lower=lower, upper=uppers[-1])
        payload = paired.to_dict()
        payload["command"] = "both"
        payload["upper_all"] = [r.to_dict() for r in uppers]
        _write_report(out / "report.json", payload)
        _write_csv(
            out / "results.csv",
            ["n_xi", "n_eta", "K", "lower", "upper", "gap"],
            [
                [
                    sizes["n_xi"],
                    sizes["n_eta"],
                    r.config["K"],
                    lower.value,
                    r.value,
                    relative_gap(lower.value, r.value),
                ]
                for r in uppers
            ],
        )
        return EXIT_OK
    raise ConfigError(f"unknown command {command!r}")


def duality_probe_trials(trials: int, seed: int, tol: float = VERIFY_TOL):
    """Worst-case expectation duality on random finite instances.

    Each trial draws a finite support, an empirical subsample, a payoff
    vector, and a radius, then compares the closed-form dual evaluation
    against the primal transport LP.  Returns (agreements, worst gap).
    """
    rng = np.random.default_rng(seed)
    ok = 0
    worst = 0.0
    for _ in range(trials):
        dim = int(rng.integers(1, 4))
        m = int(rng.integers(2, 7))
        n_samp = int(rng.integers(1, 5))
        support = rng.normal(size=(m, dim))
        idx = rng.integers(0, m, size=n_samp)
        psi = rng.normal(size=m)
        ball = WassersteinBall(samples=support[idx], radius=float(rng.uniform(0.0, 2.0)))
        dual, _ = worst_case_expectation_discrete(psi, support, ball, sample_indices=idx)
        primal, _ = transport_worst_case_lp(psi, support, ball, sample_indices=idx)
        gap = abs(dual - primal)
        worst = max(worst, gap)
        if gap <= tol:
            ok += 1
    return ok, worst


def run_verify(trials: int, seed: int, out_dir: Optional[Path] = None) -> int:
    ok, worst = duality_probe_trials(trials, seed)
    line = f"{ok}/{trials} worst-case expectation duality agreements (tol {VERIFY_TOL:g})"
    print(line)
    if out_dir is not None:
        _write_report(
            Path(out_dir) / "verify.json",
            {"command": "verify", "trials": trials, "agreements": ok,
             "worst_gap": worst, "seed": seed, "tolerance": VERIFY_TOL},
        )
    return EXIT_OK if ok == trials else EXIT_SOLVER


def _with_radius(cfg: RunConfig, radius: float) -> RunConfig:
    inst = cfg.instance
    return RunConfig(
        instance=SsdInstance(
            objective=inst.objective,
            decision_set=inst.decision_set,
            benchmark=inst.benchmark,
            ball=WassersteinBall(samples=inst.ball.samples, radius=radius),
            support=inst.support,
            half_norm_objective=inst.half_norm_objective,
        ),
        lower=cfg.lower,
        upper=cfg.upper,
        tolerances=cfg.tolerances,
        out_dir=cfg.out_dir,
        sweep=cfg.sweep,
        source=cfg.source,
        raw=cfg.raw,
    )


def emit_sweep(cfg: RunConfig, sweep: Optional[dict] = None) -> list:
    """One (lower, upper, gap) row per sweep point, written to sweep.csv.

    Solver failures do not abort the sweep; the failing point's row keeps
    the error text in its status column.  Rows follow the input order.
    """
    sweep = cfg.sweep if sweep is None else sweep
    kinds = [k for k in ("epsilons", "intervals", "sizes") if k in sweep]
    if len(kinds) != 1:
        raise ConfigError("sweep needs exactly one of 'epsilons', 'intervals', 'sizes'")
    kind = kinds[0]
    points = sweep[kind]

    rows = []
    if kind == "epsilons":
        header = ["epsilon", "lower", "upper", "gap", "status"]
        for eps in points:
            try:
                sub = _with_radius(cfg, float(eps))
                low, _ = _run_lower(sub)
                up = _run_upper(sub)[-1]
                rows.append([float(eps), low.value, up.value,
                             relative_gap(low.value, up.value), "ok"])
            except (ValueError, RuntimeError) as exc:
                rows.append([float(eps), None, None, None, f"error: {exc}"])
    elif kind == "intervals":
        header = ["K", "lower", "upper", "gap", "status"]
        low = None
        try:
            low, _ = _run_lower(cfg)
        except (ValueError, RuntimeError):
            pass
        for k in points:
            try:
                sub_upper = dict(cfg.upper)
                sub_upper["k"] = [int(k)]
                sub = RunConfig(
                    instance=cfg.instance, lower=cfg.lower, upper=sub_upper,
                    tolerances=cfg.tolerances, out_dir=cfg.out_dir,
                    sweep=cfg.sweep, source=cfg.source, raw=cfg.raw,
                )
                up = _run_upper(sub)[-1]
                lval = low.value if low is not None else None
                gap = relative_gap(low.value, up.value) if low is not None else None
                rows.append([int(k), lval, up.value, gap, "ok"])
            except (ValueError, RuntimeError) as exc:
                rows.append([int(k), low.value if low is not None else None,
                             None, None, f"error: {exc}"])
    else:
        header = ["n_xi", "n_eta", "lower", "upper", "gap", "status"]
        up = None
        try:
            up = _run_upper(cfg)[-1]
        except (ValueError, RuntimeError):
            pass
        for n_xi, n_eta in points:
            try:
                sub_lower = dict(cfg.lower)
                sub_lower["n_xi"] = int(n_xi)
                sub_lower["n_eta"] = int(n_eta)
                sub = RunConfig(
                    instance=cfg.instance, lower=sub_lower, upper=cfg.upper,
                    tolerances=cfg.tolerances, out_dir=cfg.out_dir,
                    sweep=cfg.sweep, source=cfg.source, raw=cfg.raw,
                )
                low, sizes = _run_lower(sub)
                uval = up.value if up is not None else None
                gap = relative_gap(low.value, up.value) if up is not None else None
                rows.append([sizes["n_xi"], sizes["n_eta"], low.value, uval, gap, "ok"])
            except (ValueError, RuntimeError) as exc:
                rows.append([int(n_xi), int(n_eta), None,
                             up.value if up is not None else None, None, f"error: {exc}"])
    _write_csv(cfg.out_dir / "sweep.csv", header, rows)
    return rows


def bundled_example_text() -> str:
    return resources.files("drssd").joinpath("data/example1.json").read_text()


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="drssd",
        description="Lower and upper bounds for robust SSD-constrained optimization.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, blurb in (
        ("lower", "discretized lower-bound LP"),
        ("upper", "split-and-dual upper bound via alternating SOCP solves"),
        ("both", "both bounds plus their relative gap"),
        ("sweep", "per-point bound table over epsilons, interval counts, or grid sizes"),
    ):
        p = sub.add_parser(name, help=blurb)
        p.add_argument("--config", required=True, help="JSON run configuration")
        p.add_argument("--seed", type=int, default=None, help="override lower-grid seed")
        p.add_argument("--out", default=None, help="override output directory")
        p.add_argument("--units", choices=("percent", "fraction"), default=None,
                       help="units of the scenario CSV, if one is referenced")
    p = sub.add_parser("verify", help="self-check: duality agreement on random probes")
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None)
    p = sub.add_parser("example", help="print the bundled example configuration")
    p.add_argument("--out", default=None, help="also copy example1.json to this directory")

    args = parser.parse_args(argv)
    try:
        if args.command == "verify":
            return run_verify(args.trials, args.seed,
                              Path(args.out) if args.out else None)
        if args.command == "example":
            text = bundled_example_text()
            if args.out:
                dest = Path(args.out)
                dest.mkdir(parents=True, exist_ok=True)
                (dest / "example1.json").write_text(text)
            print(text, end="")
            return EXIT_OK
        cfg = load_config(args.config, units=args.units)
        if args.seed is not None:
            cfg.lower = dict(cfg.lower, seed=args.seed)
        if args.out is not None:
            cfg.out_dir = Path(args.out)
        if args.command == "sweep":
            emit_sweep(cfg)
            return EXIT_OK
        return run(cfg, args.command)
    except (ConfigError, CsvParseError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ValueError, RuntimeError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
