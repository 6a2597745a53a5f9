"""Command-line interface: solve, validate-pipe, generate, batch, report.

Every failure ends with one line ``error: <kind>: <message>`` on stderr and
a kind-specific exit code (see ``EXIT_CODES``).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import shutil
import sys
import tempfile
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import fields
from pathlib import Path

from . import __version__, report
from .instances import GeneratorError, expand_batch, generate, instance_name, write_instance
from .milp import ModelError
from .network import NetworkFormatError, load_network, natural_key, segment, validate
from .orchestrator import (PipelineCase, RunResult, SolverConfig, Termination, read_run_record, run, run_both,
                           validate_single_pipe)
from .properties import PropertyRangeError, PropertyTableError, load_tables
from .thermal import SoilEnvironment

log = logging.getLogger("co2sizing")

EXIT_CODES = {
    "ok": 0,
    "error": 1,
    "usage": 2,
    "io": 3,
    "infeasible": 4,
    "iteration-limit": 5,
    "cycling": 6,
    "input": 7,
}
TERMINATION_KIND = {
    Termination.INFEASIBLE: "infeasible",
    Termination.ITERATION_LIMIT: "iteration-limit",
    Termination.CYCLING: "cycling",
}


class CliError(Exception):
    def __init__(self, kind: str, message: str):
        super().__init__(message)
        self.kind = kind


# -- configuration ---------------------------------------------------------

def _read_json(path: str | Path) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except OSError as exc:
        raise CliError("io", f"{path}: {exc.strerror or exc}") from exc
    except json.JSONDecodeError as exc:
        raise CliError("input", f"{path}: invalid JSON ({exc.msg} at line {exc.lineno})") from exc


def _config_doc(args) -> dict:
    doc = _read_json(args.config) if getattr(args, "config", None) else {}
    unknown = sorted(set(doc) - {"solver", "soil", "case"})
    if unknown:
        raise CliError("input", f"config: unknown sections {', '.join(unknown)}")
    return doc


def solver_config(args, doc: dict, **defaults) -> SolverConfig:
    known = {f.name for f in fields(SolverConfig)}
    values = dict(defaults)
    section = doc.get("solver", {})
    bad = sorted(set(section) - known)
    if bad:
        raise CliError("input", f"config: unknown solver fields {', '.join(bad)}")
    values.update(section)
    for flag, name in (("seg_len", "seg_len"), ("eps_p", "eps_p"), ("eps_t", "eps_t"), ("max_iter", "max_iter"),
                       ("exit_window", "exit_window"), ("sat_margin", "sat_margin")):
        v = getattr(args, flag, None)
        if v is not None:
            values[name] = v
    if getattr(args, "strict_clamp", False):
        values["strict_clamp"] = True
    if getattr(args, "exit_strategy", None) is not None:
        values["exit_strategy"] = args.exit_strategy == "on"
    try:
        return SolverConfig(**values)
    except (TypeError, ValueError) as exc:
        raise CliError("input", f"config: {exc}") from exc


def soil_config(doc: dict) -> SoilEnvironment:
    try:
        return SoilEnvironment(**doc.get("soil", {}))
    except (TypeError, ValueError) as exc:
        raise CliError("input", f"config: soil: {exc}") from exc


def _tables(path):
    try:
        return load_tables(path)
    except FileNotFoundError as exc:
        raise CliError("io", str(exc)) from exc
    except PropertyTableError as exc:
        raise CliError("input", str(exc)) from exc


def _network(path):
    try:
        net = load_network(path)
    except OSError as exc:
        raise CliError("io", f"{path}: {exc.strerror or exc}") from exc
    except NetworkFormatError as exc:
        raise CliError("input", str(exc)) from exc
    except (TypeError, ValueError) as exc:
        raise CliError("input", f"{path}: {exc}") from exc
    bad = validate(net)
    if bad:
        raise CliError("input", f"{path}: invalid network: {bad[0]}")
    return net


class _Staging:
    """Collect outputs in a temporary directory and move them in only on success."""

    def __init__(self, out: Path):
        self.out = out
        try:
            out.mkdir(parents=True, exist_ok=True)
            self.dir = Path(tempfile.mkdtemp(prefix=".staging-", dir=out))
        except OSError as exc:
            raise CliError("io", f"{out}: {exc.strerror or exc}") from exc

    def path(self, name: str) -> Path:
        return self.dir / name

    def commit(self) -> None:
        try:
            for f in sorted(self.dir.iterdir()):
                os.replace(f, self.out / f.name)
        except OSError as exc:
            raise CliError("io", f"{self.out}: {exc.strerror or exc}") from exc
        finally:
            shutil.rmtree(self.dir, ignore_errors=True)

    def discard(self) -> None:
        shutil.rmtree(self.dir, ignore_errors=True)


def _run_safely(fn, *a, **kw):
    try:
        return fn(*a, **kw)
    except PropertyRangeError as exc:
        raise CliError("input", f"property lookup outside table range: {exc}") from exc
    except ModelError as exc:
        raise CliError("input", str(exc)) from exc


# -- outputs ---------------------------------------------------------------

def write_solution_outputs(result: RunResult, tables, stage: _Staging, svg: bool) -> None:
    report.write_csv(stage.path("solution.csv"), ("pipe", "diameter_mm", "length_m", "cost"),
                     report.solution_rows(result))
    report.write_csv(stage.path("nodes.csv"), ("node", "p", "T"), report.node_rows(result))
    for entry in result.network.entries:
        prof = report.path_profile(result, entry, tables)
        name = report.safe_name(entry)
        report.write_csv(stage.path(f"profile_{name}.csv"), report.PROFILE_COLUMNS, prof.rows)
        if svg:
            report.plot_profile(prof, stage.path(f"profile_{name}.svg"))
    if svg:
        report.plot_topology(result, stage.path("topology_p.svg"), "p")
        report.plot_topology(result, stage.path("topology_T.svg"), "T")


def _summary(result: RunResult) -> dict:
    rec = result.record
    out = {"termination": rec.termination.value, "iterations": len(rec.iterations)}
    if result.solution is not None and result.solution.pipe_diameters:
        out["cost"] = result.solution.cost
        out["length_km_by_diameter_mm"] = {f"{d:g}": round(km, 6)
                                          for d, km in report.length_by_diameter(result).items()}
    if rec.detail:
        out["detail"] = rec.detail
    return out


# -- commands --------------------------------------------------------------

def cmd_solve(args) -> int:
    doc = _config_doc(args)
    config = solver_config(args, doc)
    soil = soil_config(doc)
    net = _network(args.network)
    tables = _tables(args.tables)
    stage = _Staging(Path(args.out))
    try:
        result = _run_safely(run, segment(net, config.seg_len), tables, soil, config)
        rec = result.record
        rec.write(stage.path("run.jsonl"), stage.path("run.timing.jsonl"))
        feasible = result.solution is not None and bool(result.solution.pressures)
        if feasible:
            write_solution_outputs(result, tables, stage, args.svg)
        if args.svg:
            report.plot_run(rec, stage.path("run.svg"))
    except BaseException:
        stage.discard()
        raise
    stage.commit()
    print(json.dumps(_summary(result), sort_keys=True))
    kind = TERMINATION_KIND.get(rec.termination)
    if kind is not None:
        raise CliError(kind, f"run ended {rec.termination.value}" + (f": {rec.detail}" if rec.detail else ""))
    return 0


def cmd_validate_pipe(args) -> int:
    doc = _config_doc(args)
    config = solver_config(args, doc)
    try:
        case = PipelineCase(**doc.get("case", {}))
    except TypeError as exc:
        raise CliError("input", f"config: case: {exc}") from exc
    tables = _tables(args.tables)
    stage = _Staging(Path(args.out))
    try:
        prof = _run_safely(validate_single_pipe, case, tables, config)
        report.write_csv(stage.path("validation_profile.csv"), ("x", "p", "T", "rho"),
                         [(pt.x, pt.p, pt.T, pt.density) for pt in prof.points])
        if prof.result is not None:
            prof.result.record.write(stage.path("run.jsonl"), stage.path("run.timing.jsonl"))
        if args.svg:
            rows = [(pt.x, pt.p, pt.T, 0.0, case.mass_flow, pt.density, case.diameter * 1000.0)
                    for pt in prof.points]
            report.plot_profile(report.PathProfile("in", rows), stage.path("validation_profile.svg"))
    except BaseException:
        stage.discard()
        raise
    stage.commit()
    summary = {"inlet_pressure": prof.inlet.p, "outlet_pressure": prof.outlet.p,
               "outlet_temperature": prof.outlet.T, "segments": len(prof.points) - 1}
    if prof.result is not None:
        summary["termination"] = prof.result.record.termination.value
        summary["iterations"] = len(prof.result.record.iterations)
    print(json.dumps(summary, sort_keys=True))
    return 0


def cmd_generate(args) -> int:
    doc = _read_json(args.spec)
    if args.seed is not None:
        doc["seed"] = args.seed
    try:
        specs = expand_batch(doc)
    except (GeneratorError, TypeError) as exc:
        raise CliError("input", f"{args.spec}: {exc}") from exc
    stage = _Staging(Path(args.out))
    try:
        for spec in specs:
            try:
                net = generate(spec)
            except GeneratorError as exc:
                raise CliError("input", f"{instance_name(spec)}: {exc}") from exc
            write_instance(spec, net, stage.dir)
    except BaseException:
        stage.discard()
        raise
    stage.commit()
    print(json.dumps({"instances": len(specs), "out": str(args.out)}))
    return 0


def _batch_one(task):
    path, config_dict, soil_dict, table_dir = task
    config = SolverConfig(**config_dict)
    soil = SoilEnvironment(**soil_dict)
    name = Path(path).stem
    row = {"instance": name}
    try:
        net = load_network(path)
        bad = validate(net)
        if bad:
            raise ValueError(f"invalid network: {bad[0]}")
        seg = segment(net, config.seg_len)
        row.update(entries=len(net.entries), pumps=len(net.pumps), segments=len(seg.pipes))
        t0 = time.perf_counter()
        off, on = run_both(seg, load_tables(table_dir), soil, config)
        wall = time.perf_counter() - t0
    except Exception as exc:  # recorded per instance; the batch continues
        row.update(error=f"{type(exc).__name__}: {exc}")
        return row, None, None, {}
    row.update(
        off_termination=off.record.termination.value, off_iterations=len(off.record.iterations),
        on_termination=on.record.termination.value, on_iterations=len(on.record.iterations),
        exit_strategy_iteration=on.record.exit_strategy_iteration,
        off_cost=off.record.iterations[-1].cost, on_cost=on.record.iterations[-1].cost)
    both = off.record.termination.converged and on.record.termination.converged
    row["same_diameters"] = (off.record.iterations[-1].diameters == on.record.iterations[-1].diameters
                             if both else None)
    timing = {"off": sum(sum(s.timing.values()) for s in off.record.iterations),
              "on": sum(sum(s.timing.values()) for s in on.record.iterations), "wall": wall}
    return row, off.record.lines(), on.record.lines(), timing


SUMMARY_COLUMNS = ("instance", "entries", "pumps", "segments", "off_termination", "off_iterations",
                   "on_termination", "on_iterations", "exit_strategy_iteration", "off_cost", "on_cost",
                   "same_diameters", "error")


def summarize(rows: list[dict]) -> dict:
    ok = [r for r in rows if "error" not in r]
    count = lambda key, val: sum(1 for r in ok if r.get(key) == val)  # noqa: E731
    reasons = sorted({r[k] for r in ok for k in ("off_termination", "on_termination")})
    conv = {t.value for t in Termination if t.converged}
    both = [r for r in ok if r["off_termination"] in conv and r["on_termination"] in conv]
    return {
        "instances": len(rows),
        "errors": len(rows) - len(ok),
        "converged_off": sum(1 for r in ok if r["off_termination"] in conv),
        "converged_on": sum(1 for r in ok if r["on_termination"] in conv),
        "converged_both": len(both),
        "identical_diameters_when_both": sum(1 for r in both if r["same_diameters"]),
        "off_reasons": {k: count("off_termination", k) for k in reasons if count("off_termination", k)},
        "on_reasons": {k: count("on_termination", k) for k in reasons if count("on_termination", k)},
    }


def cmd_batch(args) -> int:
    doc = _config_doc(args)
    config = solver_config(args, doc, eps_p=1.0)
    soil = soil_config(doc)
    src = Path(args.dir)
    if not src.is_dir():
        raise CliError("io", f"{src}: not a directory")
    table_dir = args.tables
    _tables(table_dir)  # fail early on a bad table directory
    paths = sorted((p for p in src.glob("*.json") if not p.name.endswith(".meta.json")),
                   key=lambda p: natural_key(p.name))
    cfg = {f.name: getattr(config, f.name) for f in fields(SolverConfig)}
    soil_dict = {"temperature": soil.temperature, "conductivity": soil.conductivity}
    tasks = [(str(p), cfg, soil_dict, table_dir) for p in paths]
    out = Path(args.out)
    stage = _Staging(out)
    try:
        if args.workers > 1 and len(tasks) > 1:
            with ProcessPoolExecutor(max_workers=args.workers) as pool:
                results = list(pool.map(_batch_one, tasks))
        else:
            results = []
            for i, t in enumerate(tasks, 1):
                results.append(_batch_one(t))
                log.info("batch: %d/%d %s", i, len(tasks), results[-1][0]["instance"])
        results.sort(key=lambda r: natural_key(r[0]["instance"]))
        rows = [r[0] for r in results]
        runs = stage.path("runs")
        runs.mkdir()
        for row, off_lines, on_lines, _ in results:
            if off_lines is not None:
                (runs / f"{row['instance']}.off.jsonl").write_text("\n".join(off_lines) + "\n")
                (runs / f"{row['instance']}.on.jsonl").write_text("\n".join(on_lines) + "\n")
        report.write_csv(stage.path("summary.csv"), SUMMARY_COLUMNS,
                         [tuple("" if row.get(c) is None else row.get(c) for c in SUMMARY_COLUMNS) for row in rows])
        summary = summarize(rows)
        stage.path("summary.json").write_text(json.dumps(summary, indent=1, sort_keys=True) + "\n")
        timing_rows = [(r[0]["instance"], r[3].get("off", ""), r[3].get("on", ""), r[3].get("wall", ""))
                       for r in results]
        report.write_csv(stage.path("timing.csv"), ("instance", "runtime_off_s", "runtime_on_s", "wall_s"),
                         timing_rows)
        if args.svg:
            report.plot_runtime_scatter([(r[3]["off"], r[3]["on"]) for r in results if r[3]],
                                        stage.path("runtime_scatter.svg"))
    except BaseException:
        stage.discard()
        raise
    if (out / "runs").exists():
        shutil.rmtree(out / "runs")
    stage.commit()
    print(json.dumps(summary, sort_keys=True))
    return 0


def cmd_report(args) -> int:
    try:
        rec = read_run_record(args.record)
    except OSError as exc:
        raise CliError("io", f"{args.record}: {exc.strerror or exc}") from exc
    except (ValueError, KeyError, TypeError) as exc:
        raise CliError("input", f"{args.record}: not a run record ({exc})") from exc
    for line in report.describe_record(rec):
        print(line)
    if args.svg:
        stage = _Staging(Path(args.out))
        try:
            report.plot_run(rec, stage.path(Path(args.record).stem + ".svg"))
        except BaseException:
            stage.discard()
            raise
        stage.commit()
    if rec.termination is not None and rec.termination.converged and not report.criterion_holds(rec):
        raise CliError("error", "logged snapshots do not satisfy the stopping rule")
    return 0


# -- parser ----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    solver = argparse.ArgumentParser(add_help=False)
    g = solver.add_argument_group("solver options")
    g.add_argument("--config", help="JSON file with 'solver', 'soil' (and for validate-pipe 'case') sections")
    g.add_argument("--seg-len", type=float, help="segment length in m (default 500)")
    g.add_argument("--eps-p", type=float, help="pressure tolerance in bar (default 0.1; batch 1.0)")
    g.add_argument("--eps-t", type=float, help="temperature tolerance in K (default 0.1)")
    g.add_argument("--max-iter", type=int, help="maximal outer iterations (default 50)")
    g.add_argument("--exit-window", type=int, help="unchanged iterations before the exit strategy (default 5)")
    g.add_argument("--sat-margin", type=float, help="margin above saturation pressure in bar (default 5)")
    g.add_argument("--strict-clamp", action="store_true", help="fail on property lookups outside the tables")
    g.add_argument("--tables", help="property table directory (default: $CO2SIZING_TABLES or bundled tables)")

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", default=".", help="output directory (default: current directory)")
    common.add_argument("--svg", action="store_true", help="also write SVG figures")
    common.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")

    ap = argparse.ArgumentParser(prog="co2sizing", description="Pipe sizing for tree-shaped CO2 networks.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", parents=[solver, common], help="size the pipes of a network")
    p.add_argument("network", help="network JSON file")
    p.add_argument("tables_pos", nargs="?", metavar="tables", help="property table directory")
    p.add_argument("--exit-strategy", choices=("on", "off"), help="pin stable diameters (default on)")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("validate-pipe", parents=[solver, common], help="single fixed-diameter pipeline check")
    p.set_defaults(func=cmd_validate_pipe)

    p = sub.add_parser("generate", parents=[common], help="generate random tree instances")
    p.add_argument("spec", help="generator spec JSON (cities, instances, seed, overrides)")
    p.add_argument("--seed", type=int, help="base seed (overrides the spec)")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("batch", parents=[solver, common], help="robustness run with and without exit strategy")
    p.add_argument("dir", help="directory of network JSON files")
    p.add_argument("--workers", type=int, default=1, help="parallel worker processes (default 1)")
    p.set_defaults(func=cmd_batch)

    p = sub.add_parser("report", parents=[common], help="summarise a run record")
    p.add_argument("record", help="run.jsonl written by solve")
    p.set_defaults(func=cmd_report)
    return ap


def main(argv: list[str] | None = None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    if getattr(args, "tables_pos", None):
        args.tables = args.tables_pos
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc.kind}: {exc}", file=sys.stderr)
        return EXIT_CODES[exc.kind]
    except OSError as exc:
        print(f"error: io: {exc}", file=sys.stderr)
        return EXIT_CODES["io"]
    except Exception as exc:  # last resort: still one parseable line
        print(f"error: error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_CODES["error"]


if __name__ == "__main__":
    sys.exit(main())
