"""Command-line entry point.

Exit codes: 0 success, 1 usage error, 2 data error (missing or malformed
inputs, infeasible requests).
"""

from __future__ import annotations

import argparse
import contextlib
import csv
import hashlib
import io
import json
import os
import platform
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np
import scipy

from . import __version__

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


# --------------------------------------------------------------------------
# run context


class Run:
    """Per-invocation plumbing: config, parallel map and the --out directory."""

    def __init__(self, args):
        self.args = args
        self.started = time.time()
        self.inputs: list[str] = []
        self.artifacts: list[str] = []
        self.config = self.load_json(args.config) if args.config else {}
        if not isinstance(self.config, dict):
            raise DataError(f"{args.config}: config must be a JSON object")
        self._pool = None

    def path(self, p: str) -> str:
        if not os.path.isfile(p):
            raise DataError(f"{p}: no such file")
        self.inputs.append(p)
        return p

    def load_json(self, p: str):
        self.path(p)
        try:
            with open(p, encoding="utf-8") as fh:
                return json.load(fh)
        except json.JSONDecodeError as exc:
            raise DataError(f"{p}: malformed JSON: {exc}") from None

    def map_fn(self):
        jobs = self.args.jobs
        if jobs <= 1:
            return map
        self._pool = ProcessPoolExecutor(max_workers=jobs)
        pool = self._pool
        return lambda fn, items: pool.map(fn, list(items), chunksize=8)

    def close(self):
        if self._pool is not None:
            self._pool.shutdown()

    def artifact(self, name: str, text: str) -> None:
        if not self.args.out:
            return
        out = Path(self.args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / name).write_text(text, encoding="utf-8")
        self.artifacts.append(name)

    def manifest(self, command: str) -> None:
        if not self.args.out:
            return
        inputs = {}
        for p in dict.fromkeys(self.inputs):
            inputs[p] = hashlib.sha256(Path(p).read_bytes()).hexdigest()
        manifest = {
            "command": command,
            "argv": self.args.argv,
            "seed": self.args.seed,
            "jobs": self.args.jobs,
            "inputs": inputs,
            "artifacts": self.artifacts,
            "versions": {"memdse": __version__, "python": platform.python_version(),
                         "numpy": np.__version__, "scipy": scipy.__version__},
            "wall_time_s": time.time() - self.started,
        }
        out = Path(self.args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n")

    def evolution(self, base, *keys):
        """EvolutionConfig from defaults, the config file, then CLI flags."""
        overrides = dict(self.config.get("evolution", {}))
        for key in keys:
            val = getattr(self.args, key, None)
            if val is not None:
                overrides[key] = val
        overrides["seed"] = self.args.seed
        try:
            return base.updated(**overrides)
        except TypeError as exc:
            raise DataError(f"bad evolution parameter: {exc}") from None


def _dump(obj) -> str:
    return json.dumps(obj, indent=1, sort_keys=True) + "\n"


# --------------------------------------------------------------------------
# trace


def cmd_trace_gen_mem(run: Run) -> str:
    from .traces import MemTraceSpec, format_mem_trace, gen_synthetic_mem_trace

    a = run.args
    spec = MemTraceSpec(length=a.length, instr_share=a.instr_share, working_set_bytes=a.working_set,
                        stride_share=a.stride_share, seed=a.seed)
    return format_mem_trace(gen_synthetic_mem_trace(spec))


def _parse_classes(text: str) -> dict[int, float]:
    try:
        pairs = [item.split(":") for item in text.split(",") if item.strip()]
        return {int(s): float(w) for s, w in pairs}
    except ValueError:
        raise UsageError(f"--classes expects size:weight,... not {text!r}") from None


def cmd_trace_gen_alloc(run: Run) -> str:
    from .traces import AllocTraceSpec, format_alloc_trace, gen_synthetic_alloc_trace

    a = run.args
    spec = AllocTraceSpec(events=a.events, size_classes=_parse_classes(a.classes),
                          mean_lifetime=a.mean_lifetime, seed=a.seed)
    return format_alloc_trace(gen_synthetic_alloc_trace(spec))


# --------------------------------------------------------------------------
# cache


def _cache_inputs(run: Run):
    from .cache import CacheConfig, DramParams, PreparedTrace, TechnologyTable, default_technology_table
    from .cacheopt import BASELINES
    from .traces import read_mem_trace

    a = run.args
    trace = PreparedTrace.from_refs(read_mem_trace(run.path(a.trace)))
    if getattr(a, "tech", None):
        with open(run.path(a.tech), encoding="utf-8") as fh:
            tech = TechnologyTable.from_csv(fh)
    else:
        tech = default_technology_table()
    dram = DramParams(**run.config.get("dram", {}))
    cfg = run.config
    if "icache" in cfg and "dcache" in cfg:
        config = CacheConfig.from_json(cfg)
    else:
        config = BASELINES["baseline1"]
    return trace, tech, dram, config


def cmd_cache_sim(run: Run) -> str:
    from .cache import simulate

    trace, _, _, config = _cache_inputs(run)
    stats = simulate(trace, config, seed=run.args.seed)
    return _dump(stats.__dict__)


def cmd_cache_model(run: Run) -> str:
    from .cache import energy, exec_time, simulate

    trace, tech, dram, config = _cache_inputs(run)
    stats = simulate(trace, config, seed=run.args.seed)
    return _dump({"config": config.to_json(), "stats": stats.__dict__,
                  "time_s": exec_time(stats, config, tech, dram),
                  "energy_j": energy(stats, config, tech, dram, run.args.extended_energy)})


def cmd_cache_opt(run: Run) -> str:
    from .cacheopt import CacheEvaluator, default_cache_config, improvement_report, load_space_config, optimize
    from .reports import cache_front_rows, emit_pareto_report

    trace, tech, dram, _ = _cache_inputs(run)
    space, baselines = load_space_config(run.config)
    for side_params in [p for cfg in baselines.values() for p in (cfg.icache, cfg.dcache)]:
        tech.lookup(side_params)
    evo = run.evolution(default_cache_config(), "generations", "population_size")
    evaluator = CacheEvaluator(trace, tech, dram, run.args.seed, run.args.extended_energy)
    front = optimize(trace, space, tech, dram, evo, map_fn=run.map_fn(), evaluator=evaluator)
    report = improvement_report(front, baselines, trace, tech, dram, evaluator=evaluator)
    rows = cache_front_rows(front, report)
    run.artifact("front.csv", emit_pareto_report(rows, "csv"))
    run.artifact("front.json", emit_pareto_report(rows, "json"))
    run.artifact("improvement.csv", report.to_csv())
    return emit_pareto_report(rows, run.args.format)


# --------------------------------------------------------------------------
# thermal / regfile


def _floorplan(run: Run, num_registers: int | None = None):
    from .thermal import TOPOLOGIES, build_floorplan, preset_floorplan

    a = run.args
    fp_cfg = run.config.get("floorplan", {})
    dims = {k: fp_cfg[k] for k in ("reg_w", "reg_h", "cell_size") if k in fp_cfg}
    if a.topology in TOPOLOGIES:
        fp = preset_floorplan(a.topology, **dims)
    else:
        try:
            rows, cols = (int(v) for v in a.topology.lower().split("x"))
        except ValueError:
            raise DataError(f"unknown topology {a.topology!r}; use a preset or ROWSxCOLS") from None
        fp = build_floorplan(rows * cols, rows, cols, **dims)
    if num_registers is not None and fp.num_registers != num_registers:
        raise DataError(f"topology {a.topology} has {fp.num_registers} slots "
                        f"but the profile has {num_registers} registers")
    return fp


def _material(run: Run):
    from .thermal import MaterialParams

    return MaterialParams(**run.config.get("material", {}))


def _energy_params(run: Run):
    from .regfile import EnergyParams

    return EnergyParams(**run.config.get("energy", {}))


def cmd_thermal_solve(run: Run) -> str:
    from .regfile import Placement, register_power
    from .thermal import field_to_csv, field_to_json, solve_floorplan
    from .traces import read_register_profile

    a = run.args
    profile = read_register_profile(run.path(a.profile))
    fp = _floorplan(run, profile.num_registers)
    if a.placement:
        placement = Placement(run.load_json(a.placement), fp)
    else:
        placement = Placement.identity(fp)
    power = placement.slot_powers(register_power(profile, _energy_params(run)))
    field_ = solve_floorplan(fp, power, _material(run), a.solver)
    run.artifact("field.csv", field_to_csv(field_))
    return field_to_csv(field_) if a.format == "csv" else field_to_json(field_) + "\n"


def cmd_regfile_opt(run: Run) -> str:
    from .regfile import default_placement_config, optimize_placement, report_json, temperature_report
    from .reports import ParetoRow, emit_pareto_report
    from .traces import read_register_profile

    profile = read_register_profile(run.path(run.args.profile))
    fp = _floorplan(run, profile.num_registers)
    params, material = _energy_params(run), _material(run)
    evo = run.evolution(default_placement_config(fp.num_registers), "generations", "population_size")
    results = optimize_placement(profile, params, fp, evo, map_fn=run.map_fn())
    best = results[0]
    report = temperature_report(best.placement, profile, params, material)
    rows = [ParetoRow(r.objectives.thermal_fitness, r.objectives.area_violation,
                      {"placement": " ".join(map(str, r.placement.assignment))}) for r in results]
    run.artifact("front.csv", emit_pareto_report(rows, "csv"))
    run.artifact("floorplan.json", _dump(fp.to_json()))
    return report_json(best, report) + "\n"


# --------------------------------------------------------------------------
# dmm


def _alloc_trace(run: Run):
    from .traces import check_alloc_trace, read_alloc_trace

    trace = read_alloc_trace(run.path(run.args.trace))
    check_alloc_trace(trace)
    return trace


def cmd_dmm_replay(run: Run) -> str:
    from .dmm import DmmSpec, build_reference, debug_replay, fragmentation_report, replay

    a = run.args
    if a.dmm:
        spec = DmmSpec.from_json(run.load_json(a.dmm))
    elif "regions" in run.config:
        spec = DmmSpec.from_json(run.config)
    else:
        spec = build_reference(a.reference)
    trace = _alloc_trace(run)
    if a.debug:
        log = io.StringIO()
        metrics = debug_replay(spec, trace, log)
        run.artifact("heap_events.csv", log.getvalue())
    else:
        metrics = replay(spec, trace)
    frag = fragmentation_report(spec, trace)
    return _dump({"spec": spec.to_json(), "metrics": metrics.to_dict(), "fragmentation": frag.to_dict()})


def cmd_dmm_opt(run: Run) -> str:
    from .dmmopt import default_dmm_config, optimize_dmm

    a = run.args
    trace = _alloc_trace(run)
    evo = run.evolution(default_dmm_config(), "generations", "population_size")
    max_regions = a.max_regions or int(run.config.get("max_regions", 5))
    result = optimize_dmm(trace, evo, max_regions=max_regions,
                          codon_length=int(run.config.get("codon_length", 200)), map_fn=run.map_fn())
    run.artifact("best_dmm.json", result.spec.dumps() + "\n")
    run.artifact("comparison.csv", result.comparison_csv())
    run.artifact("generations.csv", result.history_csv())
    f = result.fitness
    return _dump({"spec": result.spec.to_json(), "F": f.F, "T": f.T, "M": f.M,
                  "t_kng": f.t_kng, "m_lea": f.m_lea,
                  "comparison": [r.__dict__ for r in result.comparison]})


# --------------------------------------------------------------------------
# report


def _read_pairs(path: str) -> tuple[list[float], list[float]]:
    a, b = [], []
    with open(path, encoding="utf-8") as fh:
        for lineno, rec in enumerate(csv.reader(fh), start=1):
            if not rec or rec[0].lstrip().startswith("#"):
                continue
            try:
                x, y = float(rec[0]), float(rec[1])
            except (ValueError, IndexError):
                if lineno == 1:
                    continue  # header
                raise DataError(f"{path}:{lineno}: expected two numeric columns") from None
            a.append(x)
            b.append(y)
    return a, b


def cmd_report_stats(run: Run) -> str:
    from .stats import paired_t_test, wilcoxon_signed_rank

    a, b = _read_pairs(run.path(run.args.pairs))
    tests = {"t": [paired_t_test], "wilcoxon": [wilcoxon_signed_rank],
             "both": [paired_t_test, wilcoxon_signed_rank]}[run.args.test]
    return _dump([t(a, b).to_dict() for t in tests])


def cmd_report_pareto(run: Run) -> str:
    from .reports import emit_pareto_report, parse_pareto_report

    p = run.path(run.args.front)
    fmt_in = "json" if p.endswith(".json") else "csv"
    with open(p, encoding="utf-8") as fh:
        rows = parse_pareto_report(fh.read(), fmt_in)
    return emit_pareto_report(rows, run.args.format)


# --------------------------------------------------------------------------
# parser


def _common(sub_default: bool) -> argparse.ArgumentParser:
    d = argparse.SUPPRESS if sub_default else None
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--seed", type=int, default=d if sub_default else 0, help="random seed (default 0)")
    p.add_argument("--config", default=d, help="command JSON config file")
    p.add_argument("--out", default=d, help="directory for artifacts and manifest.json")
    p.add_argument("--jobs", type=int, default=d if sub_default else 1, help="parallel evaluations")
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common(True)
    parser = _Parser(prog="memdse", parents=[_common(False)],
                     description="Evolutionary design-space exploration of memory subsystems.")
    parser.add_argument("--version", action="version", version=f"memdse {__version__}")
    groups = parser.add_subparsers(dest="group", metavar="{trace,cache,thermal,regfile,dmm,report}")
    groups.required = True

    def group(name, help_):
        g = groups.add_parser(name, help=help_)
        s = g.add_subparsers(dest="action")
        s.required = True
        return s

    def action(s, name, fn, help_):
        p = s.add_parser(name, help=help_, parents=[common])
        p.set_defaults(fn=fn, command=f"{p.prog}")
        return p

    t = group("trace", "synthetic trace generation")
    p = action(t, "gen-mem", cmd_trace_gen_mem, "synthetic memory-reference trace (.din)")
    p.add_argument("--length", type=int, required=True)
    p.add_argument("--instr-share", type=float, default=0.6)
    p.add_argument("--working-set", type=int, default=1 << 16)
    p.add_argument("--stride-share", type=float, default=0.5)
    p = action(t, "gen-alloc", cmd_trace_gen_alloc, "synthetic allocation trace (.alloc)")
    p.add_argument("--events", type=int, required=True)
    p.add_argument("--classes", default="64:1.0", help="size:weight,... (default 64:1.0)")
    p.add_argument("--mean-lifetime", type=float, default=50.0)

    c = group("cache", "cache simulation and optimization")
    for name, fn, help_ in (("sim", cmd_cache_sim, "simulate one configuration, print stats JSON"),
                            ("model", cmd_cache_model, "stats plus execution time and energy"),
                            ("opt", cmd_cache_opt, "NSGA-II over (time, energy)")):
        p = action(c, name, fn, help_)
        p.add_argument("--trace", required=True)
        if name != "sim":
            p.add_argument("--tech", help="technology table CSV (default: synthetic table)")
            p.add_argument("--extended-energy", action="store_true",
                           help="add a DRAM access per writeback/writethrough to the energy")
        if name == "opt":
            p.add_argument("--generations", type=int)
            p.add_argument("--population", dest="population_size", type=int)
            p.add_argument("--format", choices=("csv", "json"), default="csv")

    th = group("thermal", "steady-state thermal analysis")
    p = action(th, "solve", cmd_thermal_solve, "temperature field of a register file")
    p.add_argument("--profile", required=True)
    p.add_argument("--topology", required=True, help="preset name or ROWSxCOLS")
    p.add_argument("--placement", help="JSON list: slot of each logical register")
    p.add_argument("--solver", choices=("auto", "dense", "cg"), default="auto")
    p.add_argument("--format", choices=("csv", "json"), default="json")

    rf = group("regfile", "register placement")
    p = action(rf, "opt", cmd_regfile_opt, "thermally aware register placement")
    p.add_argument("--profile", required=True)
    p.add_argument("--topology", required=True, help="preset name or ROWSxCOLS")
    p.add_argument("--generations", type=int)
    p.add_argument("--population", dest="population_size", type=int)

    dm = group("dmm", "dynamic memory manager simulation and synthesis")
    p = action(dm, "replay", cmd_dmm_replay, "replay an allocation trace")
    p.add_argument("--trace", required=True)
    g = p.add_mutually_exclusive_group()
    g.add_argument("--dmm", help="DMM spec JSON")
    g.add_argument("--reference", default="KNG", choices=("KNG", "LEA", "FIB", "S10", "EXA"))
    p.add_argument("--debug", action="store_true", help="check heap invariants and log events")
    p = action(dm, "opt", cmd_dmm_opt, "grammatical evolution of a DMM")
    p.add_argument("--trace", required=True)
    p.add_argument("--max-regions", type=int)
    p.add_argument("--generations", type=int)
    p.add_argument("--population", dest="population_size", type=int)

    rp = group("report", "statistics and report conversion")
    p = action(rp, "stats", cmd_report_stats, "paired t and Wilcoxon tests on a two-column CSV")
    p.add_argument("--pairs", required=True)
    p.add_argument("--test", choices=("t", "wilcoxon", "both"), default="both")
    p = action(rp, "pareto", cmd_report_pareto, "re-emit a Pareto report, sorted, as CSV or JSON")
    p.add_argument("--front", required=True)
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    return parser


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    args.argv = argv
    run = None
    try:
        if args.jobs < 1:
            raise UsageError("--jobs must be >= 1")
        run = Run(args)
        output = args.fn(run)
        sys.stdout.write(output)
        sys.stdout.flush()
        run.manifest(args.command)
    except UsageError as exc:
        print(f"memdse: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, OSError, ValueError, KeyError, TypeError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"memdse: error: {msg}", file=sys.stderr)
        return EXIT_DATA
    finally:
        if run is not None:
            with contextlib.suppress(Exception):
                run.close()
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
