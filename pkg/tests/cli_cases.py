"""Small inputs and one invocation per CLI subcommand, shared by the CLI tests and acceptance."""

import contextlib
import io
import json
from pathlib import Path

from memdse.cli import main

from oracles import TOY_CACHE_SPACE


def run_cli(argv):
    """(exit code, stdout, stderr)."""
    out, err = io.StringIO(), io.StringIO()
    with contextlib.redirect_stdout(out), contextlib.redirect_stderr(err):
        code = main([str(a) for a in argv])
    return code, out.getvalue(), err.getvalue()


def make_inputs(d: Path) -> dict:
    d.mkdir(parents=True, exist_ok=True)
    paths = {k: d / n for k, n in [("mem", "t.din"), ("alloc", "a.trace"), ("prof", "p.regprof"),
                                   ("prof4", "p4.regprof"), ("pairs", "pairs.csv"),
                                   ("cache_cfg", "cache.json"), ("opt_cfg", "opt.json"),
                                   ("dmm", "dmm.json"), ("front", "front.csv")]}
    code, text, err = run_cli(["trace", "gen-mem", "--length", 3000, "--seed", 2])
    assert code == 0, err
    paths["mem"].write_text(text)
    code, text, err = run_cli(["trace", "gen-alloc", "--events", 800, "--classes", "24:0.5,72:0.3,1000:0.2",
                               "--seed", 3])
    assert code == 0, err
    paths["alloc"].write_text(text)
    lines = ["registers 16 window 1e-3"] + [f"{i} {(i * 37) % 101 * 1000} {(i * 11) % 13 * 500}"
                                            for i in range(16)]
    paths["prof"].write_text("\n".join(lines) + "\n")
    paths["prof4"].write_text("registers 4 window 1e-6\n0 10000 0\n1 10 0\n2 10 0\n3 10000 0\n")
    paths["pairs"].write_text("a,b\n" + "".join(f"{1 + i * 0.37 % 2:.3f},{1.2 + i * 0.53 % 2:.3f}\n"
                                                 for i in range(12)))
    paths["cache_cfg"].write_text(json.dumps({
        "icache": {"size": 4096, "block": 32, "assoc": 2, "replacement": "RANDOM", "prefetch": "ALWAYS"},
        "dcache": {"size": 8192, "block": 16, "assoc": 4, "replacement": "FIFO", "prefetch": "ON_DEMAND",
                   "write_policy": "WRITE_THROUGH"}}))
    paths["opt_cfg"].write_text(json.dumps({"space": TOY_CACHE_SPACE,
                                            "dram": {"access_time": 1e-8, "access_power": 0.05,
                                                     "bandwidth": 1e10}}))
    paths["dmm"].write_text(json.dumps({"header_bytes": 8, "growth_quantum": 4096, "regions": [
        {"lo": 1, "hi": 100, "policy": {"kind": "SEGREGATED_EXACT", "granularity": 8}},
        {"lo": 100, "hi": None, "policy": {"kind": "BUDDY_FIB", "coalesce": True, "split": True}}]}))
    paths["front"].write_text("objective1,objective2,name\n2.0,1.0,b\n1.0,2.0,a\n")
    return paths


def scenarios(p: dict) -> dict:
    """name -> argv (without --out/--jobs)."""
    return {
        "trace gen-mem": ["trace", "gen-mem", "--length", 500, "--seed", 4],
        "trace gen-alloc": ["trace", "gen-alloc", "--events", 300, "--seed", 4],
        "cache sim": ["cache", "sim", "--trace", p["mem"], "--config", p["cache_cfg"], "--seed", 1],
        "cache model": ["cache", "model", "--trace", p["mem"], "--config", p["cache_cfg"], "--seed", 1],
        "cache opt": ["cache", "opt", "--trace", p["mem"], "--config", p["opt_cfg"], "--generations", 5,
                      "--population", 16, "--seed", 3],
        "thermal solve": ["thermal", "solve", "--profile", p["prof"], "--topology", "arm-c3"],
        "regfile opt": ["regfile", "opt", "--profile", p["prof4"], "--topology", "4x1", "--generations", 10,
                        "--population", 12, "--seed", 7],
        "dmm replay": ["dmm", "replay", "--trace", p["alloc"], "--dmm", p["dmm"], "--debug"],
        "dmm opt": ["dmm", "opt", "--trace", p["alloc"], "--generations", 4, "--population", 10, "--seed", 2],
        "report stats": ["report", "stats", "--pairs", p["pairs"]],
        "report pareto": ["report", "pareto", "--front", p["front"], "--format", "json"],
    }


def primary_outputs(argv, out_dir: Path, jobs: int = 1) -> dict:
    """stdout plus every artifact except the run manifest (which records wall time)."""
    code, stdout, err = run_cli(list(argv) + ["--out", out_dir, "--jobs", jobs])
    assert code == 0, err
    files = {f.name: f.read_bytes() for f in sorted(out_dir.glob("*")) if f.name != "manifest.json"}
    return {"exit": code, "stdout": stdout.encode(), **files}
