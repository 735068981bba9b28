"""Register-file layer: access energy, power density, placement fitness and search."""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .evolve import EvolutionConfig, Genome, nsga2_run
from .thermal import Floorplan, MaterialParams, Rect, solve_floorplan
from .traces import RegisterProfile


class PlacementError(ValueError):
    pass


@dataclass(frozen=True)
class EnergyParams:
    e_dyn_read: float = 2.0e-12  # J per read access
    e_dyn_write: float = 3.0e-12  # J per write access

    def __post_init__(self):
        if self.e_dyn_read < 0 or self.e_dyn_write < 0:
            raise ValueError("dynamic energies must be nonnegative")


@dataclass(frozen=True)
class Placement:
    """``assignment[i]`` is the physical slot holding logical register ``i``."""

    assignment: tuple[int, ...]
    floorplan: Floorplan

    def __post_init__(self):
        object.__setattr__(self, "assignment", tuple(int(s) for s in self.assignment))
        if sorted(self.assignment) != list(range(self.floorplan.num_registers)):
            raise PlacementError("assignment is not a bijection onto the floorplan slots")

    @classmethod
    def identity(cls, floorplan: Floorplan) -> "Placement":
        return cls(tuple(range(floorplan.num_registers)), floorplan)

    def rects(self) -> list[Rect]:
        return [self.floorplan.registers[s] for s in self.assignment]

    def slot_powers(self, register_power: Sequence[float]) -> np.ndarray:
        """Per-slot power vector given per-logical-register power."""
        out = np.zeros(len(self.assignment))
        out[list(self.assignment)] = register_power
        return out


@dataclass(frozen=True)
class PlacementObjectives:
    thermal_fitness: float
    area_violation: float


def register_energy(profile: RegisterProfile, params: EnergyParams) -> np.ndarray:
    """Per-register dynamic energy, reads * E_read + writes * E_write (J)."""
    return profile.reads * params.e_dyn_read + profile.writes * params.e_dyn_write


def register_power(profile: RegisterProfile, params: EnergyParams) -> np.ndarray:
    return register_energy(profile, params) / profile.window_seconds


def power_densities(profile: RegisterProfile, params: EnergyParams, floorplan: Floorplan,
                    window_seconds: float | None = None) -> np.ndarray:
    """Register power over register area, W per square micron."""
    window = profile.window_seconds if window_seconds is None else window_seconds
    if not window > 0:
        raise ValueError("window must be positive")
    areas = np.array([r.area for r in floorplan.registers], dtype=float) * floorplan.cell_size ** 2
    if (areas <= 0).any():
        raise ValueError("register areas must be positive")
    return register_energy(profile, params) / window / areas


def slot_distances(floorplan: Floorplan) -> np.ndarray:
    centers = np.array([r.center(floorplan.cell_size) for r in floorplan.registers])
    diff = centers[:, None, :] - centers[None, :, :]
    return np.sqrt((diff ** 2).sum(axis=2))


def _pair_fitness(assignment: Sequence[int], dp: np.ndarray, dist: np.ndarray) -> float:
    slots = np.asarray(assignment)
    d = dist[np.ix_(slots, slots)]
    n = len(slots)
    iu = np.triu_indices(n, k=1)
    dd = d[iu]
    if (dd <= 0).any():
        raise PlacementError("two registers share a slot center")
    return float((np.outer(dp, dp)[iu] / dd).sum())


def placement_fitness(placement: Placement, dp: Sequence[float]) -> float:
    """Sum over unordered register pairs of ``dp_i * dp_j / d_ij`` (microns)."""
    dp = np.asarray(dp, dtype=float)
    if dp.shape != (len(placement.assignment),):
        raise ValueError("one power density per register is required")
    return _pair_fitness(placement.assignment, dp, slot_distances(placement.floorplan))


def rect_violation(rects: Sequence[Rect], width: int, height: int) -> int:
    """Cells outside the grid plus pairwise overlap area, in cells."""
    total = 0
    for r in rects:
        inside_w = max(0, min(r.x + r.w, width) - max(r.x, 0))
        inside_h = max(0, min(r.y + r.h, height) - max(r.y, 0))
        total += r.area - inside_w * inside_h
    for a, b in itertools.combinations(rects, 2):
        total += a.overlap(b)
    return total


def area_viability(placement: Placement) -> float:
    fp = placement.floorplan
    return float(rect_violation(placement.rects(), fp.grid_width, fp.grid_height))


class PlacementProblem:
    """NSGA-II binding: permutation genome over physical slots."""

    def __init__(self, floorplan: Floorplan, dp: Sequence[float]):
        self.floorplan = floorplan
        self.dp = np.asarray(dp, dtype=float)
        self.dist = slot_distances(floorplan)
        self.n = floorplan.num_registers

    def random_genome(self, rng: np.random.Generator) -> Genome:
        return Genome.permutation(rng.permutation(self.n).tolist())

    def evaluate(self, genome: Genome) -> tuple[float, float]:
        placement = Placement(genome.values, self.floorplan)
        return _pair_fitness(genome.values, self.dp, self.dist), area_viability(placement)


@dataclass
class PlacementResult:
    placement: Placement
    objectives: PlacementObjectives


def default_placement_config(num_registers: int, **overrides) -> EvolutionConfig:
    base = EvolutionConfig(generations=250, population_size=100, crossover_rate=0.9,
                           mutation_rate=1.0 / num_registers)
    return base.updated(**overrides)


def optimize_placement(profile: RegisterProfile | None, params: EnergyParams | None,
                       floorplan: Floorplan, config: EvolutionConfig | None = None, *,
                       dp: Sequence[float] | None = None, map_fn=map) -> list[PlacementResult]:
    """Nondominated placements on (thermal fitness, area violation)."""
    if dp is None:
        dp = power_densities(profile, params, floorplan)
    config = config or default_placement_config(floorplan.num_registers)
    problem = PlacementProblem(floorplan, dp)
    front = nsga2_run(problem, config, map_fn=map_fn)
    results = []
    for ind in sorted(front.members, key=lambda m: (m.objectives, m.genome.values)):
        results.append(PlacementResult(Placement(ind.genome.values, floorplan),
                                       PlacementObjectives(*ind.objectives)))
    return results


def brute_force_minimum(floorplan: Floorplan, dp: Sequence[float]) -> tuple[float, tuple[int, ...]]:
    """Exhaustive search over all placements (feasible for about N <= 9)."""
    dp = np.asarray(dp, dtype=float)
    dist = slot_distances(floorplan)
    n = floorplan.num_registers
    perms = np.array(list(itertools.permutations(range(n))))
    total = np.zeros(len(perms))
    for i, j in itertools.combinations(range(n), 2):
        total += dp[i] * dp[j] / dist[perms[:, i], perms[:, j]]
    k = int(np.argmin(total))
    return float(total[k]), tuple(int(v) for v in perms[k])


def _improvement(baseline: float, optimized: float) -> float:
    if baseline == 0:
        return 0.0
    return 100.0 * (baseline - optimized) / baseline


@dataclass
class TemperatureReport:
    baseline_avg: float
    baseline_max: float
    avg_rise: float
    max_rise: float
    avg_improvement: float
    max_improvement: float

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def temperature_report(placement: Placement, profile: RegisterProfile, params: EnergyParams,
                       material: MaterialParams | None = None) -> TemperatureReport:
    """Thermal solve of ``placement`` against the row-major identity baseline."""
    material = material or MaterialParams()
    power = register_power(profile, params)
    fp = placement.floorplan
    base = solve_floorplan(fp, Placement.identity(fp).slot_powers(power), material)
    opt = solve_floorplan(fp, placement.slot_powers(power), material)
    return TemperatureReport(
        base.avg_rise, base.max_rise, opt.avg_rise, opt.max_rise,
        _improvement(base.avg_rise, opt.avg_rise), _improvement(base.max_rise, opt.max_rise),
    )


def report_json(result: PlacementResult, report: TemperatureReport) -> str:
    return json.dumps({
        "placement": list(result.placement.assignment),
        "fitness": result.objectives.thermal_fitness,
        "area_violation": result.objectives.area_violation,
        "avg_rise_c": report.avg_rise,
        "max_rise_c": report.max_rise,
        "baseline_avg_rise_c": report.baseline_avg,
        "baseline_max_rise_c": report.baseline_max,
        "avg_improvement_pct": report.avg_improvement,
        "max_improvement_pct": report.max_improvement,
    }, sort_keys=True)
