"""Steady-state finite-difference thermal model of a register file.

The die area is divided into square cells.  Adjacent cells exchange heat
through a lateral conductance, boundary cells additionally leak to ambient
through every exposed edge, and the resulting conductance matrix ``A`` is
solved against the per-cell power vector: ``A @ dT = P``.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse as sp

DENSE_LIMIT = 4096

# rows x columns of register blocks
TOPOLOGIES: dict[str, tuple[int, int]] = {
    "vliw-c1": (32, 1),
    "vliw-c2": (16, 2),
    "vliw-c3": (4, 8),
    "arm-c1": (16, 1),
    "arm-c2": (8, 2),
    "arm-c3": (2, 8),
}


class ThermalError(ValueError):
    pass


class FloatingNetworkError(ThermalError):
    def __init__(self):
        super().__init__("floating thermal network: no cell is coupled to ambient")


@dataclass(frozen=True)
class Rect:
    x: int
    y: int
    w: int
    h: int

    @property
    def area(self) -> int:
        return self.w * self.h

    def center(self, cell_size: float) -> tuple[float, float]:
        return ((self.x + self.w / 2) * cell_size, (self.y + self.h / 2) * cell_size)

    def overlap(self, other: "Rect") -> int:
        dx = min(self.x + self.w, other.x + other.w) - max(self.x, other.x)
        dy = min(self.y + self.h, other.y + other.h) - max(self.y, other.y)
        return max(dx, 0) * max(dy, 0)


@dataclass(frozen=True)
class Floorplan:
    grid_width: int
    grid_height: int
    cell_size: float  # microns
    registers: tuple[Rect, ...]
    topology: tuple[int, int]

    def __post_init__(self):
        if self.grid_width <= 0 or self.grid_height <= 0 or not self.cell_size > 0:
            raise ThermalError("grid dimensions and cell size must be positive")
        for i, r in enumerate(self.registers):
            if r.x < 0 or r.y < 0 or r.x + r.w > self.grid_width or r.y + r.h > self.grid_height:
                raise ThermalError(f"register {i} lies outside the grid")
            for j in range(i):
                if r.overlap(self.registers[j]):
                    raise ThermalError(f"registers {j} and {i} overlap")

    @property
    def num_registers(self) -> int:
        return len(self.registers)

    @property
    def num_cells(self) -> int:
        return self.grid_width * self.grid_height

    def cell_indices(self, reg: int) -> np.ndarray:
        r = self.registers[reg]
        ys, xs = np.mgrid[r.y:r.y + r.h, r.x:r.x + r.w]
        return (ys * self.grid_width + xs).ravel()

    def to_json(self) -> dict:
        return {
            "grid_width": self.grid_width,
            "grid_height": self.grid_height,
            "cell_size_um": self.cell_size,
            "topology": list(self.topology),
            "registers": [[r.x, r.y, r.w, r.h] for r in self.registers],
        }


def build_floorplan(num_registers: int, rows: int, cols: int, reg_w: int = 3, reg_h: int = 3,
                    cell_size: float = 3.0) -> Floorplan:
    """Row-major ``rows x cols`` block grid of ``reg_w x reg_h``-cell registers."""
    if rows * cols != num_registers:
        raise ThermalError(f"topology {rows}x{cols} holds {rows * cols} registers, not {num_registers}")
    if reg_w <= 0 or reg_h <= 0 or not cell_size > 0:
        raise ThermalError("register dimensions and cell size must be positive")
    regs = tuple(Rect((i % cols) * reg_w, (i // cols) * reg_h, reg_w, reg_h)
                 for i in range(num_registers))
    return Floorplan(cols * reg_w, rows * reg_h, float(cell_size), regs, (rows, cols))


def preset_floorplan(name: str, reg_w: int = 3, reg_h: int = 3, cell_size: float = 3.0) -> Floorplan:
    try:
        rows, cols = TOPOLOGIES[name.lower()]
    except KeyError:
        raise ThermalError(f"unknown topology {name!r}; choose from {sorted(TOPOLOGIES)}") from None
    return build_floorplan(rows * cols, rows, cols, reg_w, reg_h, cell_size)


@dataclass(frozen=True)
class MaterialParams:
    conductivity: float = 150.0  # W/(m K), bulk silicon
    thickness: float = 10.0  # microns
    # one 3x3-cell register dissipating 1 mW through its 12 exposed edges rises ~1 degC
    boundary_conductance: float = 1e-3 / 12  # W/K per exposed cell edge
    ambient: float = 45.0  # degC

    def __post_init__(self):
        if not (self.conductivity > 0 and self.thickness > 0 and self.boundary_conductance > 0):
            raise ThermalError("material parameters must be strictly positive")
        if not np.isfinite(self.ambient):
            raise ThermalError("ambient temperature must be finite")


@dataclass(frozen=True)
class ThermalSystem:
    A: sp.csr_matrix
    P: np.ndarray
    width: int
    height: int


@dataclass
class TemperatureField:
    delta_t: np.ndarray  # (height, width) rise over ambient, degC
    per_register: list[tuple[float, float]] = field(default_factory=list)  # (avg, max)
    ambient: float = 0.0

    @property
    def avg_rise(self) -> float:
        return float(self.delta_t.mean())

    @property
    def max_rise(self) -> float:
        return float(self.delta_t.max())

    def absolute(self) -> np.ndarray:
        return self.delta_t + self.ambient


def assemble_cells(width: int, height: int, cell_size: float, cell_power: np.ndarray,
                   material: MaterialParams, ambient_coupling: bool = True) -> ThermalSystem:
    """Five-point conductance stencil over a ``width x height`` cell grid.

    ``ambient_coupling=False`` drops the boundary terms, leaving a floating
    (singular) network.
    """
    cell_power = np.asarray(cell_power, dtype=float).ravel()
    n = width * height
    if cell_power.shape != (n,):
        raise ThermalError("one power value per cell is required")
    if not np.isfinite(cell_power).all() or (cell_power < 0).any():
        raise ThermalError("cell powers must be finite and nonnegative")
    # conductance through the shared face: k * (cell_size * thickness) / cell_size
    g = material.conductivity * material.thickness * 1e-6
    b = material.boundary_conductance if ambient_coupling else 0.0

    idx = np.arange(n).reshape(height, width)
    rows, cols, vals = [], [], []
    right = (idx[:, :-1].ravel(), idx[:, 1:].ravel())
    down = (idx[:-1, :].ravel(), idx[1:, :].ravel())
    for a, c in (right, down):
        rows += [a, c]
        cols += [c, a]
        vals += [np.full(a.size, -g), np.full(a.size, -g)]

    exposed = np.zeros((height, width))
    exposed[0, :] += 1
    exposed[-1, :] += 1
    exposed[:, 0] += 1
    exposed[:, -1] += 1
    degree = np.zeros((height, width))
    degree[:, :-1] += 1
    degree[:, 1:] += 1
    degree[:-1, :] += 1
    degree[1:, :] += 1
    diag = degree.ravel() * g + exposed.ravel() * b
    rows.append(idx.ravel())
    cols.append(idx.ravel())
    vals.append(diag)

    A = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(n, n))
    return ThermalSystem(A, cell_power, width, height)


def cell_power_map(floorplan: Floorplan, register_power) -> np.ndarray:
    register_power = np.asarray(register_power, dtype=float)
    if register_power.shape != (floorplan.num_registers,):
        raise ThermalError("one power value per register is required")
    if not np.isfinite(register_power).all() or (register_power < 0).any():
        raise ThermalError("register powers must be finite and nonnegative")
    P = np.zeros(floorplan.num_cells)
    for i in range(floorplan.num_registers):
        cells = floorplan.cell_indices(i)
        P[cells] = register_power[i] / cells.size
    return P


def assemble_system(floorplan: Floorplan, register_power, material: MaterialParams | None = None
                    ) -> ThermalSystem:
    material = material or MaterialParams()
    P = cell_power_map(floorplan, register_power)
    return assemble_cells(floorplan.grid_width, floorplan.grid_height, floorplan.cell_size, P, material)


def pcg(A: sp.spmatrix, b: np.ndarray, tol: float = 1e-10, max_iter: int | None = None) -> np.ndarray:
    """Jacobi-preconditioned conjugate gradient to a relative residual ``tol``."""
    n = b.size
    max_iter = 10 * n if max_iter is None else max_iter
    inv_diag = 1.0 / A.diagonal()
    x = np.zeros(n)
    r = b.copy()
    bnorm = np.linalg.norm(b)
    if bnorm == 0:
        return x
    z = inv_diag * r
    p = z.copy()
    rz = r @ z
    for _ in range(max_iter):
        Ap = A @ p
        alpha = rz / (p @ Ap)
        x += alpha * p
        r -= alpha * Ap
        if np.linalg.norm(r) <= tol * bnorm:
            return x
        z = inv_diag * r
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
    raise ThermalError(f"conjugate gradient did not converge in {max_iter} iterations")


def solve_system(system: ThermalSystem, method: str = "auto") -> np.ndarray:
    A, P = system.A, system.P
    # row sums are the ambient couplings; anything at rounding level counts as none
    if np.asarray(A.sum(axis=1)).max() <= 1e-12 * A.diagonal().max():
        raise FloatingNetworkError()
    n = P.size
    if method == "auto":
        method = "dense" if n <= DENSE_LIMIT else "cg"
    if method == "dense":
        x = scipy.linalg.solve(A.toarray(), P, assume_a="pos")
    elif method == "cg":
        x = pcg(A, P)
    else:
        raise ThermalError(f"unknown solver {method!r}")
    return x


def solve_steady_state(system: ThermalSystem, floorplan: Floorplan | None = None,
                       method: str = "auto", ambient: float = 0.0) -> TemperatureField:
    x = solve_system(system, method)
    grid = x.reshape(system.height, system.width)
    per_reg = []
    if floorplan is not None:
        for i in range(floorplan.num_registers):
            vals = x[floorplan.cell_indices(i)]
            per_reg.append((float(vals.mean()), float(vals.max())))
    return TemperatureField(grid, per_reg, ambient)


def solve_floorplan(floorplan: Floorplan, register_power, material: MaterialParams | None = None,
                    method: str = "auto") -> TemperatureField:
    material = material or MaterialParams()
    system = assemble_system(floorplan, register_power, material)
    return solve_steady_state(system, floorplan, method, material.ambient)


def mirror_symmetry_check(floorplan: Floorplan, powers, material: MaterialParams | None = None,
                          tol: float = 1e-9) -> bool:
    """True iff mirroring the power map left-right mirrors the solved field."""
    material = material or MaterialParams()
    W, H = floorplan.grid_width, floorplan.grid_height
    P = cell_power_map(floorplan, powers).reshape(H, W)
    base = solve_system(assemble_cells(W, H, floorplan.cell_size, P, material))
    flipped = solve_system(assemble_cells(W, H, floorplan.cell_size, P[:, ::-1], material))
    base, flipped = base.reshape(H, W), flipped.reshape(H, W)
    scale = max(np.abs(base).max(), 1e-300)
    return bool(np.abs(flipped - base[:, ::-1]).max() <= tol * scale)


def field_to_csv(field_: TemperatureField) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    for row in field_.delta_t:
        writer.writerow([repr(float(v)) for v in row])
    return buf.getvalue()


def field_to_json(field_: TemperatureField) -> str:
    return json.dumps({
        "ambient_c": field_.ambient,
        "avg_rise_c": field_.avg_rise,
        "max_rise_c": field_.max_rise,
        "per_register": [{"avg_rise_c": a, "max_rise_c": m} for a, m in field_.per_register],
        "delta_t": field_.delta_t.tolist(),
    }, sort_keys=True)
