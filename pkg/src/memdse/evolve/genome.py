from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

INTEGER = "integer"
PERMUTATION = "permutation"
CODONS = "codons"

DEFAULT_CODON_MAX = 256


@dataclass(frozen=True)
class Genome:
    """Integer vector, permutation or GE codon string.

    ``bounds`` holds the per-gene cardinality for integer vectors and the
    (single) codon upper bound for codon strings; it is ``None`` for
    permutations.
    """

    kind: str
    values: tuple[int, ...]
    bounds: tuple[int, ...] | int | None = None

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(int(v) for v in self.values))
        if self.kind == INTEGER:
            bounds = tuple(int(b) for b in self.bounds)
            object.__setattr__(self, "bounds", bounds)
            if len(bounds) != len(self.values):
                raise ValueError("one cardinality per gene is required")
            for v, b in zip(self.values, bounds):
                if not 0 <= v < b:
                    raise ValueError(f"gene value {v} outside [0, {b})")
        elif self.kind == PERMUTATION:
            if sorted(self.values) != list(range(len(self.values))):
                raise ValueError("permutation genome is not a bijection on 0..N-1")
        elif self.kind == CODONS:
            bound = int(self.bounds if self.bounds is not None else DEFAULT_CODON_MAX)
            object.__setattr__(self, "bounds", bound)
            if any(not 0 <= v < bound for v in self.values):
                raise ValueError(f"codon outside [0, {bound})")
        else:
            raise ValueError(f"unknown genome kind {self.kind!r}")

    def __len__(self) -> int:
        return len(self.values)

    def with_values(self, values: Sequence[int]) -> "Genome":
        return Genome(self.kind, tuple(values), self.bounds)

    @classmethod
    def integer(cls, values: Sequence[int], cardinality: Sequence[int]) -> "Genome":
        return cls(INTEGER, tuple(values), tuple(cardinality))

    @classmethod
    def permutation(cls, order: Sequence[int]) -> "Genome":
        return cls(PERMUTATION, tuple(order))

    @classmethod
    def codons(cls, values: Sequence[int], codon_max: int = DEFAULT_CODON_MAX) -> "Genome":
        return cls(CODONS, tuple(values), codon_max)

    def to_json(self) -> dict:
        return {"kind": self.kind, "values": list(self.values),
                "bounds": list(self.bounds) if isinstance(self.bounds, tuple) else self.bounds}

    @classmethod
    def from_json(cls, data: dict) -> "Genome":
        bounds = data.get("bounds")
        if isinstance(bounds, list):
            bounds = tuple(bounds)
        return cls(data["kind"], tuple(data["values"]), bounds)


def random_like(template: Genome, rng: np.random.Generator) -> Genome:
    """Fresh uniformly random genome of the same variant and length."""
    n = len(template)
    if template.kind == INTEGER:
        values = [int(rng.integers(0, b)) for b in template.bounds]
    elif template.kind == PERMUTATION:
        values = rng.permutation(n).tolist()
    else:
        values = rng.integers(0, template.bounds, size=n).tolist()
    return template.with_values(values)


@dataclass
class Individual:
    genome: Genome
    objectives: tuple[float, ...] | None = None
    rank: int | None = None
    crowding: float = 0.0
    valid: bool = True
    phenotype: object = field(default=None, compare=False)

    @property
    def fitness(self) -> float:
        if self.objectives is None:
            raise ValueError("individual has not been evaluated")
        return self.objectives[0]
