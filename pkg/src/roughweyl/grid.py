"""Uniform Dirichlet grids and fields sampled on them."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import PreconditionError


@dataclass(frozen=True)
class GridSpec:
    """Interior nodes of the box [-L, L]^d, n per axis.

    Nodes sit at -L + i*h for i = 1..n with h = 2L/(n+1); the box faces
    carry the (eliminated) Dirichlet values.
    """

    dim: int
    half_width: float
    n: int

    def __post_init__(self):
        if self.dim < 1:
            raise PreconditionError("grid dimension must be positive")
        if self.n < 8:
            raise PreconditionError(f"need at least 8 points per axis, got {self.n}")
        if not self.half_width > 0:
            raise PreconditionError("half_width must be positive")

    @property
    def spacing(self) -> float:
        return 2.0 * self.half_width / (self.n + 1)

    @property
    def size(self) -> int:
        return self.n ** self.dim

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n,) * self.dim

    @property
    def cell_volume(self) -> float:
        return self.spacing ** self.dim

    def axis(self) -> np.ndarray:
        return -self.half_width + self.spacing * np.arange(1, self.n + 1)

    def mesh(self) -> list[np.ndarray]:
        ax = self.axis()
        return np.meshgrid(*([ax] * self.dim), indexing="ij")

    def points(self) -> np.ndarray:
        """All nodes as an (N, d) array in C order."""
        return np.stack([m.ravel() for m in self.mesh()], axis=1)

    def refined(self, factor: int) -> "GridSpec":
        """Grid whose nodes contain this grid's nodes (every ``factor``-th)."""
        if factor < 1:
            raise PreconditionError("refinement factor must be >= 1")
        return GridSpec(self.dim, self.half_width, factor * (self.n + 1) - 1)

    def coarse_slice(self, factor: int) -> tuple[slice, ...]:
        """Index into ``self.refined(factor)`` arrays picking this grid's nodes."""
        return (slice(factor - 1, None, factor),) * self.dim


@dataclass
class SampledField:
    grid: GridSpec
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float).reshape(self.grid.shape)

    def __add__(self, other):
        if isinstance(other, SampledField):
            return SampledField(self.grid, self.values + other.values)
        return SampledField(self.grid, self.values + other)

    def __sub__(self, other):
        if isinstance(other, SampledField):
            return SampledField(self.grid, self.values - other.values)
        return SampledField(self.grid, self.values - other)

    def __mul__(self, other):
        if isinstance(other, SampledField):
            return SampledField(self.grid, self.values * other.values)
        return SampledField(self.grid, self.values * other)

    __rmul__ = __mul__
