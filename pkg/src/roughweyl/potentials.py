"""Rough test potentials, Hölder metadata, Riesz functions and the eps(hbar) rules."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import DomainError, PreconditionError
from .grid import GridSpec

BOX_TOL = 1e-12


@dataclass(frozen=True)
class HolderClass:
    k: int
    mu: float

    def __post_init__(self):
        if self.k < 0:
            raise PreconditionError("derivative count k must be >= 0")
        if not 0.0 <= self.mu <= 1.0:
            raise PreconditionError(f"Hölder exponent must lie in [0, 1], got {self.mu}")

    @property
    def order(self) -> float:
        return self.k + self.mu


def smooth_step(t):
    """C-infinity step: 0 for t <= 0, 1 for t >= 1."""
    t = np.asarray(t, dtype=float)
    with np.errstate(divide="ignore", over="ignore"):
        a = np.where(t > 0, np.exp(-1.0 / np.where(t > 0, t, 1.0)), 0.0)
        b = np.where(t < 1, np.exp(-1.0 / np.where(t < 1, 1.0 - t, 1.0)), 0.0)
    return a / (a + b)


def radial_cutoff(r):
    """Equal to 1 on r <= 1/2, vanishing for r >= 1, smooth in between."""
    return 1.0 - smooth_step(2.0 * np.asarray(r, dtype=float) - 1.0)


@dataclass(frozen=True)
class Bump:
    """Term c * |x - a|^s * cutoff(|x - a| / radius)."""

    center: tuple[float, ...]
    coeff: float
    exponent: float
    radius: float | None = None


@dataclass(frozen=True)
class PotentialSpec:
    """V(x) = sum_i well_i x_i^2 + offset + sum of bump terms.

    ``box`` is the half-width of the evaluation box [-box, box]^d.
    """

    dim: int
    well: tuple[float, ...]
    offset: float
    nu: float
    regularity: HolderClass
    bumps: tuple[Bump, ...] = ()
    box: float = 3.0
    default_cutoff_radius: float = 0.5
    name: str = ""
    radii: tuple[float, ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.dim < 1:
            raise PreconditionError("dim must be positive")
        well = tuple(float(w) for w in np.broadcast_to(np.asarray(self.well, float), (self.dim,)))
        object.__setattr__(self, "well", well)
        if not self.nu > 0:
            raise PreconditionError("sublevel margin nu must be positive")
        bumps = tuple(
            Bump(tuple(float(c) for c in np.broadcast_to(np.asarray(b.center, float), (self.dim,))),
                 float(b.coeff), float(b.exponent), b.radius)
            for b in self.bumps
        )
        object.__setattr__(self, "bumps", bumps)
        for b in bumps:
            if abs(b.exponent - self.regularity.order) > 1e-12:
                raise PreconditionError(
                    f"bump exponent {b.exponent} != k + mu = {self.regularity.order}"
                )
        object.__setattr__(self, "radii", self._cutoff_radii())

    def _cutoff_radii(self) -> tuple[float, ...]:
        centers = np.array([b.center for b in self.bumps]).reshape(len(self.bumps), self.dim)
        out = []
        for i, b in enumerate(self.bumps):
            if b.radius is not None:
                out.append(float(b.radius))
                continue
            others = np.delete(centers, i, axis=0)
            if len(others):
                gap = np.min(np.linalg.norm(others - centers[i], axis=1))
                out.append(0.25 * gap)
            else:
                out.append(self.default_cutoff_radius)
        return tuple(out)

    @property
    def is_smooth(self) -> bool:
        return not self.bumps

    def on_grid(self, grid: GridSpec) -> np.ndarray:
        if grid.dim != self.dim:
            raise PreconditionError("grid and potential dimensions differ")
        return eval_potential(self, grid.points()).reshape(grid.shape)

    def check_confinement(self, samples: int = 41) -> float:
        """Minimum of V over the faces of the evaluation box.

        Raises if it is below 4*nu, i.e. if the 4nu-sublevel set reaches the box.
        """
        ax = np.linspace(-self.box, self.box, samples)
        worst = math.inf
        for axis in range(self.dim):
            for side in (-self.box, self.box):
                grids = np.meshgrid(*([ax] * (self.dim - 1)), indexing="ij") if self.dim > 1 else []
                cols = [g.ravel() for g in grids]
                m = cols[0].size if cols else 1
                cols.insert(axis, np.full(m, side))
                pts = np.stack(cols, axis=1)
                worst = min(worst, float(eval_potential(self, pts).min()))
        if worst < 4 * self.nu:
            raise PreconditionError(
                f"4nu-sublevel set touches the evaluation box (min V on faces {worst:.4g} < {4 * self.nu:.4g})"
            )
        return worst


def eval_potential(spec: PotentialSpec, points) -> np.ndarray:
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if spec.dim == 1 and pts.shape[0] == 1 and pts.shape[1] != 1:
        pts = pts.T
    if pts.shape[1] != spec.dim:
        raise PreconditionError(f"points must have {spec.dim} coordinates")
    if np.any(np.abs(pts) > spec.box * (1 + BOX_TOL)):
        raise DomainError(f"point outside the evaluation box [-{spec.box}, {spec.box}]^{spec.dim}")
    v = pts ** 2 @ np.asarray(spec.well) + spec.offset
    for b, radius in zip(spec.bumps, spec.radii):
        r = np.linalg.norm(pts - np.asarray(b.center), axis=1)
        v = v + b.coeff * r ** b.exponent * radial_cutoff(r / radius)
    return v


def sublevel_set(spec: PotentialSpec, level: float, grid: GridSpec) -> np.ndarray:
    """Mask of grid nodes with V(x) < level."""
    if not level > 0:
        raise PreconditionError("sublevel level must be positive")
    return spec.on_grid(grid) < level


def g_gamma(t, gamma: float):
    """Riesz function: indicator of t <= 0 for gamma=0, (t)_-^gamma otherwise."""
    if not 0.0 <= gamma <= 1.0:
        raise PreconditionError(f"gamma must lie in [0, 1], got {gamma}")
    t = np.asarray(t, dtype=float)
    if gamma == 0:
        out = (t <= 0).astype(float)
    else:
        out = np.maximum(-t, 0.0) ** gamma
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class SemiclassicalParams:
    hbar: float
    delta: float
    epsilon: float
    gamma: float

    def __post_init__(self):
        if not self.hbar > 0:
            raise PreconditionError("hbar must be positive")
        if not 0 < self.delta <= 1:
            raise PreconditionError("delta must lie in (0, 1]")
        expected = self.hbar ** (1 - self.delta)
        if abs(self.epsilon - expected) > 1e-12 * expected:
            raise PreconditionError("epsilon must equal hbar^(1 - delta)")


@dataclass(frozen=True)
class ScalingRule:
    """The (delta, eps(hbar)) pair tying the smoothing scale to hbar."""

    delta: float
    gamma: float
    mode: str

    def epsilon(self, hbar: float) -> float:
        return hbar ** (1.0 - self.delta)

    def __call__(self, hbar: float) -> SemiclassicalParams:
        return SemiclassicalParams(hbar, self.delta, self.epsilon(hbar), self.gamma)


def choose_scaling(gamma: float, hc: HolderClass, mode: str = "sharp") -> ScalingRule:
    if not 0.0 <= gamma <= 1.0:
        raise PreconditionError(f"gamma must lie in [0, 1], got {gamma}")
    if mode == "capped":
        return ScalingRule(1.0 / 3.0, gamma, mode)
    if mode != "sharp":
        raise PreconditionError(f"unknown scaling mode {mode!r}")
    mu = hc.mu
    if gamma == 0:
        if hc.k != 1:
            raise PreconditionError("sharp mode with gamma = 0 requires k = 1")
        if mu < 0.5:
            raise PreconditionError(f"sharp mode with gamma = 0 requires mu >= 1/2 (got mu = {mu})")
        delta = mu / (1.0 + mu)
    else:
        if hc.k != 2:
            raise PreconditionError("sharp mode with gamma > 0 requires k = 2")
        need = max(1.5 * gamma - 0.5, 0.0)
        if mu < need:
            raise PreconditionError(
                f"sharp mode requires mu >= max(3*gamma/2 - 1/2, 0) = {need:.6g} (got mu = {mu})"
            )
        delta = (1.0 + mu - gamma) / (2.0 + mu)
    if delta < 1.0 / 3.0 - 1e-15:
        raise PreconditionError(f"sharp scaling produced delta = {delta} < 1/3")
    return ScalingRule(delta, gamma, mode)


def harmonic(dim: int = 1, lam: float = 1.0, nu: float = 0.25, box: float = 3.0,
             regularity: HolderClass | None = None) -> PotentialSpec:
    """The well |x|^2 - lam."""
    return PotentialSpec(dim, (1.0,) * dim, -lam, nu, regularity or HolderClass(1, 1.0),
                         box=box, name=f"harmonic-d{dim}")


def with_bumps(spec: PotentialSpec, bumps: Sequence[Bump], regularity: HolderClass,
               name: str = "") -> PotentialSpec:
    return PotentialSpec(spec.dim, spec.well, spec.offset, spec.nu, regularity, tuple(bumps),
                         spec.box, spec.default_cutoff_radius, name or spec.name)
