"""Agmon-weighted norms of eigenfunctions and trace localisation."""
from __future__ import annotations

import math

import numpy as np
from scipy import ndimage
from scipy.special import logsumexp

from .errors import FitError, PreconditionError
from .grid import GridSpec, SampledField
from .potentials import PotentialSpec


def distance_to_set(mask: np.ndarray, h: float) -> np.ndarray:
    """Euclidean node-to-set distance (zero on the set)."""
    if not mask.any():
        raise PreconditionError("empty set")
    return ndimage.distance_transform_edt(~mask) * h


def agmon_distance(spec: PotentialSpec, grid: GridSpec, a: float, nu: float | None = None) -> np.ndarray:
    """d(x) = dist(x, U_a) with U = {V < nu}."""
    nu = spec.nu if nu is None else nu
    u = spec.on_grid(grid) < nu
    return np.maximum(distance_to_set(u, grid.spacing) - a, 0.0)


def _as_values(psi, grid: GridSpec) -> np.ndarray:
    if isinstance(psi, SampledField):
        return psi.values
    return np.asarray(psi, dtype=float).reshape(grid.shape)


def agmon_weighted_norm(psi, E: float, spec: PotentialSpec, a: float, hbar: float,
                        grid: GridSpec, nu: float | None = None) -> float:
    """||exp(delta d / hbar) psi|| with delta = sqrt(nu)/8 and d = dist(., U_a).

    psi is renormalised in the discrete L2 norm; the weighted sum is
    accumulated in log space.
    """
    nu = spec.nu if nu is None else nu
    if not E < nu / 4:
        raise PreconditionError(f"Agmon bound needs E < nu/4 = {nu / 4:.4g}, got E = {E:.4g}")
    vals = _as_values(psi, grid)
    d = agmon_distance(spec, grid, a, nu)
    delta = math.sqrt(nu) / 8
    with np.errstate(divide="ignore"):
        logp = 2 * np.log(np.abs(vals))
    lognorm = logsumexp(logp)
    logw = logsumexp(logp + 2 * delta * d / hbar)
    return float(math.exp(0.5 * (logw - lognorm)))


def decay_slope(psi, spec: PotentialSpec, a: float, grid: GridSpec, nu: float | None = None,
                floor: float = 1e-250) -> float:
    """Least-squares slope of log|psi| against d(x) on nodes with d > 0."""
    vals = np.abs(_as_values(psi, grid))
    d = agmon_distance(spec, grid, a, nu)
    keep = (d > 0) & (vals > floor * vals.max())
    if np.count_nonzero(keep) < 3:
        raise FitError("too few outer nodes to fit a decay slope")
    return float(np.polyfit(d[keep], np.log(vals[keep]), 1)[0])


def hermite_function(m: int, x, hbar: float = 1.0) -> np.ndarray:
    """Normalised eigenfunction of -hbar^2 d^2/dx^2 + x^2 with eigenvalue hbar (2m + 1)."""
    y = np.asarray(x, dtype=float) / math.sqrt(hbar)
    h0 = math.pi ** -0.25 * np.exp(-0.5 * y ** 2)
    if m == 0:
        return h0 / hbar ** 0.25
    h1 = math.sqrt(2.0) * y * h0
    for j in range(1, m):
        h0, h1 = h1, math.sqrt(2.0 / (j + 1)) * y * h1 - math.sqrt(j / (j + 1)) * h0
    return h1 / hbar ** 0.25


def localising_cutoff(spec: PotentialSpec, grid: GridSpec, a: float, nu: float | None = None) -> np.ndarray:
    """phi = 1 on U_a, supported in U_{2a}."""
    from .mollify import MollifierKernel, mollify

    nu = spec.nu if nu is None else nu
    dist = distance_to_set(spec.on_grid(grid) < nu, grid.spacing)
    ind = (dist < 1.5 * a).astype(float)
    phi = mollify(SampledField(grid, ind), 0.45 * a, MollifierKernel()).values
    phi[np.abs(phi - 1.0) < 1e-12] = 1.0
    return phi


def localised_trace(values: np.ndarray, vectors: np.ndarray, phi: np.ndarray, gamma: float) -> tuple[float, float]:
    """(Tr g(H), Tr g(H) phi) from eigenpairs; columns of ``vectors`` are eigenvectors."""
    from .potentials import g_gamma

    g = np.atleast_1d(g_gamma(values, gamma))
    vec = vectors.reshape(-1, vectors.shape[-1])
    norms = np.sum(vec ** 2, axis=0)
    weights = np.sum(phi.reshape(-1, 1) * vec ** 2, axis=0) / norms
    return float(g.sum()), float(np.sum(g * weights))
