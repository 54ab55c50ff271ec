"""Multiscale covering by balls B(x_k, l(x_k)) and the matching partition of unity."""
from __future__ import annotations

import csv
import heapq
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .errors import CoverageError, PreconditionError
from .grid import GridSpec, SampledField
from .mollify import FramedPotentials, bump_profile, plateau_cutoff

A_MAX = 2.0 ** 40


@dataclass
class ScaleFunction:
    grid: GridSpec
    l: np.ndarray
    A: float
    rho: float
    floor: float
    margin: float
    target: np.ndarray
    hbar: float

    @property
    def f(self) -> np.ndarray:
        return np.sqrt(self.l)


def _gradient_norm(values: np.ndarray, h: float) -> np.ndarray:
    grads = np.gradient(values, h) if values.ndim > 1 else [np.gradient(values, h)]
    return np.sqrt(sum(g ** 2 for g in grads))


def _dilate(mask: np.ndarray, radius: float, h: float) -> np.ndarray:
    return ndimage.distance_transform_edt(~mask) * h <= radius


def build_scale_function(v_eps, phi1: np.ndarray, hbar: float, target: np.ndarray,
                         margin: float, rho_target: float = 0.1, grid: GridSpec | None = None,
                         A0: float = 1.0) -> ScaleFunction:
    """l = A^-1 sqrt(|phi1 V_eps|^2 + hbar^(4/3)) with A doubled until l <= margin/9
    and |grad l| <= rho_target on every node within margin/9 of the target."""
    if not rho_target < 1 / 8:
        raise PreconditionError("rho_target must be below 1/8")
    if isinstance(v_eps, SampledField):
        grid, v = v_eps.grid, v_eps.values
    else:
        if grid is None:
            raise PreconditionError("an array potential needs its grid")
        v = np.asarray(v_eps, float).reshape(grid.shape)
    if not target.any():
        raise PreconditionError("empty target set")
    h = grid.spacing
    floor = hbar ** (2.0 / 3.0)
    base = np.sqrt((phi1 * v) ** 2 + floor ** 2)
    zone = _dilate(target, margin / 9, h)
    gbase = float(_gradient_norm(base, h)[zone].max())
    lmax = float(base[target].max())
    A = A0
    while A <= A_MAX:
        if lmax / A <= margin / 9 and gbase / A <= rho_target:
            break
        A *= 2
    else:
        raise PreconditionError("no A <= 2^40 satisfies the scale constraints")
    return ScaleFunction(grid, base / A, A, gbase / A, floor / A, margin, target, hbar)


@dataclass
class CoverPatch:
    center: tuple[float, ...]
    index: tuple[int, ...]
    radius: float
    h_k: float
    eps_k: float


@dataclass
class Cover:
    patches: list[CoverPatch]
    multiplicity: int
    packing_bound: int
    covered: bool
    grid: GridSpec
    counts: np.ndarray = field(repr=False)


def packing_bound(rho: float, d: int) -> int:
    """Bound on balls through one point for the greedy rule below.

    Centres of balls through x are l_max/2 apart, so the balls of radius l/4
    are disjoint and lie in B(x, 5 l_max / 4); radii are (1 +- rho) comparable.
    """
    return int(math.floor((5 * (1 + rho) / (1 - rho)) ** d))


def _window(idx, radius: float, grid: GridSpec):
    reach = int(math.ceil(radius / grid.spacing))
    sl = tuple(slice(max(i - reach, 0), min(i + reach + 1, grid.n)) for i in idx)
    ax = grid.axis()
    pts = np.meshgrid(*[ax[s] for s in sl], indexing="ij")
    return sl, pts


def _dist(pts, center) -> np.ndarray:
    return np.sqrt(sum((p - c) ** 2 for p, c in zip(pts, center)))


def greedy_cover(scale: ScaleFunction, target: np.ndarray | None = None, delta: float = 1 / 3) -> Cover:
    """Centres taken in decreasing l; a node is rejected once it lies within
    half the radius of an accepted centre (which also covers it)."""
    grid = scale.grid
    target = scale.target if target is None else target
    ax = grid.axis()
    flat = np.flatnonzero(target)
    lvals = scale.l.ravel()[flat]
    order = flat[np.lexsort((flat, -lvals))]
    blocked = np.zeros(grid.shape, dtype=bool)
    patches = []
    for node in order:
        idx = np.unravel_index(node, grid.shape)
        if blocked[idx]:
            continue
        r = float(scale.l[idx])
        center = tuple(float(ax[i]) for i in idx)
        sl, pts = _window(idx, r / 2, grid)
        blocked[sl] |= _dist(pts, center) < r / 2
        h_k = scale.hbar / r ** 1.5
        patches.append(CoverPatch(center, tuple(int(i) for i in idx), r, h_k, h_k ** (1 - delta)))
    counts = multiplicity_counts(patches, grid)
    covered = bool(np.all(counts[target] >= 1))
    if not covered:
        raise CoverageError("greedy cover left target nodes uncovered")
    return Cover(patches, int(counts.max()), packing_bound(scale.rho, grid.dim), covered, grid, counts)


def multiplicity_counts(patches, grid: GridSpec) -> np.ndarray:
    """Number of open balls B(x_k, l_k) containing each node."""
    counts = np.zeros(grid.shape, dtype=np.int32)
    for p in patches:
        sl, pts = _window(p.index, p.radius, grid)
        counts[sl] += _dist(pts, p.center) < p.radius
    return counts


def touching_pairs(patches):
    """Index pairs of intersecting balls (sweep along the first coordinate)."""
    order = sorted(range(len(patches)), key=lambda k: patches[k].center[0])
    rmax = max(p.radius for p in patches)
    out = []
    for a, i in enumerate(order):
        pi = patches[i]
        for j in order[a + 1:]:
            pj = patches[j]
            if pj.center[0] - pi.center[0] >= pi.radius + rmax:
                break
            if math.dist(pi.center, pj.center) < pi.radius + pj.radius:
                out.append((i, j))
    return out


@dataclass
class PartitionOfUnity:
    patches: list[CoverPatch]
    grid: GridSpec
    target: np.ndarray
    windows: list[tuple[slice, ...]]
    weights: list[np.ndarray] = field(repr=False)
    total: np.ndarray = field(repr=False)
    overlap_bound: int = 0

    def weight(self, k: int) -> np.ndarray:
        out = np.zeros(self.grid.shape)
        out[self.windows[k]] = self.weights[k]
        return out

    def sum_error(self, subset=None) -> float:
        acc = np.zeros(self.grid.shape)
        for k in (range(len(self.patches)) if subset is None else subset):
            acc[self.windows[k]] += self.weights[k]
        return float(np.abs(acc - 1.0)[self.target].max())


def build_partition(cover: Cover, target: np.ndarray) -> PartitionOfUnity:
    """phi_k = b_k / sum_j b_j, b_k the canonical bump on B(x_k, l_k)."""
    grid = cover.grid
    denom = np.zeros(grid.shape)
    windows, bumps = [], []
    for p in cover.patches:
        sl, pts = _window(p.index, p.radius, grid)
        b = bump_profile(_dist(pts, p.center) / p.radius)
        denom[sl] += b
        windows.append(sl)
        bumps.append(b)
    if np.any(denom[target] < 1e-14):
        raise CoverageError("partition denominator vanishes on the target")
    with np.errstate(divide="ignore", invalid="ignore"):
        weights = [np.where(denom[sl] > 0, b / denom[sl], 0.0) for sl, b in zip(windows, bumps)]
    return PartitionOfUnity(cover.patches, grid, target, windows, weights, denom, cover.multiplicity)


def scaled_derivative_ratios(pou: PartitionOfUnity, alpha_max: int = 2) -> dict[int, np.ndarray]:
    """l_k^|a| max |d^a phi_k| over target nodes, per patch and order |a|.

    Mixed second derivatives are included through the full Hessian's max entry.
    """
    grid = pou.grid
    h = grid.spacing
    inner = ndimage.binary_erosion(pou.target, iterations=2, border_value=0)
    out = {a: np.zeros(len(pou.patches)) for a in range(alpha_max + 1)}
    for k, (p, sl, w) in enumerate(zip(pou.patches, pou.windows, pou.weights)):
        mask = inner[sl]
        if not mask.any():
            out_vals = [0.0] * (alpha_max + 1)
        else:
            out_vals = [float(np.abs(w[mask]).max())]
            if alpha_max >= 1:
                grads = np.gradient(w, h) if w.ndim > 1 else [np.gradient(w, h)]
                out_vals.append(float(np.sqrt(sum(g ** 2 for g in grads))[mask].max()))
                if alpha_max >= 2:
                    hmax = 0.0
                    for g in grads:
                        sec = np.gradient(g, h) if g.ndim > 1 else [np.gradient(g, h)]
                        for s in sec:
                            hmax = max(hmax, float(np.abs(s[mask]).max()))
                    out_vals.append(hmax)
        for a in range(alpha_max + 1):
            out[a][k] = out_vals[a] * p.radius ** a
    return out


def ratio_spread(values: np.ndarray) -> float:
    v = values[values > 0]
    return float(v.max() / v.min()) if v.size else 1.0


def finite_subcover(cover: Cover, support: np.ndarray) -> tuple[list[int], list[int]]:
    """(I', I): a greedy set cover of ``support`` and its closure under touching balls."""
    grid = cover.grid
    sets = []
    for k, p in enumerate(cover.patches):
        sl, pts = _window(p.index, p.radius, grid)
        inside = (_dist(pts, p.center) < p.radius) & support[sl]
        nz = np.nonzero(inside)
        flat = np.ravel_multi_index(tuple(nz[a] + sl[a].start for a in range(grid.dim)), grid.shape)
        sets.append(set(flat.tolist()))
    uncovered = set(np.flatnonzero(support).tolist())
    heap = [(-len(s), k) for k, s in enumerate(sets) if s]
    heapq.heapify(heap)
    chosen = []
    while uncovered and heap:
        neg, k = heapq.heappop(heap)
        gain = len(sets[k] & uncovered)
        if gain == 0:
            continue
        if gain < -neg:
            heapq.heappush(heap, (-gain, k))
            continue
        chosen.append(k)
        uncovered -= sets[k]
    if uncovered:
        raise CoverageError("support not covered by the patches")
    chosen.sort()
    closure = set(chosen)
    picked = set(chosen)
    for i, j in touching_pairs(cover.patches):
        if i in picked:
            closure.add(j)
        if j in picked:
            closure.add(i)
    return chosen, sorted(closure)


def write_cover_csv(path, cover: Cover) -> None:
    d = cover.grid.dim
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"x{i + 1}" for i in range(d)] + ["l", "h", "eps"])
        for p in cover.patches:
            w.writerow([repr(c) for c in p.center] + [repr(p.radius), repr(p.h_k), repr(p.eps_k)])


# -- assembled pipeline -------------------------------------------------------

@dataclass
class CoverSetup:
    scale: ScaleFunction
    phi: np.ndarray
    phi1: np.ndarray
    support: np.ndarray


def cover_setup(framed: FramedPotentials, hbar: float, rho_target: float = 0.1,
                which: str = "minus", A0: float = 1.0) -> CoverSetup:
    """phi, phi1 and the scale function for one framing potential.

    phi = 1 on {V_eps < nu~}, supported in {V_eps < 3 nu~ / 2}; phi1 = 1 on
    {V_eps < 2 nu~}, supported in {V_eps < 4 nu~}. The margin is the measured
    distance from supp phi to the complement of {V_eps < 2 nu~}.
    """
    grid = framed.grid
    v = framed.v_minus if which == "minus" else framed.v_plus
    tn = framed.tilde_nu
    phi, _ = plateau_cutoff(v, grid, tn, 1.5 * tn)
    phi1, _ = plateau_cutoff(v, grid, 2 * tn, 4 * tn)
    support = phi > 0
    outside = ~(v < 2 * tn)
    margin = float((ndimage.distance_transform_edt(~outside) * grid.spacing)[support].min())
    scale = build_scale_function(v, phi1, hbar, support, margin, rho_target, grid, A0)
    return CoverSetup(scale, phi, phi1, support)
