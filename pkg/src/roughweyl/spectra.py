"""Dirichlet discretisation of -hbar^2 Lap + V and eigenvalue counting.

Counting goes through Sylvester's law of inertia: the number of negative
pivots in a symmetric factorisation of ``H - E`` is the number of
eigenvalues below ``E``.
"""
from __future__ import annotations

import csv
import heapq
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .errors import NumericalError, PreconditionError, ResourceError
from .grid import GridSpec, SampledField
from .potentials import PotentialSpec, g_gamma

RESOLUTION = 8.0
DENSE_LIMIT = 3000
PERTURB_ATTEMPTS = 3


def thread_count() -> int:
    try:
        return max(1, int(os.environ.get("ROUGHWEYL_THREADS", "1")))
    except ValueError:
        return 1


# -- operator ---------------------------------------------------------------

@dataclass
class SparseSymOperator:
    matrix: sp.csr_matrix
    hbar: float
    grid: GridSpec
    potential: np.ndarray

    @property
    def order(self) -> int:
        return self.matrix.shape[0]

    def triplets(self):
        coo = self.matrix.tocoo()
        return coo.row, coo.col, coo.data

    def dense(self) -> np.ndarray:
        return self.matrix.toarray()

    def norm_bound(self) -> float:
        return float(abs(self.matrix).sum(axis=1).max())

    def shifted(self, c: float) -> "SparseSymOperator":
        return SparseSymOperator(
            (self.matrix + c * sp.identity(self.order, format="csr")).tocsr(),
            self.hbar, self.grid, self.potential + c,
        )


def max_resolution(hbar: float, v_min: float) -> float:
    """Largest admissible grid spacing, hbar / (8 sqrt(max V_-))."""
    depth = max(-v_min, 0.0)
    if depth == 0:
        return math.inf
    return hbar / (RESOLUTION * math.sqrt(depth))


def _potential_values(potential, grid: GridSpec) -> np.ndarray:
    if isinstance(potential, PotentialSpec):
        return potential.on_grid(grid)
    if isinstance(potential, SampledField):
        if potential.grid != grid:
            raise PreconditionError("field lives on a different grid")
        return potential.values
    return np.asarray(potential, dtype=float).reshape(grid.shape)


def assemble_operator(potential, grid: GridSpec, hbar: float,
                      check_resolution: bool = True) -> SparseSymOperator:
    """Second-order (2d+1)-point stencil with Dirichlet nodes eliminated."""
    if not hbar > 0:
        raise PreconditionError("hbar must be positive")
    v = _potential_values(potential, grid)
    h = grid.spacing
    if check_resolution:
        limit = max_resolution(hbar, float(v.min()))
        if h > limit:
            need = math.ceil(2 * grid.half_width / limit) - 1
            raise PreconditionError(
                f"grid spacing {h:.4g} exceeds hbar/(8 sqrt(max V_-)) = {limit:.4g}; need n >= {need}"
            )
    n = grid.n
    c = hbar ** 2 / h ** 2
    lap1 = sp.diags([-np.ones(n - 1), 2.0 * np.ones(n), -np.ones(n - 1)], [-1, 0, 1], format="csr") * c
    eye = sp.identity(n, format="csr")
    lap = sp.csr_matrix((grid.size, grid.size))
    for axis in range(grid.dim):
        factors = [eye] * grid.dim
        factors[axis] = lap1
        term = factors[0]
        for f in factors[1:]:
            term = sp.kron(term, f, format="csr")
        lap = lap + term
    mat = (lap + sp.diags(v.ravel(), 0, format="csr")).tocsr()
    mat.sort_indices()
    return SparseSymOperator(mat, hbar, grid, v.copy())


def dirichlet_grid(spec: PotentialSpec, hbar: float, resolution: float = RESOLUTION,
                   samples: int | None = None) -> GridSpec:
    """Smallest box holding the 4nu-sublevel set plus 4 Agmon lengths, at the resolution rule."""
    samples = samples or {1: 4001, 2: 401, 3: 81}.get(spec.dim, 41)
    probe = GridSpec(spec.dim, spec.box, samples)
    v = spec.on_grid(probe)
    mask = v < 4 * spec.nu
    if not mask.any():
        extent = 0.0
    else:
        pts = probe.points()[mask.ravel()]
        extent = float(np.abs(pts).max()) + probe.spacing
    half = extent + 4 * hbar / math.sqrt(spec.nu)
    if half > spec.box:
        raise PreconditionError(
            f"Dirichlet box half-width {half:.4g} exceeds the evaluation box {spec.box}"
        )
    depth = max(-float(v.min()), 0.0) * 1.02
    hmax = math.inf if depth == 0 else hbar / (resolution * math.sqrt(depth))
    n = 8 if math.isinf(hmax) else max(8, math.ceil(2 * half / hmax) - 1)
    return GridSpec(spec.dim, half, n)


# -- inertia ------------------------------------------------------------------

class _Breakdown(Exception):
    pass


def _sturm_count(diag: np.ndarray, off: np.ndarray, tiny: float) -> int:
    """Negative pivots of the LDL^T factorisation of a symmetric tridiagonal matrix."""
    neg = 0
    d = diag[0]
    off2 = (off * off).tolist()
    dl = diag.tolist()
    if abs(d) <= tiny:
        raise _Breakdown
    if d < 0:
        neg += 1
    for i in range(1, len(dl)):
        d = dl[i] - off2[i - 1] / d
        if abs(d) <= tiny:
            raise _Breakdown
        if d < 0:
            neg += 1
    return neg


def _dense_count(a: np.ndarray, tiny: float) -> int:
    _, d, _ = sla.ldl(a, lower=True, hermitian=True)
    n = d.shape[0]
    neg = 0
    i = 0
    while i < n:
        if i + 1 < n and d[i + 1, i] != 0.0:
            a11, a21, a22 = d[i, i], d[i + 1, i], d[i + 1, i + 1]
            det = a11 * a22 - a21 * a21
            if abs(det) <= tiny * tiny:
                raise _Breakdown
            if det < 0:
                neg += 1
            elif a11 + a22 < 0:
                neg += 2
            i += 2
        else:
            if abs(d[i, i]) <= tiny:
                raise _Breakdown
            neg += int(d[i, i] < 0)
            i += 1
    return neg


def _sparse_count(a: sp.csc_matrix, tiny: float) -> int:
    try:
        lu = splu(a, permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0,
                  options={"SymmetricMode": True})
    except RuntimeError as exc:
        raise _Breakdown from exc
    if not np.array_equal(lu.perm_r, lu.perm_c):
        raise _Breakdown
    piv = lu.U.diagonal()
    if not np.all(np.isfinite(piv)) or np.min(np.abs(piv)) <= tiny:
        raise _Breakdown
    return int(np.count_nonzero(piv < 0))


def _as_matrix(op):
    if isinstance(op, SparseSymOperator):
        return op.matrix
    return op


def inertia_count(op, E: float, method: str = "auto") -> int:
    """Number of eigenvalues <= E, from the inertia of op - E*I.

    A shift that lands on (or within rounding of) an eigenvalue is nudged
    upward by 1e-10*(1+|E|)*k, k = 1..3.
    """
    mat = _as_matrix(op)
    n = mat.shape[0]
    dense = not sp.issparse(mat)
    if method == "auto":
        if dense:
            method = "dense"
        else:
            bw = sp.coo_matrix(mat)
            method = "tridiagonal" if np.all(np.abs(bw.row - bw.col) <= 1) else (
                "dense" if n <= 400 else "sparse")
    scale = float(abs(mat).sum(axis=1).max()) if n else 0.0
    scale = max(scale, abs(E), 1.0)
    tiny = 1e-14 * scale
    if method == "tridiagonal":
        m = sp.csr_matrix(mat)
        diag0 = m.diagonal()
        off = m.diagonal(1)
    for k in range(PERTURB_ATTEMPTS + 1):
        shift = E + 1e-10 * (1 + abs(E)) * k
        try:
            if method == "tridiagonal":
                return _sturm_count(diag0 - shift, off, tiny)
            if method == "dense":
                a = mat.toarray() if sp.issparse(mat) else np.array(mat, dtype=float)
                a[np.diag_indices(n)] -= shift
                return _dense_count(a, tiny)
            if method == "sparse":
                a = (sp.csc_matrix(mat) - shift * sp.identity(n, format="csc")).tocsc()
                return _sparse_count(a, tiny)
            raise PreconditionError(f"unknown inertia method {method!r}")
        except _Breakdown:
            continue
    raise NumericalError(f"factorisation broke down at E = {E} after {PERTURB_ATTEMPTS} perturbations")


# -- spectra ------------------------------------------------------------------

@dataclass
class Spectrum:
    values: np.ndarray
    method: str = "dense"
    hbar: float | None = None

    def __post_init__(self):
        self.values = np.sort(np.asarray(self.values, dtype=float))

    def count(self, E: float) -> int:
        return int(np.searchsorted(self.values, E, side="right"))

    def __len__(self):
        return self.values.size

    def rows(self):
        for j, lam in enumerate(self.values):
            yield (self.method, self.hbar, float(lam), j + 1)


@dataclass
class CountingSamples:
    energies: np.ndarray
    counts: np.ndarray
    method: str = "inertia"
    hbar: float | None = None

    def rows(self):
        for e, c in zip(self.energies, self.counts):
            yield (self.method, self.hbar, float(e), int(c))


def write_spectrum_csv(path, items) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["method", "hbar", "E_or_t", "value"])
        for item in items:
            for method, hbar, e, v in item.rows():
                w.writerow([method, "" if hbar is None else repr(float(hbar)), repr(e), v])


def dense_spectrum(op: SparseSymOperator, upper: float | None = None) -> Spectrum:
    """Eigenvalues (all, or those <= upper) by a direct symmetric solver."""
    if op.grid.dim == 1:
        d = op.matrix.diagonal()
        e = op.matrix.diagonal(1)
        if upper is None:
            vals = sla.eigvalsh_tridiagonal(d, e)
        else:
            vals = sla.eigvalsh_tridiagonal(d, e, select="v", select_range=(-np.inf, upper))
    else:
        if op.order > DENSE_LIMIT:
            raise PreconditionError(f"dense eigensolve limited to order {DENSE_LIMIT}")
        vals = np.linalg.eigvalsh(op.dense())
        if upper is not None:
            vals = vals[vals <= upper]
    return Spectrum(vals, "dense", op.hbar)


def shift_ladder(op, energies: Sequence[float], workers: int | None = None) -> CountingSamples:
    """N(E_i) for each shift; one independent factorisation per shift."""
    energies = np.asarray(energies, dtype=float)
    workers = workers or thread_count()
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            counts = list(pool.map(lambda e: inertia_count(op, e), energies))
    else:
        counts = [inertia_count(op, e) for e in energies]
    hbar = op.hbar if isinstance(op, SparseSymOperator) else None
    return CountingSamples(energies, np.asarray(counts, dtype=int), "inertia", hbar)


# -- Riesz means --------------------------------------------------------------

def riesz_power_sum(values, gamma: float) -> float:
    return float(np.sum(g_gamma(np.asarray(values, dtype=float), gamma)))


@dataclass
class LayerCake:
    value: float
    lower: float
    upper: float
    evaluations: int


def layer_cake(counts, gamma: float, bottom: float | None = None, shifts: int = 64,
               rtol: float = 5e-3, max_evals: int = 50_000) -> LayerCake:
    """Tr(H)_-^gamma = gamma * int_0^inf t^(gamma-1) N(-t) dt from samples of N.

    Starts from ``shifts`` log-spaced t in [1e-4 b, b] (b the depth of the
    spectrum); each cell integrates t^(gamma-1) exactly and uses the
    trapezoid average of N. Because N(-t) is monotone, each cell also yields
    a rigorous bracket; cells with the widest bracket are bisected until the
    bracket half-width is below rtol * value.
    """
    if not 0 < gamma <= 1:
        raise PreconditionError("layer-cake needs gamma in (0, 1]; use inertia_count for gamma = 0")
    if isinstance(counts, Spectrum):
        spec = counts
        count = spec.count
        if bottom is None:
            bottom = max(-float(spec.values[0]), 0.0) if len(spec) else 0.0
    else:
        count = counts
        if bottom is None:
            raise PreconditionError("a callable counting function needs the spectral depth `bottom`")
    if bottom <= 0:
        return LayerCake(0.0, 0.0, 0.0, 0)
    evals = 0

    def n_at(t):
        nonlocal evals
        evals += 1
        return count(-t)

    ts = np.geomspace(bottom * 1e-4, bottom, shifts)
    ns = [n_at(t) for t in ts]
    n0 = n_at(0.0)
    # cells: (t_lo, t_hi, n_lo_t, n_hi_t); N is non-increasing in t
    cells = [(0.0, ts[0], n0, ns[0])]
    cells += [(ts[i], ts[i + 1], ns[i], ns[i + 1]) for i in range(len(ts) - 1)]
    if n_at(bottom * (1 + 1e-9)) != 0:
        raise PreconditionError("eigenvalues below -bottom: `bottom` must bound the spectral depth")

    def weight(a, b):
        return b ** gamma - a ** gamma

    heap = []
    lower = upper = 0.0
    for c in cells:
        w = weight(c[0], c[1])
        lower += w * c[3]
        upper += w * c[2]
        gap = w * (c[2] - c[3])
        if gap > 0:
            heapq.heappush(heap, (-gap, c))
    while heap and evals < max_evals:
        mid = 0.5 * (lower + upper)
        if 0.5 * (upper - lower) <= rtol * mid:
            break
        neggap, (a, b, na, nb) = heapq.heappop(heap)
        w = weight(a, b)
        lower -= w * nb
        upper -= w * na
        m = math.sqrt(a * b) if a > 0 else b / 16.0
        nm = n_at(m)
        for c in ((a, m, na, nm), (m, b, nm, nb)):
            wc = weight(c[0], c[1])
            lower += wc * c[3]
            upper += wc * c[2]
            gap = wc * (c[2] - c[3])
            if gap > 0:
                heapq.heappush(heap, (-gap, c))
    return LayerCake(0.5 * (lower + upper), lower, upper, evals)


def riesz_mean_layer_cake(counts, gamma: float, bottom: float | None = None, **kw) -> float:
    return layer_cake(counts, gamma, bottom, **kw).value


def operator_riesz_mean(op: SparseSymOperator, gamma: float, **kw) -> float:
    """Riesz mean of a discretised operator from inertia counts alone."""
    if gamma == 0:
        return float(inertia_count(op, 0.0))
    bottom = max(-float(op.potential.min()), 0.0)
    return layer_cake(lambda e: inertia_count(op, e), gamma, bottom, **kw).value


# -- separable composition ----------------------------------------------------

def compose_separable_spectrum(spectra: Sequence, cutoff: float,
                               max_count: int = 20_000_000) -> Spectrum:
    """All sums lam_j1 + ... + lam_jd <= cutoff of sorted 1D spectra.

    Expands one factor at a time, keeping only partial sums that can still
    finish below the cutoff, so the full tensor product is never formed.
    """
    arrays = [np.sort(np.asarray(s.values if isinstance(s, Spectrum) else s, dtype=float)) for s in spectra]
    if not arrays or any(a.size == 0 for a in arrays):
        return Spectrum(np.empty(0), "separable")
    mins = [a[0] for a in arrays]
    # prune with a little slack, then filter the finished sums exactly
    slack = 1e-12 * (abs(cutoff) + sum(float(np.abs(a).max()) for a in arrays))
    partial = np.zeros(1)
    for i, a in enumerate(arrays):
        rest = sum(mins[i + 1:])
        room = cutoff - rest - partial + slack
        keep = np.searchsorted(a, room, side="right")
        total = int(keep.sum())
        if total > max_count:
            raise ResourceError(f"separable composition would retain {total} sums (> {max_count})")
        if total == 0:
            return Spectrum(np.empty(0), "separable")
        base = np.repeat(partial, keep)
        offsets = np.concatenate([np.arange(k) for k in keep]) if total else np.empty(0, int)
        partial = base + a[offsets]
    hb = spectra[0].hbar if isinstance(spectra[0], Spectrum) else None
    return Spectrum(partial[partial <= cutoff], "separable", hb)


# -- harmonic oscillator oracle -----------------------------------------------

def oscillator_lattice_count(d: int, hbar: float, lam: float, gamma: float = 0.0) -> float:
    """Tr g_gamma(-hbar^2 Lap + |x|^2 - lam) on R^d from the exact levels hbar(2|m|_1 + d)."""
    if not lam > 0:
        raise PreconditionError("lambda must be positive")
    top = (lam / hbar - d) / 2.0
    smax = math.floor(top + 1e-9 * max(1.0, abs(top)))
    if smax < 0:
        return 0.0
    if gamma == 0:
        return float(math.comb(smax + d, d))
    s = np.arange(smax + 1)
    mult = np.array([math.comb(int(k) + d - 1, d - 1) for k in s], dtype=float)
    gap = np.maximum(lam - hbar * (2 * s + d), 0.0)
    return float(np.sum(mult * gap ** gamma))


def oscillator_crossings(d: int, lam: float, hbar_lo: float, hbar_hi: float) -> np.ndarray:
    """Values of hbar in [lo, hi] at which a level hbar(2s + d) equals lam."""
    s_lo = max(0, math.ceil((lam / hbar_hi - d) / 2))
    s_hi = math.floor((lam / hbar_lo - d) / 2)
    s = np.arange(s_lo, s_hi + 1)
    return lam / (2 * s + d) if s.size else np.empty(0)


def oscillator_levels(d: int, hbar: float, lam: float, upper: float) -> np.ndarray:
    """Eigenvalues <= upper with multiplicity (small d and hbar only)."""
    top = math.floor(((upper + lam) / hbar - d) / 2 + 1e-9)
    out = []
    for s in range(top + 1):
        out += [hbar * (2 * s + d) - lam] * math.comb(s + d - 1, d - 1)
    return np.array(out)
