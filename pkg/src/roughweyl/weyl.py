"""Phase-space (Weyl) terms: closed-form momentum reduction, Monte Carlo oracle, rate comparison."""
from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import signal

from .errors import DomainError, FitError, PreconditionError
from .grid import GridSpec, SampledField
from .potentials import PotentialSpec, eval_potential, g_gamma


class DegenerateEstimateWarning(RuntimeWarning):
    pass


def classical_constant(gamma: float, d: int) -> float:
    """Gamma(g+1) / ((4 pi)^(d/2) Gamma(g + d/2 + 1))."""
    if not 0.0 <= gamma <= 1.0:
        raise PreconditionError("gamma must lie in [0, 1]")
    if d < 1:
        raise PreconditionError("d must be >= 1")
    return math.gamma(gamma + 1) / ((4 * math.pi) ** (d / 2) * math.gamma(gamma + d / 2 + 1))


def ball_volume(d: int) -> float:
    return math.pi ** (d / 2) / math.gamma(d / 2 + 1)


@dataclass
class WeylTermResult:
    value: float
    quadrature_error_estimate: float
    gamma: float
    hbar: float
    dim: int
    meta: dict = field(default_factory=dict)


def _density(v: np.ndarray, gamma: float, d: int) -> np.ndarray:
    return np.maximum(-v, 0.0) ** (gamma + d / 2)


def _cell_centres(dim: int, half: float, m: int) -> np.ndarray:
    h = 2 * half / m
    ax = -half + h * (np.arange(m) + 0.5)
    mesh = np.meshgrid(*([ax] * dim), indexing="ij")
    return np.stack([g.ravel() for g in mesh], axis=1)


def _weight_values(weight, pts: np.ndarray, shape) -> np.ndarray:
    if weight is None:
        return np.ones(shape)
    if callable(weight):
        return np.asarray(weight(pts), dtype=float).reshape(shape)
    raise PreconditionError("weight must be a callable for closed-form quadrature")


def _touches_boundary(dens: np.ndarray) -> bool:
    for axis in range(dens.ndim):
        if np.any(np.take(dens, 0, axis=axis) > 0) or np.any(np.take(dens, -1, axis=axis) > 0):
            return True
    return False


DEFAULT_CELLS = {1: 20000, 2: 800, 3: 120}


def weyl_term_quadrature(potential, hbar: float, gamma: float = 0.0, weight=None,
                         cells: int | None = None, half_width: float | None = None) -> WeylTermResult:
    """hbar^-d L_{gamma,d} int phi V_-^(gamma + d/2) dx by the midpoint rule.

    ``potential`` is a PotentialSpec (evaluated at cell centres of two
    nested grids, m and 2m cells per axis) or a SampledField (nodes used as
    cell centres, coarse level = every other node). The error estimate is
    the Richardson correction with order p = min(2, 1 + gamma + d/2).
    """
    if not hbar > 0:
        raise PreconditionError("hbar must be positive")
    if isinstance(potential, SampledField):
        return weyl_term_field(potential, hbar, gamma, weight)
    if not isinstance(potential, PotentialSpec):
        raise PreconditionError("potential must be a PotentialSpec or a SampledField")
    d = potential.dim
    half = potential.box if half_width is None else half_width
    m = cells or DEFAULT_CELLS.get(d, 40)
    ints = []
    for level in (m, 2 * m):
        pts = _cell_centres(d, half, level)
        shape = (level,) * d
        dens = _density(eval_potential(potential, pts).reshape(shape), gamma, d)
        if _touches_boundary(dens):
            raise DomainError("negative part of V reaches the quadrature box; enlarge the box")
        dens = dens * _weight_values(weight, pts, shape)
        ints.append(float(dens.sum()) * (2 * half / level) ** d)
    return _finish(ints[1], ints[0], hbar, gamma, d, {"cells": 2 * m})


def weyl_term_field(v: SampledField, hbar: float, gamma: float = 0.0, weight=None) -> WeylTermResult:
    """Node-centred midpoint rule for a potential sampled on a grid."""
    grid = v.grid
    d = grid.dim
    dens = _density(v.values, gamma, d)
    if _touches_boundary(dens):
        raise DomainError("negative part of V reaches the grid boundary; enlarge the box")
    if weight is not None:
        w = weight.values if isinstance(weight, SampledField) else np.asarray(weight, float).reshape(grid.shape)
        dens = dens * w
    fine = float(dens.sum()) * grid.cell_volume
    if (grid.n + 1) % 2 == 0:
        coarse = float(dens[(slice(1, None, 2),) * d].sum()) * (2 * grid.spacing) ** d
    else:
        coarse = float("nan")
    return _finish(fine, coarse, hbar, gamma, d, {"nodes": grid.n})


def _finish(fine, coarse, hbar, gamma, d, meta) -> WeylTermResult:
    p = min(2.0, 1.0 + gamma + d / 2)
    err_int = abs(fine - coarse) / (2 ** p - 1) if math.isfinite(coarse) else float("nan")
    const = classical_constant(gamma, d)
    scale = const / hbar ** d
    return WeylTermResult(scale * fine, scale * err_int, gamma, hbar, d,
                          dict(meta, integral=fine, order=p))


def oscillator_weyl_term(d: int, hbar: float, lam: float, gamma: float = 0.0) -> float:
    """Closed form for |x|^2 - lam: Gamma(g+1)/Gamma(g+d+1) (lam/(2 hbar))^d lam^g."""
    if not lam > 0:
        return 0.0
    return math.gamma(gamma + 1) / math.gamma(gamma + d + 1) * (lam / (2 * hbar)) ** d * lam ** gamma


# -- Monte Carlo oracle -------------------------------------------------------

SHARD = 1 << 16


def _support_box(spec: PotentialSpec, probe: int | None = None):
    n = probe or {1: 4001, 2: 401, 3: 61}.get(spec.dim, 21)
    g = GridSpec(spec.dim, spec.box, n)
    v = spec.on_grid(g)
    neg = v < 0
    if not neg.any():
        return None, 0.0
    pts = g.points()[neg.ravel()]
    lo = np.maximum(pts.min(axis=0) - 2 * g.spacing, -spec.box)
    hi = np.minimum(pts.max(axis=0) + 2 * g.spacing, spec.box)
    depth = -float(v.min())
    return (lo, hi), depth


def weyl_term_montecarlo(spec: PotentialSpec, hbar: float, gamma: float = 0.0, samples: int = 1 << 20,
                         seed: int = 0, weight=None, workers: int | None = None) -> WeylTermResult:
    """(2 pi hbar)^-d int int g_gamma(p^2 + V(x)) phi(x) dx dp by uniform sampling.

    Sampling is split into shards of 2^16 points; shard j draws from a Philox
    stream keyed by (seed, j), so the result does not depend on the worker count.
    """
    from .spectra import thread_count

    d = spec.dim
    box, depth = _support_box(spec)
    if box is None:
        warnings.warn("V has no negative part: zero accepted samples", DegenerateEstimateWarning)
        return WeylTermResult(0.0, 0.0, gamma, hbar, d, {"samples": 0, "accepted": 0})
    lo, hi = box
    pmax = 1.05 * math.sqrt(depth * 1.05)
    vol = float(np.prod(hi - lo)) * (2 * pmax) ** d
    shards = [(j, min(SHARD, samples - j * SHARD)) for j in range(math.ceil(samples / SHARD))]

    def run(job):
        j, m = job
        rng = np.random.Generator(np.random.Philox(key=[seed, j]))
        x = lo + (hi - lo) * rng.random((m, d))
        p = pmax * (2 * rng.random((m, d)) - 1)
        vals = g_gamma(np.sum(p ** 2, axis=1) + eval_potential(spec, x), gamma)
        vals = np.atleast_1d(vals)
        if weight is not None:
            vals = vals * np.asarray(weight(x), dtype=float)
        return float(vals.sum()), float((vals ** 2).sum()), int(np.count_nonzero(vals))

    workers = workers or thread_count()
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            parts = list(pool.map(run, shards))
    else:
        parts = [run(s) for s in shards]
    s1 = sum(p[0] for p in parts)
    s2 = sum(p[1] for p in parts)
    acc = sum(p[2] for p in parts)
    if acc == 0:
        warnings.warn("zero accepted samples: degenerate estimate", DegenerateEstimateWarning)
    mean = s1 / samples
    var = max(s2 / samples - mean ** 2, 0.0)
    norm = vol / (2 * math.pi * hbar) ** d
    return WeylTermResult(norm * mean, norm * math.sqrt(var / samples), gamma, hbar, d,
                          {"samples": samples, "accepted": acc, "seed": seed})


# -- phase-space comparison ---------------------------------------------------

@dataclass
class RateReport:
    eps: list[float]
    differences: list[float]
    slope: float | None
    half_width: float | None
    predicted: float
    tolerance: float
    status: str

    @property
    def passed(self) -> bool:
        if self.status == "exact":
            return True
        return self.slope is not None and self.slope >= self.predicted - self.tolerance

    def to_dict(self) -> dict:
        return {"eps": self.eps, "differences": self.differences, "slope": self.slope,
                "half_width": self.half_width, "predicted": self.predicted,
                "tolerance": self.tolerance, "status": self.status,
                "verdict": "PASS" if self.passed else "FAIL"}


def loglog_slope(x, y) -> tuple[float, float]:
    """Least-squares slope of log y on log x and twice its standard error."""
    lx, ly = np.log(np.asarray(x, float)), np.log(np.asarray(y, float))
    if lx.size < 3:
        raise FitError("need at least 3 points for a slope")
    coef, cov = np.polyfit(lx, ly, 1, cov=True) if lx.size > 3 else (np.polyfit(lx, ly, 1), None)
    if cov is None:
        resid = ly - np.polyval(coef, lx)
        sxx = np.sum((lx - lx.mean()) ** 2)
        se = math.sqrt(np.sum(resid ** 2) / max(lx.size - 2, 1) / sxx)
    else:
        se = math.sqrt(max(cov[0, 0], 0.0))
    return float(coef[0]), 2 * se


def compare_phase_space(v: SampledField, v_eps, hbar: float, eps_list, order: float,
                        gamma: float = 0.0, phi=None, tolerance: float = 0.2) -> RateReport:
    """|Weyl(v_eps) - Weyl(v)| per eps and its log-log slope against eps.

    ``v_eps`` is a callable eps -> SampledField or a list aligned with
    ``eps_list``. PASS if the slope is at least order - tolerance.
    """
    eps_list = [float(e) for e in eps_list]
    if len(eps_list) < 3:
        raise FitError("phase-space comparison needs at least 3 eps values")
    base = weyl_term_field(v, hbar, gamma, phi).value
    diffs = []
    for i, e in enumerate(eps_list):
        ve = v_eps(e) if callable(v_eps) else v_eps[i]
        diffs.append(abs(weyl_term_field(ve, hbar, gamma, phi).value - base))
    pos = [(e, r) for e, r in zip(eps_list, diffs) if r > 0]
    if not pos:
        return RateReport(eps_list, diffs, None, None, order, tolerance, "exact")
    if len(pos) < 3:
        raise FitError("fewer than 3 non-zero differences to fit")
    slope, hw = loglog_slope(*zip(*pos))
    return RateReport(eps_list, diffs, slope, hw, order, tolerance, "fit")


def separable_weyl_term(factor, d: int, hbar: float, gamma: float = 0.0, half_width: float | None = None,
                        samples: int = 2_000_000, bins: int = 200_000) -> WeylTermResult:
    """Weyl term of V(x) = sum_i v(x_i) from the d-fold convolution of the law of v.

    The pushforward of Lebesgue measure under the 1D factor is binned on the
    part of its range that can contribute to a negative sum; the error
    estimate compares two bin widths.
    """
    if isinstance(factor, PotentialSpec):
        if factor.dim != 1:
            raise PreconditionError("separable factors must be one-dimensional")
        half = factor.box if half_width is None else half_width
        func = lambda x: eval_potential(factor, x.reshape(-1, 1))  # noqa: E731
    else:
        if half_width is None:
            raise PreconditionError("a callable factor needs half_width")
        half, func = half_width, factor
    hx = 2 * half / samples
    x = -half + hx * (np.arange(samples) + 0.5)
    v = np.asarray(func(x), dtype=float)
    vmin = float(v.min())
    if vmin >= 0:
        return WeylTermResult(0.0, 0.0, gamma, hbar, d, {"samples": samples})
    top = -(d - 1) * vmin
    if v[0] < top or v[-1] < top:
        raise DomainError("contributing sublevel set of the factor reaches the box; enlarge it")
    ints = []
    for nb in (bins // 2, bins):
        width = (top - vmin) / nb
        keep = v < top
        idx = np.minimum(((v[keep] - vmin) / width).astype(np.int64), nb - 1)
        hist = np.bincount(idx, minlength=nb).astype(float) * hx
        dens = hist
        for _ in range(d - 1):
            dens = signal.fftconvolve(dens, hist)[: nb * d]
        centres = d * vmin + width * (np.arange(dens.size) + 0.5 * d)
        ints.append(float(np.sum(dens * _density(centres, gamma, d))))
    return _finish(ints[1], ints[0], hbar, gamma, d, {"samples": samples, "bins": bins, "separable": True})


def phase_space_experiment(spec: PotentialSpec, hbar: float, eps_list, n: int, gamma: float = 0.0,
                           half_width: float | None = None, tolerance: float = 0.2) -> RateReport:
    """compare_phase_space for a rough spec, mollified directly from its closed form.

    Kernel order follows the regularity (4 when k + mu > 2); eps values the
    grid cannot resolve are rejected rather than dropped.
    """
    from .mollify import MollifierKernel, mollify

    hc = spec.regularity
    kernel = MollifierKernel(2 if hc.order <= 2 else 4)
    half = spec.box * 2 / 3 if half_width is None else half_width
    grid = GridSpec(spec.dim, half, n)
    v = SampledField(grid, spec.on_grid(grid))
    f = lambda p: eval_potential(spec, p)  # noqa: E731
    return compare_phase_space(v, lambda e: mollify(f, e, kernel, grid), hbar, eps_list, hc.order,
                               gamma, tolerance=tolerance)
