"""Mollification with certified rates, framing potentials and bracketing checks."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, ndimage, signal
from scipy.special import gamma as gamma_fn

from .errors import FramingError, NumericalError, PreconditionError, ResourceError
from .grid import GridSpec, SampledField
from .potentials import HolderClass, PotentialSpec, SemiclassicalParams

MAX_FINE_NODES = 30_000_000
# stencils larger than this go through FFT convolution
DIRECT_LIMIT = 4097


def bump_profile(r):
    """exp(-1/(1-r^2)) on r < 1, zero elsewhere (unnormalised)."""
    r = np.asarray(r, dtype=float)
    inside = r < 1.0
    out = np.zeros_like(r)
    out[inside] = np.exp(-1.0 / (1.0 - r[inside] ** 2))
    return out


def _radial_mass(dim: int, radius: float = 1.0) -> float:
    sphere = 2 * math.pi ** (dim / 2) / gamma_fn(dim / 2)
    val, _ = integrate.quad(lambda r: r ** (dim - 1) * float(bump_profile(r / radius)), 0, radius,
                            epsabs=1e-15, epsrel=1e-13, limit=200)
    return sphere * val


@dataclass(frozen=True)
class MollifierKernel:
    """Radial mollifier built from the canonical bump.

    order 2 is the bump itself (non-negative, vanishing first moment).
    order 4 combines the bump at radius 1 and 1/2 so that second moments
    vanish too; it is needed to reach eps^(k+mu) for k + mu > 2 and is not
    positivity preserving.
    """

    order: int = 2

    def __post_init__(self):
        if self.order not in (2, 4):
            raise PreconditionError("kernel order must be 2 or 4")

    @property
    def min_samples(self) -> int:
        """Required eps / h."""
        return 8 if self.order == 2 else 16

    def density(self, u, dim: int = 1):
        """Continuous kernel at u (|u| in units of eps), unit mass."""
        r = np.abs(np.asarray(u, dtype=float)) if dim == 1 else np.asarray(u, dtype=float)
        base = bump_profile(r) / _radial_mass(dim)
        if self.order == 2:
            return base
        half = bump_profile(2 * r) * 2 ** dim / _radial_mass(dim)
        # second moment of the radius-1/2 bump is 1/4 of the radius-1 one
        return -base / 3.0 + 4.0 * half / 3.0

    def stencil(self, h_over_eps: float, dim: int) -> np.ndarray:
        """Discrete weights on the grid offsets, exact unit mass."""
        reach = int(math.floor(1.0 / h_over_eps))
        offs = np.arange(-reach, reach + 1) * h_over_eps
        mesh = np.meshgrid(*([offs] * dim), indexing="ij")
        r = np.sqrt(sum(m ** 2 for m in mesh))
        w1 = bump_profile(r)
        w1 /= w1.sum()
        if self.order == 2:
            return w1
        w2 = bump_profile(2 * r)
        w2 /= w2.sum()
        u0 = mesh[0] ** 2
        m1, m2 = float((w1 * u0).sum()), float((w2 * u0).sum())
        alpha = -m2 / (m1 - m2)
        w = alpha * w1 + (1 - alpha) * w2
        return w / w.sum()


def abs_moment(kernel: MollifierKernel | None = None, power: float = 1.0) -> float:
    """m_p = int |u|^p rho(u) du in one dimension."""
    kernel = kernel or MollifierKernel()
    pts = [0.0, 0.5] if kernel.order == 4 else [0.0]
    val, _ = integrate.quad(lambda u: u ** power * float(kernel.density(u)), 0, 1, points=pts[1:] or None,
                            epsabs=1e-15, epsrel=1e-13, limit=400)
    return 2 * val


def mollify(f, epsilon: float, kernel: MollifierKernel | None = None,
            grid: GridSpec | None = None) -> SampledField:
    """Convolve with the kernel rescaled to radius epsilon.

    A callable ``f`` (points -> values) is sampled on a grid padded by
    epsilon, so the result is exact up to quadrature on the whole grid. A
    SampledField is treated as zero outside its grid.
    """
    kernel = kernel or MollifierKernel()
    if not epsilon > 0:
        raise PreconditionError("epsilon must be positive")
    if isinstance(f, SampledField):
        grid = f.grid
    elif grid is None:
        raise PreconditionError("a closed-form f needs a grid")
    h = grid.spacing
    if h > epsilon / kernel.min_samples:
        raise PreconditionError(
            f"grid spacing {h:.4g} too coarse for eps = {epsilon:.4g} (need h <= eps/{kernel.min_samples})"
        )
    w = kernel.stencil(h / epsilon, grid.dim)
    reach = w.shape[0] // 2
    if isinstance(f, SampledField):
        return SampledField(grid, _correlate(f.values, w))
    big = GridSpec(grid.dim, grid.half_width + reach * h, grid.n + 2 * reach)
    vals = np.asarray(f(big.points()), dtype=float).reshape(big.shape)
    out = _correlate(vals, w)
    core = (slice(reach, reach + grid.n),) * grid.dim
    return SampledField(grid, out[core])


def _correlate(values: np.ndarray, w: np.ndarray) -> np.ndarray:
    # zero extension outside the array; w is symmetric so correlation = convolution
    if w.size <= DIRECT_LIMIT:
        return ndimage.correlate(values, w, mode="constant", cval=0.0)
    return signal.fftconvolve(values, w, mode="same")


# -- certified bounds ---------------------------------------------------------

_FD = {
    1: (np.array([-0.5, 0.0, 0.5]), 1),
    2: (np.array([1.0, -2.0, 1.0]), 1),
    3: (np.array([-0.5, 1.0, 0.0, -1.0, 0.5]), 2),
    4: (np.array([1.0, -4.0, 6.0, -4.0, 1.0]), 2),
}


def central_difference(values: np.ndarray, h: float, order: int) -> np.ndarray:
    """Centered difference of the given order; output trimmed by the stencil half-width."""
    if order == 0:
        return values
    coeffs, half = _FD[order]
    out = np.convolve(values, coeffs[::-1], mode="valid") / h ** order
    return out


@dataclass
class BoundReport:
    hc: HolderClass
    eps: list[float]
    ratios: dict[int, list[float]]
    variation: dict[int, float]
    passed: bool
    threshold: float = 8.0

    def to_dict(self) -> dict:
        return {
            "k": self.hc.k, "mu": self.hc.mu, "eps": self.eps,
            "ratios": {str(a): r for a, r in self.ratios.items()},
            "variation": {str(a): v for a, v in self.variation.items()},
            "threshold": self.threshold,
            "verdict": "PASS" if self.passed else "FAIL",
        }


def certify_mollifier_bounds(f, hc: HolderClass, eps_list, alpha_max: int = 2,
                             kernel: MollifierKernel | None = None, window: float = 0.5,
                             floor: float = 1e-10, threshold: float = 8.0) -> BoundReport:
    """Measured constants in the smoothing bounds for a 1D closed-form f.

    For |alpha| <= k reports sup|d^a f_eps - d^a f| / eps^(k+mu-|a|); for
    higher alpha, sup|d^a f_eps| / eps^(k+mu-|a|). Sup is over [-window, window];
    derivatives are centered differences at step eps/16 (eps/32 for the
    order-4 kernel).
    """
    if kernel is None:
        kernel = MollifierKernel(2 if hc.order <= 2 else 4)
    if alpha_max > 4:
        raise PreconditionError("alpha_max <= 4 supported")
    ratios: dict[int, list[float]] = {a: [] for a in range(alpha_max + 1)}
    eps_list = [float(e) for e in eps_list]
    for eps in eps_list:
        h = eps / (2 * kernel.min_samples)
        m = int(math.ceil(window / h))
        pad = 2
        reach = int(math.floor(eps / h))
        x = h * np.arange(-(m + pad + reach), m + pad + reach + 1)
        fx = np.asarray(f(x), dtype=float)
        w = kernel.stencil(h / eps, 1)
        feps = np.convolve(fx, w, mode="valid")
        fcore = fx[reach:-reach]
        for a in range(alpha_max + 1):
            de = central_difference(feps, h, a)
            trim = (feps.size - de.size) // 2
            sl = slice(pad - trim, de.size - (pad - trim))
            de = de[sl]
            if a <= hc.k:
                df = central_difference(fcore, h, a)[sl]
                val = np.max(np.abs(de - df))
            else:
                val = np.max(np.abs(de))
            if not np.isfinite(val):
                raise NumericalError(f"non-finite finite difference for alpha = {a}")
            ratios[a].append(float(val / eps ** (hc.order - a)))
    variation = {}
    for a, r in ratios.items():
        hi, lo = max(r), min(r)
        if hi <= floor:
            variation[a] = 1.0
        elif lo <= 0:
            variation[a] = math.inf
        else:
            variation[a] = hi / lo
    passed = all(v < threshold for v in variation.values())
    return BoundReport(hc, eps_list, ratios, variation, passed, threshold)


# -- framing ------------------------------------------------------------------

def _gap(inner: np.ndarray, outer: np.ndarray, h: float) -> float:
    """Distance from nodes of `inner` to the nearest node outside `outer`."""
    if not inner.any():
        return math.inf
    padded = np.pad(outer, 1, constant_values=False)
    dist = ndimage.distance_transform_edt(padded)[(slice(1, -1),) * outer.ndim] * h
    return float(dist[inner].min())


def plateau_cutoff(values: np.ndarray, grid: GridSpec, inner: float, outer: float,
                   kernel: MollifierKernel | None = None) -> tuple[np.ndarray, float]:
    """Smooth phi with phi = 1 where values < inner and supp phi inside {values < outer}.

    Mollifies the indicator of the midway sublevel set at a scale just under
    the smaller of the two sub-gaps. Returns (phi, scale).
    """
    kernel = kernel or MollifierKernel()
    mid = 0.5 * (inner + outer)
    m_in, m_mid, m_out = values < inner, values < mid, values < outer
    h = grid.spacing
    s = 0.9 * min(_gap(m_in, m_mid, h), _gap(m_mid, m_out, h))
    if not math.isfinite(s):
        raise PreconditionError("empty sublevel set: cannot build a cutoff")
    if s < 8 * h:
        raise PreconditionError(f"cutoff scale {s:.4g} below 8 grid steps ({8 * h:.4g}); refine the grid")
    phi = mollify(SampledField(grid, m_mid.astype(float)), s, MollifierKernel()).values
    phi[np.abs(phi - 1.0) < 1e-12] = 1.0
    phi[phi < 1e-14] = 0.0
    return phi, s


@dataclass
class FramedPotentials:
    grid: GridSpec
    v_minus: np.ndarray
    v: np.ndarray
    v_plus: np.ndarray
    c_shift: float
    epsilon: float
    hc: HolderClass
    tilde_nu: float
    phi: np.ndarray
    smoothed: np.ndarray
    refine: int = 1
    shrinks: int = 0
    fine: dict = field(default_factory=dict, repr=False)

    @property
    def shift(self) -> float:
        return self.c_shift * self.epsilon ** self.hc.order

    @property
    def v_eps(self) -> np.ndarray:
        """Unshifted smoothed potential V^1_eps + V^2."""
        return 0.5 * (self.v_minus + self.v_plus)

    def framing_violations(self) -> int:
        return int(np.count_nonzero(self.v_minus > self.v) + np.count_nonzero(self.v > self.v_plus))


def _refinement(grid: GridSpec, h_target: float) -> int:
    return max(1, math.ceil(grid.spacing / h_target))


def build_framing(spec: PotentialSpec, params: SemiclassicalParams, grid: GridSpec,
                  margin: float = 0.1, kernel: MollifierKernel | None = None,
                  max_shrink: int = 30, keep_fine: bool = False) -> FramedPotentials:
    """V_eps^pm = (V phi)_eps + V(1 - phi) +- C eps^(k+mu) sampled on ``grid``.

    The smoothing runs on a refinement of ``grid`` fine enough for both the
    mollifier and the cutoff; the coarse nodes are a subset of it, so the
    measured shift frames the potential on both. epsilon is halved until
    the 2nu-sublevel sets of V_eps^pm avoid supp V(1 - phi).
    """
    hc = spec.regularity
    kernel = kernel or MollifierKernel(2 if hc.order <= 2 else 4)
    if grid.dim != spec.dim:
        raise PreconditionError("grid and potential dimensions differ")
    eps = params.epsilon
    tilde_nu = spec.nu / 2.0
    nu = spec.nu

    v_probe = spec.on_grid(grid)
    for shrinks in range(max_shrink + 1):
        r = _refinement(grid, eps / kernel.min_samples)
        phi = None
        for _ in range(6):
            fine = grid.refined(r)
            if fine.size > MAX_FINE_NODES:
                raise ResourceError(f"framing work grid of {fine.size} nodes exceeds budget")
            vf = spec.on_grid(fine)
            try:
                phi, s = plateau_cutoff(vf, fine, 3 * nu, 4 * nu)
                break
            except PreconditionError as exc:
                if "refine" not in str(exc):
                    raise
                r *= 2
        if phi is None:
            raise PreconditionError("could not resolve the cutoff on the framing grid")
        if _touches(phi):
            raise PreconditionError("cutoff support reaches the grid boundary; enlarge the box")
        v1 = vf * phi
        v2 = vf * (1.0 - phi)
        v1e = mollify(SampledField(fine, v1), eps, kernel).values
        err = float(np.max(np.abs(v1 - v1e)))
        scale = max(1.0, float(np.max(np.abs(vf))))
        shift_abs = err * (1.0 + margin) + 1e-13 * scale
        c_shift = shift_abs / eps ** hc.order
        shift = c_shift * eps ** hc.order
        vm = v1e + v2 - shift
        vp = v1e + v2 + shift
        if np.any(vm > vf) or np.any(vf > vp):
            raise FramingError("pointwise framing violated; increase the margin")
        tail = np.abs(v2) > 0
        bad = tail & ((vm < 4 * tilde_nu) | (vp < 4 * tilde_nu))
        if not bad.any():
            break
        eps /= 2.0
    else:
        raise PreconditionError("tail-avoidance condition not reached by shrinking epsilon")
    cs = grid.coarse_slice(r)
    out = FramedPotentials(
        grid=grid, v_minus=vm[cs].copy(), v=v_probe, v_plus=vp[cs].copy(), c_shift=c_shift,
        epsilon=eps, hc=hc, tilde_nu=tilde_nu, phi=phi[cs].copy(), smoothed=v1e[cs].copy(),
        refine=r, shrinks=shrinks,
    )
    if keep_fine:
        out.fine = {"grid": fine, "v": vf, "v_minus": vm, "v_plus": vp, "phi": phi, "smoothed": v1e}
    if out.framing_violations():
        raise FramingError("pointwise framing violated on the operator grid")
    return out


def _touches(arr: np.ndarray) -> bool:
    for axis in range(arr.ndim):
        first = np.take(arr, 0, axis=axis)
        last = np.take(arr, -1, axis=axis)
        if np.any(first > 0) or np.any(last > 0):
            return True
    return False


# -- bracketing ---------------------------------------------------------------

@dataclass
class BracketingReport:
    passed: bool
    max_inversion: float
    worst_index: int | None
    violations: list[int]
    counts: tuple[int, int, int]
    scale: float
    framing_violations: int

    def to_dict(self) -> dict:
        return {
            "verdict": "PASS" if self.passed else "FAIL",
            "max_inversion": self.max_inversion,
            "worst_index": self.worst_index,
            "violations": self.violations[:50],
            "n_violations": len(self.violations),
            "counts_plus_mid_minus": list(self.counts),
            "scale": self.scale,
            "framing_violations": self.framing_violations,
        }


def eigenvalue_bracketing_check(framed: FramedPotentials, hbar: float,
                                check_resolution: bool = True, tol: float = 1e-10) -> BracketingReport:
    """Dense min-max check lam_j(H-) <= lam_j(H) <= lam_j(H+) plus inertia counts at 0."""
    from .spectra import DENSE_LIMIT, assemble_operator, inertia_count

    grid = framed.grid
    if grid.size > DENSE_LIMIT:
        raise PreconditionError(f"dense bracketing limited to {DENSE_LIMIT} unknowns")
    ops = [assemble_operator(v, grid, hbar, check_resolution) for v in
           (framed.v_minus, framed.v, framed.v_plus)]
    lm, l0, lp = (np.linalg.eigvalsh(op.dense()) for op in ops)
    scale = max(1.0, float(np.max(np.abs(np.concatenate([lm, l0, lp])))))
    inv = np.maximum(lm - l0, 0.0) + np.maximum(l0 - lp, 0.0)
    bad = np.nonzero(inv > tol * scale)[0]
    counts = tuple(inertia_count(op, 0.0) for op in (ops[2], ops[1], ops[0]))
    ok = bad.size == 0 and counts[0] <= counts[1] <= counts[2] and framed.framing_violations() == 0
    worst = int(np.argmax(inv)) if inv.size else None
    return BracketingReport(ok, float(inv.max()) if inv.size else 0.0, worst, bad.tolist(), counts,
                            scale, framed.framing_violations())


def crude_bound_check(framed: FramedPotentials, spec: PotentialSpec, hbar: float,
                      check_resolution: bool = False) -> dict:
    """N(0; H_eps^-) <= N(0; H^min) with V^min = (min V - 1) on the 4nu-sublevel set."""
    from .spectra import assemble_operator, inertia_count

    v = framed.v
    vmin = np.where(v < 4 * spec.nu, v.min() - 1.0, 0.0)
    pointwise = bool(np.all(vmin <= framed.v_minus))
    n_minus = inertia_count(assemble_operator(framed.v_minus, framed.grid, hbar, check_resolution), 0.0)
    n_min = inertia_count(assemble_operator(vmin, framed.grid, hbar, check_resolution), 0.0)
    return {"pointwise": pointwise, "n_minus": n_minus, "n_min": n_min,
            "passed": pointwise and n_minus <= n_min}
