"""Independent reference computations shared by the tests."""
import math

import numpy as np
import scipy.linalg as sla
from scipy import integrate

from roughweyl.agmon import agmon_weighted_norm, decay_slope, hermite_function
from roughweyl.grid import GridSpec
from roughweyl.potentials import harmonic
from roughweyl.spectra import assemble_operator


def gaussian_weighted_norm(m, hbar, nu, a, lam=1.0, L=3.0):
    """||exp(delta d/hbar) h_m|| for the exact Hermite function, d = (|x| - x_nu - a)_+."""
    delta = math.sqrt(nu) / 8
    edge = math.sqrt(lam + nu) + a

    def f(x):
        d = max(abs(x) - edge, 0.0)
        return math.exp(2 * delta * d / hbar) * hermite_function(m, x, hbar) ** 2

    val, _ = integrate.quad(f, -L, L, points=[-edge, edge], limit=400, epsabs=1e-14)
    return math.sqrt(val)


def oscillator_eigenpairs(hbar, upper, n=4000, L=3.0):
    spec = harmonic(1, box=L)
    g = GridSpec(1, L, n)
    op = assemble_operator(spec, g, hbar)
    vals, vecs = sla.eigh_tridiagonal(op.matrix.diagonal(), op.matrix.diagonal(1),
                                      select="v", select_range=(-np.inf, upper))
    return spec, g, vals, vecs


def agmon_rows(hbars=(0.2, 0.1, 0.05), nu=0.5, a=0.1, n=4000):
    """Per eigenpair with E < nu/4: (hbar, m, E, numeric norm, oracle norm, slope, slope bound)."""
    rows = []
    delta = math.sqrt(nu) / 8
    for hbar in hbars:
        spec, g, vals, vecs = oscillator_eigenpairs(hbar, nu / 4 - 1e-12, n)
        for m, (E, psi) in enumerate(zip(vals, vecs.T)):
            num = agmon_weighted_norm(psi, E, spec, a, hbar, g, nu)
            ref = gaussian_weighted_norm(m, hbar, nu, a)
            slope = decay_slope(psi, spec, a, g, nu)
            rows.append((hbar, m, float(E), num, ref, slope, -delta * 0.8 / hbar))
    return rows


def chi1_by_quad(kernel, t):
    """chi_1(t) = 2 pi eta_1(t)^2 with eta_1 from adaptive quadrature of hat(eta)."""
    half = kernel.T / 2
    val, _ = integrate.quad(lambda s: float(kernel._eta_hat(s)), 0, half, weight="cos", wvar=t,
                            epsabs=1e-14, limit=400)
    eta = val / math.pi
    return 2 * math.pi * eta ** 2
