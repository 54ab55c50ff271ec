"""Non-negative smoothing kernel with compactly supported Fourier transform."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .errors import PreconditionError
from .mollify import bump_profile
from .potentials import g_gamma

FREQ_SAMPLES = 2048


@dataclass
class SmoothingKernel:
    """chi_1 with hat(chi) = hat(eta) * hat(eta), hat(eta) an even bump on (-T/2, T/2).

    Then chi_1 = 2 pi eta_1^2 >= 0. ``deficit`` is 1 - min hat(chi) over
    (-T/2, T/2), i.e. how far the plateau is from being flat.
    """

    T: float
    T1: float
    c: float
    times: np.ndarray
    chi1: np.ndarray
    mass: float
    deficit: float
    _tau: np.ndarray
    _w: np.ndarray
    _amp: float

    @property
    def t_max(self) -> float:
        return float(self.times[-1])

    def eta1(self, t) -> np.ndarray:
        t = np.atleast_1d(np.asarray(t, dtype=float))
        out = np.empty_like(t)
        for s in range(0, t.size, 4096):
            blk = t[s:s + 4096]
            out[s:s + 4096] = np.cos(np.outer(blk, self._tau)) @ self._w / math.pi
        return out

    def __call__(self, t) -> np.ndarray:
        """chi_1(t)."""
        return 2 * math.pi * self.eta1(t) ** 2

    def scaled(self, t, hbar: float) -> np.ndarray:
        """chi_hbar(t) = chi_1(t / hbar) / hbar."""
        return self(np.asarray(t, dtype=float) / hbar) / hbar

    def hat(self, tau) -> np.ndarray:
        """hat(chi)(tau) = int hat(eta)(s) hat(eta)(tau - s) ds by quadrature."""
        half = self.T / 2
        s = np.linspace(-half, half, 4 * FREQ_SAMPLES + 1)
        ds = s[1] - s[0]
        a = self._eta_hat(s)
        tau = np.atleast_1d(np.asarray(tau, dtype=float))
        return np.array([np.sum(a * self._eta_hat(x - s)) * ds for x in tau])

    def _eta_hat(self, tau):
        return self._amp * bump_profile(np.abs(2 * np.asarray(tau, dtype=float) / self.T))


def build_smoothing_kernel(T: float, t_max: float | None = None, dt: float | None = None) -> SmoothingKernel:
    if not T > 0:
        raise PreconditionError("T must be positive")
    half = T / 2
    # int hat(eta)^2 = 1
    sq, _ = integrate.quad(lambda u: float(bump_profile(abs(u))) ** 2, -1, 1, epsabs=1e-15, epsrel=1e-13)
    amp = 1.0 / math.sqrt(sq * half)
    # trapezoid on [0, T/2]: exact up to round-off for this smooth even bump
    tau = np.linspace(0.0, half, FREQ_SAMPLES + 1)
    w = amp * bump_profile(tau / half) * (half / FREQ_SAMPLES)
    w[0] *= 0.5
    t_max = t_max or 400.0 / T
    dt = dt or math.pi / (8 * T)
    m = int(math.ceil(t_max / dt))
    times = dt * np.arange(-m, m + 1)
    k = SmoothingKernel(T, 0.0, 0.0, times, np.empty(0), 0.0, 0.0, tau, w, amp)
    chi = k(times)
    k.chi1 = chi
    # chi_1 is band-limited to (-T, T) and dt < 2 pi / T, so the plain sum is its integral
    k.mass = float(chi.sum() * dt)
    peak = chi[m]
    above = np.nonzero(chi[m:] >= 0.5 * peak)[0]
    t1 = min(float(times[m + above[-1]]), 0.99 * T)
    k.T1 = t1
    k.c = float(chi[np.abs(times) <= t1].min())
    plateau = np.linspace(0.0, half, 65)
    k.deficit = float(1.0 - k.hat(plateau).min())
    return k


def smoothed_g(lam, kernel: SmoothingKernel, hbar: float, gamma: float) -> np.ndarray:
    """(g_gamma * chi_hbar)(lam) = int g_gamma(lam - hbar u) chi_1(u) du."""
    lam = np.atleast_1d(np.asarray(lam, dtype=float))
    tm = kernel.t_max
    out = np.empty_like(lam)
    for i, x in enumerate(lam):
        a = x / hbar
        if a >= tm:
            out[i] = 0.0
            continue
        if a <= -tm and gamma in (0.0, 1.0):
            out[i] = 1.0 if gamma == 0 else -x
            continue
        lo = max(a, -tm)
        pts = [p for p in (-kernel.T1, 0.0, kernel.T1) if lo < p < tm]

        def f(u, x=x):
            return float(g_gamma(x - hbar * u, gamma)) * float(kernel(u)[0])

        val, _ = integrate.quad(f, lo, tm, points=pts or None, limit=400, epsabs=1e-14, epsrel=1e-12)
        out[i] = val
    return out


def smoothed_trace(spectrum, kernel: SmoothingKernel, hbar: float, gamma: float) -> float:
    """sum_j (g_gamma * chi_hbar)(lam_j) over a dense spectrum."""
    vals = getattr(spectrum, "values", spectrum)
    return float(np.sum(smoothed_g(vals, kernel, hbar, gamma)))
