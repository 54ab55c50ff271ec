import numpy as np
import pytest

from roughweyl.agmon import agmon_distance, agmon_weighted_norm, localised_trace, localising_cutoff
from roughweyl.errors import PreconditionError
from roughweyl.grid import GridSpec
from roughweyl.potentials import harmonic

from oracles import agmon_rows, oscillator_eigenpairs


def test_inside_support_norm_is_one():
    spec = harmonic(1)
    g = GridSpec(1, 3.0, 601)
    psi = np.where(np.abs(g.axis()) < 0.8, 1.0, 0.0)
    assert agmon_weighted_norm(psi, -0.5, spec, 0.1, 0.1, g, nu=0.5) == pytest.approx(1.0, abs=1e-14)


def test_energy_precondition():
    spec = harmonic(1)
    g = GridSpec(1, 3.0, 601)
    with pytest.raises(PreconditionError):
        agmon_weighted_norm(np.ones(g.n), 0.2, spec, 0.1, 0.1, g, nu=0.5)


def test_distance_is_zero_on_set():
    spec = harmonic(1)
    g = GridSpec(1, 3.0, 601)
    d = agmon_distance(spec, g, 0.1, 0.5)
    x = g.axis()
    assert np.all(d[np.abs(x) < np.sqrt(1.5)] == 0)
    assert d.max() == pytest.approx(3.0 - np.sqrt(1.5) - 0.1, abs=2 * g.spacing)


def test_weighted_norms_against_gaussian_oracle():
    rows = agmon_rows(hbars=(0.2, 0.1))
    assert rows
    for hbar, m, E, num, ref, slope, bound in rows:
        assert num == pytest.approx(ref, rel=1e-4)
        assert num <= 2 * ref
        assert slope < bound


def test_ground_state_norm_uniform_in_hbar():
    norms = [r[3] for r in agmon_rows(hbars=(0.2, 0.1, 0.05)) if r[1] == 0]
    assert len(norms) == 3 and max(norms) < 1.5


def test_localisation_experiment():
    nu, a = 1.0, 0.5
    for hbar in (0.1, 0.05):
        spec, g, vals, vecs = oscillator_eigenpairs(hbar, 0.0)
        phi = localising_cutoff(spec, g, a, nu)
        for gamma in (0.0, 1.0):
            full, loc = localised_trace(vals, vecs, phi, gamma)
            assert abs(full - loc) < 1e-6 * full
