import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from roughweyl.errors import DomainError, PreconditionError
from roughweyl.grid import GridSpec
from roughweyl.potentials import (Bump, HolderClass, PotentialSpec, choose_scaling, eval_potential,
                                  g_gamma, harmonic, radial_cutoff, sublevel_set)


def rough(mu=0.5, k=1, centers=((0.0,),), coeff=1.0, dim=1):
    bumps = tuple(Bump(c, coeff, k + mu) for c in centers)
    return PotentialSpec(dim, 1.0, -1.0, 0.25, HolderClass(k, mu), bumps=bumps)


def test_harmonic_values():
    assert eval_potential(harmonic(1), [[0.0]])[0] == -1.0
    assert eval_potential(harmonic(2), [[1.0, 1.0]])[0] == pytest.approx(1.0)


def test_bump_value_inside_plateau():
    spec = PotentialSpec(1, 0.0, 0.0, 0.25, HolderClass(1, 0.5), bumps=(Bump((0.0,), 1.0, 1.5),))
    assert eval_potential(spec, [[0.04]])[0] == pytest.approx(0.008, rel=1e-12)


def test_sublevel_set_examples():
    g = GridSpec(1, 3.0, 601)
    mask = sublevel_set(harmonic(1), 1.0, g)
    x = g.axis()
    assert np.array_equal(mask, np.abs(x) < math.sqrt(2))
    flat = PotentialSpec(1, 0.0, 5.0, 0.25, HolderClass(1, 1.0))
    assert not sublevel_set(flat, 5.0, g).any()


def test_sublevel_set_matches_pointwise_rough():
    spec = rough(centers=((0.3, -0.2), (-0.5, 0.4)), dim=2)
    g = GridSpec(2, 2.0, 61)
    mask = sublevel_set(spec, 0.7, g)
    direct = np.array([eval_potential(spec, [p])[0] < 0.7 for p in g.points()]).reshape(g.shape)
    assert np.array_equal(mask, direct)


def test_g_gamma_examples():
    assert g_gamma(-4.0, 0.5) == pytest.approx(2.0)
    assert g_gamma(0.5, 0.0) == 0.0
    assert g_gamma(0.0, 0.0) == 1.0


def test_scaling_examples():
    r = choose_scaling(0.0, HolderClass(1, 0.5), "sharp")
    assert r.delta == pytest.approx(1 / 3)
    assert r.epsilon(0.01) ** 1.5 == pytest.approx(0.01, rel=1e-12)
    r = choose_scaling(1.0, HolderClass(2, 1.0), "sharp")
    assert r.delta == pytest.approx(1 / 3)
    assert r.epsilon(0.01) ** 3 == pytest.approx(0.01 ** 2, rel=1e-12)
    for g, hc in ((0.0, HolderClass(0, 0.3)), (0.7, HolderClass(1, 0.2))):
        assert choose_scaling(g, hc, "capped").delta == pytest.approx(1 / 3)


def test_scaling_rejections():
    with pytest.raises(PreconditionError):
        choose_scaling(0.0, HolderClass(1, 0.25), "sharp")
    with pytest.raises(PreconditionError):
        choose_scaling(1.0, HolderClass(2, 0.5), "sharp")  # needs mu >= 1
    with pytest.raises(PreconditionError):
        choose_scaling(0.5, HolderClass(1, 1.0), "sharp")
    with pytest.raises(PreconditionError):
        choose_scaling(0.0, HolderClass(1, 1.0), "lazy")


def test_sharp_scaling_identity():
    for mu in (0.5, 0.75, 1.0):
        rule = choose_scaling(0.0, HolderClass(1, mu), "sharp")
        for j in range(3, 13):
            hbar = 2.0 ** -j
            assert abs(math.log(rule(hbar).epsilon) * (1 + mu) - math.log(hbar)) < 1e-10
    for gamma, mu in ((0.5, 0.5), (1.0, 1.0), (0.2, 0.0)):
        rule = choose_scaling(gamma, HolderClass(2, mu), "sharp")
        for j in range(3, 13):
            hbar = 2.0 ** -j
            assert abs(math.log(rule(hbar).epsilon) * (2 + mu) - (1 + gamma) * math.log(hbar)) < 1e-10


def test_spec_validation():
    with pytest.raises(PreconditionError):
        PotentialSpec(1, 1.0, -1.0, 0.25, HolderClass(1, 0.5), bumps=(Bump((0.0,), 1.0, 2.0),))
    with pytest.raises(PreconditionError):
        HolderClass(1, 1.5)
    with pytest.raises(DomainError):
        eval_potential(harmonic(1), [[3.5]])
    assert harmonic(1).check_confinement() > 1.0


def test_default_cutoff_radius():
    spec = rough(centers=((0.0,), (1.0,)))
    assert spec.radii == (0.25, 0.25)
    assert rough().radii == (0.5,)


@given(st.lists(st.floats(-2.9, 2.9), min_size=2, max_size=2), st.floats(-1, 1), st.floats(0.1, 2))
def test_eval_matches_termwise(center, coeff, x0):
    spec = rough(centers=(tuple(center),), coeff=coeff, dim=2)
    rng = np.random.default_rng(0)
    pts = rng.uniform(-3, 3, (50, 2)) * min(1.0, x0)
    direct = []
    for p in pts:
        r = math.dist(p, center)
        v = p[0] ** 2 + p[1] ** 2 - 1.0 + coeff * r ** 1.5 * float(radial_cutoff(r / spec.radii[0]))
        direct.append(v)
    got = eval_potential(spec, pts)
    assert np.allclose(got, direct, rtol=1e-13, atol=1e-13)


@given(st.floats(0.0, 1.0), st.lists(st.floats(-5, 5), min_size=2, max_size=30))
def test_g_gamma_monotone(gamma, ts):
    ts = np.sort(np.array(ts))
    g = g_gamma(ts, gamma)
    assert np.all(np.diff(g) <= 1e-15)


@given(st.floats(0.01, 1.0))
def test_g_gamma_continuous_at_zero(gamma):
    assert g_gamma(-1e-12, gamma) <= 1e-12 ** gamma * 1.0001
    assert g_gamma(1e-12, gamma) == 0.0
