import numpy as np
import pytest

from roughweyl.cover import (ScaleFunction, build_partition, build_scale_function, cover_setup, finite_subcover,
                             greedy_cover, ratio_spread, scaled_derivative_ratios, touching_pairs,
                             write_cover_csv)
from roughweyl.grid import GridSpec
from roughweyl.mollify import build_framing
from roughweyl.potentials import HolderClass, choose_scaling, harmonic

SPEC = harmonic(1, nu=0.5)
RULE = choose_scaling(0, HolderClass(1, 1.0), "capped")


@pytest.fixture(scope="module")
def harmonic_cover():
    g = GridSpec(1, 2.0, 120_000)
    hbar = 0.1
    fr = build_framing(SPEC, RULE(hbar), g)
    setup = cover_setup(fr, hbar)
    cov = greedy_cover(setup.scale)
    pou = build_partition(cov, setup.support)
    return fr, setup, cov, pou


def test_zero_potential_scale():
    g = GridSpec(1, 1.0, 400)
    target = np.abs(g.axis()) < 0.5
    sc = build_scale_function(np.zeros(g.n), np.ones(g.n), 0.1, target, 1.0, grid=g)
    assert np.allclose(sc.l, 0.1 ** (2 / 3) / sc.A)
    assert sc.rho == 0.0
    assert np.allclose(sc.f, np.sqrt(sc.l))


def test_harmonic_scale(harmonic_cover):
    fr, setup, cov, pou = harmonic_cover
    sc = setup.scale
    assert sc.rho <= 1 / 8
    assert np.all(np.abs(setup.phi1 * fr.v_minus) <= sc.A * sc.l + 1e-15)
    assert np.all(sc.l[setup.support] <= sc.margin / 9)
    g = GridSpec(1, 2.0, 120_000)
    fr2 = build_framing(SPEC, RULE(0.05), g)
    assert cover_setup(fr2, 0.05).scale.A == sc.A


def test_constant_scale_multiplicity():
    for d, n in ((1, 400), (2, 120)):
        g = GridSpec(d, 1.0, n)
        target = np.ones(g.shape, dtype=bool)
        sc = ScaleFunction(g, np.full(g.shape, 0.1), 1.0, 0.0, 0.1, 1.0, target, 0.1)
        cov = greedy_cover(sc)
        assert cov.covered and np.all(cov.counts[target] >= 1)
        assert cov.multiplicity <= cov.packing_bound
        if d == 1:
            assert cov.multiplicity <= 4


def test_cover_postconditions(harmonic_cover):
    fr, setup, cov, pou = harmonic_cover
    assert cov.covered
    assert np.all(cov.counts[setup.support] >= 1)
    assert cov.multiplicity <= cov.packing_bound
    rho = setup.scale.rho
    for i, j in touching_pairs(cov.patches):
        a, b = cov.patches[i].radius, cov.patches[j].radius
        assert max(a, b) / min(a, b) <= (1 + 8 * rho) / (1 - 8 * rho)


def test_radii_shrink_near_zero_set(harmonic_cover):
    fr, setup, cov, pou = harmonic_cover
    centres = np.array([p.center[0] for p in cov.patches])
    radii = np.array([p.radius for p in cov.patches])
    near = radii[np.abs(np.abs(centres) - 1.0) < 0.05]
    far = radii[np.abs(centres) < 0.3]
    assert near.max() < far.min()


def test_partition_single_and_several():
    g = GridSpec(1, 1.0, 401)
    target = np.abs(g.axis()) < 0.2
    sc = ScaleFunction(g, np.full(g.n, 0.9), 1.0, 0.0, 0.9, 1.0, target, 0.1)
    cov = greedy_cover(sc)
    assert len(cov.patches) == 1
    pou = build_partition(cov, target)
    assert np.allclose(pou.weight(0)[target], 1.0)
    l = np.full(g.n, 0.6)
    target = np.abs(g.axis()) < 0.5
    sc = ScaleFunction(g, l, 1.0, 0.0, 0.6, 1.0, target, 0.1)
    cov = greedy_cover(sc)
    assert len(cov.patches) >= 2
    pou = build_partition(cov, target)
    total = sum(pou.weight(k) for k in range(len(cov.patches)))
    assert np.allclose(total[target], 1.0, atol=1e-14)
    assert all(np.all((0 <= pou.weight(k)) & (pou.weight(k) <= 1)) for k in range(len(cov.patches)))


def test_partition_harmonic(harmonic_cover):
    fr, setup, cov, pou = harmonic_cover
    assert pou.sum_error() <= 1e-10
    ratios = scaled_derivative_ratios(pou)
    for a in range(3):
        assert ratio_spread(ratios[a]) <= 10
    assert all(0 <= w.min() and w.max() <= 1 + 1e-15 for w in pou.weights)


def test_finite_subcover(harmonic_cover):
    fr, setup, cov, pou = harmonic_cover
    support = setup.phi > 0
    chosen, closure = finite_subcover(cov, support)
    assert set(chosen) <= set(closure)
    assert pou.sum_error(closure) <= 1e-10 or _sum_on(pou, closure, support) <= 1e-10
    h = cov.grid.spacing
    integral = float(np.sum(1.0 / setup.scale.l[support]) * h)
    assert integral / 4 <= len(closure) <= 4 * integral
    volume = float(np.count_nonzero(support) * h)
    radii = sum(cov.patches[k].radius for k in closure)
    assert volume / 4 <= radii <= 4 * volume


def _sum_on(pou, subset, mask):
    acc = np.zeros(pou.grid.shape)
    for k in subset:
        acc[pou.windows[k]] += pou.weights[k]
    return float(np.abs(acc - 1)[mask].max())


def test_subcover_single_ball():
    g = GridSpec(1, 1.0, 401)
    target = np.abs(g.axis()) < 0.8
    sc = ScaleFunction(g, np.full(g.n, 0.3), 1.0, 0.0, 0.3, 1.0, target, 0.1)
    cov = greedy_cover(sc)
    support = np.abs(g.axis() - cov.patches[0].center[0]) < 0.05
    chosen, closure = finite_subcover(cov, support)
    assert len(chosen) == 1
    neighbours = {j for i, j in touching_pairs(cov.patches) if i == chosen[0]}
    neighbours |= {i for i, j in touching_pairs(cov.patches) if j == chosen[0]}
    assert set(closure) == set(chosen) | neighbours


def test_cover_csv(tmp_path, harmonic_cover):
    cov = harmonic_cover[2]
    p = tmp_path / "cover.csv"
    write_cover_csv(p, cov)
    lines = p.read_text().splitlines()
    assert lines[0] == "x1,l,h,eps" and len(lines) == len(cov.patches) + 1
    row = lines[1].split(",")
    assert float(row[2]) == pytest.approx(0.1 / float(row[1]) ** 1.5)
