import numpy as np
import pytest

from qtorus.jets import (Jet, JetError, MapJet, compose_univariate,
                         jet_compose, jet_invert, jet_tables, map_compose)


def jet1(coeffs, order=None):
    c = np.asarray(coeffs, dtype=float)
    return Jet(1, len(c) - 1 if order is None else order, c)


def random_jet(rng, nvars, order, scale=1.0):
    t = jet_tables(nvars, order)
    return Jet(nvars, order, rng.normal(size=t["ncoef"]) * scale)


def test_ring_examples():
    a = jet1([1.0, 1.0, 0.0])          # 1 + x
    b = jet1([1.0, -1.0, 0.0])         # 1 - x
    assert np.allclose((a * b).coeffs, [1.0, 0.0, -1.0])
    assert np.allclose((a + 0.0).coeffs, a.coeffs)
    # (x + y)^2 at order 2
    t = jet_tables(2, 2)
    x = Jet.variable(2, 2, 0)
    y = Jet.variable(2, 2, 1)
    s = (x + y) * (x + y)
    expect = np.zeros(t["ncoef"])
    expect[t["index_of"][(2, 0)]] = 1.0
    expect[t["index_of"][(1, 1)]] = 2.0
    expect[t["index_of"][(0, 2)]] = 1.0
    assert np.allclose(s.coeffs, expect)


def test_compose_examples():
    outer = jet1([0.0, 0.0, 1.0, 0.0])         # x^2 at order 3
    inner = MapJet([jet1([0.0, 1.0, 1.0, 0.0])])  # x + x^2
    out = jet_compose(outer, inner)
    assert np.allclose(out.coeffs, [0.0, 0.0, 1.0, 2.0])
    # linearity of composition for a linear outer
    lin = jet1([0.5, 2.0, 0.0, 0.0])
    out = jet_compose(lin, inner)
    assert np.allclose(out.coeffs, [0.5, 2.0, 2.0, 0.0])
    # identity outer leaves the jet unchanged
    ident = jet1([0.0, 1.0, 0.0, 0.0])
    out = jet_compose(ident, inner)
    assert np.allclose(out.coeffs, inner.comps[0].coeffs)


def test_invert_examples(rng):
    ident = MapJet([jet1([0.0, 1.0, 0.0])])
    inv, cond = jet_invert(ident)
    assert np.allclose(inv.comps[0].coeffs, [0.0, 1.0, 0.0])
    # Lagrange inversion: x + x^2 -> x - x^2
    m = MapJet([jet1([0.0, 1.0, 1.0])])
    inv, _ = jet_invert(m)
    assert np.allclose(inv.comps[0].coeffs, [0.0, 1.0, -1.0])


def test_invert_round_trip(rng):
    # random 2-variable maps with a controlled linear part
    t = jet_tables(2, 3)
    for _ in range(10):
        comps = []
        A = rng.normal(size=(2, 2)) + 2.0 * np.eye(2)
        for i in range(2):
            c = rng.normal(size=t["ncoef"]) * 0.2
            c[0] = 0.0
            c[t["index_of"][(1, 0)]] = A[i, 0]
            c[t["index_of"][(0, 1)]] = A[i, 1]
            comps.append(Jet(2, 3, c))
        m = MapJet(comps)
        inv, cond = jet_invert(m)
        rt = map_compose(m, inv)
        ident = [Jet.variable(2, 3, v).coeffs for v in range(2)]
        for got, want in zip(rt.comps, ident):
            assert np.max(np.abs(got.coeffs - want)) < 1e-9


def test_mul_associative(rng):
    for _ in range(6):
        a, b, c = (random_jet(rng, 2, 4) for _ in range(3))
        l = (a * b) * c
        r = a * (b * c)
        assert np.max(np.abs(l.coeffs - r.coeffs)) < 1e-10 * max(
            1.0, np.max(np.abs(l.coeffs)))


def test_compose_associative(rng):
    t = jet_tables(2, 4)

    def disp_map():
        comps = []
        for i in range(2):
            c = rng.normal(size=t["ncoef"]) * 0.3
            c[0] = 0.0
            comps.append(Jet(2, 4, c))
        return MapJet(comps)

    f = random_jet(rng, 2, 4)
    g, h = disp_map(), disp_map()
    left = jet_compose(jet_compose(f, g), h)
    right = jet_compose(f, map_compose(g, h))
    assert np.max(np.abs(left.coeffs - right.coeffs)) < 1e-10 * max(
        1.0, np.max(np.abs(left.coeffs)))


def test_leibniz(rng):
    f = random_jet(rng, 2, 4)
    g = random_jet(rng, 2, 4)
    prod = f * g
    for v in range(2):
        lhs = prod.deriv(v)
        rhs = f.deriv(v) * g.truncate(3) + f.truncate(3) * g.deriv(v)
        assert np.max(np.abs(lhs.coeffs - rhs.coeffs)) < 1e-12 * max(
            1.0, np.max(np.abs(lhs.coeffs)))


def test_batched_matches_pointwise(rng):
    t = jet_tables(2, 3)
    batch = rng.normal(size=(5, 7, t["ncoef"]))
    other = rng.normal(size=(5, 7, t["ncoef"]))
    A = Jet(2, 3, batch)
    B = Jet(2, 3, other)
    C = A * B
    for i in range(5):
        for j in range(7):
            c = Jet(2, 3, batch[i, j]) * Jet(2, 3, other[i, j])
            assert np.allclose(C.coeffs[i, j], c.coeffs)


def test_compose_univariate():
    inner = jet1([2.0, 1.0, 0.5, 0.0])
    # F = exp around 2.0
    import math
    derivs = [math.exp(2.0)] * 4
    out = compose_univariate(derivs, inner)
    # compare against exp of the jet via series on the displacement
    d = jet1([0.0, 1.0, 0.5, 0.0])
    expect = jet1([1.0, 0, 0, 0]) + d + d * d * 0.5 + d * d * d * (1 / 6)
    assert np.allclose(out.coeffs, math.exp(2.0) * expect.coeffs, atol=1e-12)


def test_errors():
    a = jet1([1.0, 2.0])
    b = Jet(2, 1, np.zeros(3))
    with pytest.raises(JetError):
        _ = a * b
    with pytest.raises(JetError):
        jet_invert(MapJet([jet1([0.5, 1.0])]))  # nonzero constant
    m = MapJet([Jet(2, 2, np.zeros(6)), Jet(2, 2, np.zeros(6))])
    with pytest.raises(JetError, match="singular"):
        jet_invert(m)  # zero linear part
    pa = Jet(1, 2, np.zeros(3), point=np.array([0.0]))
    pb = Jet(1, 2, np.zeros(3), point=np.array([1.0]))
    with pytest.raises(JetError, match="base-point"):
        _ = pa + pb
