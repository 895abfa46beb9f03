import math
import os

import numpy as np
import pytest

from qtorus import expr as ex
from qtorus import moyal, oracle
from qtorus import polystar as ps
from qtorus.csvio import read_csv

GOLDEN = os.path.join(os.path.dirname(__file__), "data",
                      "quartic_reference_h0.1.csv")


def test_harmonic_levels():
    res = oracle.eigenlevels(ex.parse("q1^2/2"), 0.5, 10)
    want = 0.5 * (np.arange(10) + 0.5)
    assert np.max(np.abs(res.levels - want)) < 1e-11
    assert res.error < 1e-11
    assert res.tail_mass < 1e-12


def test_quartic_reference_table_committed():
    meta, cols = read_csv(GOLDEN)
    lam = float(meta["lambda"])
    hbar = float(meta["hbar"])
    res = oracle.eigenlevels(ex.parse(f"q1^2/2 + {lam}*q1^4"), hbar,
                             len(cols["E"]))
    assert np.max(np.abs(res.levels - np.array(cols["E"]))) < 1e-10


def test_pendulum_librational_levels():
    # hard walls at the barrier tops; wall effects on librational levels
    # are e^{-S/hbar}-small, far below the tolerances used downstream
    grid = oracle.Grid1D(-math.pi, math.pi, 768)
    res = oracle.eigenlevels(ex.parse("0 - cos(q1)"), 0.1, 12, grid=grid,
                             tail_tol=1e-8)
    assert res.levels[0] == pytest.approx(-1.0 + 0.1 * 0.5, abs=2e-3)
    assert np.all(res.levels < 0.8)
    assert np.all(np.diff(res.levels) > 0)


def test_weyl_quantize_basics():
    q, p = oracle.qp_matrices(8, 0.5)
    wm = oracle.weyl_quantize(ex.parse("q1"), 0.5, 8)
    assert np.allclose(wm.matrix, q)
    off = np.diag(wm.matrix, 1)
    assert off[0] == pytest.approx(math.sqrt(0.5 / 2.0))
    wm = oracle.weyl_quantize(ex.parse("(q1^2+p1^2)/2"), 0.5, 8)
    # top rows are truncation-polluted (quarantined); compare the safe block
    assert np.allclose(np.diag(wm.matrix)[:6], 0.5 * (np.arange(6) + 0.5))
    assert np.max(np.abs(wm.matrix - np.diag(np.diag(wm.matrix)))) < 1e-14


def test_weyl_vs_enumeration():
    M1 = oracle.weyl_quantize(ex.parse("q1^2*p1^2"), 0.7, 16).matrix
    M2 = oracle.symmetrized_by_enumeration(2, 2, 0.7, 16)
    assert np.max(np.abs((M1 - M2)[:8, :8])) < 1e-13


def test_inverse_weyl_round_trip(rng):
    P = ps.from_expr(ex.parse("q1^3*p1 + 0.5*p1^4 - 2*q1 + q1*p1"))
    M = oracle.weyl_quantize(P, 0.3, 40).matrix
    P2 = oracle.weyl_symbol(M, 0.3, 4)
    assert (P2 - P).max_abs() < 1e-12


def test_star_commutator_degree_two():
    cs = oracle.star_commutator(ex.parse("q1^2 + q1*p1"), ex.parse("p1^2"))
    assert len(cs) == 1  # Poisson bracket only
    A = ps.from_expr(ex.parse("q1^2 + q1*p1"))
    B = ps.from_expr(ex.parse("p1^2"))
    want = ps.lambda_k(A, B, 1)
    assert (cs[0] - want).max_abs() < 1e-12


def test_star_commutator_h2_coefficient():
    """q^3, p^3: the hbar^2 coefficient is -(1/24) Lambda^3 (paper's 2.5)."""
    cs = oracle.star_commutator(ex.parse("q1^3"), ex.parse("p1^3"))
    lam3 = ps.lambda_k(ps.from_expr(ex.parse("q1^3")),
                       ps.from_expr(ex.parse("p1^3")), 3)
    assert (cs[1] + moyal.DD_COEFF[0] * lam3).max_abs() < 1e-11


def test_star_commutator_h4_coefficient():
    """q^5, p^5 pins <<.,.>>^(1) = -(1/1920) Lambda^5."""
    A, B = ps.from_expr(ex.parse("q1^5")), ps.from_expr(ex.parse("p1^5"))
    cs = oracle.star_commutator(A, B)
    assert len(cs) == 3
    lam5 = ps.lambda_k(A, B, 5)
    assert (cs[2] + moyal.DD_COEFF[1] * lam5).max_abs() / lam5.max_abs() < 1e-10


def test_star_anticommutator_coefficients():
    A, B = ps.from_expr(ex.parse("q1^2")), ps.from_expr(ex.parse("p1^2"))
    cs = oracle.star_anticommutator(A, B)
    lam2 = ps.lambda_k(A, B, 2)
    assert (cs[1] + moyal.SYM_COEFF[0] * lam2).max_abs() < 1e-11
    A, B = ps.from_expr(ex.parse("q1^4")), ps.from_expr(ex.parse("p1^4"))
    cs = oracle.star_anticommutator(A, B)
    lam4 = ps.lambda_k(A, B, 4)
    assert (cs[2] + moyal.SYM_COEFF[1] * lam4).max_abs() / lam4.max_abs() < 1e-10


def test_weyl_compose_cases():
    # linear k: zero residual
    slope, resid = oracle.weyl_compose([0.5, 2.0], ex.parse("(q1^2+p1^2)/2"),
                                       dim=80)
    assert np.max(resid) < 1e-12
    # k = x^2 with harmonic S: expansion is exact at this order
    slope, resid = oracle.weyl_compose([0, 0, 1.0], ex.parse("(q1^2+p1^2)/2"),
                                       dim=80)
    assert np.max(resid) < 1e-11
    # degenerate S = q^2/2 with k = x^3: both sides equal Weyl(q^6/8)
    slope, resid = oracle.weyl_compose([0, 0, 0, 1.0], ex.parse("q1^2/2"),
                                       dim=120)
    assert np.max(resid) < 1e-10


def test_weyl_compose_residual_order():
    slope, resid = oracle.weyl_compose(
        [0, 0, 0, 1.0], ex.parse("(q1^2+p1^2)/2 + 0.1*q1^4"), dim=140)
    assert slope >= 3.8


def test_refusal_on_unconverged():
    grid = oracle.Grid1D(-1.2, 1.2, 48)  # box far too small for 12 levels
    with pytest.raises(oracle.OracleError):
        oracle.eigenlevels(ex.parse("q1^2/2"), 0.5, 12, grid=grid)
