import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qtorus import expr as ex


def ev(text, q=0.0, p=0.0, **params):
    return ex.evaluate(ex.parse(text), {"q1": q, "p1": p}, params)


def test_parse_reference_systems():
    assert ev("p1^2/2 + q1^2/2", 0.0, 0.0) == 0.0
    assert ev("p1^2/2 + q1^2/2", 1.0, 1.0) == 1.0
    assert ev("p1^2/2 + q1^2/2 + lambda*q1^4", 2.0, 0.0, **{"lambda": 0.1}) \
        == pytest.approx(2.0 + 1.6)
    assert ev("p1^2/2 - cos(q1)", 0.0, 0.0) == -1.0


def test_precedence_and_power():
    assert ev("-q1^2", 3.0) == -9.0           # ^ binds tighter than unary -
    assert ev("2^3^2") == 512.0               # right associative
    assert ev("q1^(3/2)", 4.0) == 8.0         # rational exponent
    assert ev("q1^-2", 2.0) == 0.25
    assert ev("2*q1 + p1/4", 1.5, 2.0) == 3.5


def test_diff_examples():
    d = ex.diff(ex.parse("q1^2"), "q1")
    assert ex.evaluate(d, {"q1": 3.0}) == 6.0
    d = ex.diff(ex.parse("sin(q1)"), "q1")
    assert ex.evaluate(d, {"q1": 0.7}) == pytest.approx(math.cos(0.7))
    h = ex.bind(ex.parse("p1^2/2 + lambda*q1^4"), {"lambda": 0.3})
    d = ex.diff(h, "p1")
    assert ex.evaluate(d, {"q1": 1.0, "p1": 2.5}) == pytest.approx(2.5)


def test_eval_vectorized():
    e = ex.parse("p1^2/2 - cos(q1)")
    q = np.linspace(-1, 1, 7)
    out = ex.evaluate(e, {"q1": q, "p1": np.zeros(7)})
    assert out.shape == (7,)
    assert np.allclose(out, -np.cos(q))


def test_jet_examples():
    j = ex.jet_of(ex.parse("q1*p1"), ("q1", "p1"), np.array([0.0, 0.0]), 2)
    # only the cross coefficient survives
    nz = {tuple(a): c for a, c in
          zip([(0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2)], j.coeffs)}
    assert nz[(1, 1)] == 1.0
    assert sum(abs(c) for a, c in nz.items() if a != (1, 1)) == 0.0

    j = ex.jet_of(ex.parse("q1^3"), ("q1",), np.array([1.0]), 3)
    assert np.allclose(j.coeffs, [1.0, 3.0, 3.0, 1.0])  # binomial pattern

    j = ex.jet_of(ex.parse("cos(q1)"), ("q1",), np.array([0.0]), 4)
    assert np.allclose(j.coeffs, [1.0, 0.0, -0.5, 0.0, 1.0 / 24.0])


GRAMMAR_CASES = [
    "q1^2/2 + p1^2/2",
    "1.5e-2*q1 - p1*q1",
    "sin(q1)*cos(p1) + exp(q1/4)",
    "sqrt(q1^2 + 4) / (2 + p1^2)",
    "log(2 + q1^2) - 3",
    "-q1^3 + (q1 - p1)^2",
    "lambda*q1^4 + lambda^2*p1^2",
]


@pytest.mark.parametrize("text", GRAMMAR_CASES)
def test_render_parse_roundtrip(text, rng):
    e = ex.parse(text)
    e2 = ex.parse(ex.render(e))
    pts = {"q1": rng.normal(size=100) * 0.8, "p1": rng.normal(size=100) * 0.8}
    env = {"lambda": 0.37}
    a = ex.evaluate(e, pts, env)
    b = ex.evaluate(e2, pts, env)
    assert np.array_equal(a, b)


@given(st.floats(-3, 3), st.floats(-3, 3), st.floats(0.01, 2.0))
@settings(max_examples=40, deadline=None)
def test_diff_commutes(q, p, lam):
    e = ex.bind(ex.parse("lambda*q1^4 + sin(q1)*p1^2 + exp(q1*p1/8)"),
                {"lambda": lam})
    ab = ex.diff(ex.diff(e, "q1"), "p1")
    ba = ex.diff(ex.diff(e, "p1"), "q1")
    pt = {"q1": q, "p1": p}
    va, vb = ex.evaluate(ab, pt), ex.evaluate(ba, pt)
    assert va == pytest.approx(vb, rel=1e-12, abs=1e-12)


def test_jet_matches_finite_differences(rng):
    from qtorus.numutil import fd_weights
    e = ex.parse("sin(q1)*p1^2 + q1^3/3 + exp(p1/2)")
    pt = np.array([0.4, -0.3])
    j = ex.jet_of(e, ("q1", "p1"), pt, 3)
    h = 0.05
    nodes = (np.arange(9) - 4.0) * h

    def f(q, p):
        return ex.evaluate(e, {"q1": q, "p1": p})

    # tensor-product central differences from 9-point stencils
    vals = np.array([[f(pt[0] + a, pt[1] + b) for b in nodes] for a in nodes])
    w = fd_weights(nodes, 0.0, 3)
    for alpha in [(1, 0), (2, 0), (0, 3), (1, 1), (2, 1), (1, 2)]:
        fd = w[alpha[0]] @ vals @ w[alpha[1]]
        assert j.partial(alpha) == pytest.approx(fd, rel=1e-6, abs=1e-7)


def test_errors():
    with pytest.raises(ex.ExprSyntaxError) as e:
        ex.parse("q1 + *2")
    assert e.value.offset == 5
    with pytest.raises(ex.ExprSyntaxError):
        ex.parse("foo(q1)")  # unknown function
    with pytest.raises(ex.ExprSyntaxError):
        ex.parse("q1^p1")    # non-constant exponent
    with pytest.raises(ex.ExprError, match="unbound parameter"):
        ex.evaluate(ex.parse("lambda*q1"), {"q1": 1.0})
    with pytest.raises(ex.ExprDomainError, match="log"):
        ex.evaluate(ex.parse("log(q1)"), {"q1": -1.0})
    with pytest.raises(ex.ExprDomainError, match="division"):
        ex.evaluate(ex.parse("1/q1"), {"q1": 0.0})
