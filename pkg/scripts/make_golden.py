"""Regenerate the committed golden data: the quartic eigenvalue reference
table and the bidifferential convention constants file."""

import os
import sys
from fractions import Fraction

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

import numpy as np

from qtorus import csvio, expr, oracle
from qtorus import polystar as ps


def quartic_table(path, lam=0.1, hbar=0.1, count=24):
    res = oracle.eigenlevels(expr.parse(f"q1^2/2 + {lam}*q1^4"), hbar, count)
    csvio.write_csv(path, [("N", np.arange(count)), ("E", res.levels)], meta={
        "system": "quartic",
        "lambda": lam,
        "hbar": hbar,
        "solver": "sinc-DVR, doubled resolution",
        "grid": f"[{res.grid.q_lo:.17g}, {res.grid.q_hi:.17g}] x {res.grid.npts}",
        "self_error": f"{res.error:.3e}",
    })
    print(f"wrote {path} (self error {res.error:.2e})")


def derive_conventions():
    """Fit every frozen constant from the operator oracle."""
    out = {}
    A, B = ps.from_expr(expr.parse("q1^3")), ps.from_expr(expr.parse("p1^3"))
    cs = oracle.star_commutator(A, B)
    out["poisson sign (q3p3)"] = cs[0].c[2, 2].real / 9.0
    out["dd_bracket_0"] = Fraction(
        -cs[1].c[0, 0].real / ps.lambda_k(A, B, 3).c[0, 0].real
    ).limit_denominator(10000)
    A, B = ps.from_expr(expr.parse("q1^5")), ps.from_expr(expr.parse("p1^5"))
    cs = oracle.star_commutator(A, B)
    out["dd_bracket_1"] = Fraction(
        -cs[2].c[0, 0].real / ps.lambda_k(A, B, 5).c[0, 0].real
    ).limit_denominator(100000)
    A, B = ps.from_expr(expr.parse("q1^2")), ps.from_expr(expr.parse("p1^2"))
    cs = oracle.star_anticommutator(A, B)
    out["sym_prod_0"] = Fraction(
        -cs[1].c[0, 0].real / ps.lambda_k(A, B, 2).c[0, 0].real
    ).limit_denominator(10000)
    A, B = ps.from_expr(expr.parse("q1^4")), ps.from_expr(expr.parse("p1^4"))
    cs = oracle.star_anticommutator(A, B)
    out["sym_prod_1"] = Fraction(
        -cs[2].c[0, 0].real / ps.lambda_k(A, B, 4).c[0, 0].real
    ).limit_denominator(100000)
    for k, v in out.items():
        print(f"{k} = {v}")


if __name__ == "__main__":
    here = os.path.dirname(os.path.abspath(__file__))
    quartic_table(os.path.join(here, "..", "tests", "data",
                               "quartic_reference_h0.1.csv"))
    derive_conventions()
