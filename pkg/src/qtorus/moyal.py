"""Bidifferential calculus on flat phase space.

Variable ordering everywhere is (q1..qn, p1..pn); the symplectic pairing
sends q_a -> p_a with sign +1 and p_a -> q_a with sign -1, so the k = 1
contraction is the Poisson bracket with {q, p} = +1.

All operations accept jets (batched) and can return either scalar values or
jets of the result germ, which is what the involution / induction machinery
consumes.  Normalization constants live in _golden/conventions.txt and were
frozen against the Weyl operator oracle.
"""

from __future__ import annotations

import itertools
import math
from fractions import Fraction
from importlib import resources

import numpy as np

from .jets import Jet, JetError, MapJet


def load_conventions():
    txt = resources.files("qtorus").joinpath("_golden/conventions.txt").read_text()
    out = {}
    for line in txt.splitlines():
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        name, val = (s.strip() for s in line.split("="))
        out[name] = float(Fraction(val))
    return out


CONVENTIONS = load_conventions()
DD_COEFF = (CONVENTIONS["dd_bracket_0"], CONVENTIONS["dd_bracket_1"])
SYM_COEFF = (CONVENTIONS["sym_prod_0"], CONVENTIONS["sym_prod_1"])
DIFFUSION_C2 = CONVENTIONS["diffusion_c2"]
DIFFUSION_C3 = CONVENTIONS["diffusion_c3"]


def symplectic_matrix(n: int) -> np.ndarray:
    """The constant 2n x 2n matrix J with J[q_a, p_a] = +1, J[p_a, q_a] = -1."""
    J = np.zeros((2 * n, 2 * n))
    J[:n, n:] = np.eye(n)
    J[n:, :n] = -np.eye(n)
    return J


def _pairing(nvars):
    """conjugate index and sign per variable: q_a <-> p_a."""
    n = nvars // 2
    conj = [(v + n) % (2 * n) for v in range(2 * n)]
    sign = [1.0 if v < n else -1.0 for v in range(2 * n)]
    return conj, sign


def lambda_power(A: Jet, B: Jet, k: int, out_order: int = 0):
    """Full contraction D^k A . J^{(x)k} . D^k B.

    Returns a Jet of the requested order (0 = scalar germ; use .value).
    Both jets must live at the same base point with order >= k + out_order.
    """
    if A.nvars != B.nvars or A.order != B.order:
        raise JetError("lambda_power: jet mismatch")
    if A.order < k + out_order:
        raise JetError(f"lambda_power: jet order {A.order} < k + out_order = "
                       f"{k + out_order}")
    nv = A.nvars
    conj, sign = _pairing(nv)
    out = None
    # sum over ordered k-tuples grouped by multiset alpha of derivative slots
    for comb in itertools.combinations_with_replacement(range(nv), k):
        alpha = [0] * nv
        for v in comb:
            alpha[v] += 1
        mult = math.factorial(k)
        for a in alpha:
            mult //= math.factorial(a)
        sgn = 1.0
        beta = [0] * nv
        for v in comb:
            sgn *= sign[v]
            beta[conj[v]] += 1
        dA = A.deriv_multi(alpha).truncate(out_order)
        dB = B.deriv_multi(beta).truncate(out_order)
        term = (dA * dB) * (mult * sgn)
        out = term if out is None else out + term
    return out


def poisson(A: Jet, B: Jet, out_order: int = 0):
    """Poisson bracket {A, B} with {q, p} = +1."""
    return lambda_power(A, B, 1, out_order)


def dd_bracket(A: Jet, B: Jet, alpha: int, out_order: int = 0):
    """Skew bidifferential <<A, B>>^(alpha): the hbar^(2 alpha + 2) commutator
    coefficient, i.e. (1/(i hbar))[A_hat, B_hat] = {A,B} - sum_a hbar^(2a+2) <<A,B>>^(a).
    """
    if alpha not in (0, 1):
        raise ValueError("dd_bracket implemented for alpha in {0, 1}")
    k = 2 * alpha + 3
    return lambda_power(A, B, k, out_order) * DD_COEFF[alpha]


def sym_prod(A: Jet, B: Jet, alpha: int, out_order: int = 0):
    """Symmetric bidifferential (A . B)^(alpha): the hbar^(2 alpha + 2)
    anticommutator coefficient with the sign of conventions.txt."""
    if alpha not in (0, 1):
        raise ValueError("sym_prod implemented for alpha in {0, 1}")
    k = 2 * alpha + 2
    return lambda_power(A, B, k, out_order) * SYM_COEFF[alpha]


def w_contraction(A: Jet, B: Jet, C: Jet, out_order: int = 0):
    """D^2 A . J (x) J . (D B (x) D C), the third-derivative diffusion kernel."""
    nv = A.nvars
    conj, sign = _pairing(nv)
    out = None
    for i1 in range(nv):
        for i2 in range(nv):
            alpha = [0] * nv
            alpha[i1] += 1
            alpha[i2] += 1
            dA = A.deriv_multi(alpha).truncate(out_order)
            dB = B.deriv(conj[i1]).truncate(out_order)
            dC = C.deriv(conj[i2]).truncate(out_order)
            term = (dA * dB * dC) * (sign[i1] * sign[i2])
            out = term if out is None else out + term
    return out


def diffusion0(s_jets, d2, d3, out_order: int = 0, c2: float = None,
               c3: float = None):
    """Leading quantum diffusion term applied to a composite target.

    s_jets: list of n jets (the action germs S_l), order >= 2 + out_order.
    d2, d3: arrays of target partials d^2 k / dS_l dS_k and d^3 k / dS^3 at
    the point, shapes (n, n) and (n, n, n); entries may be batched arrays.
    The c2/c3 overrides exist for mutation (negative-control) tests only.
    """
    c2 = DIFFUSION_C2 if c2 is None else c2
    c3 = DIFFUSION_C3 if c3 is None else c3
    n = len(s_jets)

    def coerce(x):
        return x if isinstance(x, Jet) else np.asarray(x, dtype=float)

    out = None
    for l in range(n):
        for k in range(n):
            lam = lambda_power(s_jets[l], s_jets[k], 2, out_order)
            term = lam * coerce(d2[l][k]) * c2
            out = term if out is None else out + term
    for l in range(n):
        for k in range(n):
            for m in range(n):
                w = w_contraction(s_jets[l], s_jets[k], s_jets[m], out_order)
                out = out + w * coerce(d3[l][k][m]) * c3
    return out


def kappa_cross(s_jet: Jet, tau_jet: Jet, order1: bool = False,
                a_jet: Jet = None, phi_jet: Jet = None, out_order: int = 0):
    """Coefficient of ds /\\ dtau in the hbar^2 (or hbar^4) part of the
    deformed symplectic form, for one degree of freedom.

    order-0: <<s, tau>>^(0).
    order-1: <<s, tau>>^(1) + <<a, tau>>^(0) + <<s, phi>>^(0), which needs
    the order-0 correction germs a and phi.
    """
    if not order1:
        return dd_bracket(s_jet, tau_jet, 0, out_order)
    if a_jet is None or phi_jet is None:
        raise ValueError("order-1 kappa needs the order-0 correction germs")
    out = dd_bracket(s_jet, tau_jet, 1, out_order)
    o3 = 3 + out_order
    out = out + dd_bracket(a_jet.truncate(o3), tau_jet.truncate(o3), 0, out_order)
    out = out + dd_bracket(s_jet.truncate(o3), phi_jet.truncate(o3), 0, out_order)
    return out


def jet_of_map_component(mj: MapJet, i: int) -> Jet:
    return mj.comps[i]
