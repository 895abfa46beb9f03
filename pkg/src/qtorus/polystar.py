"""Exact Moyal star products of polynomials in one (q, p) pair.

Polynomials are dense complex coefficient tables c[i, j] ~ q^i p^j.  Star
products carry the quantization parameter symbolically: a graded polynomial
is a dict {hbar_power: Poly}, truncated at a caller-chosen power.  All
operations are finite and exact up to float rounding, which is what makes
this module usable as a reference for the jet-based bidifferential calculus
and as the derivation engine for the second-order diffusion operator.
"""

from __future__ import annotations

import math

import numpy as np

from . import expr as ex


class Poly:
    """Dense polynomial in (q, p) with complex coefficients."""

    __slots__ = ("c",)

    def __init__(self, c):
        self.c = np.atleast_2d(np.asarray(c, dtype=complex))

    @classmethod
    def zero(cls):
        return cls(np.zeros((1, 1)))

    @classmethod
    def const(cls, v):
        return cls(np.array([[v]], dtype=complex))

    @classmethod
    def monomial(cls, i, j, v=1.0):
        c = np.zeros((i + 1, j + 1), dtype=complex)
        c[i, j] = v
        return cls(c)

    def trim(self):
        c = self.c
        nz = np.argwhere(np.abs(c) > 0)
        if len(nz) == 0:
            return Poly.zero()
        i, j = nz.max(axis=0)
        return Poly(c[: i + 1, : j + 1])

    def chop(self, rel=1e-12):
        c = self.c.copy()
        top = np.max(np.abs(c)) if c.size else 0.0
        if top:
            c[np.abs(c) < rel * top] = 0.0
        return Poly(c).trim()

    @property
    def degree(self):
        nz = np.argwhere(self.c != 0)
        if len(nz) == 0:
            return -1
        return int((nz.sum(axis=1)).max())

    def __add__(self, other):
        a, b = self.c, other.c
        out = np.zeros((max(a.shape[0], b.shape[0]),
                        max(a.shape[1], b.shape[1])), dtype=complex)
        out[: a.shape[0], : a.shape[1]] += a
        out[: b.shape[0], : b.shape[1]] += b
        return Poly(out)

    def __sub__(self, other):
        return self + (other * -1.0)

    def __mul__(self, other):
        if isinstance(other, Poly):
            a, b = self.c, other.c
            out = np.zeros((a.shape[0] + b.shape[0] - 1,
                            a.shape[1] + b.shape[1] - 1), dtype=complex)
            for i in range(a.shape[0]):
                for j in range(a.shape[1]):
                    if a[i, j] != 0:
                        out[i:i + b.shape[0], j:j + b.shape[1]] += a[i, j] * b
            return Poly(out)
        return Poly(self.c * other)

    __rmul__ = __mul__

    def diff_q(self):
        if self.c.shape[0] == 1:
            return Poly.zero()
        return Poly(self.c[1:, :] * np.arange(1, self.c.shape[0])[:, None])

    def diff_p(self):
        if self.c.shape[1] == 1:
            return Poly.zero()
        return Poly(self.c[:, 1:] * np.arange(1, self.c.shape[1])[None, :])

    def deriv(self, a, b):
        out = self
        for _ in range(a):
            out = out.diff_q()
        for _ in range(b):
            out = out.diff_p()
        return out

    def __call__(self, q, p):
        q = np.asarray(q, dtype=complex)
        p = np.asarray(p, dtype=complex)
        out = 0.0
        for i in range(self.c.shape[0]):
            row = 0.0
            for j in range(self.c.shape[1] - 1, -1, -1):
                row = row * p + self.c[i, j]
            out = out + row * q ** i
        return out

    def real_if_close(self, tol=1e-9):
        if np.max(np.abs(self.c.imag)) > tol * max(1.0, np.max(np.abs(self.c))):
            raise ValueError("polynomial has a non-negligible imaginary part")
        return Poly(self.c.real + 0j)

    def max_abs(self):
        return float(np.max(np.abs(self.c))) if self.c.size else 0.0


def from_expr(e, env=None):
    """Convert a polynomial PhaseExpr in (q1, p1) to a Poly; reject others."""
    e = ex.bind(e, env or {})

    def go(n):
        if isinstance(n, ex.Const):
            return Poly.const(n.value)
        if isinstance(n, ex.Var):
            if n.name == "q1":
                return Poly.monomial(1, 0)
            if n.name == "p1":
                return Poly.monomial(0, 1)
            raise ValueError(f"polystar handles (q1, p1) only, got {n.name}")
        if isinstance(n, ex.Add):
            return go(n.a) + go(n.b)
        if isinstance(n, ex.Sub):
            return go(n.a) - go(n.b)
        if isinstance(n, ex.Mul):
            return go(n.a) * go(n.b)
        if isinstance(n, ex.Neg):
            return go(n.a) * -1.0
        if isinstance(n, ex.Div):
            if isinstance(n.b, ex.Const):
                return go(n.a) * (1.0 / n.b.value)
            raise ValueError("non-constant division is not polynomial")
        if isinstance(n, ex.Pow):
            if n.k != int(n.k) or n.k < 0:
                raise ValueError("non-integer power is not polynomial")
            out = Poly.const(1.0)
            base = go(n.a)
            for _ in range(int(n.k)):
                out = out * base
            return out
        raise ValueError(f"not a polynomial expression: {ex.render(n)}")

    return go(e)


def lambda_k(A: Poly, B: Poly, k: int) -> Poly:
    """Poisson-power contraction Lambda^k(A, B) = sum_j C(k,j)(-1)^(k-j)
    (d_q^j d_p^(k-j) A)(d_q^(k-j) d_p^j B)."""
    out = Poly.zero()
    for j in range(k + 1):
        sgn = (-1.0) ** (k - j)
        out = out + math.comb(k, j) * sgn * (A.deriv(j, k - j) * B.deriv(k - j, j))
    return out


def star_graded(A: Poly, B: Poly, kmax: int) -> dict:
    """Moyal product A * B = sum_k (1/k!) (i hbar / 2)^k Lambda^k(A, B),
    returned as {hbar_power: Poly} truncated at kmax."""
    out = {}
    top = min(kmax, A.degree if A.degree >= 0 else 0,
              B.degree if B.degree >= 0 else 0)
    for k in range(top + 1):
        coef = (0.5j) ** k / math.factorial(k)
        term = lambda_k(A, B, k) * coef
        if term.max_abs():
            out[k] = term
    return out


def gmul(GA: dict, GB: dict, kmax: int) -> dict:
    """Star product of graded polynomials, truncated beyond hbar^kmax."""
    out = {}
    for pa, A in GA.items():
        for pb, B in GB.items():
            if pa + pb > kmax:
                continue
            for k, P in star_graded(A, B, kmax - pa - pb).items():
                key = pa + pb + k
                out[key] = out.get(key, Poly.zero()) + P
    return {k: v for k, v in out.items() if v.max_abs() > 0}


def commutator_coefficients(A: Poly, B: Poly):
    """Even-hbar coefficient polynomials of (1/(i hbar))(A*B - B*A).

    Exact for polynomials; returns [c0, c2, c4, ...] with the convention
    value = sum_m hbar^(2m) c_{2m}.
    """
    deg = min(A.degree, B.degree)
    out = []
    for k in range(1, deg + 1, 2):
        coef = 2.0 * (0.5) ** k / math.factorial(k) * (1j) ** (k - 1)
        out.append((lambda_k(A, B, k) * coef).real_if_close())
    return out


def anticommutator_coefficients(A: Poly, B: Poly):
    """Even-hbar coefficients of (1/2)(A*B + B*A) = AB + hbar^2 (...) + ..."""
    deg = min(A.degree, B.degree)
    out = []
    for k in range(0, deg + 1, 2):
        coef = (0.5) ** k / math.factorial(k) * (1j) ** k
        out.append((lambda_k(A, B, k) * coef).real_if_close())
    return out


def star_function_coefficients(S_taylor: Poly, k_derivs, kmax: int = 4):
    """hbar-graded value at the jet base point of k(S_hat)'s Weyl symbol.

    S_taylor: Taylor polynomial of S around the base point, with S(0)
    removed (pure displacement); the base point itself is the polynomial
    origin.  k_derivs: [k(x0), k'(x0), ...] with x0 = S(base point).
    Returns {hbar_power: value at origin}; power 2 gives -Delta0 k, power 4
    gives -Delta1 k.
    """
    m_max = len(k_derivs) - 1
    out = {0: complex(k_derivs[0])}
    power = {0: Poly.const(1.0)}
    for m in range(1, m_max + 1):
        power = gmul(power, {0: S_taylor}, kmax)
        # a coefficient of total degree d can still reach the origin value
        # only if the remaining hbar budget 2(kmax - grade) covers d
        pruned = {}
        for hp, P in power.items():
            budget = 2 * (kmax - hp)
            c = P.c
            if c.shape[0] + c.shape[1] - 2 > budget:
                keep = np.zeros_like(c)
                for i in range(min(c.shape[0], budget + 1)):
                    jmax = min(c.shape[1], budget + 1 - i)
                    keep[i, :jmax] = c[i, :jmax]
                P = Poly(keep).trim()
            if P.max_abs():
                pruned[hp] = P
        power = pruned
        if not power:
            break
        fac = 1.0 / math.factorial(m)
        for hp, P in power.items():
            v = P.c[0, 0] * fac * k_derivs[m]
            out[hp] = out.get(hp, 0.0) + v
    return out
