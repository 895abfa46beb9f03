"""Truncated multivariate Taylor (jet) arithmetic, batched over grids.

A jet stores Taylor coefficients c[alpha] = (d^alpha f / alpha!) at a base
point, for all multi-indices with |alpha| <= order.  Coefficient arrays may
carry arbitrary leading batch axes, so whole chart grids are processed with
numpy vector operations.  Variable count is small (1, 2 or 4) and the order
is capped at 5, matching the highest derivative used anywhere downstream.
"""

from __future__ import annotations

import itertools
import math
from functools import lru_cache

import numpy as np

MAX_ORDER = 5


class JetError(ValueError):
    pass


@lru_cache(maxsize=None)
def jet_tables(nvars: int, order: int):
    """Index tables shared by all jets with the same (nvars, order)."""
    if order < 0 or order > MAX_ORDER:
        raise JetError(f"jet order {order} outside [0, {MAX_ORDER}]")
    idx = []
    for deg in range(order + 1):
        for comb in itertools.combinations_with_replacement(range(nvars), deg):
            alpha = [0] * nvars
            for v in comb:
                alpha[v] += 1
            idx.append(tuple(alpha))
    index_of = {a: i for i, a in enumerate(idx)}
    degree = np.array([sum(a) for a in idx], dtype=int)
    ncoef = len(idx)

    # multiplication: result[k] = sum over alpha+beta=gamma of a[i]*b[j]
    ia, ib, iout = [], [], []
    for i, a in enumerate(idx):
        for j, b in enumerate(idx):
            if sum(a) + sum(b) <= order:
                g = tuple(x + y for x, y in zip(a, b))
                ia.append(i)
                ib.append(j)
                iout.append(index_of[g])
    ia = np.array(ia)
    ib = np.array(ib)
    scatter = np.zeros((len(ia), ncoef))
    scatter[np.arange(len(ia)), iout] = 1.0

    # derivative d/dx_v: out[beta] = c[beta + e_v] * (beta_v + 1)
    diff_src, diff_dst, diff_fac = [], [], []
    for v in range(nvars):
        src, dst, fac = [], [], []
        for i, a in enumerate(idx):
            if sum(a) + 1 <= order:
                up = list(a)
                up[v] += 1
                src.append(index_of[tuple(up)])
                dst.append(i)
                fac.append(up[v])
        diff_src.append(np.array(src))
        diff_dst.append(np.array(dst))
        diff_fac.append(np.array(fac, dtype=float))

    return {
        "idx": idx,
        "index_of": index_of,
        "degree": degree,
        "ncoef": ncoef,
        "mul_ia": ia,
        "mul_ib": ib,
        "mul_scatter": scatter,
        "diff": (diff_src, diff_dst, diff_fac),
    }


class Jet:
    """Taylor polynomial of one scalar function; coeffs shape (..., ncoef)."""

    __slots__ = ("nvars", "order", "coeffs", "point")

    def __init__(self, nvars, order, coeffs, point=None):
        t = jet_tables(nvars, order)
        coeffs = np.asarray(coeffs, dtype=float)
        if coeffs.shape[-1] != t["ncoef"]:
            raise JetError(
                f"coefficient axis {coeffs.shape[-1]} != {t['ncoef']} "
                f"for {nvars} vars order {order}"
            )
        self.nvars = nvars
        self.order = order
        self.coeffs = coeffs
        self.point = None if point is None else np.asarray(point, dtype=float)

    # -- constructors -------------------------------------------------
    @classmethod
    def constant(cls, nvars, order, value, point=None):
        value = np.asarray(value, dtype=float)
        c = np.zeros(value.shape + (jet_tables(nvars, order)["ncoef"],))
        c[..., 0] = value
        return cls(nvars, order, c, point)

    @classmethod
    def variable(cls, nvars, order, v, value=0.0, point=None):
        """Jet of the coordinate function x_v (value + offset)."""
        value = np.asarray(value, dtype=float)
        c = np.zeros(value.shape + (jet_tables(nvars, order)["ncoef"],))
        c[..., 0] = value
        e = [0] * nvars
        e[v] = 1
        c[..., jet_tables(nvars, order)["index_of"][tuple(e)]] = 1.0
        return cls(nvars, order, c, point)

    # -- bookkeeping ---------------------------------------------------
    @property
    def value(self):
        return self.coeffs[..., 0]

    def _check(self, other):
        if self.nvars != other.nvars or self.order != other.order:
            raise JetError("jet order/vars mismatch")
        if self.point is not None and other.point is not None:
            if self.point.shape != other.point.shape or not np.allclose(
                self.point, other.point, rtol=0, atol=1e-12
            ):
                raise JetError("jet base-point mismatch")

    def copy(self):
        return Jet(self.nvars, self.order, self.coeffs.copy(), self.point)

    def truncate(self, order):
        if order > self.order:
            raise JetError("cannot raise jet order by truncation")
        t = jet_tables(self.nvars, self.order)
        keep = t["degree"] <= order
        return Jet(self.nvars, order, self.coeffs[..., keep], self.point)

    def coeff(self, alpha):
        t = jet_tables(self.nvars, self.order)
        return self.coeffs[..., t["index_of"][tuple(alpha)]]

    # -- ring operations ------------------------------------------------
    def __add__(self, other):
        if isinstance(other, Jet):
            self._check(other)
            return Jet(self.nvars, self.order, self.coeffs + other.coeffs,
                       self.point if self.point is not None else other.point)
        c = self.coeffs.copy()
        c[..., 0] += other
        return Jet(self.nvars, self.order, c, self.point)

    __radd__ = __add__

    def __neg__(self):
        return Jet(self.nvars, self.order, -self.coeffs, self.point)

    def __sub__(self, other):
        return self + (-other if isinstance(other, Jet) else -np.asarray(other))

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if not isinstance(other, Jet):
            return Jet(self.nvars, self.order,
                       self.coeffs * np.asarray(other, dtype=float)[..., None]
                       if np.ndim(other) else self.coeffs * other,
                       self.point)
        self._check(other)
        t = jet_tables(self.nvars, self.order)
        prod = self.coeffs[..., t["mul_ia"]] * other.coeffs[..., t["mul_ib"]]
        out = prod @ t["mul_scatter"]
        return Jet(self.nvars, self.order, out,
                   self.point if self.point is not None else other.point)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Jet):
            return self * other.reciprocal()
        return self * (1.0 / np.asarray(other, dtype=float))

    def reciprocal(self):
        c0 = self.coeffs[..., 0]
        if np.any(c0 == 0.0):
            raise JetError("reciprocal of jet with zero constant term")
        # 1/(c0 + d) = (1/c0) sum (-d/c0)^k
        d = self.copy()
        d.coeffs = d.coeffs / c0[..., None]
        d.coeffs[..., 0] = 0.0
        acc = Jet.constant(self.nvars, self.order, np.ones_like(c0), self.point)
        term = acc
        for _ in range(self.order):
            term = term * d * (-1.0)
            acc = acc + term
        acc.coeffs = acc.coeffs / c0[..., None]
        return acc

    def power(self, k: int):
        if k < 0:
            return self.reciprocal().power(-k)
        out = Jet.constant(self.nvars, self.order,
                           np.ones(self.coeffs.shape[:-1]), self.point)
        base = self
        while k:
            if k & 1:
                out = out * base
            base = base * base if k > 1 else base
            k >>= 1
        return out

    # -- calculus --------------------------------------------------------
    def deriv(self, v: int):
        """Jet of d(self)/dx_v, one order lower."""
        if self.order == 0:
            raise JetError("cannot differentiate order-0 jet")
        src, dst, fac = (a[v] for a in jet_tables(self.nvars, self.order)["diff"])
        low = jet_tables(self.nvars, self.order - 1)
        out = np.zeros(self.coeffs.shape[:-1] + (low["ncoef"],))
        out[..., dst] = self.coeffs[..., src] * fac
        return Jet(self.nvars, self.order - 1, out, self.point)

    def deriv_multi(self, alpha):
        j = self
        for v, k in enumerate(alpha):
            for _ in range(k):
                j = j.deriv(v)
        return j

    def partial(self, alpha):
        """Value of the mixed partial d^alpha f at the base point."""
        t = jet_tables(self.nvars, self.order)
        fac = math.prod(math.factorial(a) for a in alpha)
        return self.coeffs[..., t["index_of"][tuple(alpha)]] * fac

    def __call__(self, dx):
        """Evaluate the Taylor polynomial at an offset from the base point."""
        dx = np.asarray(dx, dtype=float)
        t = jet_tables(self.nvars, self.order)
        out = 0.0
        for i, alpha in enumerate(t["idx"]):
            mono = np.ones(dx.shape[:-1])
            for v, k in enumerate(alpha):
                if k:
                    mono = mono * dx[..., v] ** k
            out = out + self.coeffs[..., i] * mono
        return out


def compose_univariate(derivs, inner: Jet) -> Jet:
    """Jet of F(g) from F's derivatives [F(c0), F'(c0), ...] at c0 = g(0).

    `derivs` has length inner.order + 1 (arrays broadcastable to the batch).
    """
    d = inner.copy()
    d.coeffs = d.coeffs.copy()
    d.coeffs[..., 0] = 0.0
    out = Jet.constant(inner.nvars, inner.order,
                       np.broadcast_to(np.asarray(derivs[0], dtype=float),
                                       inner.coeffs.shape[:-1]).copy(),
                       inner.point)
    term = Jet.constant(inner.nvars, inner.order,
                        np.ones(inner.coeffs.shape[:-1]), inner.point)
    for k in range(1, inner.order + 1):
        term = term * d
        out = out + term * (np.asarray(derivs[k], dtype=float) / math.factorial(k))
    return out


class MapJet:
    """Tuple of jets at a shared base point: the germ of a map R^n -> R^m."""

    __slots__ = ("comps",)

    def __init__(self, comps):
        comps = list(comps)
        for c in comps[1:]:
            comps[0]._check(c)
        self.comps = comps

    @property
    def nvars(self):
        return self.comps[0].nvars

    @property
    def order(self):
        return self.comps[0].order

    def __len__(self):
        return len(self.comps)

    def __getitem__(self, i):
        return self.comps[i]

    def linear_part(self):
        """Matrix of first derivatives, shape (..., m, nvars)."""
        rows = []
        for c in self.comps:
            e = np.eye(self.nvars, dtype=int)
            rows.append(np.stack([c.partial(tuple(e[v])) for v in range(self.nvars)],
                                 axis=-1))
        return np.stack(rows, axis=-2)


def jet_compose(outer: Jet, inner: MapJet) -> Jet:
    """Taylor coefficients of outer(inner(.)), truncated at the common order.

    Inner components must have zero constant term relative to outer's base
    point (compose displacement jets).
    """
    if len(inner) != outer.nvars:
        raise JetError("inner component count != outer variable count")
    if outer.order != inner.order:
        raise JetError("composition order mismatch")
    for c in inner.comps:
        if np.any(np.abs(c.value) > 1e-9):
            raise JetError("inner jets must have zero constant offset")
    t = jet_tables(outer.nvars, outer.order)
    nv, order = inner.nvars, inner.order
    one = Jet.constant(nv, order, np.ones(inner.comps[0].coeffs.shape[:-1]),
                       inner.comps[0].point)
    # memoized powers of each inner component
    pows = []
    for c in inner.comps:
        pw = [one]
        for _ in range(order):
            pw.append(pw[-1] * c)
        pows.append(pw)
    out = None
    for i, alpha in enumerate(t["idx"]):
        coef = outer.coeffs[..., i]
        if outer.coeffs.ndim == 1 and coef == 0.0:
            continue
        term = None
        for v, k in enumerate(alpha):
            if k:
                term = pows[v][k] if term is None else term * pows[v][k]
        term = one if term is None else term
        piece = term * coef
        out = piece if out is None else out + piece
    if out is None:
        out = Jet.constant(nv, order, np.zeros(inner.comps[0].coeffs.shape[:-1]),
                           inner.comps[0].point)
    return out


def map_compose(outer: MapJet, inner: MapJet) -> MapJet:
    return MapJet([jet_compose(c, inner) for c in outer.comps])


def jet_invert(m: MapJet, cond_warn=1e12):
    """Inverse map germ: displacement jets of the inverse, plus conditioning.

    Requires square (nvars components in nvars variables), zero constant
    terms and an invertible linear part.  Returns (MapJet, cond) where cond
    is the condition number of the linear part (batched).
    """
    nv, order = m.nvars, m.order
    if len(m) != nv:
        raise JetError("jet_invert needs a square map")
    for c in m.comps:
        if np.any(np.abs(c.value) > 1e-9):
            raise JetError("jet_invert expects displacement jets (zero value)")
    A = m.linear_part()
    cond = np.linalg.cond(A)
    if np.any(~np.isfinite(cond)) or np.any(cond > cond_warn):
        raise JetError("singular linear part in jet_invert (caustic); "
                       f"max cond={np.max(cond):.3e}")
    Ainv = np.linalg.inv(A)

    def linear_apply(mat, comps_in):
        out = []
        for r in range(nv):
            acc = None
            for c in range(nv):
                piece = comps_in[c] * mat[..., r, c]
                acc = piece if acc is None else acc + piece
            out.append(acc)
        return MapJet(out)

    # split m = A + N, iterate g <- Ainv o (id - N o g)
    ident = MapJet([Jet.variable(nv, order, v,
                                 np.zeros(m.comps[0].coeffs.shape[:-1]),
                                 m.comps[0].point) for v in range(nv)])
    lin = linear_apply(A, ident.comps)
    N = MapJet([m.comps[v] - lin.comps[v] for v in range(nv)])
    g = linear_apply(Ainv, ident.comps)
    for _ in range(order):
        ng = map_compose(N, g)
        g = linear_apply(Ainv, [ident.comps[v] - ng.comps[v] for v in range(nv)])
    return g, cond
