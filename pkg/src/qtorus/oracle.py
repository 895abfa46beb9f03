"""Exact quantum references: a 1D Schroedinger eigensolver (sinc-DVR), Weyl
quantization of polynomial symbols in the oscillator number basis, the
inverse (matrix -> Weyl symbol) transform, and commutator / anticommutator /
composite-function expansions fitted exactly in even powers of hbar.

Everything here is the ground truth that the jet-based calculus and the
spectral pipeline are tested against.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.optimize

from . import expr as ex
from . import polystar as ps


class OracleError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# 1D grid eigensolver
# ---------------------------------------------------------------------------

@dataclass
class Grid1D:
    q_lo: float
    q_hi: float
    npts: int

    @property
    def dx(self):
        return (self.q_hi - self.q_lo) / (self.npts - 1)

    @property
    def points(self):
        return np.linspace(self.q_lo, self.q_hi, self.npts)


@dataclass
class EigenResult:
    levels: np.ndarray
    error: float
    grid: Grid1D
    tail_mass: float
    vectors: np.ndarray = field(repr=False, default=None)


def _sinc_dvr_levels(vvals, dx, hbar, count, want_vectors=False):
    n = len(vvals)
    i = np.arange(n)
    dij = i[:, None] - i[None, :]
    with np.errstate(divide="ignore"):
        T = 2.0 / dij.astype(float) ** 2
    T[dij == 0] = math.pi ** 2 / 3.0
    T *= (hbar ** 2 / (2.0 * dx ** 2)) * (-1.0) ** dij
    H = T + np.diag(vvals)
    if want_vectors:
        w, v = scipy.linalg.eigh(H, subset_by_index=(0, count - 1))
        return w, v
    w = scipy.linalg.eigh(H, eigvals_only=True, subset_by_index=(0, count - 1))
    return w, None


def auto_box(v_expr, env, e_top, pad=None):
    """Classically allowed interval around the global minimum at energy
    e_top, padded for evanescent tails but never past a potential barrier
    (multi-well potentials would otherwise leak neighbor states in)."""
    qs = np.linspace(-40.0, 40.0, 80001)
    vv = ex.evaluate(v_expr, {"q1": qs}, env)
    inside = vv <= e_top
    if not inside.any():
        raise OracleError("energy below the potential everywhere")
    i0 = int(np.argmin(vv))
    if not inside[i0]:
        raise OracleError("potential minimum above requested energy")
    ilo = i0
    while ilo > 0 and inside[ilo - 1]:
        ilo -= 1
    ihi = i0
    while ihi < len(qs) - 1 and inside[ihi + 1]:
        ihi += 1
    lo, hi = qs[ilo], qs[ihi]
    if pad is None:
        pad = 0.35 * (hi - lo) + 1.0
    # cap the pad at the nearest barrier top (V starts decreasing again)
    jhi = ihi
    while jhi < len(qs) - 1 and vv[jhi + 1] >= vv[jhi]:
        jhi += 1
    jlo = ilo
    while jlo > 0 and vv[jlo - 1] >= vv[jlo]:
        jlo -= 1
    return max(lo - pad, qs[jlo]), min(hi + pad, qs[jhi])


def eigenlevels(v_expr, hbar, count, env=None, grid: Grid1D = None,
                npts=768, e_top=None, want_vectors=False,
                m_expr=None, tail_tol=1e-12) -> EigenResult:
    """Lowest `count` eigenvalues of -(hbar^2/2) d^2/dq^2 + V(q) + hbar^2 M(q).

    The discretization error is self-reported from a resolution doubling;
    results with error estimates above 1e-10 are refused.  M, when present,
    must depend on q only (that is the only hbar^2 symbol correction the
    grid solver can realize exactly).
    """
    env = env or {}
    if m_expr is not None and ex.free_vars(ex.bind(m_expr, env)) - {"q1"}:
        raise OracleError("the grid oracle supports M(q) corrections only")
    if grid is None:
        if e_top is None:
            # crude sweep: raise e_top until the box holds `count` levels
            vmin = float(np.min(ex.evaluate(
                v_expr, {"q1": np.linspace(-20, 20, 4001)}, env)))
            e_top = vmin + 1.0
            for _ in range(60):
                lo, hi = auto_box(v_expr, env, e_top, pad=0.0)
                # semiclassical count at unit hbar-scale: crude but only
                # steers the box, never the reported accuracy
                qs = np.linspace(lo, hi, 2001)
                pv = np.sqrt(np.maximum(e_top - ex.evaluate(v_expr, {"q1": qs}, env),
                                        0.0) * 2.0)
                n_est = np.trapezoid(pv, qs) / (math.pi * hbar)
                if n_est > count + 3:
                    break
                e_top = vmin + (e_top - vmin) * 1.6
        lo, hi = auto_box(v_expr, env, e_top)
        grid = Grid1D(lo, hi, npts)

    def solve(g, want_vec=False):
        vvals = ex.evaluate(v_expr, {"q1": g.points}, env)
        if m_expr is not None:
            vvals = vvals + hbar ** 2 * ex.evaluate(m_expr, {"q1": g.points}, env)
        return _sinc_dvr_levels(vvals, g.dx, hbar, count, want_vec)

    w1, _ = solve(grid)
    g2 = Grid1D(grid.q_lo, grid.q_hi, 2 * grid.npts - 1)
    w2, vec = solve(g2, True)
    err = float(np.max(np.abs(w1 - w2)))
    # wavefunction mass outside a 10%-margin band, for the retained states
    pts = g2.points
    width = g2.q_hi - g2.q_lo
    band = (pts > g2.q_lo + 0.1 * width) & (pts < g2.q_hi - 0.1 * width)
    dens = np.real(vec) ** 2
    tail = float(np.max(dens[~band].sum(axis=0)))
    if err > 1e-10:
        raise OracleError(f"eigensolver not converged: doubling error {err:.3e}; "
                          "enlarge the grid or point count")
    if tail > tail_tol:
        raise OracleError(f"eigenstate mass {tail:.3e} outside the margin band; "
                          "enlarge the box")
    return EigenResult(np.asarray(w2), err, g2, tail,
                       vec if want_vectors else None)


# ---------------------------------------------------------------------------
# Weyl quantization in the oscillator number basis
# ---------------------------------------------------------------------------

@dataclass
class WeylMatrix:
    matrix: np.ndarray
    hbar: float
    dim: int
    symbol_degree: int

    @property
    def safe_dim(self):
        """Rows/cols free of truncation pollution for products of two such
        operators (top `symbol_degree` states quarantined per factor)."""
        return self.dim - 2 * self.symbol_degree


def ladder(dim):
    a = np.diag(np.sqrt(np.arange(1, dim)), 1)
    return a, a.T.conj()


def qp_matrices(dim, hbar):
    a, ad = ladder(dim)
    q = math.sqrt(hbar / 2.0) * (a + ad)
    p = 1j * math.sqrt(hbar / 2.0) * (ad - a)
    return q, p


def weyl_quantize(symbol, hbar, dim, env=None) -> WeylMatrix:
    """Weyl (fully symmetrized) quantization of a polynomial symbol.

    Uses McCoy's identity Weyl(q^m p^n) = 2^-m sum_j C(m,j) q^j p^n q^(m-j),
    exact within the untruncated block.
    """
    poly = symbol if isinstance(symbol, ps.Poly) else ps.from_expr(symbol, env)
    qm, pm = qp_matrices(dim, hbar)
    deg_q = poly.c.shape[0] - 1
    deg_p = poly.c.shape[1] - 1
    qpow = [np.eye(dim, dtype=complex)]
    for _ in range(deg_q):
        qpow.append(qpow[-1] @ qm)
    ppow = [np.eye(dim, dtype=complex)]
    for _ in range(deg_p):
        ppow.append(ppow[-1] @ pm)
    out = np.zeros((dim, dim), dtype=complex)
    for m in range(deg_q + 1):
        for n in range(deg_p + 1):
            c = poly.c[m, n]
            if c == 0:
                continue
            acc = np.zeros((dim, dim), dtype=complex)
            for j in range(m + 1):
                acc += math.comb(m, j) * (qpow[j] @ ppow[n] @ qpow[m - j])
            out += (c / 2.0 ** m) * acc
    herm = np.max(np.abs(out - out.T.conj()))
    if np.max(np.abs(poly.c.imag)) < 1e-12 and herm > 1e-13 * max(1.0, np.max(np.abs(out))):
        raise OracleError(f"Weyl matrix not Hermitian: {herm:.3e}")
    return WeylMatrix(out, hbar, dim, max(deg_q + deg_p, 1))


def symmetrized_by_enumeration(m, n, hbar, dim):
    """Average of all distinct orderings of m q's and n p's (brute force)."""
    import itertools
    qm, pm = qp_matrices(dim, hbar)
    seqs = set(itertools.permutations("q" * m + "p" * n))
    out = np.zeros((dim, dim), dtype=complex)
    for s in seqs:
        acc = np.eye(dim, dtype=complex)
        for ch in s:
            acc = acc @ (qm if ch == "q" else pm)
        out += acc
    return out / len(seqs)


def normal_ordered_coefficients(M, maxdeg):
    """Expand a polynomial operator as sum c[m, n] (a+)^m a^n (exact)."""
    dim = M.shape[0]
    if dim < 2 * maxdeg + 2:
        raise OracleError("matrix too small for requested degree")
    c = {}
    fact = [math.factorial(k) for k in range(2 * maxdeg + 2)]
    for d in range(-maxdeg, maxdeg + 1):
        ns = [n for n in range(maxdeg + 1) if 0 <= n + d <= maxdeg]
        for jt, n_new in enumerate(ns):
            j = n_new
            i = j + d
            if i < 0:
                continue
            val = M[i, j]
            for n_prev in ns[:jt]:
                m_prev = n_prev + d
                if j - n_prev < 0:
                    continue
                val = val - c[(m_prev, n_prev)] * (
                    math.sqrt(fact[i] * fact[j]) / fact[j - n_prev])
            c[(n_new + d, n_new)] = val / (math.sqrt(fact[i] * fact[j]) / fact[j - n_new])
    return c


def weyl_symbol(M, hbar, maxdeg) -> ps.Poly:
    """Inverse Weyl transform of a polynomial operator matrix.

    Route: exact normal-ordered coefficients from the number-basis matrix,
    the Gaussian map normal -> Weyl symbol, then alpha = (q + i p)/sqrt(2 hbar).
    """
    c = normal_ordered_coefficients(M, maxdeg)
    # normal symbol N(abar, alpha): table n_ab[m, n]
    nab = np.zeros((maxdeg + 1, maxdeg + 1), dtype=complex)
    for (m, n), v in c.items():
        nab[m, n] = v
    # Weyl symbol in (abar, alpha): exp(-(1/2) d_alpha d_abar) applied to N
    wab = np.zeros_like(nab)
    for k in range(maxdeg + 1):
        shifted = nab.copy()
        fac = (-0.5) ** k / math.factorial(k)
        # d_alpha^k d_abar^k reduces both indices by k
        if k:
            red = np.zeros_like(nab)
            src = nab[k:, k:]
            mult = np.outer(
                [math.factorial(m + k) / math.factorial(m) for m in range(nab.shape[0] - k)],
                [math.factorial(n + k) / math.factorial(n) for n in range(nab.shape[1] - k)])
            red[: nab.shape[0] - k, : nab.shape[1] - k] = src * mult
            shifted = red
        wab += fac * shifted
    # substitute alpha = (q + i p)/sqrt(2 hbar), abar = (q - i p)/sqrt(2 hbar)
    s = 1.0 / math.sqrt(2.0 * hbar)
    alpha = ps.Poly(np.array([[0.0, 1j * s], [s, 0.0]], dtype=complex))
    abar = ps.Poly(np.array([[0.0, -1j * s], [s, 0.0]], dtype=complex))
    out = ps.Poly.zero()
    apow = [ps.Poly.const(1.0)]
    bpow = [ps.Poly.const(1.0)]
    for _ in range(maxdeg):
        apow.append(apow[-1] * alpha)
        bpow.append(bpow[-1] * abar)
    for m in range(maxdeg + 1):
        for n in range(maxdeg + 1):
            if wab[m, n] != 0:
                out = out + wab[m, n] * (bpow[m] * apow[n])
    return out.chop(1e-11)


# ---------------------------------------------------------------------------
# expansion fits
# ---------------------------------------------------------------------------

def star_commutator(a_sym, b_sym, hbars=(0.3, 0.5, 0.7, 0.9), dim=None, env=None):
    """Coefficient polynomials of (1/(i hbar))[A_hat, B_hat] = sum hbar^(2m) c_m.

    Operator route: quantize, commute, invert the Weyl transform per hbar,
    then solve the even-hbar Vandermonde system exactly.  Returns a list of
    Poly, one per even power present.
    """
    A = a_sym if isinstance(a_sym, ps.Poly) else ps.from_expr(a_sym, env)
    B = b_sym if isinstance(b_sym, ps.Poly) else ps.from_expr(b_sym, env)
    degsum = A.degree + B.degree
    n_orders = max(1, (min(A.degree, B.degree) + 1) // 2)
    hbars = list(hbars)[: max(n_orders, 2) + 1]
    if len(hbars) < n_orders:
        raise OracleError("need at least one hbar sample per fitted order")
    if dim is None:
        dim = 3 * degsum + 12
    shape = (degsum + 1, degsum + 1)
    samples = []
    for hb in hbars:
        Am = weyl_quantize(A, hb, dim).matrix
        Bm = weyl_quantize(B, hb, dim).matrix
        C = (Am @ Bm - Bm @ Am) / (1j * hb)
        P = weyl_symbol(C, hb, degsum)
        buf = np.zeros(shape, dtype=complex)
        r = min(P.c.shape[0], shape[0])
        s = min(P.c.shape[1], shape[1])
        buf[:r, :s] = P.c[:r, :s]
        samples.append(buf.ravel())
    V = np.array([[hb ** (2 * m) for m in range(n_orders)] for hb in hbars])
    sol, *_ = np.linalg.lstsq(V, np.array(samples), rcond=None)
    out = []
    for m in range(n_orders):
        out.append(ps.Poly(sol[m].reshape(shape)).trim().real_if_close(1e-7))
    return out


def star_anticommutator(a_sym, b_sym, hbars=(0.3, 0.5, 0.7, 0.9), dim=None, env=None):
    """Coefficients of (1/2)(A_hat B_hat + B_hat A_hat) symbol in even hbar."""
    A = a_sym if isinstance(a_sym, ps.Poly) else ps.from_expr(a_sym, env)
    B = b_sym if isinstance(b_sym, ps.Poly) else ps.from_expr(b_sym, env)
    degsum = A.degree + B.degree
    n_orders = min(A.degree, B.degree) // 2 + 1
    hbars = list(hbars)[: max(n_orders, 2) + 1]
    if dim is None:
        dim = 3 * degsum + 12
    shape = (degsum + 1, degsum + 1)
    samples = []
    for hb in hbars:
        Am = weyl_quantize(A, hb, dim).matrix
        Bm = weyl_quantize(B, hb, dim).matrix
        C = (Am @ Bm + Bm @ Am) / 2.0
        P = weyl_symbol(C, hb, degsum)
        buf = np.zeros(shape, dtype=complex)
        r = min(P.c.shape[0], shape[0])
        s = min(P.c.shape[1], shape[1])
        buf[:r, :s] = P.c[:r, :s]
        samples.append(buf.ravel())
    V = np.array([[hb ** (2 * m) for m in range(n_orders)] for hb in hbars])
    sol, *_ = np.linalg.lstsq(V, np.array(samples), rcond=None)
    return [ps.Poly(sol[m].reshape(shape)).trim().real_if_close(1e-7)
            for m in range(n_orders)]


def weyl_compose(k_coeffs, s_sym, hbars=(0.06, 0.08, 0.11, 0.15, 0.2), dim=160,
                 env=None):
    """Residual order of k(S_hat) vs Weyl((1 - hbar^2 Delta0_S) k(S)).

    k_coeffs: polynomial coefficients of k (ascending).  Returns (slope,
    residuals): the fitted hbar-order of the defect, which the composite
    expansion says is >= 4.
    """
    from .moyal import DIFFUSION_C2, DIFFUSION_C3
    S = s_sym if isinstance(s_sym, ps.Poly) else ps.from_expr(s_sym, env)
    kS = ps.Poly.zero()
    for m, c in enumerate(k_coeffs):
        if c:
            term = ps.Poly.const(c)
            for _ in range(m):
                term = term * S
            kS = kS + term
    # d^2/dS^2 and d^3/dS^3 of k as polynomials composed with S
    def kderiv_poly(order):
        out = ps.Poly.zero()
        for m, c in enumerate(k_coeffs):
            if m >= order and c:
                fac = c * math.prod(range(m - order + 1, m + 1))
                term = ps.Poly.const(fac)
                for _ in range(m - order):
                    term = term * S
                out = out + term
        return out

    lam2 = ps.lambda_k(S, S, 2)
    w3 = ps.Poly.zero()
    # W = D^2 S . J x J . (DS x DS) expanded in components
    Sq, Sp = S.diff_q(), S.diff_p()
    w3 = (S.deriv(2, 0) * Sp * Sp) - 2.0 * (S.deriv(1, 1) * Sq * Sp) \
        + (S.deriv(0, 2) * Sq * Sq)
    delta0 = DIFFUSION_C2 * (lam2 * kderiv_poly(2)) + DIFFUSION_C3 * (w3 * kderiv_poly(3))
    resid = []
    for hb in hbars:
        Sm = weyl_quantize(S, hb, dim).matrix
        w, U = scipy.linalg.eigh(Sm)
        kvals = np.zeros_like(w)
        for m, c in enumerate(k_coeffs):
            kvals += c * w ** m
        K1 = (U * kvals) @ U.T.conj()
        K2 = weyl_quantize(kS, hb, dim).matrix - hb ** 2 * weyl_quantize(
            delta0, hb, dim).matrix
        nsafe = dim - 2 * max(kS.degree, 1)
        resid.append(np.max(np.abs((K1 - K2)[:nsafe, :nsafe])))
    from .numutil import fit_loglog_slope
    slope, _, half = fit_loglog_slope(hbars, np.maximum(resid, 1e-300))
    return slope, np.array(resid)
