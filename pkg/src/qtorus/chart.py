"""Classical action-angle charts for librational 1D systems p^2/2 + V(q),
plus separable 2D products.

Conventions: the action is s(E) = (1/pi) int sqrt(2(E - V)) dq between the
turning points; the angle tau in [0, 2pi) is anchored at the q-maximum
turning point and advances along the time-reversed flow, which makes
{s, tau} = +1 with {q, p} = +1.

Levels are spaced uniformly in the radial label rho = sqrt(2 s), not in s:
chart tables are analytic functions of rho with O(1) derivatives all the
way down to the elliptic point (for the harmonic oscillator they are exactly
linear), so finite differencing across levels keeps full accuracy on windows
spanning several orders of magnitude in action.  s-derivatives are recovered
through the exact relation s = rho^2 / 2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import chebyshev as nc
from scipy.integrate import solve_ivp
from scipy.interpolate import make_interp_spline
from scipy.optimize import brentq, minimize_scalar

from . import expr as ex
from .jets import Jet, MapJet, jet_invert, compose_univariate, jet_tables
from .numutil import fd_weights, spectral_derivative, table_derivative, trig_interp

_GL_NODES = 120


class ChartError(ValueError):
    pass


def _gauss(n=_GL_NODES):
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * math.pi * x, 0.5 * math.pi * w  # nodes on (-pi/2, pi/2)


def split_kinetic(h_expr, env=None):
    """Return V(q) for H = p^2/2 + V(q); reject other kinetic structures."""
    env = env or {}
    h = ex.bind(h_expr if not isinstance(h_expr, str) else ex.parse(h_expr), env)
    v = ex.sub(h, ex.parse("p1^2/2"))
    dv = ex.diff(v, "p1")
    rng = np.random.default_rng(7)
    pts = {"q1": rng.normal(size=24), "p1": rng.normal(size=24)}
    if np.max(np.abs(ex.evaluate(dv, pts))) > 1e-9:
        raise ChartError("Hamiltonian is not of the form p^2/2 + V(q)")
    return ex.substitute(v, "p1", 0.0)


class _Builder:
    """Quadrature closures for one potential; kept on the chart for reuse."""

    def __init__(self, v_expr, q_center, e_bottom, scan):
        self.v = v_expr
        self.q_center = q_center
        self.e_bottom = e_bottom
        self.scan = scan
        self.nodes, self.weights = _gauss()

    def vq(self, q):
        return ex.evaluate(self.v, {"q1": np.asarray(q, dtype=float)})

    def turning_points(self, E):
        qs, vv = self.scan
        i0 = int(np.searchsorted(qs, self.q_center))
        below = vv <= E
        if not below[i0]:
            raise ChartError(f"energy {E} below the potential at the center")
        i = i0
        while i + 1 < len(qs) and below[i + 1]:
            i += 1
        if i + 1 >= len(qs):
            raise ChartError("window reaches the scan boundary (not librational)")
        hi = brentq(lambda q: self.vq(q) - E, qs[i], qs[i + 1], xtol=1e-14)
        i = i0
        while i - 1 >= 0 and below[i - 1]:
            i -= 1
        if i - 1 < 0:
            raise ChartError("window reaches the scan boundary (not librational)")
        lo = brentq(lambda q: self.vq(q) - E, qs[i - 1], qs[i], xtol=1e-14)
        # Newton polish: turning-point error leaks ~1e-11 noise into the
        # period quadrature otherwise
        dv = ex.diff(self.v, "q1")
        for _ in range(2):
            d = float(ex.evaluate(dv, {"q1": hi}))
            if d != 0.0:
                hi -= float(self.vq(hi) - E) / d
            d = float(ex.evaluate(dv, {"q1": lo}))
            if d != 0.0:
                lo -= float(self.vq(lo) - E) / d
        # reject multi-well windows: exactly one local minimum inside
        seg = (qs > lo) & (qs < hi)
        interior = vv[seg]
        if len(interior) > 4:
            n_min = int(np.sum(np.diff(np.sign(np.diff(interior))) > 0))
            if n_min > 1:
                raise ChartError("window spans several wells "
                                 "(turning-point count != 2)")
        return lo, hi

    def action_and_period(self, E):
        lo, hi = self.turning_points(E)
        c, w = 0.5 * (hi + lo), 0.5 * (hi - lo)
        q = c + w * np.sin(self.nodes)
        R = (E - self.vq(q)) / ((hi - q) * (q - lo))
        if np.any(R <= 0):
            raise ChartError("quadrature non-convergence: R <= 0 inside the well")
        s = (w ** 2 / math.pi) * np.sum(self.weights * np.sqrt(2.0 * R)
                                        * np.cos(self.nodes) ** 2)
        T = math.sqrt(2.0) * np.sum(self.weights / np.sqrt(R))
        return s, T, (lo, hi)


@dataclass
class GridJets:
    """Jets of the inverse chart map on the full grid."""

    tau: Jet                 # tau(q, p)
    s: Jet                   # s(q, p), route-(a) backed
    rho: Jet                 # sqrt(2 s)(q, p), route (b)
    cond: np.ndarray         # conditioning of the forward linear parts
    mismatch: float          # max relative route-(a)/(b) disagreement

    @property
    def map(self):
        return MapJet([self.tau, self.s])


@dataclass
class AAChart:
    """Tabulated action-angle chart for one degree of freedom."""

    h_expr: object
    v_expr: object
    window: tuple
    q_center: float
    e_bottom: float
    maslov: int
    tau: np.ndarray            # (n_tau,)
    rho_levels: np.ndarray     # uniform radial grid incl. margins
    e_levels: np.ndarray
    Q: np.ndarray              # (n_full, n_tau)
    P: np.ndarray
    interior: slice            # rows covering the requested window
    _f_cheb: list = field(repr=False, default=None)   # Chebyshev of f'(s)
    _f_spl: object = field(repr=False, default=None)  # spline E(s)
    _s_spl: object = field(repr=False, default=None)  # spline s(E)
    _sE_cheb: list = field(repr=False, default=None)  # Chebyshev of s'(E)
    _builder: object = field(repr=False, default=None)
    _jets_cache: dict = field(repr=False, default_factory=dict)

    # -- level bookkeeping -----------------------------------------------
    @property
    def s_levels(self):
        return 0.5 * self.rho_levels ** 2

    @property
    def drho(self):
        return float(self.rho_levels[1] - self.rho_levels[0])

    @property
    def s_interior(self):
        return self.s_levels[self.interior]

    # -- scalar maps ------------------------------------------------------
    def f(self, s, nu=0):
        """Energy as a function of action, f = E(s), and its s-derivatives."""
        s = np.asarray(s, dtype=float)
        if nu == 0:
            return self._f_spl(s)
        dom, coef = self._f_cheb
        c = coef
        for _ in range(nu - 1):
            c = nc.chebder(c, 1, scl=2.0 / (dom[1] - dom[0]))
        x = 2.0 * (s - dom[0]) / (dom[1] - dom[0]) - 1.0
        return nc.chebval(x, c)

    def s_of_e(self, E, nu=0):
        E = np.asarray(E, dtype=float)
        if nu == 0:
            return self._s_spl(E)
        dom, coef = self._sE_cheb
        c = coef
        for _ in range(nu - 1):
            c = nc.chebder(c, 1, scl=2.0 / (dom[1] - dom[0]))
        x = 2.0 * (E - dom[0]) / (dom[1] - dom[0]) - 1.0
        return nc.chebval(x, c)

    def frequency(self, s):
        return self.f(s, 1)

    def f_high_deriv(self, s0, nu):
        """f^(nu)(s) for nu >= 2 by Richardson differencing of the exact
        quadrature frequency profile (used where Chebyshev differentiation
        would amplify the fit's noise floor, i.e. nu >= 4)."""
        from .numutil import richardson_derivative
        b = self._builder
        if b is None:
            raise ChartError("quadrature backend unavailable on restored charts")

        def f1_of_s(s):
            E = float(self._f_spl(s))
            for _ in range(2):
                sE, T, _ = b.action_and_period(E)
                E -= (sE - s) / (T / (2.0 * math.pi))
            _, T, _ = b.action_and_period(E)
            return 2.0 * math.pi / T

        k = nu - 1
        npts = k + 5 + (k + 1) % 2
        half = (npts - 1) / 2.0
        s_floor = max(float(self._f_spl.t[0]) * 1.02, 1e-9)
        s_top = float(self._f_spl.t[-1]) * 0.999
        span = float(self.s_levels[-1] - self.s_levels[0])
        h = min(0.05 * span, (s_top - s_floor) / (2.0 * half + 1.0))
        # evaluate at the nearest point whose stencil stays on the table
        c = min(max(s0, s_floor + half * h), s_top - half * h)
        return richardson_derivative(f1_of_s, c, k=k, h=h, levels=2)

    # -- jets --------------------------------------------------------------
    def grid_jets(self, order=3) -> "GridJets":
        """Jets of (tau, s) as functions of (q, p) on the full grid,
        cross-validated two ways; cached per order."""
        if order not in self._jets_cache:
            self._jets_cache[order] = _grid_jets(self, order)
        return self._jets_cache[order]

    def point_xy(self):
        return np.stack([self.Q, self.P], axis=-1)

    # -- invariants ---------------------------------------------------------
    def area_action(self):
        """(1/2pi) contour integral of p dq per level, from the tables."""
        dq = spectral_derivative(self.Q, 1)
        return -np.mean(self.P * dq, axis=1)

    def canonicity(self, order=2):
        from .moyal import poisson
        gj = self.grid_jets(max(order, 2))
        pb = poisson(gj.s, gj.tau).value
        return float(np.max(np.abs(pb[self.interior] - 1.0)))


def build_chart(h_expr, window, env=None, n_tau=256, n_s=96, margin=6,
                n_dense=420, ivp_tol=1e-13) -> AAChart:
    """Construct the action-angle chart of p^2/2 + V(q) on an energy window.

    The window must contain only librational orbits around one minimum
    (exactly two turning points throughout).
    """
    env = env or {}
    h = ex.bind(h_expr if not isinstance(h_expr, str) else ex.parse(h_expr), env)
    v = split_kinetic(h)
    e_min, e_max = float(window[0]), float(window[1])

    qs = np.linspace(-40.0, 40.0, 80001)
    vv = ex.evaluate(v, {"q1": qs})
    i0 = int(np.argmin(vv))
    res = minimize_scalar(
        lambda q: float(ex.evaluate(v, {"q1": q})),
        bracket=(qs[max(i0 - 2, 0)], qs[i0], qs[min(i0 + 2, len(qs) - 1)]))
    q_center = float(res.x)
    e_bottom = float(res.fun)
    if not (e_bottom < e_min < e_max):
        raise ChartError(f"window [{e_min}, {e_max}] must sit above the "
                         f"potential bottom {e_bottom}")
    b = _Builder(v, q_center, e_bottom, (qs, vv))

    # radial grid, uniform in rho = sqrt(2 s), margins padded outside the
    # requested window
    s_min_req, _, _ = b.action_and_period(e_min)
    s_max_req, t_at_max, _ = b.action_and_period(e_max)
    rho_min_req = math.sqrt(2.0 * s_min_req)
    rho_max_req = math.sqrt(2.0 * s_max_req)
    drho = (rho_max_req - rho_min_req) / (n_s - 1)

    e_lo_d = e_bottom + 1e-5 * (e_max - e_bottom)
    s_lo_d, _, _ = b.action_and_period(e_lo_d)
    rho_floor = math.sqrt(2.0 * s_lo_d) * 1.05
    rho_lo = max(rho_min_req - margin * drho, rho_floor)
    n_full = n_s + 2 * margin

    # top margin energy by Newton on the quadrature action
    s_top = 0.5 * (rho_lo + (n_full + 0.5) * drho) ** 2
    e_top = e_max
    for _ in range(8):
        sE, T, _ = b.action_and_period(e_top)
        step = (s_top - sE) / (T / (2.0 * math.pi))
        e_top += step
        if abs(step) < 1e-13 * max(1.0, abs(e_top)):
            break
    b.turning_points(e_top)  # librational check at the extended top

    # dense action/period tables from near the bottom over the full range
    e_dense = e_lo_d + (e_top - e_lo_d) * np.linspace(0.0, 1.0, n_dense) ** 2
    s_dense = np.empty(n_dense)
    t_dense = np.empty(n_dense)
    for i, E in enumerate(e_dense):
        s_dense[i], t_dense[i], _ = b.action_and_period(E)
    if np.any(np.diff(s_dense) <= 0):
        raise ChartError("s(E) not strictly increasing on the window")
    s_spl = make_interp_spline(e_dense, s_dense, k=5)
    f_spl = make_interp_spline(s_dense, e_dense, k=5)

    # smooth frequency maps fitted at Chebyshev nodes (a least-squares fit
    # on the clustered dense grid is ill-conditioned and leaves coefficient
    # junk that high-order differentiation would amplify)
    def period_at_e(E):
        return b.action_and_period(E)[1]

    def period_at_s(s):
        E = float(f_spl(s))
        for _ in range(2):
            sE, T, _ = b.action_and_period(E)
            E -= (sE - s) / (T / (2.0 * math.pi))
        return b.action_and_period(E)[1]

    sE_cheb = _cheb_node_fit(lambda E: period_at_e(E) / (2.0 * math.pi),
                             (e_lo_d, e_top))
    f1_cheb = _cheb_node_fit(lambda s: 2.0 * math.pi / period_at_s(s),
                             (float(s_dense[0]), float(s_dense[-1])))

    rho_levels = rho_lo + drho * np.arange(n_full)
    if 0.5 * rho_levels[-1] ** 2 >= s_dense[-1]:
        raise ChartError("margin extension leaves the dense table")
    interior = slice(
        int(np.searchsorted(rho_levels, rho_min_req - 0.5 * drho)),
        int(np.searchsorted(rho_levels, rho_max_req + 0.5 * drho)))

    # refine E per level so s(E_j) matches rho_j^2/2 at quadrature accuracy
    s_targets = 0.5 * rho_levels ** 2
    e_levels = np.asarray(f_spl(s_targets), dtype=float)
    for j, sj in enumerate(s_targets):
        E = float(e_levels[j])
        for _ in range(3):
            sE, T, _ = b.action_and_period(E)
            E = E - (sE - sj) / (T / (2.0 * math.pi))
        e_levels[j] = E

    Q, P = _trajectories(v, e_levels, b, n_tau, ivp_tol)

    maslov = _caustic_count(Q)
    if maslov != 2:
        raise ChartError(f"caustic count {maslov} != 2 on a librational window")

    return AAChart(
        h_expr=h, v_expr=v, window=(e_min, e_max), q_center=q_center,
        e_bottom=e_bottom, maslov=maslov, tau=2.0 * math.pi * np.arange(n_tau) / n_tau,
        rho_levels=rho_levels, e_levels=e_levels, Q=Q, P=P, interior=interior,
        _f_cheb=f1_cheb, _f_spl=f_spl, _s_spl=s_spl, _sE_cheb=sE_cheb,
        _builder=b,
    )


def _cheb_node_fit(fn, dom, n=129, rel=3e-11):
    """Chebyshev representation of a scalar callable, sampled at Chebyshev
    extrema (perfectly conditioned) and chopped at the noise floor."""
    k = np.arange(n)
    x = np.cos(math.pi * k / (n - 1))
    pts = dom[0] + 0.5 * (dom[1] - dom[0]) * (x + 1.0)
    vals = np.array([fn(p) for p in pts])
    c = nc.chebfit(x, vals, n - 1)
    mag = np.max(np.abs(c))
    tail_max = np.maximum.accumulate(np.abs(c)[::-1])[::-1]
    keep = np.nonzero(tail_max > rel * mag)[0]
    c = c[: keep[-1] + 1] if len(keep) else c[:1]
    return [(dom[0], dom[1]), c]


def _cheb_fit(x, y, rel=1e-12):
    """Chebyshev coefficients of data on [x[0], x[-1]], chopped at the
    coefficient noise floor so that analytic differentiation does not
    amplify fitting junk."""
    dom = (float(x[0]), float(x[-1]))
    t = 2.0 * (np.asarray(x) - dom[0]) / (dom[1] - dom[0]) - 1.0
    deg = min(len(x) // 3, 80)
    c = nc.chebfit(t, y, deg)
    mag = np.max(np.abs(c))
    tail_max = np.maximum.accumulate(np.abs(c)[::-1])[::-1]
    keep = np.nonzero(tail_max > rel * mag)[0]
    c = c[: keep[-1] + 1] if len(keep) else c[:1]
    return [dom, c]


def _trajectories(v_expr, e_levels, b: _Builder, n_tau, ivp_tol):
    """Level tables (q, p)(tau_m): forward flow read at t = T (1 - m/M)."""
    vp = ex.diff(v_expr, "q1")

    def rhs(t, z):
        return (z[1], -float(ex.evaluate(vp, {"q1": z[0]})))

    M = n_tau
    nf = len(e_levels)
    Q = np.empty((nf, M))
    P = np.empty((nf, M))
    for j, E in enumerate(e_levels):
        _, T, (lo, hi) = b.action_and_period(E)
        t_eval = T * np.arange(1, M) / M
        sol = solve_ivp(rhs, (0.0, float(T)), [hi, 0.0], t_eval=t_eval,
                        method="DOP853", rtol=ivp_tol, atol=ivp_tol)
        if not sol.success:
            raise ChartError(f"trajectory integration failed at E={E}")
        Q[j, 0], P[j, 0] = hi, 0.0
        Q[j, 1:] = sol.y[0][::-1]
        P[j, 1:] = sol.y[1][::-1]
    return Q, P


def _caustic_count(Q):
    """Sign changes of dq/dtau over one period (zeros squeezed out)."""
    dq = spectral_derivative(Q, 1)
    counts = set()
    for row in dq:
        tol = 1e-8 * np.max(np.abs(row))
        sig = np.sign(row[np.abs(row) > tol])
        flips = int(np.sum(sig[1:] != sig[:-1])) + int(sig[0] != sig[-1])
        counts.add(flips)
    if len(counts) != 1:
        raise ChartError(f"caustic count inconsistent across levels: {sorted(counts)}")
    return counts.pop()


# ---------------------------------------------------------------------------
# jets on the grid
# ---------------------------------------------------------------------------

def _forward_jets(chart: AAChart, order: int):
    """MapJet of (tau, rho) -> (q, p) displacements, batched over the grid."""
    t = jet_tables(2, order)
    nf, M = chart.Q.shape
    comps = []
    for table in (chart.Q, chart.P):
        dtau = [table]
        for a in range(1, order + 1):
            dtau.append(spectral_derivative(table, a))
        coeffs = np.zeros((nf, M, t["ncoef"]))
        for i, (a, bb) in enumerate(t["idx"]):
            d = dtau[a]
            if bb:
                d = table_derivative(d, chart.drho, bb, axis=0)
            coeffs[..., i] = d / (math.factorial(a) * math.factorial(bb))
        coeffs[..., 0] = 0.0
        comps.append(Jet(2, order, coeffs))
    return MapJet(comps)


def _grid_jets(chart: AAChart, order: int):
    """Jets of (tau, s)(q, p) on the grid, with a two-route cross-check.

    Route (b) inverts the tabulated forward map (tau, rho) -> (q, p); the
    action jet follows exactly from s = rho^2/2.  Route (a) composes the
    Chebyshev derivatives of S(E) with the exact Hamiltonian jets; it is the
    more accurate s-route and is what downstream consumers receive.
    """
    fwd = _forward_jets(chart, order)
    inv, cond = jet_invert(fwd)
    pts = chart.point_xy()
    tau_jet, rho_jet = inv.comps
    tau_jet.coeffs[..., 0] = np.broadcast_to(chart.tau, chart.Q.shape)
    rho_jet.coeffs[..., 0] = np.broadcast_to(chart.rho_levels[:, None],
                                             chart.Q.shape)
    s_route_b = (rho_jet * rho_jet) * 0.5
    tau_jet.point = s_route_b.point = rho_jet.point = pts

    h_jet = ex.jet_of(chart.h_expr, ("q1", "p1"), pts, order)
    E0 = chart.e_levels[:, None] * np.ones_like(chart.Q)
    sder = [0.5 * chart.rho_levels[:, None] ** 2 * np.ones_like(chart.Q)]
    for nu in range(1, order + 1):
        sder.append(chart.s_of_e(E0, nu))
    d = h_jet.copy()
    d.coeffs = d.coeffs.copy()
    d.coeffs[..., 0] = 0.0
    s_route_a = compose_univariate(sder, d)
    s_route_a.coeffs[..., 0] = sder[0]
    s_route_a.point = pts

    # normalize the cross-check per coefficient degree: identically-vanishing
    # classes (e.g. all harmonic third derivatives) are compared against the
    # chart's natural derivative scale s / rho^deg at each level rather than
    # against their own noise
    deg = jet_tables(2, order)["degree"]
    absmax = np.max(np.abs(s_route_a.coeffs), axis=(0, 1))
    classmax = np.array([np.max(absmax[deg == d]) for d in deg])
    nat = (np.maximum(chart.s_levels, 1e-9)[:, None]
           / chart.rho_levels[:, None] ** deg[None, :])
    scale = np.maximum(classmax[None, None, :], nat[:, None, :])
    diag = (np.abs(s_route_a.coeffs - s_route_b.coeffs) / scale)[chart.interior]
    mismatch = float(np.max(diag))
    return GridJets(tau=tau_jet, s=s_route_a, rho=rho_jet, cond=cond,
                    mismatch=mismatch)


def chart_jets(chart: AAChart, pt, order=3):
    """Inverse-map jets at one interior (tau, s) point (off-grid allowed).

    Off-grid points are served by trigonometric interpolation in tau and
    Fornberg differencing across the radial levels.
    """
    tau0 = float(pt[0]) % (2.0 * math.pi)
    s0 = float(pt[1])
    rho0 = math.sqrt(2.0 * s0)
    rl = chart.rho_levels
    if not (rl[2] <= rho0 <= rl[-3]):
        raise ChartError("point outside the chart's radial range")
    cols = []
    for a in range(order + 1):
        qa = trig_interp(spectral_derivative(chart.Q, a) if a else chart.Q,
                         [tau0])[0]
        pa = trig_interp(spectral_derivative(chart.P, a) if a else chart.P,
                         [tau0])[0]
        cols.append((qa, pa))
    t = jet_tables(2, order)
    j0 = int(np.clip(np.searchsorted(rl, rho0),
                     order + 2, len(rl) - order - 3))
    window = slice(j0 - order - 2, j0 + order + 3)
    rvals = rl[window]
    coeffs = [np.zeros(t["ncoef"]), np.zeros(t["ncoef"])]
    for i, (a, bb) in enumerate(t["idx"]):
        w = fd_weights(rvals - rho0, 0.0, bb)[bb]
        for comp in range(2):
            col = cols[a][comp][window]
            coeffs[comp][i] = (w @ col) / (math.factorial(a) * math.factorial(bb))
    q0, p0 = coeffs[0][0], coeffs[1][0]
    for c in coeffs:
        c[0] = 0.0
    fwd = MapJet([Jet(2, order, coeffs[0]), Jet(2, order, coeffs[1])])
    inv, cond = jet_invert(fwd)
    tau_jet, rho_jet = inv.comps
    tau_jet.coeffs[..., 0] = tau0
    rho_jet.coeffs[..., 0] = rho0
    s_jet = (rho_jet * rho_jet) * 0.5
    for c in (tau_jet, s_jet):
        c.point = np.array([q0, p0])
    return MapJet([tau_jet, s_jet]), cond


def maslov_index(chart: AAChart) -> int:
    return chart.maslov


def chart_fingerprint(chart: AAChart) -> str:
    """Stable hash of the chart's tables, for provenance metadata."""
    import hashlib
    h = hashlib.sha256()
    for arr in (chart.rho_levels, chart.e_levels, chart.Q, chart.P):
        h.update(np.ascontiguousarray(arr).tobytes())
    return h.hexdigest()[:16]


# ---------------------------------------------------------------------------
# separable products
# ---------------------------------------------------------------------------

@dataclass
class SeparableChart:
    """Product of two 1D charts; variables ordered (q1, q2, p1, p2)."""

    c1: AAChart
    c2: AAChart

    @property
    def n(self):
        return 2


def embed_jet(jet2: Jet, which: int, order: int) -> Jet:
    """Embed a factor jet in (q, p) into (q1, q2, p1, p2) variables."""
    t2 = jet_tables(2, min(jet2.order, order))
    t4 = jet_tables(4, order)
    j2 = jet2.truncate(min(jet2.order, order))
    coeffs = np.zeros(j2.coeffs.shape[:-1] + (t4["ncoef"],))
    for i, (a, bb) in enumerate(t2["idx"]):
        tgt = (a, 0, bb, 0) if which == 0 else (0, a, 0, bb)
        coeffs[..., t4["index_of"][tgt]] = j2.coeffs[..., i]
    return Jet(4, order, coeffs)


def product_chart(c1: AAChart, c2: AAChart) -> SeparableChart:
    return SeparableChart(c1, c2)


# ---------------------------------------------------------------------------
# dump / restore
# ---------------------------------------------------------------------------

def dump_chart(chart: AAChart, fh) -> None:
    """Text dump: '#'-metadata plus CSV blocks (levels, then Q and P rows)."""
    close = False
    if isinstance(fh, str):
        fh = open(fh, "w")
        close = True
    try:
        fh.write("# qtorus chart dump v1\n")
        fh.write(f"# hamiltonian: {ex.render(chart.h_expr)}\n")
        fh.write(f"# window: {chart.window[0]:.17g},{chart.window[1]:.17g}\n")
        fh.write(f"# maslov: {chart.maslov}\n")
        fh.write(f"# interior: {chart.interior.start},{chart.interior.stop}\n")
        fh.write(f"# n_tau: {len(chart.tau)}\n")
        fh.write("[levels]\n")
        fh.write("j,rho,E\n")
        for j, (r, E) in enumerate(zip(chart.rho_levels, chart.e_levels)):
            fh.write(f"{j},{r:.17g},{E:.17g}\n")
        for name, tbl in (("Q", chart.Q), ("P", chart.P)):
            fh.write(f"[{name}]\n")
            for row in tbl:
                fh.write(",".join(f"{x:.17g}" for x in row) + "\n")
    finally:
        if close:
            fh.close()


def load_chart(fh) -> AAChart:
    close = False
    if isinstance(fh, str):
        fh = open(fh)
        close = True
    try:
        text = fh.read()
    finally:
        if close:
            fh.close()
    meta = {}
    for line in text.splitlines():
        if line.startswith("# ") and ":" in line:
            k, v = line[2:].split(":", 1)
            meta[k.strip()] = v.strip()
    blocks = {}
    cur = None
    for line in text.splitlines():
        if line.startswith("["):
            cur = line.strip("[]\n")
            blocks[cur] = []
        elif cur and line and not line.startswith("#"):
            blocks[cur].append(line)
    lv = np.array([[float(x) for x in ln.split(",")]
                   for ln in blocks["levels"][1:]])
    Q = np.array([[float(x) for x in ln.split(",")] for ln in blocks["Q"]])
    P = np.array([[float(x) for x in ln.split(",")] for ln in blocks["P"]])
    e_min, e_max = (float(x) for x in meta["window"].split(","))
    lo, hi = (int(x) for x in meta["interior"].split(","))
    h = ex.parse(meta["hamiltonian"])
    v = split_kinetic(h)
    n_tau = int(meta["n_tau"])
    rho = lv[:, 1]
    ee = lv[:, 2]
    chart = AAChart(
        h_expr=h, v_expr=v, window=(e_min, e_max), q_center=float("nan"),
        e_bottom=float("nan"), maslov=int(meta["maslov"]),
        tau=2.0 * math.pi * np.arange(n_tau) / n_tau,
        rho_levels=rho, e_levels=ee, Q=Q, P=P, interior=slice(lo, hi),
    )
    ss = 0.5 * rho ** 2
    chart._f_spl = make_interp_spline(ss, ee, k=5)
    chart._s_spl = make_interp_spline(ee, ss, k=5)
    df = chart._f_spl.derivative(1)
    chart._f_cheb = _cheb_fit(ss, df(ss))
    chart._sE_cheb = _cheb_fit(ee, 1.0 / df(ss))
    return chart
