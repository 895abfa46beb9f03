"""Quantum geometry on action-angle charts: the deformed symplectic form's
coefficient tables, energy functions, quantum corrections to actions and
angles, the involution identity residual, and the second-order induction
step.

All first-order formulas below are consistent with the frozen conventions
({q, p} = 1, {s, tau} = 1): writing G = <<s, tau>> for the cross
coefficient of the deformed form and L for the hbar^2 energy coefficient,

    a   = (L - <L>)/f' + Phi(s) + a0,   Phi(s) = int_0^s <G> ds'
    phi = int_0^tau (G - da/ds) dtau'
    g   = <L> - f' (Phi + a0)

with <.> the angle average.  Angle-periodicity of phi is equivalent to
d<a>/ds = <G>, which the membrane integral realizes by construction; the
residual between the two sides, evaluated from the finished tables, is the
reported periodicity defect.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import make_interp_spline

from . import expr as ex
from . import moyal
from . import polystar as ps
from .chart import AAChart, SeparableChart, embed_jet
from .jets import Jet, MapJet, jet_compose, jet_tables
from .numutil import (periodic_antiderivative, spectral_derivative,
                      table_derivative)


class QGeomError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# kappa tables
# ---------------------------------------------------------------------------

@dataclass
class KappaTable:
    """Grid tables of the deformed-form coefficients for one chart.

    For one degree of freedom only the cross coefficient G = <<s, tau>>
    survives; its angle average and the inner (elliptic-side) integral
    carry everything the membrane needs.
    """

    chart: AAChart
    G: np.ndarray                  # (n_full, n_tau)
    mean_G: np.ndarray             # (n_full,)
    inner_rho: np.ndarray          # inner sample radii (below the grid)
    inner_mean: np.ndarray         # <G> at the inner radii
    inner_integral: float          # int_0^{rho_0} <G> rho drho
    inner_uncertainty: float

    def mean_spline(self):
        return make_interp_spline(self.chart.s_levels, self.mean_G, k=3)


def kappa0(chart: AAChart, order=3, n_inner=6) -> KappaTable:
    """Cross-coefficient table <<s, tau>>^(0) plus elliptic-side data."""
    gj = chart.grid_jets(order)
    G = moyal.dd_bracket(gj.s, gj.tau, 0).value
    mean_G = np.mean(G, axis=1)
    rho0 = chart.rho_levels[0]
    inner_rho, inner_mean = _inner_kappa_means(chart, rho0, n_inner, order)
    inner_int, inner_unc = _inner_integral(
        inner_rho, inner_mean, rho0,
        grid_rho=chart.rho_levels[:3], grid_mean=mean_G[:3])
    return KappaTable(chart, G, mean_G, inner_rho, inner_mean,
                      inner_int, inner_unc)


def _inner_kappa_means(chart: AAChart, rho0, n_inner, order, n_tau=96):
    """<G> at radii below the chart grid, from small local column stacks."""
    from .chart import _trajectories
    from .jets import jet_invert
    from .numutil import fd_weights
    b = chart._builder
    if b is None:
        return np.array([]), np.array([])
    radii = rho0 * (0.72 ** np.arange(1, n_inner + 1))
    s_floor = 0.5 * (0.6 * radii[-1]) ** 2
    means = []
    kept = []
    for r in radii:
        h = 0.22 * r
        stack = r + h * np.arange(-3, 4)
        if 0.5 * stack[0] ** 2 <= s_floor * 0.2:
            continue
        e_stack = []
        ok = True
        for rr in stack:
            sj = 0.5 * rr ** 2
            E = float(chart._f_spl(sj)) if sj >= chart._f_spl.t[0] else None
            if E is None or not np.isfinite(E):
                ok = False
                break
            for _ in range(3):
                sE, T, _ = b.action_and_period(E)
                E -= (sE - sj) / (T / (2.0 * math.pi))
            e_stack.append(E)
        if not ok:
            continue
        Q, P = _trajectories(chart.v_expr, np.asarray(e_stack), b, n_tau, 1e-13)
        t = jet_tables(2, order)
        comps = []
        for table in (Q, P):
            dtau = [table]
            for a in range(1, order + 1):
                dtau.append(spectral_derivative(table, a))
            coeffs = np.zeros((n_tau, t["ncoef"]))
            for i, (a, bb) in enumerate(t["idx"]):
                w = fd_weights(h * np.arange(-3, 4), 0.0, bb)[bb]
                col = np.tensordot(w, dtau[a], axes=(0, 0))
                coeffs[:, i] = col / (math.factorial(a) * math.factorial(bb))
            coeffs[:, 0] = 0.0
            comps.append(Jet(2, order, coeffs))
        inv, _ = jet_invert(MapJet(comps))
        tau_jet, rho_jet = inv.comps
        rho_jet.coeffs[..., 0] = r
        s_jet = (rho_jet * rho_jet) * 0.5
        Grow = moyal.dd_bracket(s_jet, tau_jet, 0).value
        means.append(float(np.mean(Grow)))
        kept.append(r)
    return np.asarray(kept[::-1]), np.asarray(means[::-1])


def _inner_integral(inner_rho, inner_mean, rho0, grid_rho=None, grid_mean=None):
    """int_0^{rho0} <G> rho drho by extrapolation toward the elliptic point.

    Empirically <G> extends continuously to rho = 0 and is even in rho, so
    it is fitted as a polynomial in x = rho^2 (on the inner samples plus
    the lowest grid levels) and the integral is (1/2) int <G> dx.  The
    uncertainty is the spread across fit variants (degree drop and
    innermost-sample drop) - the paper leaves integrability at the elliptic
    point open, so this remains a measured quantity.
    """
    if len(inner_rho) < 3:
        return 0.0, np.inf
    rr = np.concatenate([inner_rho, [] if grid_rho is None else grid_rho])
    gg = np.concatenate([inner_mean, [] if grid_mean is None else grid_mean])
    x = rr ** 2
    x0 = rho0 ** 2

    def fit_int(xx, yy, deg):
        c = np.polyfit(xx, yy, min(deg, len(xx) - 1))
        return 0.5 * float(np.polyval(np.polyint(c), x0)
                           - np.polyval(np.polyint(c), 0.0))

    full = fit_int(x, gg, 3)
    variants = [fit_int(x, gg, 2), fit_int(x[1:], gg[1:], 3)]
    unc = max(abs(full - v) for v in variants)
    return full, unc


# ---------------------------------------------------------------------------
# energy functions
# ---------------------------------------------------------------------------

@dataclass
class EnergyFunction:
    """f(s) plus the hbar^2 coefficient L on the chart grid."""

    chart: AAChart
    L: np.ndarray                  # (n_full, n_tau)
    mean_L: np.ndarray             # (n_full,)
    m_expr: object = None

    def mean_spline(self):
        return make_interp_spline(self.chart.s_levels, self.mean_L, k=3)

    def series(self):
        """H^hbar on the grid as a series in hbar^2: f(s) + hbar^2 L."""
        from .series import HSeries
        f0 = np.broadcast_to(np.asarray(self.chart.f(self.chart.s_levels))
                             [:, None], self.L.shape)
        return HSeries(np.array(f0), self.L)


def energy_function(h_expr, chart: AAChart, m_expr=None, env=None,
                    order=3, _c2=None, _c3=None) -> EnergyFunction:
    """L(tau, s) = Delta0_s H0 + M on the grid (H^hbar = f(s) + hbar^2 L).

    The Hamiltonian may be a PhaseExpr (or string) for H0, with the hbar^2
    symbol term given separately in m_expr, or an HSeries of expressions
    (H0, M)."""
    from .series import HSeries
    if isinstance(h_expr, HSeries):
        if len(h_expr) > 1 and m_expr is None:
            m_expr = h_expr[1]
        h_expr = h_expr[0]
    env = env or {}
    gj = chart.grid_jets(order)
    ss = chart.s_levels[:, None] * np.ones_like(chart.Q)
    d2 = [[np.asarray(chart.f(ss, 2))]]
    d3 = [[[np.asarray(chart.f(ss, 3))]]]
    L = moyal.diffusion0([gj.s], d2, d3, c2=_c2, c3=_c3).value
    if m_expr is not None:
        m = ex.bind(m_expr if not isinstance(m_expr, str) else ex.parse(m_expr),
                    env)
        L = L + ex.evaluate(m, {"q1": chart.Q, "p1": chart.P})
    return EnergyFunction(chart, L, np.mean(L, axis=1), m_expr)


# ---------------------------------------------------------------------------
# action and angle corrections
# ---------------------------------------------------------------------------

@dataclass
class ActionCorrection:
    chart: AAChart
    a: np.ndarray                  # (n_full, n_tau)
    phi_membrane: np.ndarray       # Phi(s) per level
    g_levels: np.ndarray           # g(s) per level
    a0: float
    inner_uncertainty: float

    def g_spline(self):
        return make_interp_spline(self.chart.s_levels, self.g_levels, k=5)

    def mean_a(self):
        return np.mean(self.a, axis=1)


def action_correction(ef: EnergyFunction, kt: KappaTable, chart: AAChart,
                      a0: float = 0.0) -> ActionCorrection:
    """First quantum correction to the action and the spectral g(s).

    a = (L - <L>)/f' + Phi + a0 with Phi the membrane integral of the
    deformed-form cross coefficient; g = <L> - f' (Phi + a0).
    """
    f1 = np.asarray(chart.f(chart.s_levels, 1))
    if np.any(f1 <= 0):
        raise QGeomError("f'(s) must stay positive on the window")
    osc = (ef.L - ef.mean_L[:, None]) / f1[:, None]
    # Phi(s_j) = inner integral + int <G> rho drho over the level grid
    # (quintic spline antiderivative; trapezoid bias would leak into g)
    rho = chart.rho_levels
    h = kt.mean_G * rho
    anti = make_interp_spline(rho, h, k=5).antiderivative()
    cum = anti(rho) - anti(rho[0])
    phi_mem = kt.inner_integral + cum
    a = osc + (phi_mem + a0)[:, None]
    g_levels = ef.mean_L - f1 * (phi_mem + a0)
    return ActionCorrection(chart, a, phi_mem, g_levels, a0,
                            kt.inner_uncertainty)


@dataclass
class AngleCorrection:
    chart: AAChart
    phi: np.ndarray                # (n_full, n_tau)
    periodicity_residual: float    # max |<G> - d<a>/ds| on the interior
    s_base: float

    def with_gauge(self, dpsi_ds):
        """Gauge-shifted copy: phi + psi'(s); spectra are unchanged."""
        shift = np.asarray(dpsi_ds(self.chart.s_levels), dtype=float)
        return AngleCorrection(self.chart, self.phi + shift[:, None],
                               self.periodicity_residual, self.s_base)


def angle_correction(ac: ActionCorrection, kt: KappaTable,
                     chart: AAChart) -> AngleCorrection:
    """phi(tau, s) = int_0^tau (G - da/ds) dtau'; the n = 1 initial
    condition of the gauge construction is identically zero (psi = 0)."""
    rho = chart.rho_levels
    da_drho = table_derivative(ac.a, chart.drho, 1, axis=0)
    da_ds = da_drho / rho[:, None]
    w = kt.G - da_ds
    # periodicity defect: the tau-mean of w should vanish identically
    resid = float(np.max(np.abs(np.mean(w, axis=1)[chart.interior])))
    phi = periodic_antiderivative(w - np.mean(w, axis=1, keepdims=True))
    s_base = float(0.5 * (chart.s_interior[0] + chart.s_interior[-1]))
    return AngleCorrection(chart, phi, resid, s_base)


# ---------------------------------------------------------------------------
# involution residual (separable 2D)
# ---------------------------------------------------------------------------

class ActionFunction2D:
    """A function F(s1, s2) with partial derivatives to total order 3,
    assembled from the factor charts' f-splines by an algebraic combiner."""

    def __init__(self, partials):
        # partials: dict (a, b) -> callable(s1, s2)
        self.partials = partials

    @classmethod
    def from_combiner(cls, c1: AAChart, c2: AAChart, mode: str):
        """mode 'sum': f1 + f2; 'product': f1 f2; 'prodsq': f1^2 f2."""
        f1 = lambda s, nu=0: np.asarray(c1.f(s, nu))
        f2 = lambda s, nu=0: np.asarray(c2.f(s, nu))
        if mode == "sum":
            def P(a, b):
                def p(s1, s2):
                    if a and b:
                        return np.zeros(np.broadcast(s1, s2).shape)
                    if b == 0:
                        return f1(s1, a) if a else f1(s1) + f2(s2)
                    return f2(s2, b)
                return p
        elif mode == "product":
            def P(a, b):
                return lambda s1, s2: f1(s1, a) * f2(s2, b)
        elif mode == "prodsq":
            # F = f1(s1)^2 f2(s2): d^a/ds1^a of f1^2 via Leibniz
            def d_f1sq(s1, a):
                out = 0.0
                for i in range(a + 1):
                    out = out + math.comb(a, i) * f1(s1, i) * f1(s1, a - i)
                return out

            def P(a, b):
                return lambda s1, s2: d_f1sq(s1, a) * f2(s2, b)
        elif mode == "prodsq2":
            # F = f1(s1) f2(s2)^2
            def d_f2sq(s2, b):
                out = 0.0
                for i in range(b + 1):
                    out = out + math.comb(b, i) * f2(s2, i) * f2(s2, b - i)
                return out

            def P(a, b):
                return lambda s1, s2: f1(s1, a) * d_f2sq(s2, b)
        else:
            raise ValueError(f"unknown combiner {mode!r}")
        return cls({(a, b): P(a, b) for a in range(5) for b in range(5)
                    if a + b <= 4})

    def jet_of_partial(self, a, b, s1_jet: Jet, s2_jet: Jet, out_order: int):
        """Jet of (d^(a+b) F / ds1^a ds2^b)(s1(q,p), s2(q,p))."""
        s1v = s1_jet.value
        s2v = s2_jet.value
        derivs = {}
        for da in range(out_order + 1):
            for db in range(out_order + 1 - da):
                if (a + da, b + db) in self.partials:
                    derivs[(da, db)] = self.partials[(a + da, b + db)](s1v, s2v)
                else:
                    derivs[(da, db)] = np.zeros(np.shape(s1v))
        return _compose_two(derivs, s1_jet.truncate(out_order),
                            s2_jet.truncate(out_order))


def _compose_two(derivs, j1: Jet, j2: Jet) -> Jet:
    """Jet of F(u(x), v(x)) from F-partials at (u0, v0) and the jets u, v."""
    order = j1.order
    d1 = j1.copy()
    d1.coeffs = d1.coeffs.copy()
    d1.coeffs[..., 0] = 0.0
    d2 = j2.copy()
    d2.coeffs = d2.coeffs.copy()
    d2.coeffs[..., 0] = 0.0
    one = Jet.constant(j1.nvars, order, np.ones(j1.coeffs.shape[:-1]), j1.point)
    pw1 = [one]
    pw2 = [one]
    for _ in range(order):
        pw1.append(pw1[-1] * d1)
        pw2.append(pw2[-1] * d2)
    out = None
    for (da, db), val in derivs.items():
        if da + db > order:
            continue
        term = pw1[da] * pw2[db] * (np.asarray(val, dtype=float)
                                    / (math.factorial(da) * math.factorial(db)))
        out = term if out is None else out + term
    return out


def involution_residual(F: ActionFunction2D, G: ActionFunction2D,
                        sep: SeparableChart, order=3, _c2=None, _c3=None,
                        n_sample=(5, 10)):
    """Max over a sampled product grid of the first-order involution
    identity: <<H1, H2>> - dH1/ds_l <<s_l, s_m>> dH2/ds_m
    + {H1, Delta_s H2} - {H2, Delta_s H1}.

    The c2/c3 overrides corrupt the diffusion coefficients for the
    negative-control mutation test.
    """
    nlev, nang = n_sample
    js = []
    for c in (sep.c1, sep.c2):
        gj = c.grid_jets(order + 1)
        lev = np.linspace(c.interior.start + 1, c.interior.stop - 2, nlev
                          ).astype(int)
        ang = np.arange(0, len(c.tau), len(c.tau) // nang)
        js.append((gj, lev, ang))
    (gj1, lev1, ang1), (gj2, lev2, ang2) = js

    def take(jet, lev, ang, which):
        sub = Jet(2, jet.order, jet.coeffs[np.ix_(lev, ang)])
        e = embed_jet(sub, which, jet.order)
        # broadcast factor batches against each other
        if which == 0:
            e.coeffs = e.coeffs[:, :, None, None, :]
        else:
            e.coeffs = e.coeffs[None, None, :, :, :]
        return e

    s1 = take(gj1.s, lev1, ang1, 0)
    t1 = take(gj1.tau, lev1, ang1, 0)
    s2 = take(gj2.s, lev2, ang2, 1)
    t2 = take(gj2.tau, lev2, ang2, 1)
    shape = np.broadcast(s1.coeffs[..., 0], s2.coeffs[..., 0]).shape
    for j in (s1, t1, s2, t2):
        j.coeffs = np.broadcast_to(j.coeffs, shape + (j.coeffs.shape[-1],)).copy()

    H1 = F.jet_of_partial(0, 0, s1, s2, order)
    H2 = G.jet_of_partial(0, 0, s1, s2, order)

    term1 = moyal.dd_bracket(H1.truncate(3), H2.truncate(3), 0).value

    kss = [[moyal.dd_bracket(a.truncate(3), bjet.truncate(3), 0).value
            for bjet in (s1, s2)] for a in (s1, s2)]
    dF = [F.jet_of_partial(1, 0, s1, s2, 0).value,
          F.jet_of_partial(0, 1, s1, s2, 0).value]
    dG = [G.jet_of_partial(1, 0, s1, s2, 0).value,
          G.jet_of_partial(0, 1, s1, s2, 0).value]
    term2 = sum(dF[l] * kss[l][m] * dG[m] for l in range(2) for m in range(2))

    def delta_jet(A: ActionFunction2D, out_order):
        # partial order in s1 = count of indices hitting the first factor
        d2 = [[A.jet_of_partial((l == 0) + (k == 0), (l == 1) + (k == 1),
                                s1, s2, out_order)
               for k in range(2)] for l in range(2)]
        d3 = [[[A.jet_of_partial((l == 0) + (k == 0) + (m == 0),
                                 (l == 1) + (k == 1) + (m == 1),
                                 s1, s2, out_order)
                for m in range(2)] for k in range(2)] for l in range(2)]
        sj = [s1.truncate(2 + out_order), s2.truncate(2 + out_order)]
        return moyal.diffusion0(sj, d2, d3, out_order=out_order,
                                c2=_c2, c3=_c3)

    term3 = moyal.poisson(H1.truncate(1), delta_jet(G, 1)).value
    term4 = moyal.poisson(H2.truncate(1), delta_jet(F, 1)).value
    resid = term1 - term2 + term3 - term4
    return float(np.max(np.abs(resid)))


def dump_tables(pipe, fh):
    """Export the deformation tables as CSV blocks (chart-dump format):
    per-level means first, then the full kappa, L, a, phi grids."""
    close = False
    if isinstance(fh, str):
        fh = open(fh, "w")
        close = True
    try:
        chart = pipe["chart"]
        fh.write("# qtorus deformation tables v1\n")
        from . import expr as ex
        fh.write(f"# hamiltonian: {ex.render(chart.h_expr)}\n")
        fh.write(f"# n_tau: {len(chart.tau)}\n")
        fh.write("[levels]\n")
        fh.write("j,s,mean_kappa,mean_L,Phi,g\n")
        kt, ef, ac = pipe["kappa"], pipe["ef"], pipe["ac"]
        for j in range(len(chart.s_levels)):
            fh.write(f"{j},{chart.s_levels[j]:.17g},{kt.mean_G[j]:.17g},"
                     f"{ef.mean_L[j]:.17g},{ac.phi_membrane[j]:.17g},"
                     f"{ac.g_levels[j]:.17g}\n")
        for name, tbl in (("kappa", kt.G), ("L", ef.L), ("a", ac.a),
                          ("phi", pipe["angle"].phi)):
            fh.write(f"[{name}]\n")
            for row in tbl:
                fh.write(",".join(f"{x:.17g}" for x in row) + "\n")
    finally:
        if close:
            fh.close()


def kappa_components_2d(sep: SeparableChart, order=3, n_lev=7, n_ang=12):
    """All deformed-form coefficient families on a sampled product grid.

    Returns (axes, tables) with tables['ss'][l][j], tables['tt'][l][j],
    tables['st'][l][j] of shape (n_lev, n_ang, n_lev, n_ang); everything is
    computed from the embedded 4-variable jets, so cross-factor components
    are numerically small rather than structurally zero.
    """
    grids = []
    jets = []
    for which, c in enumerate((sep.c1, sep.c2)):
        gj = c.grid_jets(order)
        lev = np.linspace(c.interior.start + 1, c.interior.stop - 2,
                          n_lev).astype(int)
        ang = np.arange(0, len(c.tau), max(1, len(c.tau) // n_ang))[:n_ang]
        grids.append((c.rho_levels[lev], c.tau[ang]))

        def take(jet):
            sub = Jet(2, jet.order, jet.coeffs[np.ix_(lev, ang)])
            e = embed_jet(sub, which, jet.order)
            if which == 0:
                e.coeffs = e.coeffs[:, :, None, None, :]
            else:
                e.coeffs = e.coeffs[None, None, :, :, :]
            return e

        jets.append((take(gj.s), take(gj.tau)))
    (s1, t1), (s2, t2) = jets
    shape = np.broadcast(s1.coeffs[..., 0], s2.coeffs[..., 0]).shape
    for j in (s1, t1, s2, t2):
        j.coeffs = np.broadcast_to(j.coeffs, shape + (j.coeffs.shape[-1],)).copy()
    ss = [s1, s2]
    tt = [t1, t2]
    tables = {"ss": [[None] * 2 for _ in range(2)],
              "tt": [[None] * 2 for _ in range(2)],
              "st": [[None] * 2 for _ in range(2)]}
    for l in range(2):
        for j in range(2):
            tables["ss"][l][j] = moyal.dd_bracket(ss[l], ss[j], 0).value
            tables["tt"][l][j] = moyal.dd_bracket(tt[l], tt[j], 0).value
            tables["st"][l][j] = moyal.dd_bracket(ss[l], tt[j], 0).value
    return grids, tables


def closedness_residual(sep: SeparableChart, order=3, n_lev=7, n_ang=12):
    """Max component of the discrete exterior derivative of the deformed
    form's hbar^2 part over the sampled product grid.

    Coordinates are ordered (tau1, s1, tau2, s2); the form is
    kappa = (1/2) kss_{lj} dtau^l ^ dtau^j + (1/2) ktt_{lj} ds_l ^ ds_j
            + kst_{jl} ds_l ^ dtau^j.
    """
    from .numutil import fd_weights
    grids, tables = kappa_components_2d(sep, order, n_lev, n_ang)
    (rho1, tau1), (rho2, tau2) = grids
    # coefficient matrix K[a][b] for coordinates x = (tau1, s1, tau2, s2)
    def K(a, b):
        # dtau^l ^ dtau^j block and friends, antisymmetric storage
        names = [("tau", 0), ("s", 0), ("tau", 1), ("s", 1)]
        (ka, ia), (kb, ib) = names[a], names[b]
        if ka == "tau" and kb == "tau":
            return 0.5 * (tables["ss"][ia][ib] - tables["ss"][ib][ia])
        if ka == "s" and kb == "s":
            return 0.5 * (tables["tt"][ia][ib] - tables["tt"][ib][ia])
        if ka == "s" and kb == "tau":
            return tables["st"][ia][ib]
        return -tables["st"][ib][ia]

    axes = [tau1, 0.5 * rho1 ** 2, tau2, 0.5 * rho2 ** 2]
    axis_map = {0: 1, 1: 0, 2: 3, 3: 2}  # coordinate -> table array axis

    def ddx(tbl, coord):
        ax = axis_map[coord]
        x = axes[coord]
        t = np.moveaxis(tbl, ax, 0)
        out = np.empty_like(t)
        n = len(x)
        w_len = min(5, n)
        for i in range(n):
            lo = min(max(i - w_len // 2, 0), n - w_len)
            w = fd_weights(x[lo:lo + w_len] - x[i], 0.0, 1)[1]
            out[i] = np.tensordot(w, t[lo:lo + w_len], axes=(0, 0))
        return np.moveaxis(out, 0, ax)

    worst = 0.0
    for a in range(4):
        for b in range(a + 1, 4):
            for c in range(b + 1, 4):
                comp = ddx(K(b, c), a) - ddx(K(a, c), b) + ddx(K(a, b), c)
                worst = max(worst, float(np.max(np.abs(comp))))
    return worst


# ---------------------------------------------------------------------------
# second-order induction step (k = 1)
# ---------------------------------------------------------------------------

@dataclass
class Order1Data:
    """hbar^4 coefficients from the k = 1 induction step (one degree of
    freedom, flat Weyl setting, M truncated at its leading term)."""

    chart: AAChart
    kappa1: np.ndarray             # cross coefficient, full grid
    sub_s: np.ndarray              # s-values of the sub-levels used for L1
    g1_levels: np.ndarray          # g^(1)(s) at sub-levels
    L1: np.ndarray                 # full-grid hbar^4 energy coefficient
    a1: np.ndarray                 # full-grid hbar^4 action correction
    phi1: np.ndarray               # full-grid hbar^4 angle correction
    residuals: dict
    inner_uncertainty: float

    def g1_spline(self):
        return make_interp_spline(self.sub_s, self.g1_levels,
                                  k=min(5, len(self.sub_s) - 1))


def _table_qp_jet(chart: AAChart, table, order):
    """(q, p)-jet of a grid function given by its (tau, rho) table."""
    from .jets import jet_compose
    t = jet_tables(2, order)
    nf, M = table.shape
    dtau = [table]
    for a in range(1, order + 1):
        dtau.append(spectral_derivative(table, a))
    coeffs = np.zeros((nf, M, t["ncoef"]))
    for i, (a, bb) in enumerate(t["idx"]):
        d = dtau[a]
        if bb:
            d = table_derivative(d, chart.drho, bb, axis=0)
        coeffs[..., i] = d / (math.factorial(a) * math.factorial(bb))
    trjet = Jet(2, order, coeffs)
    gj = chart.grid_jets(max(order, 3))
    tau_disp = gj.tau.truncate(order).copy()
    tau_disp.coeffs = tau_disp.coeffs.copy()
    tau_disp.coeffs[..., 0] = 0.0
    rho_disp = gj.rho.truncate(order).copy()
    rho_disp.coeffs = rho_disp.coeffs.copy()
    rho_disp.coeffs[..., 0] = 0.0
    out = jet_compose(trjet, MapJet([tau_disp, rho_disp]))
    out.point = gj.tau.point
    return out


def _grid_bracket_tau_s(chart, u, v):
    """{u, v} for grid functions in (tau, s) coordinates with {s, tau} = 1."""
    rho = chart.rho_levels[:, None]
    u_t = spectral_derivative(u, 1)
    v_t = spectral_derivative(v, 1)
    u_s = table_derivative(u, chart.drho, 1, axis=0) / rho
    v_s = table_derivative(v, chart.drho, 1, axis=0) / rho
    return u_s * v_t - u_t * v_s


def induction_step(pipe, stride=(2, 4), k_max_deriv=8):
    """Assemble the k = 1 coefficients: kappa^(1), a^(1), phi^(1), L^(1),
    g^(1), together with the order-hbar^4 consistency residuals.

    The hbar^4 balance solved for f' a1 + g1 is

        L1 = Delta1_s f + (1/8) L2(s, a) f'' + (1/16) L2(s, s)(f''' a + g'')
             + (1/24) [W-variation] f''' + (1/24) W (f'''' a + g''')
             - (1/2) f'' a^2 - g' a,

    Delta1 evaluated exactly per point by the polynomial star engine on the
    order-4 action jets, and <a1>' = <kappa1> - <{a, phi}> (the angle-
    periodicity condition at order hbar^4).
    """
    chart = pipe["chart"]
    kt = pipe["kappa"]
    ef = pipe["ef"]
    ac = pipe["ac"]
    an = pipe["angle"]
    gj5 = chart.grid_jets(5)

    # (q, p)-jets of the order-0 corrections
    a3 = _table_qp_jet(chart, ac.a, 3)
    p3 = _table_qp_jet(chart, an.phi, 3)

    kappa1 = moyal.kappa_cross(gj5.s, gj5.tau, order1=True,
                               a_jet=a3, phi_jet=p3).value

    # <a1>' = <kappa1> - <{a0, phi0}>; the margin rows carry one-sided
    # finite-difference junk in the third-derivative jets, so the membrane
    # at this order is built from interior rows with an even-in-rho
    # extrapolation across the margin band and the elliptic disc
    pb = _grid_bracket_tau_s(chart, ac.a, an.phi)
    integ = np.mean(kappa1, axis=1) - np.mean(pb, axis=1)
    rho = chart.rho_levels
    i0 = chart.interior.start
    rho_i = rho[i0:]
    integ_i = integ[i0:]
    inner1, inner1_unc = _inner_integral(rho_i[:8], integ_i[:8], rho_i[0])
    anti = make_interp_spline(rho_i, integ_i * rho_i, k=5).antiderivative()
    mean_a1 = np.zeros_like(rho)
    mean_a1[i0:] = inner1 + (anti(rho_i) - anti(rho_i[0]))
    mean_a1[:i0] = mean_a1[i0]  # margin rows: held at the boundary value

    # independently derived identity for the bracket average:
    # <{a0, phi0}> = d/ds ( <a0 kappa0> - <a0 da0/ds> )
    mean_ak = np.mean(ac.a * kt.G, axis=1)
    da_ds = table_derivative(ac.a, chart.drho, 1, axis=0) / rho[:, None]
    mean_ada = np.mean(ac.a * da_ds, axis=1)
    lhs = np.mean(pb, axis=1)
    rhs = (table_derivative(mean_ak - mean_ada, chart.drho, 1, axis=0) / rho)
    exchange_resid = float(np.max(np.abs((lhs - rhs)[chart.interior])))

    # hbar^4 energy coefficient on the full grid
    s4 = gj5.s.truncate(4)
    a2 = a3.truncate(2)
    s2 = gj5.s.truncate(2)
    ss = chart.s_levels[:, None] * np.ones_like(chart.Q)
    f2 = np.asarray(chart.f(ss, 2))
    f3 = np.asarray(chart.f(ss, 3))
    f4_levels = np.array([chart.f_high_deriv(s0, 4) for s0 in chart.s_levels])
    f4 = f4_levels[:, None] * np.ones_like(chart.Q)
    g_cheb = _cheb_for_g(chart, ac)
    g1d = _cheb_eval(g_cheb, ss, 1)
    g2d = _cheb_eval(g_cheb, ss, 2)
    g3d = _cheb_eval(g_cheb, ss, 3)
    a0 = ac.a

    lam_sa = moyal.lambda_power(s2, a2, 2).value
    lam_ss = moyal.lambda_power(s2, s2, 2).value
    w_sss = moyal.w_contraction(s2, s2, s2).value
    w_var = (moyal.w_contraction(a2, s2, s2).value
             + moyal.w_contraction(s2, a2, s2).value
             + moyal.w_contraction(s2, s2, a2).value)

    delta1, engine_resid = _delta1_table(chart, s4, stride, k_max_deriv)

    L1 = (delta1
          + 0.125 * lam_sa * f2
          + (1.0 / 16.0) * lam_ss * (f3 * a0 + g2d)
          + (1.0 / 24.0) * w_var * f3
          + (1.0 / 24.0) * w_sss * (f4 * a0 + g3d)
          - 0.5 * f2 * a0 ** 2
          - g1d * a0)

    f1 = np.asarray(chart.f(chart.s_levels, 1))
    mean_L1 = np.mean(L1, axis=1)
    g1_levels = mean_L1 - f1 * mean_a1
    a1 = (L1 - mean_L1[:, None]) / f1[:, None] + mean_a1[:, None]

    # angle correction at hbar^4 and its periodicity defect
    da1_ds = table_derivative(a1, chart.drho, 1, axis=0) / rho[:, None]
    w1 = kappa1 - pb - da1_ds
    mean_defect = float(np.max(np.abs(np.mean(w1, axis=1)[chart.interior])))
    phi1 = periodic_antiderivative(w1 - np.mean(w1, axis=1, keepdims=True))

    residuals = {
        "delta0_engine": engine_resid,
        "angle_periodicity_h4": mean_defect,
        "exchange_identity": exchange_resid,
        # a 2-form on a 2D phase space pulls back to zero on any curve;
        # the deformed-torus vanishing check is structural at n = 1
        "omega_pullback": 0.0,
    }
    sub = slice(chart.interior.start, chart.interior.stop, 1)
    return Order1Data(chart, kappa1, chart.s_levels[sub], g1_levels[sub],
                      L1, a1, phi1, residuals, inner1_unc)


def _cheb_for_g(chart, ac):
    # the g-table carries ~1e-8 numerical noise; chop the fit accordingly
    from .chart import _cheb_fit
    return _cheb_fit(chart.s_levels, ac.g_levels, rel=1e-7)


def _cheb_eval(cheb, s, nu):
    from numpy.polynomial import chebyshev as nc
    dom, coef = cheb
    c = coef
    for _ in range(nu):
        c = nc.chebder(c, 1, scl=2.0 / (dom[1] - dom[0]))
    x = 2.0 * (np.asarray(s) - dom[0]) / (dom[1] - dom[0]) - 1.0
    return nc.chebval(x, c)


def _delta1_table(chart, s4_jet, stride, k_max_deriv):
    """Delta1_s f on the full grid: exact star-engine values on a subsampled
    grid, spectrally upsampled in the angle and splined across levels.

    Every engine call also returns the hbar^2 grade, which must reproduce
    the closed-form Delta0; the max relative defect is reported."""
    nf, M = chart.Q.shape
    lev_idx = np.arange(0, nf, stride[0])
    if lev_idx[-1] != nf - 1:
        lev_idx = np.append(lev_idx, nf - 1)
    ang_idx = np.arange(0, M, stride[1])
    t = jet_tables(2, 4)
    sub_vals = np.zeros((len(lev_idx), len(ang_idx)))
    d0_defect = 0.0
    # f-derivatives: Chebyshev through order 3, quadrature Richardson above
    # (the fit's noise floor would be amplified beyond use by chebder^4+)
    fders = [np.asarray(chart.f(chart.s_levels, nu)) for nu in range(4)]
    for nu in range(4, k_max_deriv + 1):
        fders.append(np.array([chart.f_high_deriv(s0, nu)
                               for s0 in chart.s_levels[lev_idx]]))
    lev_pos = {j: li for li, j in enumerate(lev_idx)}
    lam_ss = moyal.lambda_power(s4_jet.truncate(2), s4_jet.truncate(2), 2).value
    w_sss = moyal.w_contraction(s4_jet.truncate(2), s4_jet.truncate(2),
                                s4_jet.truncate(2)).value
    for li, j in enumerate(lev_idx):
        kd = [fders[nu][j] if nu < 4 else fders[nu][lev_pos[j]]
              for nu in range(k_max_deriv + 1)]
        for ai, m in enumerate(ang_idx):
            coeffs = s4_jet.coeffs[j, m]
            c = np.zeros((5, 5))
            for i, (aa, bb) in enumerate(t["idx"]):
                c[aa, bb] = coeffs[i]
            c[0, 0] = 0.0
            out = ps.star_function_coefficients(ps.Poly(c), kd, kmax=4)
            sub_vals[li, ai] = -out.get(4, 0.0).real
            d0_closed = (moyal.DIFFUSION_C2 * lam_ss[j, m] * kd[2]
                         + moyal.DIFFUSION_C3 * w_sss[j, m] * kd[3])
            d0_engine = -out.get(2, 0.0).real
            scale = max(abs(d0_closed), 1e-12)
            d0_defect = max(d0_defect, abs(d0_engine - d0_closed) / scale)
    # spectral upsample in the angle, spline across levels
    up = _spectral_upsample(sub_vals, M)
    spl = make_interp_spline(chart.rho_levels[lev_idx], up, k=3, axis=0)
    return np.asarray(spl(chart.rho_levels)), d0_defect


def _spectral_upsample(rows, m_out):
    n = rows.shape[-1]
    c = np.fft.rfft(rows, axis=-1)
    out = np.zeros(rows.shape[:-1] + (m_out // 2 + 1,), dtype=complex)
    out[..., : c.shape[-1]] = c
    if n % 2 == 0 and c.shape[-1] <= out.shape[-1]:
        out[..., c.shape[-1] - 1] *= 1.0  # Nyquist handled by zero padding
    return np.fft.irfft(out, n=m_out, axis=-1) * (m_out / n)
