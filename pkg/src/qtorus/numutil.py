"""Shared numerical helpers: finite-difference weights, Richardson
extrapolated derivatives of callables, filtered spectral differentiation on
periodic grids, and log-log slope fits."""

from __future__ import annotations

import numpy as np


def fd_weights(nodes, x0, m):
    """Fornberg weights: w[k, j] approximates the k-th derivative at x0
    (k = 0..m) from samples at `nodes`."""
    nodes = np.asarray(nodes, dtype=float)
    n = len(nodes)
    w = np.zeros((m + 1, n))
    c1 = 1.0
    c4 = nodes[0] - x0
    w[0, 0] = 1.0
    for i in range(1, n):
        mn = min(i, m)
        c2 = 1.0
        c5 = c4
        c4 = nodes[i] - x0
        for j in range(i):
            c3 = nodes[i] - nodes[j]
            c2 *= c3
            if j == i - 1:
                for k in range(mn, 0, -1):
                    w[k, i] = c1 * (k * w[k - 1, i - 1] - c5 * w[k, i - 1]) / c2
                w[0, i] = -c1 * c5 * w[0, i - 1] / c2
            for k in range(mn, 0, -1):
                w[k, j] = ((c4 * w[k, j] - k * w[k - 1, j]) / c3)
            w[0, j] = c4 * w[0, j] / c3
        c1 = c2
    return w


def table_derivative(values, dx, k, axis=0, stencil=None):
    """k-th derivative of a uniformly sampled table along `axis`.

    Interior points use a centered stencil; points near the edge use shifted
    stencils of the same width (callers keep margins so edges are unused in
    anything accuracy-critical).
    """
    values = np.asarray(values, dtype=float)
    n = values.shape[axis]
    if stencil is None:
        stencil = k + 4 + (k + 1) % 2  # centered, >= 4th-order accurate
    stencil = min(stencil, n)
    half = stencil // 2
    values = np.moveaxis(values, axis, 0)
    out = np.empty_like(values)
    offsets = np.arange(stencil, dtype=float)
    for i in range(n):
        lo = min(max(i - half, 0), n - stencil)
        w = fd_weights((offsets + lo - i) * dx, 0.0, k)[k]
        out[i] = np.tensordot(w, values[lo:lo + stencil], axes=(0, 0))
    return np.moveaxis(out, 0, axis)


def richardson_derivative(f, x, k=1, h=None, scale=1.0, levels=3):
    """k-th derivative of a scalar callable by central differences with
    Richardson extrapolation (each halving cancels two orders in h)."""
    if h is None:
        h = scale * (1e-13) ** (1.0 / (k + 4)) * 4.0
    npts = k + 5 + (k + 1) % 2
    est = []
    for lev in range(levels):
        hh = h / 2 ** lev
        nodes = (np.arange(npts) - (npts - 1) / 2) * hh
        w = fd_weights(nodes, 0.0, k)[k]
        est.append(sum(wi * f(x + ni) for wi, ni in zip(w, nodes)))
    # centered stencils have an even leading error power; one extrapolation
    # pass between the two finest levels is enough at these accuracies
    p_lead = npts - k if (npts - k) % 2 == 0 else npts - k - 1
    out = est[-1]
    if levels >= 2:
        r = 2.0 ** p_lead
        out = (r * est[-1] - est[-2]) / (r - 1.0)
    return out


def spectral_derivative(rows, order=1, filter_rel=1e-13):
    """Differentiate 2*pi-periodic samples along the last axis via FFT.

    Fourier modes below `filter_rel` times the row maximum are zeroed to
    stop noise amplification by k^order.
    """
    rows = np.asarray(rows, dtype=float)
    n = rows.shape[-1]
    c = np.fft.rfft(rows, axis=-1)
    if filter_rel:
        mag = np.abs(c)
        thresh = filter_rel * np.max(mag, axis=-1, keepdims=True)
        c = np.where(mag > thresh, c, 0.0)
    kk = np.fft.rfftfreq(n, d=1.0 / n)  # integer wavenumbers
    c = c * (1j * kk) ** order
    return np.fft.irfft(c, n=n, axis=-1)


def periodic_antiderivative(rows):
    """Antiderivative in the angle along the last axis with zero constant;
    the mean of `rows` must be ~0 for the result to be periodic."""
    rows = np.asarray(rows, dtype=float)
    n = rows.shape[-1]
    c = np.fft.rfft(rows, axis=-1)
    kk = np.fft.rfftfreq(n, d=1.0 / n)
    with np.errstate(divide="ignore", invalid="ignore"):
        ci = np.where(kk > 0, c / (1j * np.where(kk == 0, 1.0, kk)), 0.0)
    out = np.fft.irfft(ci, n=n, axis=-1)
    return out - out[..., :1]


def trig_interp(rows, tau):
    """Evaluate the trigonometric interpolant of periodic samples at tau."""
    rows = np.asarray(rows, dtype=float)
    n = rows.shape[-1]
    c = np.fft.rfft(rows, axis=-1) / n
    tau = np.asarray(tau, dtype=float)
    kk = np.arange(c.shape[-1])
    phase = np.exp(1j * np.outer(tau, kk))
    weights = np.full(c.shape[-1], 2.0)
    weights[0] = 1.0
    if n % 2 == 0:
        weights[-1] = 1.0
    return np.real(phase * weights @ np.moveaxis(c, -1, 0))


def fit_loglog_slope(x, y):
    """Least-squares slope of log y vs log x with a 95% half-width."""
    x = np.log(np.asarray(x, dtype=float))
    y = np.log(np.asarray(y, dtype=float))
    A = np.stack([x, np.ones_like(x)], axis=1)
    coef, res, *_ = np.linalg.lstsq(A, y, rcond=None)
    slope, intercept = coef
    n = len(x)
    if n > 2:
        resid = y - A @ coef
        s2 = float(resid @ resid) / (n - 2)
        sx = float(np.sum((x - x.mean()) ** 2))
        half = 1.96 * np.sqrt(s2 / sx)
    else:
        half = np.inf
    return float(slope), float(intercept), float(half)
