"""Latent utility triples behind each observed vote.

Every observed cell carries a Gaussian triple whose coordinates have means
``(m1, 0, m3)`` with ``m1 = -alpha1*(beta - delta1)`` and
``m3 = -alpha2*(beta - delta2)``; the vote is Yes exactly when the middle
coordinate is the strict maximum.  Two samplers operate on these triples:

* :func:`scan_update` - one systematic Gibbs scan per cell (each coordinate
  drawn from its exact full conditional given the other two), the workhorse
  inside a sweep;
* :func:`exact_draw` - an independent draw of the whole triple from its joint
  conditional given only the vote, used to initialise chains and to re-impute
  an item's triples after an accepted branch move (which keeps the
  collapsed-likelihood move a valid joint proposal).
"""

from __future__ import annotations

import numpy as np
from scipy.special import log_ndtr

from .kernels import RngStream, bvn_cdf, sample_trunc_normal

__all__ = ["scan_update", "exact_draw", "check_vote_consistency"]

_SQRT2 = np.sqrt(2.0)
_GRID_POINTS = 512
_GRID_HALF_WIDTH = 9.0


def _inv_mills(z):
    """phi(z) / Phi(z), stable for very negative z."""
    z = np.asarray(z, dtype=float)
    return np.exp(-0.5 * z * z - 0.5 * np.log(2.0 * np.pi) - log_ndtr(z))


def _peak_density_mode(mk, ma, mb, iters=60):
    """Mode of f(y) ~ phi(y-mk) * Phi(y-ma) * Phi(y-mb) by Newton.

    The log-density derivative g(y) = -(y-mk) + mills(y-ma) + mills(y-mb) is
    convex and strictly decreasing with slope in (-3, -1), so Newton from the
    left of the root approaches it monotonically and cannot escape.
    """
    y = np.minimum(np.minimum(mk, ma), mb) - 2.0
    for _ in range(iters):
        za = y - ma
        zb = y - mb
        la = _inv_mills(za)
        lb = _inv_mills(zb)
        g = -(y - mk) + la + lb
        slope = -1.0 - la * (za + la) - lb * (zb + lb)
        step = g / slope
        y = y - step
        if np.max(np.abs(step)) < 1e-10:
            break
    return y


def _sample_peak_coordinate(mk, ma, mb, rng: RngStream):
    """Exact draws of the maximal coordinate: f(y) ~ phi(y-mk)Phi(y-ma)Phi(y-mb).

    Inverse-CDF on a piecewise-linear density over a mode-centred grid; the
    log-density has curvature at least one, so 9 units either side of the mode
    carries all representable mass.  Work is chunked to bound the grid buffers.
    """
    mk, ma, mb = np.broadcast_arrays(
        np.asarray(mk, dtype=float), np.asarray(ma, dtype=float), np.asarray(mb, dtype=float)
    )
    n = mk.shape[0]
    if n == 0:
        return np.empty(0)
    chunk = 16_384
    if n > chunk:
        out = np.empty(n)
        for start in range(0, n, chunk):
            sl = slice(start, min(start + chunk, n))
            out[sl] = _sample_peak_coordinate(mk[sl], ma[sl], mb[sl], rng)
        return out
    mode = _peak_density_mode(mk, ma, mb)
    offsets = np.linspace(-_GRID_HALF_WIDTH, _GRID_HALF_WIDTH, _GRID_POINTS)
    y = mode[:, None] + offsets[None, :]
    logf = (
        -0.5 * (y - mk[:, None]) ** 2
        + log_ndtr(y - ma[:, None])
        + log_ndtr(y - mb[:, None])
    )
    logf -= logf.max(axis=1, keepdims=True)
    f = np.exp(logf)

    h = offsets[1] - offsets[0]
    w = 0.5 * (f[:, :-1] + f[:, 1:]) * h  # trapezoid mass per grid cell
    cum = np.cumsum(w, axis=1)
    total = cum[:, -1]
    u = rng.gen.random(n) * total
    idx = (cum < u[:, None]).sum(axis=1)
    idx = np.minimum(idx, w.shape[1] - 1)
    prev = np.where(idx > 0, np.take_along_axis(cum, np.maximum(idx - 1, 0)[:, None], 1)[:, 0], 0.0)
    target = u - prev
    f0 = np.take_along_axis(f, idx[:, None], 1)[:, 0]
    f1 = np.take_along_axis(f, (idx + 1)[:, None], 1)[:, 0]
    slope = (f1 - f0) / (2.0 * h)
    disc = np.sqrt(np.maximum(f0 * f0 + 4.0 * slope * target, 0.0))
    t = np.where(
        np.abs(slope) > 1e-300,
        2.0 * target / np.maximum(f0 + disc, 1e-300),
        target / np.maximum(f0, 1e-300),
    )
    t = np.clip(t, 0.0, h)
    return y[np.arange(n), idx] + t


def exact_draw(yes, m1, m3, rng: RngStream):
    """Independent joint draw of each cell's triple given its vote.

    For a Yes cell the middle coordinate is maximal; a No cell first picks
    which outer coordinate is maximal (probabilities are correlation-1/2
    orthant masses), then draws that coordinate from its marginal and the
    remaining two from below it.
    """
    yes = np.asarray(yes, dtype=bool)
    m1 = np.asarray(m1, dtype=float)
    m3 = np.asarray(m3, dtype=float)
    n = yes.shape[0]
    out = np.empty((n, 3))
    zeros = np.zeros(n)

    iy = np.flatnonzero(yes)
    if iy.size:
        top = _sample_peak_coordinate(zeros[iy], m1[iy], m3[iy], rng)
        out[iy, 1] = top
        out[iy, 0] = sample_trunc_normal(m1[iy], 1.0, -np.inf, top, rng)
        out[iy, 2] = sample_trunc_normal(m3[iy], 1.0, -np.inf, top, rng)

    ino = np.flatnonzero(~yes)
    if ino.size:
        a, b = m1[ino], m3[ino]
        p1 = bvn_cdf(a / _SQRT2, (a - b) / _SQRT2, 0.5)
        p3 = bvn_cdf(b / _SQRT2, (b - a) / _SQRT2, 0.5)
        tot = p1 + p3
        safe = tot > 1e-300
        pick1 = np.where(safe, rng.gen.random(ino.size) * np.maximum(tot, 1e-300) < p1, a >= b)

        i1 = ino[pick1]
        if i1.size:
            top = _sample_peak_coordinate(m1[i1], zeros[i1], m3[i1], rng)
            out[i1, 0] = top
            out[i1, 1] = sample_trunc_normal(0.0, 1.0, -np.inf, top, rng)
            out[i1, 2] = sample_trunc_normal(m3[i1], 1.0, -np.inf, top, rng)
        i3 = ino[~pick1]
        if i3.size:
            top = _sample_peak_coordinate(m3[i3], zeros[i3], m1[i3], rng)
            out[i3, 2] = top
            out[i3, 1] = sample_trunc_normal(0.0, 1.0, -np.inf, top, rng)
            out[i3, 0] = sample_trunc_normal(m1[i3], 1.0, -np.inf, top, rng)
    return out


def scan_update(ystar, yes, m1, m3, rng: RngStream):
    """One systematic Gibbs scan over every cell's triple, in place.

    Order: middle coordinate given the outer two, then each outer coordinate
    given the middle.  Truncation regions encode the vote; a middle value tying
    an outer one (probability zero, float artifact) is treated as violated and
    the outer coordinate is re-truncated.
    """
    yes = np.asarray(yes, dtype=bool)
    n = yes.shape[0]
    if n == 0:
        return ystar
    ninf = np.full(n, -np.inf)
    pinf = np.full(n, np.inf)

    outer_max = np.maximum(ystar[:, 0], ystar[:, 2])
    lo2 = np.where(yes, outer_max, -np.inf)
    hi2 = np.where(yes, np.inf, outer_max)
    ystar[:, 1] = sample_trunc_normal(0.0, 1.0, lo2, hi2, rng)

    y2 = ystar[:, 1]
    free1 = ~yes & (ystar[:, 2] > y2)
    lo1 = np.where(yes | free1, ninf, y2)
    hi1 = np.where(yes, y2, pinf)
    ystar[:, 0] = sample_trunc_normal(m1, 1.0, lo1, hi1, rng)

    free3 = ~yes & (ystar[:, 0] > y2)
    lo3 = np.where(yes | free3, ninf, y2)
    hi3 = np.where(yes, y2, pinf)
    ystar[:, 2] = sample_trunc_normal(m3, 1.0, lo3, hi3, rng)
    return ystar


def check_vote_consistency(ystar, yes):
    """True when every triple reproduces its vote via the argmax rule."""
    outer = np.maximum(ystar[:, 0], ystar[:, 2])
    mid = ystar[:, 1]
    return bool(np.all(np.where(yes, mid > outer, mid < outer)))
