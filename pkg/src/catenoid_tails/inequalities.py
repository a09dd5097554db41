"""Weighted Hardy inequalities and the r^p interpolation bound.

Hardy:    (p-1)^2/4 int phi^2 r^{p-2} <= int (phi')^2 r^p + (p-1)/2 r^{p-1} phi^2 |_{r0}^{r1}
Variant:  (q-n)^2/4 int phi^2 r^{q-2} <= int (phi' + (n-1)/(2r) phi)^2 r^q + (q-n)/2 r^{q-1} phi^2 |

Both follow from completing the square with c = -(p-1)/2 (resp. -(q-n)/2), so
r^{-(p-1)/2} (resp. r^{-(q-n)/2 - (n-1)/2}) is the formal optimizer.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.integrate import quad

from ._util import d1, simpson_weights, smooth_step

_FAR = 1e12


class HardyResult(NamedTuple):
    lhs: float
    rhs: float
    passed: bool


def _simpson(y, x):
    h = x[1] - x[0]
    if not np.allclose(np.diff(x), h, rtol=1e-9, atol=0):
        raise ValueError("samples must be on a uniform grid")
    return float(simpson_weights(len(x) - 1, h) @ y)


def _sides(phi, dphi, wlhs, wrhs, r0, r1, r, breaks):
    """Integrals int phi^2 wlhs and int (dphi-combination)^2 wrhs."""
    if callable(phi):
        if dphi is None:
            raise ValueError("a callable phi needs its derivative dphi")
        opts = dict(epsabs=1e-14, epsrel=1e-12, limit=400)
        pts = None if breaks is None or np.isinf(r1) else list(breaks)
        a = quad(lambda x: phi(x) ** 2 * wlhs(x), r0, r1, points=pts, **opts)[0]
        b = quad(lambda x: dphi(x) ** 2 * wrhs(x), r0, r1, points=pts, **opts)[0]
        return a, b
    r = np.asarray(r, dtype=float)
    phi = np.asarray(phi, dtype=float)
    dp = d1(phi, r[1] - r[0]) if dphi is None else np.asarray(dphi, dtype=float)
    return _simpson(phi ** 2 * wlhs(r), r), _simpson(dp ** 2 * wrhs(r), r)


def _value(phi, r, at):
    if callable(phi):
        return float(phi(_FAR if np.isinf(at) else at))
    return float(phi[0] if at == r[0] else phi[-1])


def hardy_check(phi, p, r0, r1, *, r=None, dphi=None, variant=False, n=4, tol=1e-9, breaks=None):
    """Evaluate both sides of the Hardy inequality on [r0, r1].

    phi is either a callable (with dphi) or samples on the uniform grid r
    spanning [r0, r1].  With variant=True, p plays the role of q and the
    derivative is replaced by phi' + (n - 1)/(2r) phi.  A boundary at
    r1 = inf is evaluated at a far radius.  pass iff lhs <= rhs + tol * scale.
    """
    if variant:
        if p == n:
            raise ValueError("the variant needs q != n")
        c2 = (p - n) ** 2 / 4
        bc = (p - n) / 2
    else:
        if p == 1:
            raise ValueError("the Hardy inequality needs p != 1")
        c2 = (p - 1) ** 2 / 4
        bc = (p - 1) / 2
    if not callable(phi):
        r = np.asarray(r, dtype=float)
        if abs(r[0] - r0) > 1e-12 * max(1, abs(r0)) or abs(r[-1] - r1) > 1e-12 * max(1, abs(r1)):
            raise ValueError("sample grid must span [r0, r1]")
    if variant:
        if callable(phi):
            dv = (lambda x: dphi(x) + (n - 1) / (2 * x) * phi(x)) if dphi is not None else None
        else:
            base = d1(np.asarray(phi, float), r[1] - r[0]) if dphi is None else np.asarray(dphi, float)
            dv = base + (n - 1) / (2 * r) * np.asarray(phi, float)
    else:
        dv = dphi
    integ_l, integ_r = _sides(phi, dv, lambda x: x ** (p - 2), lambda x: x ** p, r0, r1, r, breaks)

    def bterm(at):
        x = _FAR if np.isinf(at) else at
        return bc * x ** (p - 1) * _value(phi, r, at) ** 2

    lhs = c2 * integ_l
    rhs = integ_r + bterm(r1) - bterm(r0)
    scale = max(abs(lhs), abs(integ_r), 1e-300)
    return HardyResult(float(lhs), float(rhs), bool(lhs <= rhs + tol * scale))


def optimizer_family(p, eps, variant=False, n=4):
    """phi_eps = r^c psi(eps log r): near-optimal for the Hardy inequality as eps -> 0.

    c = -(p-1)/2 (or -(q-n)/2 - (n-1)/2 for the variant); psi is a smooth bump
    on (0, 1), so phi_eps is supported in (1, e^{1/eps}) and the boundary
    terms vanish.  Returns (phi, dphi, r0, r1).
    """
    c = -(p - n) / 2 - (n - 1) / 2 if variant else -(p - 1) / 2

    def psi(t):
        return smooth_step(4 * t) * smooth_step(4 * (1 - t))

    def dpsi(t, h=1e-6):
        return (psi(t + h) - psi(t - h)) / (2 * h)

    def phi(r):
        return r ** c * psi(eps * np.log(r))

    def dphi(r):
        t = eps * np.log(r)
        return r ** (c - 1) * (c * psi(t) + eps * dpsi(t))

    return phi, dphi, 1.0, float(np.exp(1 / eps))


def optimizer_ratio(p, eps, variant=False, n=4):
    """lhs/rhs of the Hardy inequality on the optimizer family, via the log variable."""
    phi, dphi, r0, r1 = optimizer_family(p, eps, variant, n)
    # substitute r = e^{s / eps}: dr = r ds / eps
    s = np.linspace(0.0, 1.0, 4001)
    rr = np.exp(s / eps)
    jac = rr / eps
    q = p
    lhs_den = phi(rr) ** 2 * rr ** (q - 2) * jac
    if variant:
        d = dphi(rr) + (n - 1) / (2 * rr) * phi(rr)
        c2 = (q - n) ** 2 / 4
    else:
        d = dphi(rr)
        c2 = (p - 1) ** 2 / 4
    rhs_den = d ** 2 * rr ** q * jac
    return c2 * _simpson(lhs_den, s) / _simpson(rhs_den, s)


def random_bump_sum(rng, r0, r1, k=4):
    """Random smooth function compactly supported in (r0, r1), with its derivative."""
    L = r1 - r0
    c = rng.uniform(r0 + 0.2 * L, r1 - 0.2 * L, k)
    w = rng.uniform(0.05 * L, 0.18 * L, k)
    a = rng.normal(size=k)

    def phi(r):
        r = np.asarray(r, dtype=float)
        out = np.zeros_like(r)
        for ci, wi, ai in zip(c, w, a):
            s = (r - ci) / wi
            inside = np.abs(s) < 1
            out += np.where(inside, ai * np.exp(1 - 1 / np.where(inside, 1 - s * s, 1.0)), 0.0)
        return out

    def dphi(r):
        r = np.asarray(r, dtype=float)
        out = np.zeros_like(r)
        for ci, wi, ai in zip(c, w, a):
            s = (r - ci) / wi
            inside = np.abs(s) < 1
            d = np.where(inside, 1 - s * s, 1.0)
            val = np.where(inside, ai * np.exp(1 - 1 / d), 0.0)
            out += val * (-2 * s / d ** 2) / wi
        return out

    return phi, dphi


# ---------------------------------------------------------------- interpolation

@dataclass
class InterpolationReport:
    passed: bool
    D1: float
    D2: float
    exponent: float
    constant: float
    worst_ratio: float
    hypothesis_failed: str | None


def _r_integral(f, tau, weight_power, R, r_grid):
    if callable(f):
        # far-field power of the integrand: r^k with k >= -1 is not integrable
        a, b = 1e6 * max(R, 1), 1e7 * max(R, 1)
        ga, gb = (x ** weight_power * f(tau, x) ** 2 for x in (a, b))
        if ga > 0 and gb > 0 and np.log(gb / ga) / np.log(b / a) >= -1:
            return np.inf
        val, err = quad(lambda r: r ** weight_power * f(tau, r) ** 2, R, np.inf,
                        epsabs=1e-14, epsrel=1e-11, limit=400)
        return val
    r, F = r_grid
    return _simpson(r ** weight_power * F ** 2, r)


def interpolation_check(f, p, s, eps, q, R=1.0, taus=None, D1=None, D2=None, r_grid=None, slack=1e-6):
    """Check int_R^inf r^p f^2 <= C max(D1, D2) (1 + tau)^{-q + 1 - s + eps}.

    f is a callable f(tau, r) or, with r_grid = r, an array F[tau_index, r_index]
    sampled on the uniform grid r (integrals truncated to the grid).  D1, D2
    default to the smallest constants that satisfy the two hypotheses on the
    given times.  C = 2 max(R^eps, 1): one factor per piece of the split at
    r = R + tau.  A supplied D that violates a hypothesis is reported.
    """
    if not 0 < s <= 1 or not 0 < eps < s:
        raise ValueError("need s in (0, 1] and eps in (0, s)")
    if R < 1:
        raise ValueError("the explicit constant assumes R >= 1")
    taus = np.asarray(taus if taus is not None else np.geomspace(1, 1e3, 13), dtype=float)

    def integ(i, t, wp):
        if callable(f):
            return _r_integral(f, t, wp, R, None)
        return _r_integral(None, t, wp, R, (np.asarray(r_grid), np.asarray(f)[i]))

    h1 = np.array([integ(i, t, p - eps) for i, t in enumerate(taus)])
    h2 = np.array([integ(i, t, p + s - eps) for i, t in enumerate(taus)])
    c = np.array([integ(i, t, p) for i, t in enumerate(taus)])
    if not np.all(np.isfinite(h1)):
        return InterpolationReport(False, np.inf, np.inf, np.nan, np.nan, np.inf, "first hypothesis integral diverges")
    if not np.all(np.isfinite(h2)):
        return InterpolationReport(False, np.inf, np.inf, np.nan, np.nan, np.inf, "second hypothesis integral diverges")
    need1 = float(np.max(h1 * (1 + taus) ** q))
    need2 = float(np.max(h2 * (1 + taus) ** (q - 1)))
    failed = None
    if D1 is not None and need1 > D1 * (1 + slack):
        failed = "first hypothesis"
    if D2 is not None and need2 > D2 * (1 + slack):
        failed = "second hypothesis" if failed is None else "both hypotheses"
    d1 = need1 if D1 is None else D1
    d2 = need2 if D2 is None else D2
    expo = -q + 1 - s + eps
    C = 2 * max(R ** eps, 1.0)
    bound = C * max(d1, d2) * (1 + taus) ** expo
    with np.errstate(invalid="ignore", divide="ignore"):
        ratio = np.where(bound > 0, c / bound, np.where(c > 0, np.inf, 0.0))
    worst = float(np.max(ratio)) if len(ratio) else 0.0
    ok = failed is None and worst <= 1 + slack
    return InterpolationReport(bool(ok), d1, d2, expo, C, worst, failed)
