"""Boosts, the hyperboloidal foliation and the source term of a moving catenoid.

Ambient Minkowski space is R^{1+n} with coordinates X = (X^0, X'), X' in R^n
(the graph direction X^{n+1} of the catenoid plays no role here).  The
parameter curves ell(sigma), xi(sigma) are functions of the foliation
parameter sigma, related to the leaf time by tau = sigma - gamma(sigma) R_f.
Derived curves:

    eta(sigma) = xi - gamma R_f ell,    gamma = (1 - |ell|^2)^{-1/2}.

A leaf is parametrized by (r, Theta) as

    X^0 = tau + smax(gamma R_f, <r>),   X' = eta + r Theta,

where smax is a smoothed maximum that agrees with max outside a band of
width delta1.  Angles on S^{n-1} are hyperspherical (theta_1, ..., theta_{n-1}).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from ._util import smooth_step
from .geometry import profile_derivative, profile_second_derivative

# ---------------------------------------------------------------- kinematics


def lorentz_gamma(ell):
    ell = np.asarray(ell, dtype=float)
    v2 = np.sum(ell * ell, axis=-1)
    if np.any(v2 >= 1):
        raise ValueError("|ell| must be < 1")
    return 1.0 / np.sqrt(1.0 - v2)


def spatial_boost(ell):
    """A_ell = gamma P_ell + P_ell^perp acting on R^len(ell)."""
    ell = np.asarray(ell, dtype=float)
    g = lorentz_gamma(ell)
    v2 = ell @ ell
    P = np.outer(ell, ell) / v2 if v2 > 0 else np.zeros((len(ell), len(ell)))
    return g * P + (np.eye(len(ell)) - P)


def boost(ell):
    """Lorentz boost Lambda_ell on R^{1+(n+1)}, ell in R^n padded by 0.

    Block form [[gamma, -gamma ell^T], [-gamma ell, A_ell]].
    """
    ell = np.append(np.asarray(ell, dtype=float), 0.0)
    g = lorentz_gamma(ell)
    L = np.empty((len(ell) + 1, len(ell) + 1))
    L[0, 0] = g
    L[0, 1:] = -g * ell
    L[1:, 0] = -g * ell
    L[1:, 1:] = spatial_boost(ell)
    return L


# ---------------------------------------------------------------- smoothed max

_GL_X, _GL_W = np.polynomial.legendre.leggauss(40)


def _blend_quartic(x):
    ax = np.abs(x)
    return np.where(ax >= 1, ax, (-x ** 4 + 6 * x * x + 3) / 8)


def _blend_quartic_d(x):
    return np.where(np.abs(x) >= 1, np.sign(x), (-4 * x ** 3 + 12 * x) / 8)


def _blend_smooth_d(x):
    return 2 * smooth_step((np.asarray(x, dtype=float) + 1) / 2) - 1


def _blend_smooth(x):
    # mu = 1 - int_{|x|}^1 mu'(t) dt, Gauss-Legendre on [|x|, 1]
    ax = np.minimum(np.abs(np.asarray(x, dtype=float)), 1.0)
    half = (1 - ax) / 2
    t = ax[..., None] + half[..., None] * (_GL_X + 1)
    integral = half * np.sum(_GL_W * _blend_smooth_d(t), axis=-1)
    return np.where(np.abs(x) >= 1, np.abs(x), 1 - integral)


def smoothed_max(t1, t2, delta1, smooth=False):
    """(t1 + t2)/2 + (delta1/2) mu((t1 - t2)/delta1).

    mu(x) = |x| for |x| >= 1.  Inside the band the default mu is the quartic
    (-x^4 + 6x^2 + 3)/8 (C^2 match); ``smooth=True`` uses a C-infinity blend
    whose second derivative is a smooth bump.
    """
    if delta1 <= 0:
        raise ValueError("delta1 must be positive")
    t1 = np.asarray(t1, dtype=float)
    t2 = np.asarray(t2, dtype=float)
    x = (t1 - t2) / delta1
    mu = _blend_smooth(x) if smooth else _blend_quartic(x)
    out = np.where(np.abs(x) >= 1, np.maximum(t1, t2), (t1 + t2) / 2 + delta1 / 2 * mu)
    return out if out.ndim else float(out)


def smoothed_max_grad(t1, t2, delta1, smooth=False):
    """Partial derivatives (d/dt1, d/dt2) of smoothed_max."""
    x = (np.asarray(t1, dtype=float) - np.asarray(t2, dtype=float)) / delta1
    d = _blend_smooth_d(np.clip(x, -1, 1)) if smooth else _blend_quartic_d(x)
    return (1 + d) / 2, (1 - d) / 2


# ---------------------------------------------------------------- sphere


def sphere_point(angles):
    """Theta(theta) in R^n for hyperspherical angles theta in R^{n-1}."""
    ang = np.asarray(angles, dtype=float)
    n = len(ang) + 1
    out = np.empty(n)
    s = 1.0
    for k in range(n - 1):
        out[k] = s * np.cos(ang[k])
        s *= np.sin(ang[k])
    out[n - 1] = s
    return out


def sphere_frame(angles):
    """(Theta, [Theta_a], diag of the round metric g_ab)."""
    ang = np.asarray(angles, dtype=float)
    m = len(ang)
    theta = sphere_point(ang)
    tangents = []
    for a in range(m):
        d = ang.copy()
        # d/dtheta_a of cos/sin is a quarter-period shift
        d[a] += np.pi / 2
        t = sphere_point(d)
        t[:a] = 0.0
        tangents.append(t)
    gdiag = np.array([np.prod(np.sin(ang[:a]) ** 2) for a in range(m)])
    return theta, tangents, gdiag


# ---------------------------------------------------------------- chart


@dataclass
class FoliationChart:
    """Parameter curves and constants of the foliation.

    ``ell``, ``ell_dot``, ``xi``, ``xi_dot`` map sigma (scalar or array of
    shape (k,)) to arrays of shape (n,) or (k, n).
    """

    n: int
    R_f: float
    delta1: float
    ell: Callable
    ell_dot: Callable
    xi: Callable
    xi_dot: Callable
    smooth_blend: bool = False

    @classmethod
    def frozen(cls, ell, R_f=20.0, delta1=0.5, xi0=None):
        """Constant velocity ell with xi = xi0 + sigma ell."""
        ell = np.asarray(ell, dtype=float)
        xi0 = np.zeros_like(ell) if xi0 is None else np.asarray(xi0, dtype=float)
        const = lambda s: np.broadcast_to(ell, np.shape(s) + ell.shape).copy()
        zero = lambda s: np.zeros(np.shape(s) + ell.shape)
        xi = lambda s: xi0 + np.multiply.outer(np.asarray(s, dtype=float), ell)
        return cls(len(ell), R_f, delta1, const, zero, xi, const)

    @classmethod
    def tanh_profile(cls, amp, scale, direction, R_f=20.0, delta1=0.5):
        """ell = amp tanh(sigma/scale) e, xi = int_0^sigma ell."""
        e = np.asarray(direction, dtype=float)
        e = e / np.linalg.norm(e)
        ell = lambda s: np.multiply.outer(amp * np.tanh(np.asarray(s, dtype=float) / scale), e)
        ell_dot = lambda s: np.multiply.outer(
            amp / scale * (1 - np.tanh(np.asarray(s, dtype=float) / scale) ** 2), e)

        def xi(s):
            x = np.asarray(s, dtype=float) / scale
            logcosh = np.logaddexp(x, -x) - np.log(2.0)
            return np.multiply.outer(amp * scale * logcosh, e)

        return cls(len(e), R_f, delta1, ell, ell_dot, xi, ell)

    # derived curves
    def gamma(self, s):
        return lorentz_gamma(self.ell(s))

    def gamma_dot(self, s):
        l, ld = self.ell(s), self.ell_dot(s)
        return self.gamma(s) ** 3 * np.sum(l * ld, axis=-1)

    def eta(self, s):
        return self.xi(s) - (self.gamma(s) * self.R_f)[..., None] * self.ell(s)

    def eta_dot(self, s):
        g, gd = self.gamma(s), self.gamma_dot(s)
        return (self.xi_dot(s) - (gd * self.R_f)[..., None] * self.ell(s)
                - (g * self.R_f)[..., None] * self.ell_dot(s))

    def tau_of_sigma(self, s):
        return s - self.gamma(s) * self.R_f

    def dtau_dsigma(self, s):
        return 1 - self.gamma_dot(s) * self.R_f

    def sigma_of_tau(self, tau, tol=1e-12, maxiter=50):
        tau = np.asarray(tau, dtype=float)
        s = tau + self.gamma(tau + self.R_f) * self.R_f
        for _ in range(maxiter):
            step = (self.tau_of_sigma(s) - tau) / self.dtau_dsigma(s)
            s = s - step
            if np.all(np.abs(step) <= tol * np.maximum(1.0, np.abs(s))):
                break
        else:
            raise RuntimeError("sigma(tau) Newton iteration did not converge")
        return s if s.ndim else float(s)

    def eta_prime(self, tau):
        """d eta / d tau at leaf time tau."""
        s = self.sigma_of_tau(tau)
        return self.eta_dot(s) / self.dtau_dsigma(s)

    def validate(self, sigmas):
        """Check |ell| < 1/2 and d tau/d sigma in (1/2, 3/2) on samples."""
        s = np.asarray(sigmas, dtype=float)
        if np.any(np.linalg.norm(self.ell(s), axis=-1) >= 0.5):
            raise ValueError("|ell| must stay below 1/2")
        d = self.dtau_dsigma(s)
        if np.any((d <= 0.5) | (d >= 1.5)):
            raise ValueError("d tau / d sigma left (1/2, 3/2)")

    def smax(self, t1, t2):
        return smoothed_max(t1, t2, self.delta1, smooth=self.smooth_blend)


def _as_direction(theta, n):
    theta = np.asarray(theta, dtype=float)
    if theta.shape == (n,):
        return theta
    if theta.shape == (n - 1,):
        return sphere_point(theta)
    raise ValueError("theta must be n-1 angles or a unit vector in R^n")


def leaf_point(tau, r, theta, chart: FoliationChart):
    """Ambient point (X^0, X') of the leaf tau at (r, theta)."""
    s = chart.sigma_of_tau(tau)
    Theta = _as_direction(theta, chart.n)
    x0 = tau + chart.smax(chart.gamma(s) * chart.R_f, np.sqrt(1 + r * r))
    return np.concatenate([[x0], chart.eta(s) + r * Theta])


def _check_hyperboloidal(chart, s, r):
    if np.any(np.sqrt(1 + np.asarray(r) ** 2) <= chart.gamma(s) * chart.R_f + chart.delta1):
        raise ValueError("point is not in the hyperboloidal region")


# ---------------------------------------------------------------- metric blocks


@dataclass(frozen=True)
class MetricBlocks:
    """Minkowski metric in (tau, r, theta) coordinates of the hyperboloidal region.

    m = m0 + m1 exactly; m1_tilde = -m0^{-1} m1 m0^{-1} is the leading
    correction of the inverse.
    """

    m0: np.ndarray
    m0_inv: np.ndarray
    m1: np.ndarray
    m1_tilde: np.ndarray
    sqrt_det_m0: float
    eta_prime: np.ndarray


def _blocks(r, eta_p, theta, tangents, gdiag):
    n = len(theta)
    b = theta @ eta_p
    a = 1 - b
    et = np.array([t @ eta_p for t in tangents])
    m0 = np.zeros((n + 1, n + 1))
    m0[0, 0] = -(1 - eta_p @ eta_p)
    m0[0, 1] = m0[1, 0] = -a
    m0[0, 2:] = m0[2:, 0] = r * et
    m0[2:, 2:] = np.diag(r * r * gdiag)
    inv = np.zeros_like(m0)
    inv[0, 1] = inv[1, 0] = -1 / a
    inv[1, 1] = (1 + b) / a
    inv[1, 2:] = inv[2:, 1] = et / gdiag / (r * a)
    inv[2:, 2:] = np.diag(1 / (r * r * gdiag))
    br2 = 1 + r * r
    m1 = np.zeros_like(m0)
    # 1 - r/<r> = 1/(<r>(<r> + r)) without cancellation
    m1[0, 1] = m1[1, 0] = 1 / (np.sqrt(br2) * (np.sqrt(br2) + r))
    m1[1, 1] = 1 / br2
    m1t = -inv @ m1 @ inv
    sq = a * r ** (n - 1) * np.sqrt(np.prod(gdiag))
    return m0, inv, m1, m1t, sq


def metric_blocks(tau, r, angles, chart: FoliationChart) -> MetricBlocks:
    """m0, its closed-form inverse, m1 and m1_tilde at (tau, r, angles)."""
    s = chart.sigma_of_tau(tau)
    _check_hyperboloidal(chart, s, r)
    eta_p = chart.eta_prime(tau)
    theta, tangents, gdiag = sphere_frame(angles)
    if abs(theta @ eta_p) >= 0.5:
        raise ValueError("|Theta . eta'| must be below 1/2")
    m0, inv, m1, m1t, sq = _blocks(r, eta_p, theta, tangents, gdiag)
    return MetricBlocks(m0, inv, m1, m1t, sq, eta_p)


def sqrt_det_ratio_slope(tau, angles, chart, radii):
    """Log-log slope of |sqrt|m| / sqrt|m0| - 1| along a radial ray."""
    vals = []
    for r in radii:
        mb = metric_blocks(tau, r, angles, chart)
        # det(m0 + m1) / det(m0) = det(I + m0^{-1} m1)
        ratio = np.linalg.det(np.eye(len(mb.m0)) + mb.m0_inv @ mb.m1)
        vals.append(abs(np.sqrt(ratio) - 1))
    return float(np.polyfit(np.log(radii), np.log(vals), 1)[0])


# 4th-order central stencils
_D1 = (np.array([-2, -1, 1, 2]), np.array([1, -8, 8, -1]) / 12)
_D2 = (np.array([-2, -1, 0, 1, 2]), np.array([-1, 16, -30, 16, -1]) / 12)


def _grad_hess(f, x0, h):
    """Gradient and Hessian of scalar f at x0 by 4th-order central differences.

    ``f`` maps an array of points of shape (k, d) to values of shape (k,).
    """
    x0 = np.asarray(x0, dtype=float)
    d = len(x0)
    o1, c1 = _D1
    o2, c2 = _D2
    pts, tags = [], []
    for i in range(d):
        for k in o2:
            p = x0.copy()
            p[i] += k * h
            pts.append(p)
    for i in range(d):
        for j in range(i + 1, d):
            for ki in o1:
                for kj in o1:
                    p = x0.copy()
                    p[i] += ki * h
                    p[j] += kj * h
                    pts.append(p)
    vals = np.asarray(f(np.array(pts)))
    grad = np.empty(d)
    hess = np.empty((d, d))
    pos = 0
    for i in range(d):
        v = vals[pos:pos + 5]
        pos += 5
        grad[i] = (c1 @ v[[0, 1, 3, 4]]) / h
        hess[i, i] = (c2 @ v) / (h * h)
    for i in range(d):
        for j in range(i + 1, d):
            v = vals[pos:pos + 16].reshape(4, 4)
            pos += 16
            hess[i, j] = hess[j, i] = c1 @ v @ c1 / (h * h)
    return grad, hess


def box_m0_apply(U, tau, r, angles, chart, h_metric=1e-3, h_field=1e-2):
    """Box_{m0} U at (tau, r, angles) for U a function of c = (tau, r, theta).

    Box U = m0^{mu nu} d_mu d_nu U + |m0|^{-1/2} d_mu(|m0|^{1/2} m0^{mu nu}) d_nu U.
    The divergence of the metric density is taken by 4th-order finite
    differences of the closed-form blocks, the derivatives of U by the same
    stencils with step ``h_field``.
    """
    c0 = np.concatenate([[tau, r], np.asarray(angles, dtype=float)])
    d = len(c0)

    def density(c):
        mb = metric_blocks(c[0], c[1], c[2:], chart)
        return mb.sqrt_det_m0 * mb.m0_inv

    o1, c1 = _D1
    div = np.zeros(d)
    for mu in range(d):
        acc = np.zeros((d, d))
        for k, w in zip(o1, c1):
            c = c0.copy()
            c[mu] += k * h_metric
            acc += w * density(c)
        div += acc[mu] / h_metric
    mb = metric_blocks(tau, r, angles, chart)
    b = div / mb.sqrt_det_m0
    grad, hess = _grad_hess(lambda P: np.array([U(p) for p in P]), c0, h_field)
    return float(np.sum(mb.m0_inv * hess) + b @ grad)


# ---------------------------------------------------------------- source term


def sigma_of_point(X, chart: FoliationChart, sigma0=None, tol=1e-12, maxiter=60):
    """Foliation parameter sigma(X) for points X of shape (k, n+1).

    sigma is the fixed point of
    G(sigma) = X^0 + gamma R_f - smax(gamma R_f, <|X' - eta(sigma)|>),
    solved by Newton's method.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    X0, Xp = X[:, 0], X[:, 1:]
    if sigma0 is None:
        sigma0 = X0 - np.linalg.norm(Xp, axis=1) + chart.R_f
    s = np.broadcast_to(np.asarray(sigma0, dtype=float), X0.shape).copy()
    for _ in range(maxiter):
        g, gd = chart.gamma(s), chart.gamma_dot(s)
        dx = Xp - chart.eta(s)
        rr = np.sqrt(1 + np.sum(dx * dx, axis=1))
        d1, d2 = smoothed_max_grad(g * chart.R_f, rr, chart.delta1, chart.smooth_blend)
        G = X0 + g * chart.R_f - chart.smax(g * chart.R_f, rr)
        dG = gd * chart.R_f * (1 - d1) + d2 * np.sum(dx * chart.eta_dot(s), axis=1) / rr
        step = (s - G) / (1 - dG)
        s = s - step
        if np.all(np.abs(step) <= tol * np.maximum(1.0, np.abs(s))):
            return s
    raise RuntimeError("sigma(X) Newton iteration did not converge")


def contraction_probe(chart, samples=200, seed=0, r_range=(50.0, 400.0), tau_range=(-30.0, 30.0)):
    """Largest observed Lipschitz ratio of the leaf-defining map G in sigma.

    G(sigma) = X^0 + gamma R_f - smax(gamma R_f, <|X' - eta(sigma)|>) is
    evaluated at random hyperboloidal points X for pairs of nearby sigma.
    """
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(samples):
        tau = rng.uniform(*tau_range)
        r = rng.uniform(*r_range)
        v = rng.normal(size=chart.n)
        X = leaf_point(tau, r, v / np.linalg.norm(v), chart)
        s = chart.sigma_of_tau(tau)
        s1, s2 = s + rng.uniform(-2, 2, size=2)

        def G(sig):
            g = chart.gamma(sig)
            rr = np.sqrt(1 + np.sum((X[1:] - chart.eta(sig)) ** 2))
            return X[0] + g * chart.R_f - chart.smax(g * chart.R_f, rr)

        worst = max(worst, abs(G(s1) - G(s2)) / abs(s1 - s2))
    return worst


def _profile_radius(X, chart, sigma0):
    """s(X) = |y'| with y' = A_ell (X' - xi + sigma ell) - gamma ell X^0 at sigma(X)."""
    s = sigma_of_point(X, chart, sigma0)
    ell, xi, g = chart.ell(s), chart.xi(s), chart.gamma(s)
    rr = np.sqrt(1 + np.sum((X[:, 1:] - chart.eta(s)) ** 2, axis=1))
    if np.any(rr <= g * chart.R_f + chart.delta1):
        raise ValueError("finite-difference stencil leaves the hyperboloidal region")
    shifted = X[:, 1:] - xi + s[:, None] * ell
    l2 = np.sum(ell * ell, axis=1)
    par = np.sum(ell * shifted, axis=1)
    coef = np.where(l2 > 0, (g - 1) * par / np.where(l2 > 0, l2, 1.0), 0.0)
    y = shifted + coef[:, None] * ell - (g * X[:, 0])[:, None] * ell
    return np.linalg.norm(y, axis=1)


def source_F0(tau, r, theta, chart: FoliationChart, fd_step=0.25):
    """Source term F0 of the moving catenoid profile at a leaf point.

    F0 = Box Q - (1 + dQ.dQ)^{-1} d^mu Q d^nu Q d_mu d_nu Q with
    Q(X) = Q(s(X)) in the Cartesian ambient chart.  Derivatives of s are
    4th-order central differences (sigma(X) is re-solved at every stencil
    node); Q' and Q'' are analytic.
    """
    X = leaf_point(tau, r, theta, chart)
    s0 = chart.sigma_of_tau(tau)
    grad, hess = _grad_hess(lambda P: _profile_radius(P, chart, s0), X, fd_step)
    srad = _profile_radius(X[None, :], chart, s0)[0]
    n = chart.n
    q1 = profile_derivative(srad, n)
    q2 = profile_second_derivative(srad, n)
    minv = np.ones(n + 1)
    minv[0] = -1.0
    gg = np.sum(minv * grad * grad)
    trace = np.sum(minv * np.diag(hess))
    up = minv * grad
    ghg = up @ hess @ up
    box = q2 * gg + q1 * trace
    quad_term = q1 * q1 * (q2 * gg * gg + q1 * ghg)
    return float(box - quad_term / (1 + q1 * q1 * gg))


def f0_leading_coefficient(tau, theta, chart: FoliationChart):
    """Large-r limit of r^{n-1} F0 predicted by the leading-order cancellation.

    (n - 3) d_tau(gamma (1 - Theta.ell)) / ((1 - Theta.eta') w^{n-1}) with
    w = gamma (1 - Theta.ell), so that r_tilde ~ w r.
    """
    s = chart.sigma_of_tau(tau)
    Theta = _as_direction(theta, chart.n)
    ell, g = chart.ell(s), chart.gamma(s)
    w = g * (1 - Theta @ ell)
    dw = (chart.gamma_dot(s) * (1 - Theta @ ell) - g * Theta @ chart.ell_dot(s)) / chart.dtau_dsigma(s)
    a = 1 - Theta @ chart.eta_prime(tau)
    return float((chart.n - 3) * dw / (a * w ** (chart.n - 1)))


@dataclass(frozen=True)
class F0RadialFit:
    radii: np.ndarray
    values: np.ndarray
    slope: float        # least-squares slope of log|F0| against log r
    leading: float      # A in r^{n-1} F0 = A + B / r
    subleading: float   # B


def f0_radial_fit(tau, theta, chart: FoliationChart, radii, fd_step=0.25):
    """Sample F0 along a ray and fit both a power law and r^{n-1} F0 = A + B/r."""
    r = np.asarray(radii, dtype=float)
    F = np.array([source_F0(tau, x, theta, chart, fd_step) for x in r])
    slope = np.polyfit(np.log(r), np.log(np.abs(F)), 1)[0]
    A, B = np.linalg.lstsq(np.column_stack([np.ones_like(r), 1 / r]),
                           F * r ** (chart.n - 1), rcond=None)[0]
    return F0RadialFit(r, F, float(slope), float(A), float(B))
