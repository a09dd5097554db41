"""Geometry of the Riemannian catenoid in R^{n+1}.

The catenoid is the surface of revolution r = f(z) with
f'' f = (n-1)(1 + f'^2).  Parametrized by rho in R and Theta in S^{n-1} it is
F(rho, Theta) = (<rho> Theta, Z(rho)) with <rho> = sqrt(1 + rho^2), where the
height Z is the odd primitive of

    Z'(rho) = |rho| / (<rho> sqrt(<rho>^{2(n-1)} - 1)).

The quantity (1 + x)^{n-1} - 1 is evaluated as expm1((n-1) log1p(x)) so the
neck rho -> 0 is resolved without cancellation.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import mpmath
import numpy as np
from numpy.polynomial import Chebyshev
from scipy.integrate import quad


def _pm1(x, n):
    """(1 + x)^{n-1} - 1."""
    return np.expm1((n - 1) * np.log1p(x))


def _P(x, n):
    """((1 + x)^{n-1} - 1) / x, extended by its limit n - 1 at x = 0."""
    x = np.asarray(x, dtype=float)
    safe = np.where(x == 0, 1.0, x)
    return np.where(x == 0, float(n - 1), _pm1(safe, n) / safe)


def profile_derivative(r_tilde, n):
    """Q'(r) = (r^{2(n-1)} - 1)^{-1/2} for r > 1."""
    r = np.asarray(r_tilde, dtype=float)
    if np.any(r <= 1):
        raise ValueError("profile_derivative requires r_tilde > 1")
    out = 1.0 / np.sqrt(np.expm1(2 * (n - 1) * np.log(r)))
    return out if out.ndim else float(out)


def profile_second_derivative(r_tilde, n):
    """Q''(r) = -(n-1) r^{2n-3} (r^{2(n-1)} - 1)^{-3/2}."""
    r = np.asarray(r_tilde, dtype=float)
    if np.any(r <= 1):
        raise ValueError("profile_second_derivative requires r_tilde > 1")
    out = -(n - 1) * r ** (2 * n - 3) * np.expm1(2 * (n - 1) * np.log(r)) ** -1.5
    return out if out.ndim else float(out)


def profile_ode_residual(r, Q, n):
    """Residual of Q'' + (n-1)/r Q' + (n-1)/r Q'^3 at interior nodes.

    Derivatives use second-order three-point formulas valid on nonuniform
    grids.  Returns an array of length len(r) - 2.
    """
    r = np.asarray(r, dtype=float)
    Q = np.asarray(Q, dtype=float)
    if np.any(np.diff(r) <= 0):
        raise ValueError("grid must be strictly increasing")
    if r[0] <= 1:
        raise ValueError("grid must stay away from r = 1")
    hm = r[1:-1] - r[:-2]
    hp = r[2:] - r[1:-1]
    fwd = Q[2:] - Q[1:-1]
    bwd = Q[1:-1] - Q[:-2]
    den = hm * hp * (hm + hp)
    dQ = (hm ** 2 * fwd + hp ** 2 * bwd) / den
    d2Q = 2 * (hm * fwd - hp * bwd) / den
    rc = r[1:-1]
    res = d2Q + (n - 1) / rc * dQ + (n - 1) / rc * dQ ** 3
    if not np.all(np.isfinite(res)):
        raise FloatingPointError("residual blew up; grid too coarse near r = 1")
    return res


def _s_integrand(u, n):
    # substitution f = 1 + u^2 removes the (f - 1)^{-1/2} endpoint singularity
    u2 = u * u
    if u2 == 0:
        return 2.0 / np.sqrt(2.0 * (n - 1))
    return 2.0 * u / np.sqrt(np.expm1(2 * (n - 1) * np.log1p(u2)))


@lru_cache(maxsize=None)
def asymptote_S(n, method="quad", tol=1e-10):
    """S = int_1^inf df / sqrt(f^{2(n-1)} - 1), the height of the asymptotic planes.

    ``method`` is ``"quad"`` (adaptive Gauss-Kronrod) or ``"tanh-sinh"``
    (double-exponential quadrature in extended precision).
    """
    if n < 3:
        raise ValueError("S is infinite for n < 3")
    if method == "quad":
        val, err = 0.0, 0.0
        for a, b in ((0.0, 1.0), (1.0, np.inf)):
            v, e = quad(_s_integrand, a, b, args=(n,), epsabs=1e-15, epsrel=1e-13, limit=200)
            val, err = val + v, err + e
        if err > tol:
            raise RuntimeError(f"quadrature for S did not converge (error estimate {err:g})")
        return float(val)
    if method == "tanh-sinh":
        with mpmath.workdps(30):
            def f(u):
                if u == 0:
                    return 2 / mpmath.sqrt(2 * (n - 1))
                return 2 * u / mpmath.sqrt(mpmath.expm1(2 * (n - 1) * mpmath.log1p(u * u)))
            val = mpmath.quad(f, [0, 1, mpmath.inf], method="tanh-sinh")
        return float(val)
    raise ValueError(f"unknown method {method!r}")


class CatenoidProfile:
    """Profile data of the n-dimensional catenoid.

    ``Zbar(r)`` is the height as a function of the radius r >= 1 and ``Z(rho)``
    the odd height function in the rho parametrization.  Both are served from
    Chebyshev interpolants: on |rho| <= rho_split the primitive of Z' is
    interpolated directly, beyond it Z = S - T(1/<rho>) with
    T(s) = int_0^s t^{n-3} (1 - t^{2(n-1)})^{-1/2} dt.
    """

    def __init__(self, n: int = 4, rho_split: float = 2.0, degree: int = 96):
        if n < 3:
            raise ValueError("n must be at least 3")
        self.n = n
        self.S = asymptote_S(n)
        self.rho_split = rho_split
        inner = Chebyshev.interpolate(lambda x: self.Z_prime(x), degree, domain=[0, rho_split])
        self._inner = inner.integ(lbnd=0)
        s_max = 1.0 / np.sqrt(1 + rho_split ** 2)
        outer = Chebyshev.interpolate(
            lambda s: s ** (n - 3) / np.sqrt(1 - s ** (2 * (n - 1))), degree, domain=[0, s_max])
        self._tail = outer.integ(lbnd=0)

    def Z_prime(self, rho):
        x = np.asarray(rho, dtype=float) ** 2
        out = 1.0 / (np.sqrt(1 + x) * np.sqrt(_P(x, self.n)))
        return out if out.ndim else float(out)

    def Z(self, rho):
        rho = np.asarray(rho, dtype=float)
        a = np.abs(rho)
        out = np.empty_like(a)
        m = a <= self.rho_split
        out[m] = self._inner(a[m])
        s = 1.0 / np.sqrt(1 + a[~m] ** 2)
        out[~m] = self.S - self._tail(s)
        out = np.sign(rho) * out
        return out if out.ndim else float(out)

    def Zbar(self, r):
        """Height as a function of the radius r >= 1."""
        r = np.asarray(r, dtype=float)
        if np.any(r < 1):
            raise ValueError("Zbar requires r >= 1")
        return self.Z(np.sqrt(np.maximum(r * r - 1, 0.0)))


@dataclass(frozen=True)
class MetricSample:
    rho: float
    g_rr: float
    g_sphere: float
    F_rho_weight: float
    II2: float
    nu: np.ndarray


def metric_arrays(rho, n):
    """Vectorized induced-metric data.

    Returns a dict with g_rr = rho^2 <rho>^{2(n-2)} / (<rho>^{2(n-1)} - 1),
    g_sphere = <rho>^2, F_rho = sqrt(g_rr) and II2 = n(n-1) <rho>^{-2n}.
    """
    rho = np.asarray(rho, dtype=float)
    x = rho * rho
    g_rr = (1 + x) ** (n - 2) / _P(x, n)
    return {
        "rho": rho,
        "g_rr": g_rr,
        "g_sphere": 1 + x,
        "F_rho": np.sqrt(g_rr),
        "II2": n * (n - 1) / (1 + x) ** n,
    }


def unit_normal(rho, theta, n):
    """Unit normal (Theta, -f') / sqrt(1 + f'^2) at (rho, Theta)."""
    theta = np.asarray(theta, dtype=float)
    A = (1 + rho * rho) ** (n - 1)
    return np.append(theta / np.sqrt(A), -np.sign(rho) * np.sqrt(-np.expm1(-np.log(A))))


def metric_at(rho, n, theta=None):
    m = metric_arrays(rho, n)
    if theta is None:
        theta = np.eye(n)[0]
    return MetricSample(float(rho), float(m["g_rr"]), float(m["g_sphere"]),
                        float(m["F_rho"]), float(m["II2"]), unit_normal(float(rho), theta, n))


def sphere_tangent_basis(theta):
    """Orthonormal basis of the tangent space of S^{n-1} at theta."""
    theta = np.asarray(theta, dtype=float)
    q, _ = np.linalg.qr(np.column_stack([theta, np.eye(len(theta))]))
    return [q[:, j] for j in range(1, len(theta))]


def embedding(profile: CatenoidProfile, rho, theta):
    """Embedding F and its coordinate tangent vectors at (rho, theta).

    Returns (F, F_rho, [F_a]) with F_a = <rho> e_a for an orthonormal tangent
    frame e_a of the sphere.
    """
    theta = np.asarray(theta, dtype=float)
    br = np.sqrt(1 + rho * rho)
    F = np.append(br * theta, profile.Z(rho))
    F_rho = np.append(rho / br * theta, profile.Z_prime(rho))
    F_tan = [np.append(br * e, 0.0) for e in sphere_tangent_basis(theta)]
    return F, F_rho, F_tan
