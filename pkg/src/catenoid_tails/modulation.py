"""Time-smoothing operators and the scalar shooting argument.

S h(t)  = int chi(s) h(s) k(t - s) ds,   S~ h(t) = int chi(s) h(s) k~(t - s) ds,

with k >= 0 smooth, supported in [0, 1], int k = 1, k~(r) = -int_r^inf k for
r >= 0 (zero for r < 0), and chi a smooth cutoff equal to 1 on [0, inf) and 0
below -1.  Then d/dt S~h = (S - I) h for t >= 0.

The shooting toy selects b(0) for b' = mu b + g so that |b| stays below
lambda(tau) = lambda0 <tau>^{-9/4 + kappa}.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad, solve_ivp

from ._util import simpson_weights, smooth_step

KAPPA = 0.1


def bump_kernel(s):
    """Unnormalized C-infinity bump exp(-1/(s(1-s))) on (0, 1)."""
    s = np.asarray(s, dtype=float)
    inside = (s > 0) & (s < 1)
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        return np.where(inside, np.exp(-1 / np.where(inside, s * (1 - s), 1.0)), 0.0)


class Kernel:
    """Smoothing kernel k on [0, 1] and its tail integral k~.

    k~ at the quadrature nodes is tabulated once by adaptive quadrature.
    """

    def __init__(self, k=bump_kernel, panels=400, normalize=True, tol=1e-10):
        mass = quad(k, 0, 1, epsabs=1e-15, epsrel=1e-12, limit=200)[0]
        if normalize:
            scale = 1 / mass
        else:
            if abs(mass - 1) > tol:
                raise ValueError(f"kernel mass {mass} is not 1")
            scale = 1.0
        self._k = k
        self.scale = scale
        self.set_panels(panels)

    def k(self, s):
        return self.scale * self._k(s)

    def set_panels(self, panels):
        if panels % 2:
            raise ValueError("Simpson needs an even panel count")
        self.panels = panels
        self.nodes = np.linspace(0.0, 1.0, panels + 1)
        self.w = simpson_weights(panels, 1.0 / panels)
        seg = [quad(self.k, a, b, epsabs=1e-17, epsrel=1e-13)[0]
               for a, b in zip(self.nodes[:-1], self.nodes[1:])]
        tail = np.concatenate([np.cumsum(seg[::-1])[::-1], [0.0]])
        self.kt = -tail  # k~(s) = -int_s^1 k
        self.kv = self.k(self.nodes)
        # discrete normalization: S reproduces constants exactly
        self.kv = self.kv / (self.w @ self.kv)


def chi_forward(s):
    """Smooth cutoff: 0 for s <= -1, 1 for s >= 0."""
    return smooth_step(np.asarray(s, dtype=float) + 1)


def _convolve(h, t, weights_values, kernel):
    t = np.atleast_1d(np.asarray(t, dtype=float))
    if np.any(t < -1):
        raise ValueError("defined for t >= -1")
    s = t[:, None] - kernel.nodes[None, :]
    vals = np.where(s >= -1, chi_forward(s) * h(np.maximum(s, -1)), 0.0)
    return vals @ (kernel.w * weights_values)


def smooth_S(h, t, kernel=None):
    """(S h)(t) by composite Simpson in the kernel variable."""
    kernel = kernel or Kernel()
    return _convolve(h, t, kernel.kv, kernel)


def smooth_tilde_S(h, t, kernel=None):
    """(S~ h)(t) with the tail kernel k~."""
    kernel = kernel or Kernel()
    return _convolve(h, t, kernel.kt, kernel)


def identity_defect(h, t, kernel=None, dt=1e-3):
    """max |d/dt S~h - (S - I) h| over t >= 0, d/dt by a fourth-order difference."""
    kernel = kernel or Kernel()
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("the identity holds for t >= 0")
    f = lambda x: smooth_tilde_S(h, x, kernel)
    d = (f(t - 2 * dt) - 8 * f(t - dt) + 8 * f(t + dt) - f(t + 2 * dt)) / (12 * dt)
    return float(np.max(np.abs(d - (smooth_S(h, t, kernel) - h(t)))))


# ---------------------------------------------------------------- shooting

@dataclass
class ShootResult:
    """Outcome of the bisection.

    b0 and width come from the bisection.  The trapped trajectory (tau, b)
    is integrated backward from its exact value at T, the stable direction
    of the ODE; its b(0) is b0_backward.  forward_exit is the time at which
    the forward float64 solution from b0 leaves the envelope (None if it
    does not), and saturation the exit time of the upper bracket endpoint.
    """
    b0: float
    tau: np.ndarray
    b: np.ndarray
    envelope: np.ndarray
    width: float
    iterations: int
    b0_backward: float
    forward_exit: float | None
    saturation: float | None


def envelope(tau, lambda0, kappa=KAPPA):
    return lambda0 * (1 + np.asarray(tau, dtype=float) ** 2) ** ((-9 / 4 + kappa) / 2)


def _trajectory(b0, mu, g, lambda0, kappa, T, dense=False):
    """Integrate b' = mu b + g until |b| reaches the envelope or tau = T.

    Returns (exit sign, exit time or None, solution).
    """
    def exit_up(t, y):
        return y[0] - envelope(t, lambda0, kappa)

    def exit_down(t, y):
        return y[0] + envelope(t, lambda0, kappa)

    exit_up.terminal = exit_down.terminal = True
    exit_up.direction = 1
    exit_down.direction = -1
    sol = solve_ivp(lambda t, y: [mu * y[0] + g(t)], (0.0, T), [b0], method="DOP853",
                    rtol=1e-12, atol=1e-14 * lambda0, events=(exit_up, exit_down),
                    dense_output=dense, max_step=0.25)
    if sol.t_events[0].size:
        return 1, float(sol.t_events[0][0]), sol
    if sol.t_events[1].size:
        return -1, float(sol.t_events[1][0]), sol
    return 0, None, sol


def shoot(mu, g, lambda0, kappa=KAPPA, T=50.0, width_tol=2.0 ** -52, max_iter=200):
    """Bisection on b(0) in [-lambda0, lambda0] for the trapped trajectory.

    A trial exits upward (b too large) or downward; the bracket is halved
    until its width is below width_tol * lambda0, or stops early if a trial
    stays inside the envelope on all of [0, T].
    """
    if mu <= 0:
        raise ValueError("mu must be positive")
    lo, hi = -lambda0, lambda0
    s_lo = _trajectory(lo, mu, g, lambda0, kappa, T)[0]
    s_hi = _trajectory(hi, mu, g, lambda0, kappa, T)[0]
    if not (s_lo == -1 and s_hi == 1):
        raise ValueError(f"bracket endpoints do not exit through opposite signs ({s_lo}, {s_hi}); "
                         "forcing too large")
    it = 0
    while hi - lo > width_tol * lambda0 and it < max_iter:
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        sgn = _trajectory(mid, mu, g, lambda0, kappa, T)[0]
        if sgn > 0:
            hi = mid
        elif sgn < 0:
            lo = mid
        else:
            # stays inside the envelope on all of [0, T]: accept
            lo = hi = mid
        it += 1
    b0 = 0.5 * (lo + hi)
    forward_exit = _trajectory(b0, mu, g, lambda0, kappa, T)[1]
    sat = _trajectory(hi, mu, g, lambda0, kappa, T)[1]
    tau, b = trapped_trajectory(mu, g, T, lambda0)
    return ShootResult(b0, tau, b, envelope(tau, lambda0, kappa), hi - lo, it, float(b[0]),
                       forward_exit, sat)


def trapped_trajectory(mu, g, T, lambda0=1.0, samples=2001, horizon=40.0):
    """The bounded solution b(tau) = -int_tau^inf e^{mu (tau - s)} g(s) ds on [0, T].

    The value at T is computed by quadrature (truncated after horizon / mu
    e-folds), then the ODE is integrated backward, which is stable.
    """
    bT = -quad(lambda s: np.exp(mu * (T - s)) * g(s), T, T + horizon / mu,
               epsabs=1e-16 * lambda0, epsrel=1e-13, limit=400)[0]
    sol = solve_ivp(lambda t, y: [mu * y[0] + g(t)], (T, 0.0), [bT], method="DOP853",
                    rtol=1e-12, atol=1e-16 * lambda0, dense_output=True, max_step=0.25)
    tau = np.linspace(0.0, T, samples)
    return tau, sol.sol(tau)[0]


def band_audit(tau, b, mu, g, lambda0, kappa=KAPPA):
    """Check d(b^2)/dtau >= mu b^2 wherever lambda/2 < |b| < lambda.

    Returns (number of band samples, number of violations).
    """
    lam = envelope(tau, lambda0, kappa)
    band = (np.abs(b) > lam / 2) & (np.abs(b) < lam)
    db2 = 2 * b * (mu * b + g(tau))
    bad = band & (db2 < mu * b * b)
    return int(band.sum()), int(bad.sum())


def off_selection_trajectory(b0, mu, g, lambda0, kappa=KAPPA, T=50.0, samples=2001):
    """Trajectory from b0 until it leaves the envelope (or T), sampled uniformly."""
    sgn, t_exit, sol = _trajectory(b0, mu, g, lambda0, kappa, T, dense=True)
    tau = np.linspace(0.0, sol.t[-1], samples)
    return tau, sol.sol(tau)[0], t_exit
