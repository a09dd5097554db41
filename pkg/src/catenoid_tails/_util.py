"""Small shared helpers: cutoffs and quadrature weights."""
from __future__ import annotations

import numpy as np


def smooth_step(x):
    """C-infinity step: 0 for x <= 0, 1 for x >= 1."""
    x = np.clip(np.asarray(x, dtype=float), 0.0, 1.0)
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        a = np.where(x > 0, np.exp(-1.0 / np.where(x > 0, x, 1.0)), 0.0)
        b = np.where(x < 1, np.exp(-1.0 / np.where(x < 1, 1.0 - x, 1.0)), 0.0)
    return a / (a + b)


def quintic_ramp(x):
    """C^2 ramp 10x^3 - 15x^4 + 6x^5 on [0, 1], clamped outside."""
    x = np.clip(np.asarray(x, dtype=float), 0.0, 1.0)
    return x ** 3 * (10 - 15 * x + 6 * x * x)


def quintic_ramp_derivative(x):
    x = np.asarray(x, dtype=float)
    inside = (x > 0) & (x < 1)
    return np.where(inside, 30 * x * x * (1 - x) ** 2, 0.0)


def trapezoid_weights(x):
    """Weights of the composite trapezoid rule on the nodes x."""
    x = np.asarray(x, dtype=float)
    h = np.diff(x)
    w = np.zeros_like(x)
    w[:-1] += h / 2
    w[1:] += h / 2
    return w


def quintic_ramp_second(x):
    x = np.asarray(x, dtype=float)
    inside = (x > 0) & (x < 1)
    return np.where(inside, 60 * x * (1 - x) * (1 - 2 * x), 0.0)


def simpson_weights(m, h):
    """Composite Simpson weights on m + 1 nodes (3/8 rule on the first three cells if m is odd)."""
    w = np.zeros(m + 1)
    start = 0
    if m % 2:
        w[:4] += np.array([3, 9, 9, 3]) * h / 8
        start = 3
    k = m - start
    if k:
        s = np.ones(k + 1)
        s[1:-1:2] = 4
        s[2:-1:2] = 2
        w[start:] += s * h / 3
    return w


def d1(f, h):
    """Fourth-order first derivative with one-sided closures."""
    d = np.empty_like(f)
    d[2:-2] = (f[:-4] - 8 * f[1:-3] + 8 * f[3:-1] - f[4:]) / 12
    d[0] = (-25 * f[0] + 48 * f[1] - 36 * f[2] + 16 * f[3] - 3 * f[4]) / 12
    d[1] = (-3 * f[0] - 10 * f[1] + 18 * f[2] - 6 * f[3] + f[4]) / 12
    d[-1] = (25 * f[-1] - 48 * f[-2] + 36 * f[-3] - 16 * f[-4] + 3 * f[-5]) / 12
    d[-2] = (3 * f[-1] + 10 * f[-2] - 18 * f[-3] + 6 * f[-4] - f[-5]) / 12
    return d / h
