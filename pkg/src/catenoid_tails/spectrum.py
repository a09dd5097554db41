"""Mode operators of the catenoid stability operator and their spectra.

In the sector of spherical harmonics of degree l the Jacobi operator reads

    L_l u = (1/w) d_rho (wt d_rho u) + V_l u,
    w  = <rho>^{n-1} |F_rho|,   wt = <rho>^{n-1} / |F_rho|,
    V_l = -l(l+n-2) <rho>^{-2} + n(n-1) <rho>^{-2n}.

It is discretized in flux form on a strictly increasing grid with homogeneous
Dirichlet conditions at both ends.  With the lumped mass M = diag(w_i m_i)
(m_i the trapezoid weights) the stiffness matrix A is symmetric tridiagonal
and the eigenvalues of L_l are those of the pencil (A, M).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import sparse
from scipy.integrate import simpson
from scipy.linalg import eigh_tridiagonal

from ._util import smooth_step
from .geometry import metric_arrays

#: Richardson-extrapolated positive eigenvalue of L_0 for n = 4 (2000/4000 nodes).
MU2_GOLDEN = 2.138827
#: Max elliptic ratio at delta = -1 over sectors l <= 2 (seed 0, 100 trials),
#: recorded at first run; seeds 1-3 give 2.877.
ELLIPTIC_GOLDEN = 2.98
GAP_TOL = 1e-3


def default_grid(nodes: int = 2000, rho_max: float = 30.0, stretch: float = 2.0):
    """Nodes rho = c sinh(xi) with xi uniform; clusters resolution at the neck."""
    smax = np.arcsinh(rho_max / stretch)
    return stretch * np.sinh(np.linspace(-smax, smax, nodes))


def _weights(rho, n):
    F = metric_arrays(rho, n)["F_rho"]
    b = (1 + rho * rho) ** ((n - 1) / 2)
    return b * F, b / F


def sector_potential(rho, l, n):
    b2 = 1 + rho * rho
    return -l * (l + n - 2) / b2 + n * (n - 1) / b2 ** n


@dataclass
class ModeOperator:
    l: int
    n: int
    grid: np.ndarray
    w: np.ndarray
    flux: np.ndarray          # wt at cell midpoints
    potential: np.ndarray
    diag: np.ndarray          # stiffness diagonal (interior nodes)
    off: np.ndarray           # stiffness off-diagonal
    mass: np.ndarray          # lumped mass (interior nodes)

    @property
    def A(self):
        return sparse.diags([self.off, self.diag, self.off], [-1, 0, 1], format="csr")

    @property
    def M(self):
        return sparse.diags(self.mass, 0, format="csr")

    def apply(self, u):
        """L_l applied to samples u on all nodes; returns interior values."""
        u = np.asarray(u, dtype=float)
        h = np.diff(self.grid)
        fl = self.flux * np.diff(u) / h
        cell = 0.5 * (h[1:] + h[:-1])
        return np.diff(fl) / cell / self.w[1:-1] + self.potential[1:-1] * u[1:-1]


def assemble(l: int, n: int, grid, check: bool = True) -> ModeOperator:
    grid = np.asarray(grid, dtype=float)
    if np.any(np.diff(grid) <= 0):
        raise ValueError("grid must be strictly increasing")
    if check:
        if min(-grid[0], grid[-1]) < 30:
            raise ValueError("rho_max must be at least 30")
        near = np.abs(grid[:-1]) < 1
        if np.max(np.diff(grid)[near]) > 0.05:
            raise ValueError("grid does not resolve the neck (spacing > 0.05 near rho = 0)")
    w, _ = _weights(grid, n)
    mid = 0.5 * (grid[1:] + grid[:-1])
    _, wt = _weights(mid, n)
    V = sector_potential(grid, l, n)
    h = np.diff(grid)
    cell = 0.5 * (h[1:] + h[:-1])
    mass = w[1:-1] * cell
    kf = wt / h
    diag = -(kf[:-1] + kf[1:]) + mass * V[1:-1]
    off = kf[1:-1]
    return ModeOperator(l, n, grid, w, wt, V, diag, off, mass)


@dataclass
class SpectralResult:
    l: int
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    mu2: Optional[float]
    decay_rate: Optional[float] = None
    decay_fit_r2: Optional[float] = None
    grid: np.ndarray = field(default=None, repr=False)

    def to_json(self, zero_residual=None):
        return {"l": self.l, "eigenvalues": [float(x) for x in self.eigenvalues],
                "mu2": self.mu2, "zero_residual": zero_residual}


def spectrum(op: ModeOperator, k: int = 4, gap_tol: float = GAP_TOL) -> SpectralResult:
    """The k largest eigenvalues of L_l (the k lowest of -L_l), ascending.

    Eigenvectors are returned on the interior nodes, normalized so that
    x^T M x = 1 (the w-weighted L^2 norm).
    """
    q = 1.0 / np.sqrt(op.mass)
    d = op.diag * q * q
    e = op.off * q[:-1] * q[1:]
    m = len(d)
    k = min(k, m)
    try:
        vals, vecs = eigh_tridiagonal(d, e, select="i", select_range=(m - k, m - 1))
    except np.linalg.LinAlgError as exc:  # pragma: no cover - LAPACK failure
        raise RuntimeError(f"tridiagonal eigen-solve failed for l={op.l}, m={m}: {exc}")
    vecs = vecs * q[:, None]
    top = vals[-1]
    mu2 = float(top) if top > gap_tol else None
    res = SpectralResult(op.l, vals, vecs, mu2, grid=op.grid)
    if mu2 is not None:
        res.decay_rate, res.decay_fit_r2 = _decay_fit(op.grid[1:-1], vecs[:, -1], op.grid[-1])
    return res


def _decay_fit(rho, phi, rho_max):
    sel = (rho >= 5) & (rho <= rho_max / 2)
    y = np.log(np.abs(phi[sel]))
    x = rho[sel]
    slope, icpt = np.polyfit(x, y, 1)
    fit = slope * x + icpt
    r2 = 1 - np.sum((y - fit) ** 2) / np.sum((y - y.mean()) ** 2)
    return float(-slope), float(r2)


def morse_index(results, gap_tol: float = GAP_TOL) -> int:
    """Number of eigenvalues above gap_tol over all sectors in ``results``.

    ``results`` maps l to a SpectralResult; the sector l carries
    multiplicity 1 here (the count of positive directions of L per sector).
    """
    return int(sum(np.sum(r.eigenvalues > gap_tol) for r in results.values()))


def richardson(coarse: float, fine: float, order: int = 2) -> float:
    """Extrapolate a value computed at spacing h and h/2."""
    f = 2 ** order
    return (f * fine - coarse) / (f - 1)


def zero_mode_residual(n: int, grid) -> float:
    """w-weighted L^2 norm of L_1 applied to samples of <rho>^{-(n-1)}."""
    op = assemble(1, n, grid)
    u = (1 + op.grid ** 2) ** (-(n - 1) / 2)
    r = op.apply(u)
    return float(np.sqrt(np.sum(op.mass * r * r)))


# -- decaying solutions at infinity -------------------------------------------

def zero_mode_coefficients(l: int, n: int, terms: int):
    """Nonzero coefficients (m, C_m) of the decaying series sum C_m r^{-m}.

    Starts at m = n - 2 + l with C = 1 and uses
    C_{j+2(n-1)} = C_j (j-n+1)(j+n) / ((m-l-n+2)(m+l)),  m = j + 2(n-1).
    The series stops when a multiplier vanishes.
    """
    j = n - 2 + l
    c = 1.0
    out = [(j, c)]
    for _ in range(terms - 1):
        m = j + 2 * (n - 1)
        num = (j - n + 1) * (j + n)
        if num == 0:
            break
        c *= num / ((m - l - n + 2) * (m + l))
        j = m
        out.append((j, c))
    return out


def zero_mode_series(l: int, n: int, r: float, terms: int = 40, tol: float = 1e-12) -> float:
    """Evaluate the decaying solution of the sector-l equation at radius r > 1."""
    if r <= 1:
        raise ValueError("series needs r > 1")
    coeffs = zero_mode_coefficients(l, n, terms)
    total = 0.0
    last = 0.0
    for m, c in coeffs:
        last = c * r ** (-m)
        total += last
    terminated = len(coeffs) < terms
    if not terminated and abs(last) > tol * max(abs(total), 1e-300):
        raise RuntimeError(f"term budget exhausted; last term {last:.3e}")
    return total


# -- weighted Sobolev norms and the elliptic probe --------------------------

def _grr_and_derivative(rho, n):
    g = metric_arrays(rho, n)["g_rr"]
    h = 1e-5 * (1 + np.abs(rho))
    dg = (metric_arrays(rho + h, n)["g_rr"] - metric_arrays(rho - h, n)["g_rr"]) / (2 * h)
    return g, dg


def weighted_norm(u, grid, s: int, delta: float, l: int = 0, n: int = 4) -> float:
    """Squared H^{s,delta} norm of u(rho) Y_l with Y_l L^2-normalized on the sphere.

    sum_{k <= s} int <rho>^{2(delta+k)} |nabla^k (u Y_l)|^2 dVol, with the
    covariant derivatives of the induced metric and dVol = w drho.
    """
    if s not in (0, 1, 2):
        raise ValueError("s must be 0, 1 or 2")
    u = np.asarray(u, dtype=float)
    rho = np.asarray(grid, dtype=float)
    b2 = 1 + rho * rho
    w, _ = _weights(rho, n)
    lam = l * (l + n - 2)
    g, dg = _grr_and_derivative(rho, n)
    dens = b2 ** delta * u * u
    if s >= 1:
        du = np.gradient(u, rho, edge_order=2)
        dens = dens + b2 ** (delta + 1) * (du * du / g + lam * u * u / b2)
    if s >= 2:
        d2u = np.gradient(du, rho, edge_order=2)
        h_rr = d2u - 0.5 * dg / g * du
        c = rho * du / g
        radial = (h_rr / g) ** 2
        mixed = 2 * lam / (g * b2) * (du - rho * u / b2) ** 2
        ang = (u * u * (lam * lam - (n - 2) * lam) - 2 * lam * u * c + (n - 1) * c * c) / b2 ** 2
        dens = dens + b2 ** (delta + 2) * (radial + mixed + ang)
    return float(simpson(dens * w, x=rho))


def _zero_mode_vector(grid, n):
    e = (1 + grid ** 2) ** (-(n - 1) / 2)
    w, _ = _weights(grid, n)
    return e / np.sqrt(simpson(w * e * e, x=grid)), w


def elliptic_ratio(u, grid, l: int, delta: float, n: int = 4) -> float:
    """||u||_{H^{2,delta}} / (||L_l u||_{H^{0,delta+2}} + |<u, e>|) in sector l."""
    op = assemble(l, n, grid)
    Lu = np.zeros_like(op.grid)
    Lu[1:-1] = op.apply(u)
    num = np.sqrt(weighted_norm(u, grid, 2, delta, l, n))
    den = np.sqrt(weighted_norm(Lu, grid, 0, delta + 2, l, n))
    if l == 1:
        e, w = _zero_mode_vector(op.grid, n)
        den += abs(simpson(w * u * e, x=op.grid))
    return float(num / den)


def _bump_sum(grid, params):
    u = np.zeros_like(grid)
    for c, s, a in params.reshape(-1, 3):
        u += a * np.exp(-((grid - c) / s) ** 2)
    return u


def elliptic_ratio_probe(trials: int = 100, delta: float = -1.0, n: int = 4,
                         sectors=(0, 1, 2), nodes: int = 2000, seed: int = 0,
                         polish: int = 3) -> float:
    """Max elliptic ratio over random sums of Gaussian bumps.

    The ``polish`` best draws are refined by a Nelder-Mead ascent in their
    bump parameters (centers in [-8, 8], widths in [0.5, 3]), so the reported
    value estimates the supremum over the family instead of the luck of the
    draw.
    """
    from scipy.optimize import minimize

    if not (-n / 2 < delta < n / 2 - 2):
        raise ValueError(f"delta must lie in the open interval ({-n / 2}, {n / 2 - 2})")
    if trials < 50:
        raise ValueError("use at least 50 trials")
    rng = np.random.default_rng(seed)
    grid = default_grid(nodes)
    draws = []
    for _ in range(trials):
        k = rng.integers(1, 4)
        params = np.column_stack([rng.uniform(-8, 8, k), rng.uniform(0.5, 3, k),
                                  rng.normal(size=k)]).ravel()
        u = _bump_sum(grid, params)
        for l in sectors:
            draws.append((elliptic_ratio(u, grid, l, delta, n), l, params))
    draws.sort(key=lambda d: -d[0])
    worst = draws[0][0]

    def neg(p, l):
        q = p.reshape(-1, 3)
        if np.any(np.abs(q[:, 0]) > 8) or np.any((q[:, 1] < 0.5) | (q[:, 1] > 3)):
            return 0.0
        return -elliptic_ratio(_bump_sum(grid, p), grid, l, delta, n)

    for val, l, params in draws[:polish]:
        opt = minimize(neg, params, args=(l,), method="Nelder-Mead",
                       options={"maxiter": 150, "xatol": 1e-3, "fatol": 1e-4})
        worst = max(worst, -opt.fun)
    return float(worst)


# -- the d matrix ------------------------------------------------------------

def _sphere_nodes(n, m_polar=16, m_azimuth=16):
    """Hyperspherical product quadrature on S^{n-1}: points (k, n) and weights."""
    xg, wg = np.polynomial.legendre.leggauss(m_polar)
    th = 0.5 * np.pi * (xg + 1)
    wt = 0.5 * np.pi * wg
    phi = 2 * np.pi * np.arange(m_azimuth) / m_azimuth
    grids = np.meshgrid(*([th] * (n - 2) + [phi]), indexing="ij")
    wgrids = np.meshgrid(*([wt] * (n - 2) + [np.full(m_azimuth, 2 * np.pi / m_azimuth)]),
                         indexing="ij")
    ang = [g.ravel() for g in grids]
    wts = np.prod([g.ravel() for g in wgrids], axis=0)
    pts = np.empty((ang[0].size, n))
    sprod = np.ones_like(ang[0])
    for i in range(n - 1):
        pts[:, i] = sprod * np.cos(ang[i])
        if i < n - 2:
            wts = wts * np.sin(ang[i]) ** (n - 2 - i)
        sprod = sprod * np.sin(ang[i])
    pts[:, n - 1] = sprod
    return pts, wts


def _tangent_frames(theta):
    """Orthonormal frames of theta-perp via Householder reflections, shape (k, n-1, n)."""
    k, n = theta.shape
    e1 = np.zeros(n)
    e1[0] = 1.0
    sgn = np.where(theta[:, 0] > 0, -1.0, 1.0)
    v = theta + sgn[:, None] * e1  # reflection taking e1 to -sgn * theta
    v /= np.linalg.norm(v, axis=1)[:, None]
    H = np.eye(n)[None] - 2 * v[:, :, None] * v[:, None, :]
    return np.transpose(H[:, :, 1:], (0, 2, 1))


def dmatrix(ell, R_f: float, n: Optional[int] = None, rho_nodes: int = 200,
            m_polar: int = 16, m_azimuth: int = 16):
    """d_ij = int chi nu^i nu^j sqrt|h| h^{00} drho domega over the flat region.

    h is the metric induced by Psi(t, rho, omega) = (t, t ell + B F(rho, omega))
    with B = P_ell / gamma + P_ell^perp (the Lorentz-contracted catenoid),
    nu^i = Theta^i <rho>^{-(n-1)}, and chi a smooth cutoff equal to 1 for
    |rho| <= R_f/4 and 0 for |rho| >= R_f/2.
    """
    ell = np.asarray(ell, dtype=float)
    n = len(ell) if n is None else n
    if np.linalg.norm(ell) >= 0.3:
        raise ValueError("|ell| must be below 0.3")
    if R_f < 10:
        raise ValueError("R_f must be at least 10")
    from .geometry import CatenoidProfile

    prof = CatenoidProfile(n)
    el = np.append(ell, 0.0)
    sp = float(el @ el)
    gam = 1.0 / np.sqrt(1 - sp)
    P = np.outer(el, el) / sp if sp > 0 else np.zeros((n + 1, n + 1))
    B = P / gam + (np.eye(n + 1) - P)

    xg, wg = np.polynomial.legendre.leggauss(rho_nodes)
    half = R_f / 2
    rhos = half * xg
    wr = half * wg
    chi = 1 - smooth_step((np.abs(rhos) - R_f / 4) / (R_f / 4))
    theta, wa = _sphere_nodes(n, m_polar, m_azimuth)
    frames = _tangent_frames(theta)
    k = len(theta)
    D = np.zeros((n, n))
    for rho, wrho, c in zip(rhos, wr, chi):
        if c == 0:
            continue
        br = np.sqrt(1 + rho * rho)
        tang = np.empty((k, n, n + 1))  # rows: F_rho then F_a
        tang[:, 0, :n] = rho / br * theta
        tang[:, 0, n] = prof.Z_prime(rho)
        tang[:, 1:, :n] = br * frames
        tang[:, 1:, n] = 0.0
        spat = tang @ B.T  # B F_mu, shape (k, n, n+1)
        h = np.empty((k, n + 1, n + 1))
        h[:, 0, 0] = -1 + sp
        h[:, 0, 1:] = spat @ el
        h[:, 1:, 0] = h[:, 0, 1:]
        h[:, 1:, 1:] = spat @ np.transpose(spat, (0, 2, 1))
        det_full = np.linalg.det(h)
        det_spat = np.linalg.det(h[:, 1:, 1:])
        dens = det_spat / det_full * np.sqrt(np.abs(det_full))  # h^{00} sqrt|h|
        nu = theta / br ** (n - 1)
        D += c * wrho * np.einsum("k,ki,kj->ij", wa * dens, nu, nu)
    return D
