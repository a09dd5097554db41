"""Characteristic evolution of the r^{3/2}-conjugated radial wave equation.

Each spherical mode of the flat n = 4 model obeys

    -2 d_tau d_r u + d_r^2 u - W r^{-2} u = f~,   W = 3/4 + l(l + 2),

with u = r^{3/2} U and tau the outgoing null (Bondi) time.  Writing v = d_tau u,
the equation is an ODE in r for v, integrated outward from the inner radius
with v(R_min) = 0.  u is then advanced in tau with RK4.  The radial coordinate
is optionally compactified, x = r / (R_s + r), which puts null infinity at
x = 1; no outer boundary condition is needed there because the incoming
characteristic speed vanishes.

Energies use the cutoff chi_R (quintic ramp on [R, 2R]).  On the compactified
grid their integrands carry integrable endpoint weights (1 - x)^beta, which
are integrated with a product rule on the last cells.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.integrate import quad

from ._util import d1, quintic_ramp, quintic_ramp_derivative, quintic_ramp_second, simpson_weights

N_DIM = 4
P_RANGE_U = (0.0, 2.0)
P_RANGE_Y = (0.0, 1.5)
ALPHA = 0.05


# ---------------------------------------------------------------- config

@dataclass(frozen=True)
class Bump:
    """C-infinity bump amp * exp(1 - 1/(1 - s^2)), s = (r - center)/width."""
    center: float = 2.0
    width: float = 1.0
    amp: float = 1.0

    def __call__(self, r):
        s = (np.asarray(r, dtype=float) - self.center) / self.width
        inside = np.abs(s) < 1
        with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
            val = np.where(inside, np.exp(1 - 1 / np.where(inside, 1 - s * s, 1.0)), 0.0)
        return self.amp * val

    def derivative(self, r):
        r = np.asarray(r, dtype=float)
        s = (r - self.center) / self.width
        inside = np.abs(s) < 1
        d = np.where(inside, 1 - s * s, 1.0)
        return np.where(inside, self(r) * (-2 * s / d ** 2) / self.width, 0.0)

    def second_derivative(self, r):
        r = np.asarray(r, dtype=float)
        s = (r - self.center) / self.width
        inside = np.abs(s) < 1
        d = np.where(inside, 1 - s * s, 1.0)
        g1 = -2 * s / d ** 2
        g2 = (-2 / d ** 2 - 8 * s * s / d ** 3)
        return np.where(inside, self(r) * (g1 * g1 + g2) / self.width ** 2, 0.0)

    @property
    def support(self):
        return self.center - self.width, self.center + self.width


@dataclass(frozen=True)
class Source:
    """Prescribed source f(tau, r).

    kind "none": f = 0.  kind "power": f = amp <tau>^{-q} r^{-s} chi_R(r).
    kind "separable": the conjugated source f~ = time(tau) * radial(r) is
    given directly (used for manufactured solutions).
    """
    kind: str = "none"
    amp: float = 0.0
    q: float = 2.25
    s: float = 4.0
    time: object = None
    radial: object = None

    def time_factor(self, tau):
        if self.kind == "power":
            return self.amp * (1 + tau * tau) ** (-self.q / 2)
        if self.kind == "separable":
            return self.time(tau)
        return 0.0


@dataclass(frozen=True)
class EvolutionConfig:
    l: int = 0
    n: int = N_DIM
    r_min: float = 0.1
    r_max: float = np.inf
    nodes: int = 2001
    dtau: float | None = None
    cfl: float = 0.5
    tmax: float = 10.0
    compactify: bool = True
    R: float = 10.0
    R_s: float | None = None
    bump: Bump = Bump()
    source: Source = Source()
    observers: tuple = (2.0,)
    p_list: tuple = ()
    margin: float = 0.2
    potential: bool = True
    perturbed_b: float = 0.0
    record_every: int = 1
    alpha: float = ALPHA

    def validate(self):
        if self.n != N_DIM:
            raise ValueError("only n = 4 is supported")
        if self.compactify and np.isfinite(self.r_max):
            raise ValueError("compactified runs extend to null infinity; leave r_max = inf")
        if not self.compactify and not np.isfinite(self.r_max):
            raise ValueError("uncompactified runs need a finite r_max")
        lo, hi = self.bump.support
        if self.bump.amp != 0:
            if lo < self.r_min + self.margin:
                raise ValueError(f"bump support starts at {lo}, inside r_min + margin")
            if np.isfinite(self.r_max) and hi > 0.3 * self.r_max:
                raise ValueError(f"bump support ends at {hi}, beyond 0.3 r_max")
        if self.R < self.r_min + self.margin:
            raise ValueError("cutoff radius R must lie beyond r_min + margin")
        if abs(self.perturbed_b) >= 0.5:
            raise ValueError("perturbed_b must be small")
        if self.dtau is not None and self.dtau > self.max_dtau() * (1 + 1e-12):
            raise ValueError(f"dtau = {self.dtau} exceeds the CFL limit {self.max_dtau()}")

    @property
    def Rs(self):
        return self.R if self.R_s is None else self.R_s

    def min_spacing(self):
        """Smallest node spacing in r."""
        g = build_grid(self)
        return float(np.min(np.diff(g.r[np.isfinite(g.r)])))

    def max_dtau(self):
        # transport speed 1/2 in r; the constraint adds a W / R_min rate
        W = 0.75 + self.l * (self.l + 2)
        return min(2 * self.min_spacing(), 4 * self.r_min / W)

    def time_step(self):
        return self.dtau if self.dtau is not None else self.cfl * self.max_dtau()


# ---------------------------------------------------------------- stencils

def d2(f, h):
    """Fourth-order second derivative with one-sided closures."""
    d = np.empty_like(f)
    d[2:-2] = (-f[:-4] + 16 * f[1:-3] - 30 * f[2:-2] + 16 * f[3:-1] - f[4:]) / 12
    c0 = np.array([45, -154, 214, -156, 61, -10]) / 12
    c1 = np.array([10, -15, -4, 14, -6, 1]) / 12
    d[0] = c0 @ f[:6]
    d[1] = c1 @ f[:6]
    d[-1] = c0 @ f[-1:-7:-1]
    d[-2] = c1 @ f[-1:-7:-1]
    return d / (h * h)


def cumulative_quad4(f, h):
    """Fourth-order cumulative integral of nodal values f from the first node."""
    c = np.empty_like(f)
    seg = np.empty(len(f) - 1)
    seg[1:-1] = (-f[:-3] + 13 * f[1:-2] + 13 * f[2:-1] - f[3:]) / 24
    seg[0] = (9 * f[0] + 19 * f[1] - 5 * f[2] + f[3]) / 24
    seg[-1] = (9 * f[-1] + 19 * f[-2] - 5 * f[-3] + f[-4]) / 24
    c[0] = 0.0
    np.cumsum(seg * h, out=c[1:])
    return c


def _product_panel_weights(beta, m, starts):
    """Weights of int_j^{j+m} t^beta g(t) dt for g the degree-m interpolant at j..j+m.

    One row per panel start j (integer distance from t = 0).  The j = 0 moments
    are exact; for j >= 1 t^beta is analytic on the panel and Gauss-Legendre
    moments are exact to roundoff.
    """
    if beta <= -1:
        raise ValueError("endpoint weight not integrable")
    nodes = np.arange(m + 1.0)
    # Lagrange basis as monomial coefficients in s = t - j
    coef = np.linalg.inv(np.vander(nodes, m + 1, increasing=True))
    gs, gw = np.polynomial.legendre.leggauss(40)
    gs = 0.5 * m * (gs + 1)
    gw = 0.5 * m * gw
    starts = np.asarray(starts, dtype=float)
    mom = np.empty((len(starts), m + 1))
    far = starts > 0
    vals = (starts[far, None] + gs[None, :]) ** beta * gw
    mom[far] = vals @ (gs[:, None] ** np.arange(m + 1))
    if np.any(~far):
        mom[~far] = [m ** (beta + k + 1) / (beta + k + 1) for k in range(m + 1)]
    return mom @ coef


# ---------------------------------------------------------------- grid

@dataclass(frozen=True, eq=False)
class Grid:
    z: np.ndarray
    h: float
    r: np.ndarray
    compact: bool
    Rs: float
    inv_rz: np.ndarray
    pot_w: np.ndarray

    def quad_weights(self, beta):
        """Weights for int g(z) (1 - z)^beta dz (beta = 0 off the compact grid)."""
        return _quad_weights(self, float(beta))

    def integrate(self, fac):
        s, b = fac
        s = np.broadcast_to(s, self.z.shape)
        if not self.compact or b == 0.0:
            return float(self.quad_weights(0.0) @ s)
        if b <= -1:
            # only integrable if the smooth part vanishes near null infinity
            if np.any(s[-4:]):
                raise ValueError(f"integrand ~ (1 - x)^{b} is not integrable")
            with np.errstate(divide="ignore", invalid="ignore"):
                vals = np.where(s != 0, s * (1 - self.z) ** b, 0.0)
            return float(self.quad_weights(0.0) @ vals)
        return float(self.quad_weights(b) @ s)

    # factors (smooth part, power of (1 - x)) for the compactified chart
    def rpow(self, a):
        if self.compact:
            with np.errstate(divide="ignore"):
                return (self.Rs ** a * self.z ** a, -a)
        return (self.r ** a, 0.0)

    def rz(self):
        if self.compact:
            return (np.full_like(self.z, self.Rs), -2.0)
        return (np.ones_like(self.z), 0.0)


def _mul(*facs):
    s = 1.0
    b = 0.0
    for f in facs:
        if isinstance(f, tuple):
            s = s * f[0]
            b += f[1]
        else:
            s = s * f
    return (s, b)


_WCACHE: dict = {}


def _quad_weights(grid, beta):
    """Composite Simpson, with (1 - z)^beta folded into every panel on the compact grid.

    Product integration keeps fourth order for weakly singular weights, where
    plain Simpson on the pointwise values degrades to O(h^{1 + beta}).  An odd
    cell count uses a 3/8 panel at the inner end.
    """
    m = len(grid.z) - 1
    key = (m, grid.h, float(grid.z[0]), grid.compact, beta)
    if key in _WCACHE:
        return _WCACHE[key]
    h = grid.h
    if not grid.compact or beta == 0.0:
        w = simpson_weights(m, h)
    else:
        w = np.zeros(m + 1)
        # panels counted from null infinity: node m - j sits at t = j h
        n2 = m // 2 if m % 2 == 0 else (m - 3) // 2
        starts = 2 * np.arange(n2)
        pw = _product_panel_weights(beta, 2, starts)
        for k in range(3):
            np.add.at(w, m - (starts + k), pw[:, k])
        if m % 2:
            pw3 = _product_panel_weights(beta, 3, [m - 3])[0]
            for k in range(4):
                w[3 - k] += pw3[k]
        w *= h ** (beta + 1)
    _WCACHE[key] = w
    return w


@lru_cache(maxsize=32)
def build_grid(config):
    N = config.nodes
    if N < 12:
        raise ValueError("need at least 12 nodes")
    Rs = config.Rs
    if config.compactify:
        x0 = config.r_min / (Rs + config.r_min)
        z = np.linspace(x0, 1.0, N)
        with np.errstate(divide="ignore"):
            r = Rs * z / (1 - z)
        r[-1] = np.inf
        inv_rz = (1 - z) ** 2 / Rs
        pot_w = 1 / (Rs * z * z)
    else:
        z = np.linspace(config.r_min, config.r_max, N)
        r = z.copy()
        inv_rz = np.ones_like(z)
        pot_w = 1 / (r * r)
    return Grid(z=z, h=float(z[1] - z[0]), r=r, compact=config.compactify, Rs=Rs,
                inv_rz=inv_rz, pot_w=pot_w)


def _radial_source_integral(config, grid):
    """G(r) = int_{R_min}^r f~(., r') dr' / time factor, by adaptive quadrature."""
    src = config.source
    if src.kind == "none":
        return np.zeros_like(grid.z)
    R = config.R
    if src.kind == "power":
        s = src.s

        def g(r):
            return r ** (1.5 - s) * quintic_ramp((r - R) / R)
        brk = [R, 2 * R]
    elif src.kind == "separable":
        g = src.radial
        brk = []
    else:
        raise ValueError(f"unknown source kind {src.kind!r}")
    r = grid.r
    seg = np.zeros(len(r))
    for i in range(1, len(r)):
        a, b = r[i - 1], r[i]
        pts = [p for p in brk if a < p < b] or None
        if np.isinf(b):
            seg[i] = quad(g, a, np.inf, epsabs=1e-14, epsrel=1e-12, limit=200)[0]
        else:
            seg[i] = quad(g, a, b, points=pts, epsabs=1e-15, epsrel=1e-13, limit=200)[0]
    return np.cumsum(seg)


# ---------------------------------------------------------------- state

@dataclass
class ModeState:
    tau: float
    u_tilde: np.ndarray
    v: np.ndarray
    Y: np.ndarray


class _Operator:
    """Right-hand side v = d_tau u of the constraint form, with cached arrays."""

    def __init__(self, config):
        config.validate()
        self.config = config
        self.grid = build_grid(config)
        b = config.perturbed_b
        L = config.l * (config.l + 2)
        self.c2 = 1 + b
        self.W = ((1 + b) * 0.75 + (1 - b) * L) if config.potential else 0.0
        self.a_src = 1 - b
        self.G = _radial_source_integral(config, self.grid)

    def rhs(self, tau, u):
        g = self.grid
        dru = g.inv_rz * d1(u, g.h)
        v = 0.5 * self.c2 * (dru - dru[0])
        if self.W:
            v -= 0.5 * self.W * cumulative_quad4(g.pot_w * u, g.h)
        if self.config.source.kind != "none":
            v -= 0.5 * self.a_src * self.config.source.time_factor(tau) * self.G
        return v

    def derived(self, tau, u):
        g = self.grid
        v = self.rhs(tau, u)
        return ModeState(tau, u, v, y_field(g, u))


_OPS: dict = {}


def _operator(config):
    op = _OPS.get(config)
    if op is None:
        op = _OPS[config] = _Operator(config)
    return op


def y_field(grid, u):
    """Y = r^{3/2} d_r u on the grid (finite at null infinity)."""
    Du = d1(u, grid.h)
    if grid.compact:
        return np.sqrt(grid.Rs) * grid.z ** 1.5 * np.sqrt(1 - grid.z) * Du
    return grid.r ** 1.5 * Du


def init(config):
    op = _operator(config)
    g = op.grid
    r = np.where(np.isfinite(g.r), g.r, 0.0)
    u = r ** 1.5 * config.bump(r)
    return op.derived(0.0, u)


def step(state, config, dtau=None):
    """One RK4 step of size dtau (default: the configured time step)."""
    op = _operator(config)
    k = config.time_step() if dtau is None else dtau
    t, u = state.tau, state.u_tilde
    k1 = op.rhs(t, u)
    k2 = op.rhs(t + k / 2, u + k / 2 * k1)
    k3 = op.rhs(t + k / 2, u + k / 2 * k2)
    k4 = op.rhs(t + k, u + k * k3)
    un = u + k / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    return op.derived(t + k, un)


# ---------------------------------------------------------------- energies

def _chi_factors(grid, R):
    r = grid.r
    with np.errstate(invalid="ignore"):
        x = np.where(np.isfinite(r), (r - R) / R, 2.0)
    return quintic_ramp(x), quintic_ramp_derivative(x) / R, quintic_ramp_second(x) / R ** 2


def _field_factors(grid, u):
    Du = d1(u, grid.h)
    D2u = d2(u, grid.h)
    if grid.compact:
        x, Rs = grid.z, grid.Rs
        dru = (Du / Rs, 2.0)
        Y = (np.sqrt(Rs) * x ** 1.5 * Du, 0.5)
        dY = (x ** 0.5 * ((1.5 - 2 * x) * Du + x * (1 - x) * D2u) / np.sqrt(Rs), 1.5)
    else:
        r = grid.r
        dru = (Du, 0.0)
        Y = (r ** 1.5 * Du, 0.0)
        dY = (1.5 * r ** 0.5 * Du + r ** 1.5 * D2u, 0.0)
    return dru, Y, dY


def energies(state, p_list, R, config, cutoff="quintic"):
    """Energy densities of one slice.

    Returns a dict keyed by p with the slice energies E (of u), EY_intro and
    EY_three (of Y), the bulk integrands B_intro, B_three, BY, and the cutoff
    and source terms that enter the multiplier identities.  cutoff = "none"
    sets chi = 1 on the whole grid.
    """
    op = _operator(config)
    g = op.grid
    u = state.u_tilde
    L = config.l * (config.l + 2)
    W = 0.75 + L
    chi, dchi, ddchi = _chi_factors(g, R)
    if cutoff == "none":
        chi = np.ones_like(chi)
        dchi = ddchi = np.zeros_like(chi)
    dru, Y, dY = _field_factors(g, u)
    rz = g.rz()
    uf = (u, 0.0)
    I = g.integrate
    src = config.source
    out = {}
    for p in p_list:
        rp = g.rpow(p)
        e_u = I(_mul(chi, rp, dru, dru, rz))
        bu1 = I(_mul(chi, g.rpow(p - 1), dru, dru, rz))
        bu0 = I(_mul(chi, g.rpow(p - 3), uf, uf, rz))
        d = {
            "E": e_u,
            "B_grad": bu1,
            "B_zero": bu0,
            "B_intro": 0.5 * (p * bu1 + (2 - p) * W * bu0),
            "B_three": bu1 + (1 + L) * bu0,
            "cut_grad": I(_mul(dchi, rp, dru, dru, rz)),
            "cut_zero": I(_mul(dchi, g.rpow(p - 2), uf, uf, rz)),
        }
        y2 = I(_mul(chi, rp, dY, dY, rz))
        yz = I(_mul(chi, g.rpow(p - 2), Y, Y, rz))
        d["EY_intro"] = _coercive(g, chi, p, Y, dY, rz)
        d["EY_three"] = y2 + yz + L * I(_mul(chi, g.rpow(p - 4), Y, Y, rz))
        y1 = I(_mul(chi, g.rpow(p - 1), dY, dY, rz))
        y0 = I(_mul(chi, g.rpow(p - 3), Y, Y, rz))
        d["BY"] = (p + 3) / 2 * y1 + ((3 - p) / 2 * L + p * (2 - p) / 4) * y0
        eY = I(_mul(dchi, rp, dY, dY, rz)) + (3 - 2 * p) / 4 * I(_mul(dchi, g.rpow(p - 2), Y, Y, rz))
        gY = (L + (2 * p + 1) / 4) * I(_mul(dchi, g.rpow(p - 2), Y, Y, rz))
        d["cutY_e"] = eY
        d["cutY_g"] = gY
        d["cutY_h2"] = I(_mul(ddchi, g.rpow(p - 1), Y, Y, rz))
        d["cutY_h1"] = I(_mul(dchi, g.rpow(p - 1), Y, Y, rz))
        if src.kind == "power":
            A = src.time_factor(state.tau)
            s = src.s
            chs, dchs, _ = _chi_factors(g, config.R)
            f = _mul(A, chs, g.rpow(1.5 - s))
            d["src"] = I(_mul(chi, rp, dru, f, rz))
            # f1 = (K + 2 r^{1/2}) f~
            f1a = _mul(A * (3.5 - s), chs, g.rpow(2 - s))
            f1b = _mul(A, dchs, g.rpow(3 - s))
            d["srcY"] = sum(0.5 * I(_mul(chi, g.rpow(p - 1), ff, Y, rz)) + I(_mul(chi, rp, ff, dY, rz))
                            for ff in (f1a, f1b))
        else:
            d["src"] = 0.0
            d["srcY"] = 0.0
        out[p] = d
    return out


def _coercive(g, chi, p, Y, dY, rz):
    """Intro form int chi (r^p (d_r Y)^2 + (3 - 2p)/4 r^{p-2} Y^2), summed pointwise."""
    a = _mul(chi, g.rpow(p), dY, dY, rz)
    b = _mul(chi, g.rpow(p - 2), Y, Y, rz)
    # both pieces carry the same endpoint power
    return g.integrate((a[0] + (3 - 2 * p) / 4 * b[0], a[1]))


def local_energy(state, config, alpha=None):
    """Diagnostic int r^{-1-alpha} (d_tau u)^2 dr over the whole grid."""
    g = _operator(config).grid
    a = config.alpha if alpha is None else alpha
    v = (state.v, 0.0)
    return g.integrate(_mul(g.rpow(-1 - a), v, v, g.rz()))


def y_energy_forms(r, Y, p, l=0):
    """Both Y-energies of a profile sampled on a uniform r grid (chi = 1).

    Returns (intro two-term form, three-term form).  Simpson quadrature,
    fourth-order differences.
    """
    r = np.asarray(r, dtype=float)
    h = r[1] - r[0]
    dY = d1(Y, h)
    w = simpson_weights(len(r) - 1, h)
    intro = w @ (r ** p * dY ** 2 + (3 - 2 * p) / 4 * r ** (p - 2) * Y ** 2)
    L = l * (l + 2)
    three = w @ (r ** p * (dY ** 2 + r ** -2 * Y ** 2 + L * r ** -4 * Y ** 2))
    return float(intro), float(three)


# ---------------------------------------------------------------- runs

@dataclass
class EnergyLedger:
    tau: np.ndarray
    p_list: tuple
    series: dict
    local: np.ndarray
    W: float = 0.75

    def cumulative(self, p, key):
        """Time integral of a slice quantity from the first sample.

        Fourth order on uniformly spaced samples, trapezoid otherwise.
        """
        y = self.series[p][key]
        dt = np.diff(self.tau)
        if len(y) >= 4 and np.allclose(dt, dt[0], rtol=1e-9, atol=0):
            return cumulative_quad4(y, dt[0])
        out = np.zeros_like(y)
        out[1:] = np.cumsum(0.5 * (y[1:] + y[:-1]) * np.diff(self.tau))
        return out


@dataclass
class RunOutput:
    config: EvolutionConfig
    tau: np.ndarray
    observers: np.ndarray
    U: np.ndarray           # U = r^{-3/2} u at the observers, shape (len(tau), n_obs)
    ledger: EnergyLedger | None
    final: ModeState
    steps: int = 0


def _observer_weights(grid, observers):
    rows = []
    for ro in observers:
        zo = ro / (grid.Rs + ro) if grid.compact else ro
        i = int(np.clip(np.searchsorted(grid.z, zo) - 2, 0, len(grid.z) - 4))
        zs = grid.z[i:i + 4]
        w = np.array([np.prod([(zo - zs[k]) / (zs[j] - zs[k]) for k in range(4) if k != j])
                      for j in range(4)])
        rows.append((i, w * ro ** -1.5))
    return rows


def run(config, record_times=None, progress=None):
    """Evolve to config.tmax.

    U at the observers is stored at every step (or at the nearest steps to
    record_times if given).  Energies for config.p_list are stored every
    config.record_every steps.
    """
    op = _operator(config)
    g = op.grid
    dt = config.time_step()
    nsteps = int(np.ceil(config.tmax / dt - 1e-9))
    dt = config.tmax / nsteps
    state = init(config)
    obs = _observer_weights(g, config.observers)
    if record_times is None:
        keep = np.ones(nsteps + 1, dtype=bool)
    else:
        keep = np.zeros(nsteps + 1, dtype=bool)
        idx = np.clip(np.round(np.asarray(record_times) / dt).astype(int), 0, nsteps)
        keep[idx] = True
    taus, Us = [], []
    etaus, eser, loc = [], {p: {} for p in config.p_list}, []
    scale = max(np.max(np.abs(state.u_tilde)),
                abs(config.source.time_factor(0.0)) * np.max(np.abs(op.G)), 1e-300)

    def record(k, st):
        if keep[k]:
            taus.append(st.tau)
            Us.append([w @ st.u_tilde[i:i + 4] for i, w in obs])
        if config.p_list and k % config.record_every == 0:
            etaus.append(st.tau)
            e = energies(st, config.p_list, config.R, config)
            for p, d in e.items():
                for key, val in d.items():
                    eser[p].setdefault(key, []).append(val)
            loc.append(local_energy(st, config))

    record(0, state)
    for k in range(1, nsteps + 1):
        state = step(state, config, dt)
        if not np.isfinite(state.u_tilde[k % 7]) or (k % 500 == 0 and
                                                     np.max(np.abs(state.u_tilde)) > 1e8 * scale):
            raise FloatingPointError(
                f"growth monitor tripped at tau = {state.tau:.4g} (step {k}, dtau = {dt:.3g}); "
                "reduce cfl or dtau")
        record(k, state)
        if progress and k % 10000 == 0:
            progress(k, nsteps)
    if not np.all(np.isfinite(state.u_tilde)):
        raise FloatingPointError("non-finite field at the end of the run")
    ledger = None
    if config.p_list:
        ledger = EnergyLedger(np.array(etaus), tuple(config.p_list),
                              {p: {k: np.array(v) for k, v in d.items()} for p, d in eser.items()},
                              np.array(loc), 0.75 + config.l * (config.l + 2))
    return RunOutput(config, np.array(taus), np.array(config.observers, dtype=float),
                     np.array(Us), ledger, state, nsteps)


# ---------------------------------------------------------------- hierarchy

# Calibration constants per (form, p), measured on calibration_config() and
# frozen: "C" is the largest LHS / E^p(t1) over default_windows, "C_full" the
# largest LHS / RHS with the source and cutoff terms on the right.
HIERARCHY_GOLDEN = {
    ("u", 0.5): {"C": 1.0766666187939293, "C_full": 0.9992179624289139},
    ("u", 1.0): {"C": 1.0541876390080402, "C_full": 0.9993967715140598},
    ("u", 1.5): {"C": 1.033521627734444, "C_full": 0.9995387929781849},
    ("u", 1.9): {"C": 1.0195825472206586, "C_full": 0.9996305995639876},
    ("Y", 0.5): {"C": 0.9994156335707705, "C_full": 0.9993806813579685},
    ("Y", 1.0): {"C": 0.9997808448722555, "C_full": 0.9997549667485018},
    ("Y", 1.4): {"C": 1.0000269921088791, "C_full": 1.0000066818377502},
}


def calibration_config(nodes=1601, p_list=(0.0, 0.5, 1.0, 1.4, 1.5, 1.9, 1.95)):
    """Free evolution used to fix the hierarchy constants."""
    return EvolutionConfig(l=0, r_min=0.5, nodes=nodes, R=2.0, tmax=32.0,
                           bump=Bump(center=6.0, width=1.5, amp=1.0),
                           observers=(3.0,), p_list=tuple(p_list), record_every=4)


def default_windows(tau):
    """Consecutive dyadic windows [t, 2t] from t = 1 plus the windows [0, t]."""
    T = tau[-1]
    out = []
    t = 1.0
    while 2 * t <= T + 1e-12:
        out.append((t, 2 * t))
        out.append((0.0, 2 * t))
        t *= 2
    return out


@dataclass
class HierarchyReport:
    form: str
    p: float
    window: tuple
    lhs: float
    rhs: float
    energy_start: float
    identity_residual: float
    ratio: float
    C: float | None
    excess: float | None
    asserted: bool

    @property
    def energy_ratio(self):
        """LHS / E^p(t1), the constant in the bound without lower-order terms."""
        if self.energy_start > 0:
            return self.lhs / self.energy_start
        return 0.0 if self.lhs == 0 else np.inf


def hierarchy_check(ledger, p, window, form="u", C=None, low_order_constant=1.0, strict=True):
    """Evaluate one window of the r^p hierarchy.

    form "u":  LHS = E^p(t2) + B^p(t1, t2) (intro bulk);
               RHS = E^p(t1) + |source flux| + c * (positive cutoff term).
    form "Y":  the same with the Y energies, the (K + 2 r^{1/2}) f~ source and
               the cutoff terms of the commuted identity.
    The identity residual (LHS minus the exact right side of the multiplier
    identity) measures discretization error.  ratio = LHS / RHS; excess =
    ratio / C - 1 when a calibrated C is supplied.
    """
    lo, hi = P_RANGE_U if form == "u" else P_RANGE_Y
    asserted = lo < p < hi
    if not asserted and (strict or not (0 < p < 2)):
        raise ValueError(f"p = {p} outside the admissible range {P_RANGE_U if form == 'u' else P_RANGE_Y}")
    if p not in ledger.series:
        raise KeyError(f"p = {p} was not recorded")
    t = ledger.tau
    i1 = int(np.argmin(np.abs(t - window[0])))
    i2 = int(np.argmin(np.abs(t - window[1])))
    if not 0 <= i1 < i2 < len(t):
        raise ValueError("window not inside the run")
    S = ledger.series[p]

    def integ(key):
        c = ledger.cumulative(p, key)
        return c[i2] - c[i1]

    if form == "u":
        E1, E2 = S["E"][i1], S["E"][i2]
        bulk = integ("B_intro")
        src = integ("src")
        cut_g, cut_z = integ("cut_grad"), integ("cut_zero")
        exact = E1 - 0.5 * cut_g + 0.5 * ledger.W * cut_z - src
        pos = 0.5 * ledger.W * cut_z
    elif form == "Y":
        E1, E2 = S["EY_intro"][i1], S["EY_intro"][i2]
        bulk = integ("BY")
        src = integ("srcY")
        h1 = S["cutY_h1"]
        exact = (E1 + 0.5 * (h1[i2] - h1[i1]) - 0.5 * integ("cutY_e") + 0.5 * integ("cutY_g")
                 + 0.25 * integ("cutY_h2") - src)
        pos = max(0.5 * (h1[i2] - h1[i1]), 0) + 0.5 * integ("cutY_g") + 0.25 * abs(integ("cutY_h2"))
    else:
        raise ValueError(f"unknown form {form!r}")
    lhs = E2 + bulk
    rhs = E1 + abs(src) + low_order_constant * pos
    ratio = lhs / rhs if rhs > 0 else (0.0 if lhs == 0 else np.inf)
    excess = None if C is None else ratio / C - 1
    return HierarchyReport(form, p, (float(t[i1]), float(t[i2])), float(lhs), float(rhs), float(E1),
                           float(lhs - exact), float(ratio), C, excess, asserted)


@dataclass
class RegressionRow:
    form: str
    p: float
    C: float
    C_full: float
    measured: float
    measured_full: float
    residual: float
    margin: float

    @property
    def excess(self):
        return self.measured / self.C - 1

    @property
    def excess_full(self):
        return self.measured_full / self.C_full - 1

    @property
    def passed(self):
        return self.excess <= self.margin and self.excess_full <= self.margin


def hierarchy_regression(ledger, golden=None, margin=0.05, windows=None):
    """Compare a run against the frozen constants, one row per (form, p) in golden.

    measured is the largest LHS / E^p(t1) and measured_full the largest
    LHS / RHS over the windows; residual is the largest identity residual
    relative to the peak energy of the run.
    """
    golden = HIERARCHY_GOLDEN if golden is None else golden
    windows = default_windows(ledger.tau) if windows is None else windows
    rows = []
    for (form, p), consts in golden.items():
        if p not in ledger.series:
            continue
        reps = [hierarchy_check(ledger, p, w, form=form) for w in windows]
        key = "E" if form == "u" else "EY_intro"
        scale = float(np.max(np.abs(ledger.series[p][key])))
        res = max(abs(r.identity_residual) for r in reps) / scale if scale > 0 else 0.0
        rows.append(RegressionRow(form, p, consts["C"], consts["C_full"],
                                  max(r.energy_ratio for r in reps), max(r.ratio for r in reps),
                                  res, margin))
    return rows


# ---------------------------------------------------------------- tails

@dataclass
class TailFit:
    observer: float
    tau: np.ndarray
    slope: np.ndarray
    exponent: float
    spread: float
    r2: float
    decades: float
    sufficient: bool


def tail_fit(tau, U, observer, tau_start=None, samples=200, seed=0, boot=400):
    """Local log-log slopes p_eff = -d log|U| / d log tau and the terminal exponent.

    The terminal exponent is the median of p_eff over the last decade of the
    samples; its spread is the standard deviation of bootstrap medians.
    Decades are counted from max(tau_start, 1, observer), so a run shorter
    than the light-crossing scale is never reported as sufficient.
    """
    tau = np.asarray(tau, dtype=float)
    U = np.asarray(U, dtype=float)
    T = tau[-1]
    t0 = tau_start if tau_start is not None else max(tau[tau > 0][0], T / 10 ** 2.5)
    ts = np.geomspace(t0, T, samples)
    us = np.interp(np.log(ts), np.log(np.where(tau > 0, tau, tau[tau > 0][0])), np.log(np.abs(U) + 1e-300))
    slope = -np.gradient(us, np.log(ts))
    last = ts >= T / 10
    exponent = float(np.median(slope[last]))
    rng = np.random.default_rng(seed)
    sl = slope[last]
    meds = np.median(rng.choice(sl, size=(boot, len(sl)), replace=True), axis=1)
    A = np.vstack([np.log(ts[last]), np.ones(last.sum())]).T
    coef, res, *_ = np.linalg.lstsq(A, us[last], rcond=None)
    ss = np.sum((us[last] - us[last].mean()) ** 2)
    r2 = float(1 - (res[0] / ss if res.size and ss > 0 else 0.0))
    decades = float(max(np.log10(T / max(t0, 1.0, observer)), 0.0))
    return TailFit(float(observer), ts, slope, exponent, float(np.std(meds)), r2, decades, decades >= 1.5)


def free_field_oracle(bump, r_obs, tau, n_rho=200, n_alpha=96):
    """U at radius r_obs for compact data on the null cone, whole-space n = 4.

    The cutoff field H(u) U satisfies Box(H U) = -2 delta(u) r^{-3/2} d_r u_0, so
    U is the convolution with the retarded fundamental solution
    -(4 pi^2)^{-1} (t^2 - |x|^2)^{-3/2} of the (1+4) wave operator:

        U = -(2/pi) int rho^{3/2} u_0'(rho) int_0^pi sin^2 a (A + B cos a)^{-3/2} da drho,

    A = t^2 - 2 t rho - r_obs^2, B = 2 r_obs rho, t = tau + r_obs.  Valid once
    tau exceeds twice the outer support radius (only the smooth interior part of
    the kernel contributes).
    """
    lo, hi = bump.support
    tau = np.atleast_1d(np.asarray(tau, dtype=float))
    if np.any(tau <= 2 * hi):
        raise ValueError("oracle valid only for tau > 2 * outer support radius")
    xr, wr = np.polynomial.legendre.leggauss(n_rho)
    rho = 0.5 * (hi - lo) * xr + 0.5 * (hi + lo)
    wr = 0.5 * (hi - lo) * wr
    du0 = 1.5 * rho ** 0.5 * bump(rho) + rho ** 1.5 * bump.derivative(rho)
    xa, wa = np.polynomial.legendre.leggauss(n_alpha)
    a = 0.5 * np.pi * (xa + 1)
    wa = 0.5 * np.pi * wa * np.sin(a) ** 2
    t = tau[:, None, None] + r_obs
    A = t * t - 2 * t * rho[None, :, None] - r_obs ** 2
    B = 2 * r_obs * rho[None, :, None]
    inner = np.sum(wa * (A + B * np.cos(a)) ** -1.5, axis=2)
    return -(2 / np.pi) * inner @ (wr * rho ** 1.5 * du0)
