import numpy as np
import pytest
from scipy.integrate import quad

from catenoid_tails.geometry import metric_arrays
from catenoid_tails.spectrum import (
    MU2_GOLDEN,
    ELLIPTIC_GOLDEN,
    assemble,
    default_grid,
    dmatrix,
    elliptic_ratio_probe,
    morse_index,
    richardson,
    spectrum,
    weighted_norm,
    zero_mode_coefficients,
    zero_mode_residual,
    zero_mode_series,
)


def test_operator_symmetry_and_mass():
    op = assemble(2, 4, default_grid(1000))
    A = op.A.toarray()
    assert np.max(np.abs(A - A.T)) <= 1e-12 * np.max(np.abs(A))
    assert np.all(op.M.diagonal() > 0)


def test_constant_vector_sees_potential_only():
    op = assemble(0, 4, default_grid(1000))
    rho = op.grid
    Lu = op.apply(np.ones_like(rho))
    V = 12 / (1 + rho[1:-1] ** 2) ** 4
    assert np.allclose(Lu, V, atol=1e-10)


def test_grid_preconditions():
    with pytest.raises(ValueError):
        assemble(0, 4, np.linspace(-20, 20, 2000))
    with pytest.raises(ValueError):
        assemble(0, 4, np.linspace(-30, 30, 500))


def test_zero_mode_residual_converges():
    res = [zero_mode_residual(4, default_grid(N)) for N in (1000, 2000, 4000)]
    assert res[1] < 1e-3
    orders = np.log2(np.array(res[:-1]) / np.array(res[1:]))
    assert np.all(orders > 1.5)


def test_morse_index_and_mu2():
    grid = default_grid(2000)
    results = {l: spectrum(assemble(l, 4, grid), 4) for l in range(7)}
    assert morse_index(results) == 1
    assert results[0].mu2 > 0
    for l in range(1, 7):
        assert results[l].mu2 is None
    fine = spectrum(assemble(0, 4, default_grid(4000)), 2)
    assert abs(fine.mu2 - results[0].mu2) / fine.mu2 < 1e-2
    assert richardson(results[0].mu2, fine.mu2) == pytest.approx(MU2_GOLDEN, abs=2e-5)


def test_eigenfunction_exponential_decay():
    res = spectrum(assemble(0, 4, default_grid(2000)), 2)
    assert res.decay_fit_r2 > 0.99
    assert res.decay_rate == pytest.approx(np.sqrt(res.mu2), rel=0.15)


def test_l1_zero_mode_eigenvalue():
    vals = []
    for N in (2000, 4000):
        op = assemble(1, 4, default_grid(N))
        r = spectrum(op, 3)
        k = np.argmin(np.abs(r.eigenvalues))
        vals.append(abs(r.eigenvalues[k]))
        vec = r.eigenvectors[:, k]
        e = (1 + op.grid[1:-1] ** 2) ** -1.5
        m = op.M.diagonal()
        corr = abs(np.sum(m * vec * e)) / np.sqrt(np.sum(m * vec ** 2) * np.sum(m * e ** 2))
        assert corr > 0.999
    assert vals[0] < 1e-4 and vals[1] < vals[0]


def test_gaps_stable_l0_l2():
    for l in (0, 2):
        gaps = []
        for N in (2000, 4000):
            r = spectrum(assemble(l, 4, default_grid(N)), 6)
            ev = r.eigenvalues if l else r.eigenvalues[:-1]  # drop mu2 in l = 0
            gaps.append(np.min(np.abs(ev)))
        assert gaps[0] > 0 and abs(gaps[0] - gaps[1]) / gaps[1] < 0.01


def test_mu2_insensitive_to_rho_max():
    a = spectrum(assemble(0, 4, default_grid(2000, rho_max=30)), 1).mu2
    b = spectrum(assemble(0, 4, default_grid(2400, rho_max=60)), 1).mu2
    assert abs(a - b) / a < 1e-3


def test_zero_mode_series():
    C = zero_mode_coefficients(2, 4, 3)
    assert C[0] == (4, 1)
    assert C[1][0] == 10 and C[1][1] == pytest.approx(1 / 9, rel=1e-15)
    v = zero_mode_series(2, 4, 2.0, 40)
    assert v > 0
    assert zero_mode_coefficients(1, 4, 5) == [(3, 1.0)]
    assert zero_mode_series(1, 4, 2.0, 5) == pytest.approx(2.0 ** -3)


def test_zero_mode_series_solves_mode_equation():
    # the series in r = <rho> is annihilated by L_2 away from the neck
    rho = np.linspace(2, 6, 4001)
    h = rho[1] - rho[0]
    u = np.array([zero_mode_series(2, 4, np.sqrt(1 + x * x), 60) for x in rho])
    m = metric_arrays(rho, 4)
    b = np.sqrt(1 + rho ** 2)
    w, wt = b ** 3 * m["F_rho"], b ** 3 / m["F_rho"]
    flux = 0.5 * (wt[1:] + wt[:-1]) * np.diff(u) / h
    Lu = np.diff(flux) / h / w[1:-1] + (-8 / b[1:-1] ** 2 + 12 / b[1:-1] ** 8) * u[1:-1]
    assert np.max(np.abs(Lu)) < 1e-5 * np.max(np.abs(u))


def test_weighted_norm_examples():
    grid = default_grid(2000)
    assert weighted_norm(np.zeros_like(grid), grid, 2, -1.0) == 0
    u = (1 + grid ** 2) ** -1.5
    val = weighted_norm(u, grid, 0, 0.0)
    f = lambda x: (1 + x * x) ** -3 * (1 + x * x) ** 1.5 * metric_arrays(x, 4)["F_rho"]
    ref = quad(f, -30, 30, epsabs=1e-13, epsrel=1e-13, limit=200)[0]
    assert val == pytest.approx(ref, rel=1e-8)
    assert weighted_norm(3 * u, grid, 2, -1.0) == pytest.approx(9 * weighted_norm(u, grid, 2, -1.0), rel=1e-14)


def test_elliptic_probe():
    with pytest.raises(ValueError):
        elliptic_ratio_probe(50, 0.0)
    a = elliptic_ratio_probe(100, -1.0, seed=0)
    b = elliptic_ratio_probe(100, -1.0, seed=1)
    assert np.isfinite(a) and a <= ELLIPTIC_GOLDEN * 1.1
    assert abs(a - b) / max(a, b) < 0.1


def test_elliptic_probe_zero_mode_input():
    from catenoid_tails.spectrum import elliptic_ratio
    grid = default_grid(2000)
    e = (1 + grid ** 2) ** -1.5
    assert np.isfinite(elliptic_ratio(e, grid, 1, -1.0))


def test_dmatrix():
    d0 = dmatrix(np.zeros(4), 20.0)
    diag = np.diag(d0)
    off = d0 - np.diag(diag)
    assert np.max(np.abs(off)) < 1e-12 * np.max(np.abs(diag))
    assert np.allclose(diag, diag[0], rtol=1e-12)
    ell = 0.1 * np.array([1.0, 1.0, 1.0, 1.0]) / 2
    d1 = dmatrix(ell, 20.0)
    assert np.allclose(d1, d1.T, atol=1e-14 * np.max(np.abs(d1)))
    off1 = np.max(np.abs(d1 - np.diag(np.diag(d1))))
    assert off1 > 0
    assert off1 / np.min(np.abs(np.diag(d1))) < 0.05
    with pytest.raises(ValueError):
        dmatrix(np.array([0.4, 0, 0, 0]), 20.0)
