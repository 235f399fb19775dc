import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bjjsqueeze.control import pinned_eval, poly_eval, sta2_profile, sta2_schedule, zero_schedule
from bjjsqueeze.esta import (
    EstaCorrection, EstaEngine, InvariantModes, apply_delta_H, composite_gauss_legendre,
    compute_G, compute_K, esta_schedule, hermite, momentum_eigenfunction,
    position_from_momentum, schedule_with_correction, simpson_weights, solve_lambda,
)
from bjjsqueeze.metrics import fidelity
from bjjsqueeze.spin_core import SystemParams, evolve, ground_state

FIG2 = SystemParams.from_dimensionless(50, 10.0, 0.1, 0.16)


@pytest.fixture(scope="module")
def fig2_modes():
    return InvariantModes(sta2_profile(FIG2), FIG2)


@pytest.fixture(scope="module")
def fig2_engine():
    return EstaEngine(FIG2)


def overlap(f, g, a=-1.5, b=1.5, n=8192):
    z, w = composite_gauss_legendre(a, b, n)
    return np.sum(np.conj(f(z)) * g(z) * w)


def test_hermite_recurrence_exact():
    points = [Fraction(0), Fraction(1, 3), Fraction(-5, 7), Fraction(9, 4)]
    for x in points:
        for n in range(1, 7):
            assert hermite(n + 1, x) == 2 * x * hermite(n, x) - 2 * n * hermite(n - 1, x)
    assert hermite(2, 0) == -2
    assert hermite(3, Fraction(1, 2)) == 8 * Fraction(1, 8) - 12 * Fraction(1, 2)
    with pytest.raises(ValueError):
        hermite(-1, 0.0)


def test_quadrature_rules():
    z, w = composite_gauss_legendre(-1, 2, 64)
    assert np.sum(w * z ** 5) == pytest.approx((2 ** 6 - 1) / 6, rel=1e-13)
    sw = simpson_weights(11, 2.0)
    x = np.linspace(0, 2, 11)
    assert np.sum(sw * x ** 3) == pytest.approx(4.0, rel=1e-13)
    with pytest.raises(ValueError):
        simpson_weights(10, 1.0)


def test_mode_parity_and_nodes(fig2_modes):
    z = np.linspace(0.0, 0.5, 51)
    for n in range(4):
        for tau in (0.0, 0.05, 0.16):
            chi = fig2_modes.chi(n, [tau], z)[0]
            np.testing.assert_array_equal(fig2_modes.chi(n, [tau], -z)[0], (-1) ** n * chi)
    assert fig2_modes.chi(1, [0.1], [0.0])[0, 0] == 0


def test_mode_normalization_and_orthogonality(fig2_modes):
    for tau in (0.0, 0.04, 0.11, 0.16):
        for n in range(4):
            wn = fig2_modes.wavefunction(n, tau)
            assert abs(overlap(wn, wn) - 1) < 1e-6
            for k in range(n):
                assert abs(overlap(fig2_modes.wavefunction(k, tau), wn)) < 1e-6


def test_modes_solve_harmonic_tdse(fig2_modes):
    # i h d/dtau chi = -h^2 (w/2) chi'' + (N/2) z^2 chi along the STA2 trajectory
    h, N = FIG2.h, FIG2.N
    sched = sta2_schedule(FIG2)
    z = np.linspace(-0.4, 0.4, 41)
    d = 1e-6
    for n in range(3):
        for tau in (0.03, 0.08, 0.13):
            dt = (fig2_modes.chi(n, [tau + d], z)[0] - fig2_modes.chi(n, [tau - d], z)[0]) / (2 * d)
            w = float(sched(tau / FIG2.chi)) / FIG2.chi
            rhs = (-0.5 * h ** 2 * w * fig2_modes.chi_dzz(n, [tau], z)[0]
                   + 0.5 * N * z ** 2 * fig2_modes.chi(n, [tau], z)[0])
            scale = np.max(np.abs(rhs))
            assert np.max(np.abs(1j * h * dt - rhs)) < 1e-6 * scale


def test_second_derivative_matches_richardson_stencil(fig2_modes):
    rng = np.random.default_rng(7)
    d = FIG2.h / 8

    def stencil(w, z, s):
        return (-w(z + 2 * s) + 16 * w(z + s) - 30 * w(z) + 16 * w(z - s) - w(z - 2 * s)) / (12 * s * s)

    for n in range(3):
        for tau in (0.0, 0.07, 0.16):
            w = fig2_modes.wavefunction(n, tau)
            z = rng.uniform(-0.4, 0.4, 100)
            oracle = (16 * stencil(w, z, d / 2) - stencil(w, z, d)) / 15
            exact = w.dzz(z)
            assert np.max(np.abs(oracle - exact)) < 1e-8 * np.max(np.abs(exact))


def test_delta_h_zero_coupling(fig2_modes):
    psi = fig2_modes.wavefunction(0, 0.05)
    out = apply_delta_H(psi, 0.05, zero_schedule(FIG2), FIG2)
    assert np.all(out(np.linspace(-1, 1, 33)) == 0)


def test_delta_h_expectation_real(fig2_modes):
    sched = sta2_schedule(FIG2)
    for tau in (0.0, 0.06, 0.16):
        psi = fig2_modes.wavefunction(0, tau)
        val = overlap(psi, apply_delta_H(psi, tau, sched, FIG2), -1 - FIG2.h, 1 + FIG2.h, 4096)
        assert abs(val.imag) < 1e-8 * max(1.0, abs(val.real))


def test_flipped_rule_reverses_kinetic_sign(fig2_modes):
    sched = sta2_schedule(FIG2)
    tau = 0.05
    psi = fig2_modes.wavefunction(2, tau)
    z = np.linspace(-0.3, 0.3, 11)
    a = apply_delta_H(psi, tau, sched, FIG2, "subtract")(z)
    b = apply_delta_H(psi, tau, sched, FIG2, "flipped")(z)
    w = float(sched(tau / FIG2.chi)) / FIG2.chi
    np.testing.assert_allclose(a - b, FIG2.h ** 2 * w * psi.dzz(z), rtol=1e-12, atol=1e-12)
    with pytest.raises(ValueError):
        apply_delta_H(psi, tau, sched, FIG2, "other")


def test_parity_suppression(fig2_engine):
    G, K = fig2_engine.integrals()
    assert abs(G[0]) < 1e-8 * abs(G[1])
    assert np.max(np.abs(K[0])) < 1e-8 * np.max(np.abs(K[1]))
    v = np.sum(np.real(np.conj(G)[:, None] * K), axis=0)
    _, v_solved, _, _ = solve_lambda(G, K)
    np.testing.assert_allclose(v_solved, v, rtol=1e-15)


def test_wrappers_match_engine(fig2_engine):
    prof = fig2_engine.profile
    sched = sta2_schedule(FIG2)
    G, K = fig2_engine.integrals()
    assert compute_G(2, sched, prof, FIG2) == pytest.approx(G[1], rel=1e-9)
    np.testing.assert_allclose(compute_K(2, sched, prof, FIG2), K[1], rtol=1e-9)
    assert compute_G(2, zero_schedule(FIG2), prof, FIG2) == 0
    with pytest.raises(ValueError):
        compute_G(0, sched, prof, FIG2)


def test_quadrature_refinement(fig2_engine):
    G, K = fig2_engine.integrals(tau_nodes=201, z_nodes=2048)
    G2, K2 = fig2_engine.integrals(tau_nodes=401, z_nodes=4096)
    assert abs(G2[1] - G[1]) < 1e-6 * abs(G[1])
    lam = solve_lambda(G, K)[0]
    for g, k in (fig2_engine.integrals(tau_nodes=401), fig2_engine.integrals(z_nodes=4096)):
        lam2 = solve_lambda(g, k)[0]
        assert np.max(np.abs(lam2 - lam)) < 1e-4 * np.max(np.abs(lam))


def test_lambda_time_unit_invariance(fig2_engine):
    lam_tau = solve_lambda(*fig2_engine.integrals(time_unit="tau"))[0]
    lam_t = solve_lambda(*fig2_engine.integrals(time_unit="t"))[0]
    np.testing.assert_allclose(lam_t, lam_tau, rtol=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.floats(1e-3, 1e3), st.integers(0, 2 ** 31 - 1))
def test_lambda_scale_invariance(scale, seed):
    rng = np.random.default_rng(seed)
    G = rng.normal(size=2) + 1j * rng.normal(size=2)
    K = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
    lam = solve_lambda(G, K)[0]
    lam_s = solve_lambda(scale * G, scale * K)[0]
    np.testing.assert_allclose(lam_s, lam, rtol=1e-12, atol=1e-300)


def test_solve_lambda_special_cases():
    lam, v, H, degenerate = solve_lambda([0.0, 0.0], [[1.0, 2.0], [0.5, 0.1]])
    assert degenerate and np.all(lam == 0)
    # one real mode: v = G K, H = K K^T, lambda = -(G / |K|^2) K
    G, K = 0.3, np.array([1.5, -0.5])
    lam, *_ = solve_lambda([G], [K])
    np.testing.assert_allclose(lam, -G / (K @ K) * K, rtol=1e-14)
    with pytest.raises(ValueError):
        solve_lambda([1.0], [[1.0, 2.0], [3.0, 4.0]])


def test_correction_polynomial_pinning(fig2_engine):
    corr = fig2_engine.correction()
    tf = corr.tau_f
    assert abs(corr.polynomial(0.0)) == 0.0
    assert abs(corr.polynomial(tf)) == 0.0
    assert corr.polynomial(tf / 3) == pytest.approx(corr.lam[0], rel=1e-10)
    assert corr.polynomial(2 * tf / 3) == pytest.approx(corr.lam[1], rel=1e-10)
    rep = corr.report()
    assert set(rep) >= {"lambda", "G", "K", "v", "hessian", "degenerate"}


def test_zero_lambda_gives_sta2():
    eng = EstaEngine(FIG2)
    corr = eng.correction()
    zero = EstaCorrection(lam=np.zeros(2), G=corr.G, K=corr.K, v=corr.v, hessian=corr.hessian,
                          basis=corr.basis, tau_f=corr.tau_f, chi=corr.chi)
    sched = schedule_with_correction(eng.profile, FIG2, zero)
    t = np.linspace(0, FIG2.t_f, 50)
    np.testing.assert_array_equal(sched.trace(t), sta2_schedule(FIG2).trace(t))


def test_esta_endpoints_and_improvement():
    sched = esta_schedule(FIG2)
    assert sched(0.0) == pytest.approx(FIG2.omega0, rel=1e-10)
    assert sched(FIG2.t_f) == pytest.approx(FIG2.omega_f, rel=1e-10)
    g0 = ground_state(FIG2, FIG2.omega0)
    target = ground_state(FIG2, FIG2.omega_f)
    f_e = fidelity(target, evolve(g0, sched, FIG2, [FIG2.t_f]).states[-1])
    f_2 = fidelity(target, evolve(g0, sta2_schedule(FIG2), FIG2, [FIG2.t_f]).states[-1])
    assert f_e >= f_2


def test_momentum_parity_and_normalization():
    prof = sta2_profile(FIG2)
    p = np.linspace(-3, 3, 20001)
    dp = p[1] - p[0]
    for n in range(4):
        for tau in (0.0, 0.09):
            chi_p = momentum_eigenfunction(n, p, tau, prof, FIG2)
            assert np.sum(np.abs(chi_p) ** 2) * dp == pytest.approx(1.0, abs=1e-6)
            if n % 2:
                assert momentum_eigenfunction(n, 0.0, tau, prof, FIG2) == 0


def test_fourier_cross_check(fig2_modes):
    prof = fig2_modes.profile
    z = np.linspace(-0.6, 0.6, 1201)
    dz = z[1] - z[0]
    for n in range(4):
        for tau in (0.0, 0.05, 0.12):
            direct = fig2_modes.chi(n, [tau], z)[0]
            via_p = position_from_momentum(n, z, tau, prof, FIG2, n_p=2 ** 12)
            phase = np.vdot(via_p, direct)
            phase /= abs(phase)
            err = math.sqrt(np.sum(np.abs(direct - phase * via_p) ** 2) * dz)
            assert err < 1e-5


def test_unknown_rules_rejected():
    with pytest.raises(ValueError):
        EstaEngine(FIG2, deltah_rule="flip")
    with pytest.raises(ValueError):
        EstaEngine(FIG2).integrals(time_unit="ms")


def test_basis_rows_vanish_at_ends():
    basis = EstaEngine(FIG2).basis
    for row in basis:
        assert poly_eval(row, 0.0) == 0.0
        assert pinned_eval(row, 1.0) == 0.0
        assert abs(poly_eval(row, 1.0)) < 1e-14
