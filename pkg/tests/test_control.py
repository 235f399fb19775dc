import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bjjsqueeze.control import (
    ControlSchedule, ErmakovProfile, adiabatic_schedule, correction_basis, ermakov_residual,
    fit_boundary_polynomial, omega_from_b, poly_eval, sampled_schedule, sta1_profile,
    sta1_schedule, sta2_profile, sta2_schedule,
)
from bjjsqueeze.metrics import fidelity, number_squeezing
from bjjsqueeze.spin_core import SystemParams, evolve, ground_state


@st.composite
def params_strategy(draw):
    """Physical window omega_0 tau_f in [0.1, 5]; much shorter protocols amplify
    coefficient roundoff in b'' by 1/tau_f^2."""
    N = draw(st.sampled_from([10, 50, 200, 400]))
    lam = draw(st.floats(2.0, 20.0))
    x = draw(st.floats(0.1, 5.0))
    return SystemParams.from_dimensionless(N, lam, draw(st.floats(0.05, 0.5)), x * math.sqrt(lam) / N)


def test_flat_conditions_give_constant():
    conds = [(0, 0.0, 1.0), (0, 2.0, 1.0), (1, 0.0, 0.0), (1, 2.0, 0.0), (2, 0.0, 0.0), (2, 2.0, 0.0)]
    c = fit_boundary_polynomial(conds, 6, 2.0)
    np.testing.assert_allclose(c, [1, 0, 0, 0, 0, 0, 0], atol=1e-12)


def test_degree5_matches_linear_solve():
    tau_f = 0.7
    conds = [(0, 0.0, 1.2), (0, tau_f, 0.4), (1, 0.0, -0.3), (1, tau_f, 0.5),
             (2, 0.0, 2.0), (2, tau_f, -1.0)]
    c = fit_boundary_polynomial(conds, 5, tau_f)
    # oracle: solve directly in tau with numpy.linalg.solve, then rescale to s
    A = np.zeros((6, 6))
    y = np.zeros(6)
    for r, (order, loc, val) in enumerate(conds):
        for k in range(order, 6):
            A[r, k] = math.perm(k, order) * loc ** (k - order)
        y[r] = val
    a_tau = np.linalg.solve(A, y)
    np.testing.assert_allclose(c, a_tau * tau_f ** np.arange(6), rtol=1e-12, atol=1e-12)


def test_fit_rejects_bad_conditions():
    with pytest.raises(ValueError):
        fit_boundary_polynomial([(0, 0.0, 1.0), (0, 0.0, 2.0)], 6, 1.0)
    with pytest.raises(ValueError):
        fit_boundary_polynomial([(0, 0.0, 1.0)] * 3, 1, 1.0)
    with pytest.raises(ValueError):
        fit_boundary_polynomial([(0, 0.5, 1.0)], 3, 1.0)


def test_min_norm_is_smallest():
    p = SystemParams.from_dimensionless(50, 10.0, 0.1, 0.16)
    prof = sta1_profile(p)
    A = np.array([[1, 0, 0, 0, 0, 0, 0], [1, 1, 1, 1, 1, 1, 1],
                  [0, 1, 0, 0, 0, 0, 0], [0, 1, 2, 3, 4, 5, 6],
                  [0, 0, 2, 0, 0, 0, 0], [0, 0, 2, 6, 12, 20, 30]], dtype=float)
    null = np.linalg.svd(A)[2][-1]
    assert abs(null @ prof.coefficients) < 1e-12


def test_sta1_endpoint():
    p = SystemParams.from_dimensionless(50, 10.0, 0.1, 0.16)
    bv = sta1_profile(p).boundary_values()
    assert bv[(0, 1)] == pytest.approx(10 ** 0.25, abs=1e-10)
    assert bv[(0, 0)] == pytest.approx(1.0, abs=1e-12)


def test_sta2_boundary_values():
    p = SystemParams.from_dimensionless(50, 10.0, 0.1, 0.16)
    prof = sta2_profile(p)
    bv = prof.boundary_values()
    assert bv[(0, 0)] == pytest.approx(1.1 ** 0.25, abs=1e-10)
    assert 1.1 ** 0.25 == pytest.approx(1.024114, abs=1e-6)
    assert bv[(0, 1)] == pytest.approx(10.1 ** 0.25, abs=1e-10)
    assert 10.1 ** 0.25 == pytest.approx(1.7827085, abs=1e-7)
    for key, value in prof.bc.items():
        assert bv[key] == pytest.approx(value, rel=1e-10, abs=1e-10)


@settings(max_examples=25, deadline=None)
@given(params_strategy())
def test_inversion_residual_and_endpoints(p):
    for make_profile in (sta1_profile, sta2_profile):
        prof = make_profile(p)
        tau = np.linspace(0, prof.tau_f, 10_000)
        if np.min(prof.b(tau)) <= 0:
            with pytest.raises(ValueError):
                omega_from_b(prof, p)
            continue
        sched = omega_from_b(prof, p)
        assert ermakov_residual(prof, sched, p, 1000) < 1e-9
        assert sched(0.0) == pytest.approx(p.omega0, rel=1e-10)
        assert sched(p.t_f) == pytest.approx(p.omega_f, rel=1e-10)


def test_residual_detects_mismatch():
    p = SystemParams.from_dimensionless(50, 10.0, 0.1, 0.16)
    prof = sta1_profile(p)
    assert ermakov_residual(prof, adiabatic_schedule(p), p) > 1e-3
    flat = ErmakovProfile(np.array([1.0]), p.tau_f, "sta1")
    const = ControlSchedule("sampled", p, lambda t: np.full_like(np.asarray(t, float), p.omega0))
    assert ermakov_residual(flat, const, p) == 0.0


def test_constant_b_gives_constant_omega():
    p = SystemParams.from_dimensionless(20, 4.0, 0.1, 0.2)
    flat = ErmakovProfile(np.array([1.0]), p.tau_f, "sta1")
    sched = omega_from_b(flat, p)
    np.testing.assert_allclose(sched.trace(np.linspace(0, p.t_f, 7)), p.omega0, rtol=1e-15)


def test_nonpositive_b_rejected():
    p = SystemParams.from_dimensionless(20, 4.0, 0.1, 0.2)
    prof = ErmakovProfile(np.array([1.0, -2.0]), p.tau_f, "sta1")
    with pytest.raises(ValueError):
        omega_from_b(prof, p)


def test_adiabatic_ramp():
    p = SystemParams.from_dimensionless(50, 10.0, 0.1, 0.16)
    s = adiabatic_schedule(p)
    assert s(0.0) == p.omega0
    assert s(p.t_f) == p.omega_f
    assert s(p.t_f / 2) == pytest.approx((p.omega0 + p.omega_f) / 2, rel=1e-15)


def test_identity_protocol():
    p = SystemParams.from_dimensionless(50, 10.0, 1.0, 0.05)
    prof = sta1_profile(p)
    np.testing.assert_allclose(prof.coefficients, [1, 0, 0, 0, 0, 0, 0], atol=1e-12)
    sched = sta1_schedule(p)
    np.testing.assert_allclose(sched.trace(np.linspace(0, p.t_f, 11)), p.omega0, rtol=1e-12)
    g = ground_state(p, p.omega0)
    final = evolve(g, sched, p, [p.t_f]).states[-1]
    assert fidelity(g, final) > 1 - 1e-8


def test_dimensionless_collapse():
    taus = np.linspace(0, 0.16, 9)
    results = []
    for chi in (1.0, 2 * math.pi * 0.063, 37.0):
        p = SystemParams.from_dimensionless(50, 10.0, 0.1, 0.16, chi=chi)
        g = ground_state(p, p.omega0)
        target = ground_state(p, p.omega_f)
        states = evolve(g, sta2_schedule(p), p, taus / chi, n_steps=2 ** 13).states
        results.append([(fidelity(target, s), number_squeezing(s)) for s in states])
    ref = np.array(results[0])
    for other in results[1:]:
        np.testing.assert_allclose(np.array(other), ref, atol=1e-8)


def test_correction_basis_pinning():
    for rule in ("min-norm", "cubic"):
        basis = correction_basis(rule)
        for i, row in enumerate(basis):
            vals = poly_eval(row, np.array([0.0, 1 / 3, 2 / 3, 1.0]))
            expected = np.zeros(4)
            expected[i + 1] = 1.0
            np.testing.assert_allclose(vals, expected, atol=1e-12)
    assert abs(correction_basis("min-norm")[0, 4]) > 0
    assert np.all(correction_basis("cubic")[:, 4] == 0)
    with pytest.raises(ValueError):
        correction_basis("quintic")


def test_sampled_schedule():
    p = SystemParams.from_dimensionless(4, 1.0, 0.1, 0.1)
    s = sampled_schedule(p, [0.0, p.t_f], [p.omega0, p.omega_f])
    assert s(p.t_f / 2) == pytest.approx((p.omega0 + p.omega_f) / 2)
    with pytest.raises(ValueError):
        sampled_schedule(p, [0.0, 0.0], [1.0, 1.0])
