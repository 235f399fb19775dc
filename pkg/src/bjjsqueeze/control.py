"""Control schedules Omega(t): linear ramp, Ermakov-inverted STA schemes and polynomial helpers.

Auxiliary functions b(tau) live on dimensionless time tau = chi * t and are
stored as monomial coefficients in s = tau / tau_f.  Controls follow from
inverting the Ermakov equation

    b'' - N^2 / (Lambda_0 b^3) + b (Omega / Omega_0) N^2 / Lambda_0 = 0.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .spin_core import SystemParams

SCHEMES = ("adiabatic", "sta1", "sta2", "esta", "oat_zero", "sampled")

DEFAULT_POLY_DEGREE = 6
POSITIVITY_SAMPLES = 10_000


def _monomial_derivative_row(s: float, degree: int, order: int) -> np.ndarray:
    """d^order/ds^order of (1, s, ..., s^degree) evaluated at s."""
    row = np.zeros(degree + 1)
    for k in range(order, degree + 1):
        row[k] = math.perm(k, order) * s ** (k - order)
    return row


def fit_boundary_polynomial(conditions: Sequence[tuple], degree: int, tau_f: float) -> np.ndarray:
    """Coefficients in s = tau/tau_f of a polynomial meeting derivative conditions.

    Each condition is ``(order, location, value)`` with ``location`` in tau
    units (0 or tau_f) and ``value`` the tau-derivative of that order.  An
    underdetermined system returns the minimum-norm coefficient vector.
    """
    if tau_f <= 0:
        raise ValueError("tau_f must be positive")
    if degree + 1 < len(conditions):
        raise ValueError(f"degree {degree} cannot satisfy {len(conditions)} conditions")
    rows, rhs = [], []
    for order, location, value in conditions:
        if order not in (0, 1, 2, 3, 4):
            raise ValueError(f"unsupported derivative order {order}")
        s = location / tau_f
        if not (math.isclose(s, 0.0, abs_tol=1e-14) or math.isclose(s, 1.0, rel_tol=1e-14)):
            raise ValueError("conditions are placed at tau = 0 or tau = tau_f")
        rows.append(_monomial_derivative_row(round(s), degree, order))
        rhs.append(value * tau_f ** order)
    A = np.array(rows)
    y = np.array(rhs, dtype=float)
    if np.linalg.matrix_rank(A) < len(conditions):
        raise ValueError("boundary conditions are inconsistent or rank deficient")
    coeffs, *_ = np.linalg.lstsq(A, y, rcond=None)
    scale = max(1.0, float(np.max(np.abs(y))))
    if np.max(np.abs(A @ coeffs - y)) > 1e-10 * scale:
        raise ValueError("boundary conditions could not be satisfied")
    return coeffs


def poly_eval(coeffs: np.ndarray, s, order: int = 0):
    """Evaluate the ``order``-th s-derivative of sum_k coeffs[k] s^k."""
    c = np.polynomial.polynomial.polyder(coeffs, order) if order else coeffs
    return np.polynomial.polynomial.polyval(s, c)


@dataclass(frozen=True)
class ErmakovProfile:
    """Polynomial auxiliary function b(tau) on [0, tau_f]."""

    coefficients: np.ndarray
    tau_f: float
    scheme: str
    bc: dict = field(default_factory=dict)

    def b(self, tau, order: int = 0):
        """``order``-th tau-derivative of b."""
        return poly_eval(self.coefficients, np.asarray(tau) / self.tau_f, order) / self.tau_f ** order

    def boundary_values(self) -> dict:
        return {(k, loc): float(self.b(loc * self.tau_f, k)) for k in range(3) for loc in (0, 1)}


def _profile(scheme: str, params: SystemParams, values: dict, degree: int) -> ErmakovProfile:
    tau_f = params.tau_f
    conditions = [(order, loc * tau_f, value) for (order, loc), value in values.items()]
    coeffs = fit_boundary_polynomial(conditions, degree, tau_f)
    return ErmakovProfile(coefficients=coeffs, tau_f=tau_f, scheme=scheme, bc=dict(values))


def sta1_profile(params: SystemParams, degree: int = DEFAULT_POLY_DEGREE) -> ErmakovProfile:
    """Harmonic-approximation STA: b(0) = 1, b(tau_f) = (Omega_0/Omega_f)^(1/4), flat ends."""
    values = {
        (0, 0): 1.0, (0, 1): (params.omega0 / params.omega_f) ** 0.25,
        (1, 0): 0.0, (1, 1): 0.0,
        (2, 0): 0.0, (2, 1): 0.0,
    }
    return _profile("sta1", params, values, degree)


def sta2_profile(params: SystemParams, degree: int = DEFAULT_POLY_DEGREE) -> ErmakovProfile:
    """Improved STA: end states are ground states of the harmonic Hamiltonian with the z^2 correction."""
    N, lam = params.N, params.lambda0
    r = params.omega_f / params.omega0
    b0 = (1 + 1 / lam) ** 0.25
    bf = ((1 / r) * (1 + r / lam)) ** 0.25
    values = {
        (0, 0): b0, (0, 1): bf,
        (1, 0): 0.0, (1, 1): 0.0,
        (2, 0): -(N ** 2 / lam ** 2) * (1 + 1 / lam) ** -0.75,
        (2, 1): -(N ** 2 / lam ** 2) * r * (1 / r + 1 / lam) ** -0.75,
    }
    return _profile("sta2", params, values, degree)


@dataclass(frozen=True)
class ControlSchedule:
    """Linear coupling Omega(t) in rad/s, callable on scalars or arrays of t (s)."""

    scheme: str
    params: SystemParams
    func: Callable = field(repr=False, compare=False)
    profile: ErmakovProfile | None = None
    correction: object | None = None

    def __call__(self, t):
        return self.func(t)

    evaluate = __call__

    def trace(self, times) -> np.ndarray:
        return np.asarray(self(np.asarray(times, dtype=float)), dtype=float)


def omega_from_ermakov(profile: ErmakovProfile, params: SystemParams, tau):
    """Omega(tau) = Omega_0 [b^-4 - (Lambda_0/N^2) b''/b]."""
    b = profile.b(tau)
    b2 = profile.b(tau, 2)
    return params.omega0 * (b ** -4 - params.lambda0 / params.N ** 2 * b2 / b)


def omega_from_b(profile: ErmakovProfile, params: SystemParams) -> ControlSchedule:
    grid = np.linspace(0.0, profile.tau_f, POSITIVITY_SAMPLES)
    bmin = float(np.min(profile.b(grid)))
    if not bmin > 0:
        raise ValueError(f"auxiliary function b(tau) not positive on [0, tau_f] (min {bmin:.3g})")
    chi = params.chi

    def func(t):
        return omega_from_ermakov(profile, params, chi * np.asarray(t, dtype=float))

    return ControlSchedule(scheme=profile.scheme, params=params, func=func, profile=profile)


def sta1_schedule(params: SystemParams, degree: int = DEFAULT_POLY_DEGREE) -> ControlSchedule:
    return omega_from_b(sta1_profile(params, degree), params)


def sta2_schedule(params: SystemParams, degree: int = DEFAULT_POLY_DEGREE) -> ControlSchedule:
    return omega_from_b(sta2_profile(params, degree), params)


def adiabatic_schedule(params: SystemParams) -> ControlSchedule:
    """Linear ramp Omega_0 -> Omega_f; endpoints are exact."""
    om0, omf, t_f = params.omega0, params.omega_f, params.t_f

    def func(t):
        s = np.asarray(t, dtype=float) / t_f
        return om0 * (1.0 - s) + omf * s

    return ControlSchedule(scheme="adiabatic", params=params, func=func)


def zero_schedule(params: SystemParams) -> ControlSchedule:
    """Omega == 0: pure one-axis twisting."""
    return ControlSchedule(scheme="oat_zero", params=params,
                           func=lambda t: np.zeros_like(np.asarray(t, dtype=float)))


def sampled_schedule(params: SystemParams, times, omegas) -> ControlSchedule:
    """Piecewise-linear schedule through user samples."""
    ts = np.asarray(times, dtype=float)
    om = np.asarray(omegas, dtype=float)
    if ts.shape != om.shape or ts.ndim != 1 or np.any(np.diff(ts) <= 0):
        raise ValueError("samples need matching 1-d arrays with increasing times")
    return ControlSchedule(scheme="sampled", params=params,
                           func=lambda t: np.interp(np.asarray(t, dtype=float), ts, om))


def ermakov_residual(profile: ErmakovProfile, schedule: ControlSchedule, params: SystemParams,
                     n_points: int = 1000) -> float:
    """max |b'' - N^2/(Lambda_0 b^3) + b (Omega/Omega_0) N^2/Lambda_0| / (N^2/Lambda_0)."""
    tau = np.linspace(0.0, profile.tau_f, n_points)
    scale = params.N ** 2 / params.lambda0
    b = profile.b(tau)
    omega = schedule(tau / params.chi)
    res = profile.b(tau, 2) - scale / b ** 3 + b * (omega / params.omega0) * scale
    return float(np.max(np.abs(res)) / scale)


# ---------------------------------------------------------------------------
# correction polynomial P_lambda
# ---------------------------------------------------------------------------

PLAMBDA_RULES = ("min-norm", "cubic")


def correction_basis(rule: str = "min-norm") -> np.ndarray:
    """Rows are s-coefficients of f_1, f_2 with P_lambda = lambda_1 f_1 + lambda_2 f_2.

    f_i vanishes at s = 0 and s = 1; f_1(1/3) = 1, f_1(2/3) = 0 and vice versa.
    ``min-norm`` gives the smallest-norm quartic, ``cubic`` the unique cubic.
    """
    if rule not in PLAMBDA_RULES:
        raise ValueError(f"unknown P_lambda rule {rule!r}")
    degree = 4 if rule == "min-norm" else 3
    # f(0) = 0 fixes the constant term, the other three nodes fix the rest
    nodes = np.array([1 / 3, 2 / 3, 1.0])
    A = np.vander(nodes, degree + 1, increasing=True)[:, 1:]
    basis = []
    for i in (0, 1):
        y = np.zeros(3)
        y[i] = 1.0
        coeffs, *_ = np.linalg.lstsq(A, y, rcond=None)
        basis.append(np.pad(np.concatenate([[0.0], coeffs]), (0, 4 - degree)))
    return np.array(basis)


def pinned_eval(coeffs: np.ndarray, s):
    """Evaluate a polynomial with roots at s = 0 and s = 1 as s (1 - s) q(s), exact at both ends."""
    q, _ = np.polynomial.polynomial.polydiv(coeffs, [0.0, 1.0, -1.0])
    s = np.asarray(s, dtype=float)
    return s * (1.0 - s) * np.polynomial.polynomial.polyval(s, q)
