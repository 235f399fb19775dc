"""Enhanced-STA correction of the improved STA control.

The discrete dynamics maps onto a continuum equation i h d/dtau psi = H_S psi
on z in [-1-h, 1+h] with h = 2/N.  The STA schedules are exact for the
harmonic Hamiltonian H_0; the correction Omega_e = Omega_2 + P_lambda is the
step along the fidelity gradient of a quadratic model built from

    G_n = int dtau <chi_n| H_S - H_0 |chi_0>
    K_n = int dtau <chi_n| dH_S/dlambda |chi_0>

with chi_n the Lewis-Riesenfeld invariant modes of the STA trajectory.
Inside this module Omega is measured in units of chi (w = Omega/chi) and
times in tau; lambda is converted back to rad/s at the end.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .control import (DEFAULT_POLY_DEGREE, ControlSchedule, ErmakovProfile, correction_basis,
                      omega_from_ermakov, pinned_eval, sta2_profile)
from .spin_core import ConvergenceError, SystemParams

DELTAH_RULES = ("subtract", "flipped")
DEFAULT_MODES = 2
DEFAULT_TAU_NODES = 201
DEFAULT_Z_NODES = 2048
LAMBDA_RTOL = 1e-4
MAX_TAU_NODES = 6401
DEGENERATE_CURVATURE = 1e-30

_GL_ORDER = 16
_GL_X, _GL_W = np.polynomial.legendre.leggauss(_GL_ORDER)


def hermite(n: int, x):
    """Physicists' Hermite polynomial by the three-term recurrence.

    Works for numpy arrays as well as exact scalars (int, Fraction).
    """
    if n < 0:
        raise ValueError("Hermite degree must be non-negative")
    h_prev, h = 1 + 0 * x, 2 * x
    if n == 0:
        return h_prev
    for k in range(1, n):
        h_prev, h = h, 2 * x * h - 2 * k * h_prev
    return h


def composite_gauss_legendre(a: float, b: float, n_nodes: int):
    """Nodes and weights of ``n_nodes // 16`` equal Gauss-Legendre panels on [a, b]."""
    panels = max(1, n_nodes // _GL_ORDER)
    edges = np.linspace(a, b, panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    nodes = (mid[:, None] + half[:, None] * _GL_X[None, :]).ravel()
    weights = (half[:, None] * _GL_W[None, :]).ravel()
    return nodes, weights


def simpson_weights(n_nodes: int, length: float) -> np.ndarray:
    if n_nodes < 3 or n_nodes % 2 == 0:
        raise ValueError("composite Simpson needs an odd number of nodes >= 3")
    w = np.ones(n_nodes)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    return w * length / (3.0 * (n_nodes - 1))


class InvariantModes:
    """Invariant eigenfunctions chi_n(tau, z) along one Ermakov profile b(tau).

    chi_n = sqrt(b) / (pi^1/4 sqrt(2^n n!)) * i^n sqrt(k0) / sqrt(1 - i beta)
            * ((1 + i beta)/(1 - i beta))^(n/2)
            * exp(i phi_n - z^2 b^2 k0^2 / (2 (1 - i beta))) * H_n(z b k0 / sqrt(1 + beta^2))

    with C = N / (2 sqrt(Lambda_0)), k0 = N / (2 sqrt(C)), beta = b b' / (2C) and
    phi_n(tau) = -(2n + 1) int_0^tau C / b^2.
    """

    def __init__(self, profile: ErmakovProfile, params: SystemParams):
        self.profile = profile
        self.params = params
        self.C = params.N / (2.0 * math.sqrt(params.lambda0))
        self.k0 = params.N / (2.0 * math.sqrt(self.C))

    def phase_integral(self, tau) -> np.ndarray:
        """int_0^tau C / b(s)^2 ds, by Gauss-Legendre on each gap of the sorted nodes."""
        tau = np.atleast_1d(np.asarray(tau, dtype=float))
        order = np.argsort(tau)
        knots = np.concatenate([[0.0], tau[order]])
        lo, hi = knots[:-1], knots[1:]
        half = 0.5 * (hi - lo)
        mid = 0.5 * (hi + lo)
        s = mid[:, None] + half[:, None] * _GL_X[None, :]
        piece = half * np.sum(_GL_W[None, :] * self.C / self.profile.b(s) ** 2, axis=1)
        out = np.empty_like(tau)
        out[order] = np.cumsum(piece)
        return out

    def _shape(self, tau):
        tau = np.atleast_1d(np.asarray(tau, dtype=float))
        b = self.profile.b(tau)
        bd = self.profile.b(tau, 1)
        beta = b * bd / (2.0 * self.C)
        return tau, b, beta

    def _parts(self, n: int, tau, z):
        """Prefactor (T,1), Gaussian coefficient a (T,1), Hermite scale kappa (T,1), z (1,Z)."""
        tau, b, beta = self._shape(tau)
        phase = -(2 * n + 1) * self.phase_integral(tau)
        pref = (np.sqrt(b) / (math.pi ** 0.25 * math.sqrt(2.0 ** n * math.factorial(n)))
                * (1j ** n) * math.sqrt(self.k0) / np.sqrt(1 - 1j * beta)
                * np.exp(1j * n * np.arctan(beta)) * np.exp(1j * phase))
        a = b ** 2 * self.k0 ** 2 / (2.0 * (1 - 1j * beta))
        kappa = b * self.k0 / np.sqrt(1 + beta ** 2)
        col = (slice(None), None)
        return pref[col], a[col], kappa[col], np.atleast_1d(np.asarray(z, dtype=float))[None, :]

    def chi(self, n: int, tau, z) -> np.ndarray:
        """chi_n on the grid tau x z, shape (len(tau), len(z))."""
        pref, a, kappa, z = self._parts(n, tau, z)
        return pref * np.exp(-a * z ** 2) * hermite(n, kappa * z)

    def chi_dzz(self, n: int, tau, z) -> np.ndarray:
        """Closed-form second z-derivative of chi_n."""
        pref, a, kappa, z = self._parts(n, tau, z)
        u = kappa * z
        hn = hermite(n, u)
        dh = 2 * n * hermite(n - 1, u) if n >= 1 else 0.0
        d2h = 4 * n * (n - 1) * hermite(n - 2, u) if n >= 2 else 0.0
        poly = (4 * a ** 2 * z ** 2 - 2 * a) * hn - 4 * a * z * kappa * dh + kappa ** 2 * d2h
        return pref * np.exp(-a * z ** 2) * poly

    def wavefunction(self, n: int, tau: float) -> "ContinuumWavefunction":
        _, b, beta = self._shape(tau)
        return ContinuumWavefunction(
            n=n, tau=float(tau), b=float(b[0]), b_dot=float(self.profile.b(tau, 1)),
            C=self.C, k0=self.k0, beta_param=float(beta[0]),
            phase=float(-(2 * n + 1) * self.phase_integral(tau)[0]), modes=self)


@dataclass(frozen=True)
class ContinuumWavefunction:
    """chi_n at a fixed tau, evaluable at arbitrary z."""

    n: int
    tau: float
    b: float
    b_dot: float
    C: float
    k0: float
    beta_param: float
    phase: float
    modes: InvariantModes = field(repr=False, compare=False)

    def __call__(self, z):
        return self.modes.chi(self.n, [self.tau], z)[0]

    def dzz(self, z):
        return self.modes.chi_dzz(self.n, [self.tau], z)[0]


def b_h(z, h: float):
    """(1/2) sqrt((1 + z + h)(1 - z)), zero for z <= -1-h and z >= 1."""
    z = np.asarray(z, dtype=float)
    arg = (1 + z + h) * (1 - z)
    inside = (z > -1 - h) & (z < 1)
    return np.where(inside, 0.5 * np.sqrt(np.where(inside, arg, 0.0)), 0.0)


def _support(z, h):
    return (z > -1 - h) & (z < 1 + h)


def hopping(psi, z, h: float):
    """[e^{-ih d/dz} b_h + b_h e^{ih d/dz}] psi at z, with psi clamped to [-1-h, 1+h]."""
    z = np.asarray(z, dtype=float)
    zm, zp = z - h, z + h
    left = np.where(_support(zm, h), b_h(zm, h) * psi(zm), 0.0)
    right = np.where(_support(zp, h), b_h(z, h) * psi(zp), 0.0)
    return left + right


def apply_delta_H(psi, tau: float, schedule: ControlSchedule, params: SystemParams,
                  rule: str = "subtract"):
    """Return z -> (Delta H psi)(z) for a wavefunction with ``psi(z)`` and ``psi.dzz(z)``.

    ``subtract`` is H_S - H_0 term by term; ``flipped`` flips the sign of the
    kinetic h^2/2 d^2/dz^2 piece.
    """
    if rule not in DELTAH_RULES:
        raise ValueError(f"unknown Delta H rule {rule!r}")
    w = float(schedule(tau / params.chi)) / params.chi
    h = params.h
    kin = 0.5 * h ** 2 * w * (1.0 if rule == "subtract" else -1.0)

    def delta(z):
        z = np.asarray(z, dtype=float)
        return -w * hopping(psi, z, h) + kin * np.where(_support(z, h), psi.dzz(z), 0.0)

    return delta


def _matrix_elements(modes: InvariantModes, params: SystemParams, omega_w, tau, n_modes: int,
                     n_z: int, rule: str, chunk: int = 64):
    """Per tau node: <chi_n|Delta H|chi_0> and <chi_n|dH_S/dw|chi_0> for n = 1..n_modes."""
    h = params.h
    z, wz = composite_gauss_legendre(-1 - h, 1 + h, n_z)
    bh_minus = b_h(z - h, h)[None, :]
    bh_here = b_h(z, h)[None, :]
    ok_minus = _support(z - h, h)[None, :]
    ok_plus = _support(z + h, h)[None, :]
    sign = 1.0 if rule == "subtract" else -1.0
    dh = np.empty((n_modes, tau.size), dtype=complex)
    dw = np.empty((n_modes, tau.size), dtype=complex)
    for start in range(0, tau.size, chunk):
        sl = slice(start, start + chunk)
        tc = tau[sl]
        w = omega_w[sl][:, None]
        chi0 = modes.chi(0, tc, z)
        hop = (np.where(ok_minus, bh_minus * modes.chi(0, tc, z - h), 0.0)
               + np.where(ok_plus, bh_here * modes.chi(0, tc, z + h), 0.0))
        kin = 0.5 * h ** 2 * sign * modes.chi_dzz(0, tc, z)
        delta_psi = -w * hop + w * kin
        dhs_psi = -hop
        del chi0
        for n in range(1, n_modes + 1):
            bra = np.conj(modes.chi(n, tc, z)) * wz[None, :]
            dh[n - 1, sl] = np.sum(bra * delta_psi, axis=1)
            dw[n - 1, sl] = np.sum(bra * dhs_psi, axis=1)
    return dh, dw


@dataclass(frozen=True)
class EstaCorrection:
    """lambda in rad/s together with the diagnostics that produced it."""

    lam: np.ndarray
    G: np.ndarray
    K: np.ndarray
    v: np.ndarray
    hessian: np.ndarray
    basis: np.ndarray
    tau_f: float
    chi: float
    degenerate: bool = False
    rule: str = "min-norm"
    deltah_rule: str = "subtract"
    tau_nodes: int = DEFAULT_TAU_NODES
    z_nodes: int = DEFAULT_Z_NODES

    def polynomial(self, tau):
        """P_lambda(tau) in rad/s."""
        s = np.asarray(tau, dtype=float) / self.tau_f
        return (self.lam[0] * pinned_eval(self.basis[0], s)
                + self.lam[1] * pinned_eval(self.basis[1], s))

    def report(self) -> dict:
        return {
            "lambda": [float(x) for x in self.lam],
            "G": [[float(g.real), float(g.imag)] for g in self.G],
            "K": [[[float(k.real), float(k.imag)] for k in row] for row in self.K],
            "v": [float(x) for x in self.v],
            "hessian": [[float(x) for x in row] for row in self.hessian],
            "degenerate": bool(self.degenerate),
            "plambda_rule": self.rule,
            "deltah_rule": self.deltah_rule,
            "tau_nodes": self.tau_nodes,
            "z_nodes": self.z_nodes,
        }


def solve_lambda(G, K):
    """lambda = -(|v|^2 / v^T H v) v with v = sum Re(G_n^* K_n), H_lk = Re sum (K_n^*)_k (K_n)_l.

    Returns ``(lam, v, H, degenerate)``; a vanishing curvature gives lam = 0.
    """
    G = np.atleast_1d(np.asarray(G, dtype=complex))
    K = np.atleast_2d(np.asarray(K, dtype=complex))
    if K.shape[0] != G.size or G.size < 1:
        raise ValueError("need one K vector per G value and at least one mode")
    v = np.sum(np.real(np.conj(G)[:, None] * K), axis=0)
    H = np.real(np.einsum("nk,nl->lk", np.conj(K), K))
    curvature = float(v @ H @ v)
    if abs(curvature) < DEGENERATE_CURVATURE or not np.any(v):
        return np.zeros_like(v), v, H, True
    lam = -(float(v @ v) / curvature) * v
    return lam, v, H, False


class EstaEngine:
    """G_n, K_n and lambda for the improved STA trajectory of one parameter set."""

    def __init__(self, params: SystemParams, poly_degree: int = DEFAULT_POLY_DEGREE,
                 plambda_rule: str = "min-norm", deltah_rule: str = "subtract",
                 profile: ErmakovProfile | None = None, schedule: ControlSchedule | None = None):
        if deltah_rule not in DELTAH_RULES:
            raise ValueError(f"unknown Delta H rule {deltah_rule!r}")
        self.params = params
        self.profile = profile if profile is not None else sta2_profile(params, poly_degree)
        self.schedule = schedule
        self.modes = InvariantModes(self.profile, params)
        self.plambda_rule = plambda_rule
        self.basis = correction_basis(plambda_rule)
        self.deltah_rule = deltah_rule

    def _omega_w(self, tau):
        if self.schedule is not None:
            return np.asarray(self.schedule(tau / self.params.chi), dtype=float) / self.params.chi
        return omega_from_ermakov(self.profile, self.params, tau) / self.params.chi

    def integrals(self, n_modes: int = DEFAULT_MODES, tau_nodes: int = DEFAULT_TAU_NODES,
                  z_nodes: int = DEFAULT_Z_NODES, time_unit: str = "tau"):
        """(G, K) with G shape (n_modes,) and K shape (n_modes, 2).

        ``time_unit='t'`` integrates over physical time instead of tau.
        """
        tau_f = self.params.tau_f
        tau = np.linspace(0.0, tau_f, tau_nodes)
        w = simpson_weights(tau_nodes, tau_f)
        if time_unit == "t":
            w = w / self.params.chi
        elif time_unit != "tau":
            raise ValueError("time_unit is 'tau' or 't'")
        dh, dw = _matrix_elements(self.modes, self.params, self._omega_w(tau), tau,
                                  n_modes, z_nodes, self.deltah_rule)
        f = np.array([pinned_eval(self.basis[i], tau / tau_f) for i in range(2)])
        G = dh @ w
        K = np.einsum("nt,it,t->ni", dw, f, w)
        return G, K

    def correction(self, n_modes: int = DEFAULT_MODES, tau_nodes: int = DEFAULT_TAU_NODES,
                   z_nodes: int = DEFAULT_Z_NODES, refine: bool = True,
                   rtol: float = LAMBDA_RTOL) -> EstaCorrection:
        """lambda from the quadratic model; with ``refine`` the tau grid doubles until stable."""
        G, K = self.integrals(n_modes, tau_nodes, z_nodes)
        lam, v, H, degenerate = solve_lambda(G, K)
        nodes = tau_nodes
        while refine:
            finer = 2 * nodes - 1
            if finer > MAX_TAU_NODES:
                raise ConvergenceError("eSTA time quadrature not converged",
                                       {"tau_nodes": nodes, "lambda": lam.tolist()})
            G2, K2 = self.integrals(n_modes, finer, z_nodes)
            lam2, v, H, degenerate = solve_lambda(G2, K2)
            scale = max(float(np.max(np.abs(lam2))), 1e-300)
            stable = float(np.max(np.abs(lam2 - lam))) <= rtol * scale
            G, K, lam, nodes = G2, K2, lam2, finer
            if stable or degenerate:
                break
        return EstaCorrection(lam=lam * self.params.chi, G=G, K=K, v=v, hessian=H,
                              basis=self.basis, tau_f=self.params.tau_f, chi=self.params.chi,
                              degenerate=degenerate, rule=self.plambda_rule,
                              deltah_rule=self.deltah_rule, tau_nodes=nodes, z_nodes=z_nodes)


def compute_G(n: int, schedule_sta2: ControlSchedule, profile: ErmakovProfile,
              params: SystemParams, tau_nodes: int = DEFAULT_TAU_NODES,
              z_nodes: int = DEFAULT_Z_NODES, deltah_rule: str = "subtract") -> complex:
    if n < 1:
        raise ValueError("G_n is defined for n >= 1")
    engine = EstaEngine(params, profile=profile, schedule=schedule_sta2, deltah_rule=deltah_rule)
    G, _ = engine.integrals(n, tau_nodes, z_nodes)
    return complex(G[n - 1])


def compute_K(n: int, schedule_sta2: ControlSchedule, profile: ErmakovProfile,
              params: SystemParams, tau_nodes: int = DEFAULT_TAU_NODES,
              z_nodes: int = DEFAULT_Z_NODES, plambda_rule: str = "min-norm") -> np.ndarray:
    """K_n with respect to lambda in units of chi."""
    if n < 1:
        raise ValueError("K_n is defined for n >= 1")
    engine = EstaEngine(params, profile=profile, schedule=schedule_sta2, plambda_rule=plambda_rule)
    _, K = engine.integrals(n, tau_nodes, z_nodes)
    return K[n - 1]


def esta_schedule(params: SystemParams, n_modes: int = DEFAULT_MODES,
                  poly_degree: int = DEFAULT_POLY_DEGREE, plambda_rule: str = "min-norm",
                  deltah_rule: str = "subtract", tau_nodes: int = DEFAULT_TAU_NODES,
                  z_nodes: int = DEFAULT_Z_NODES) -> ControlSchedule:
    """Omega_e = Omega_2 + P_lambda."""
    engine = EstaEngine(params, poly_degree=poly_degree, plambda_rule=plambda_rule,
                        deltah_rule=deltah_rule)
    corr = engine.correction(n_modes=n_modes, tau_nodes=tau_nodes, z_nodes=z_nodes)
    return schedule_with_correction(engine.profile, params, corr)


def schedule_with_correction(profile: ErmakovProfile, params: SystemParams,
                             corr: EstaCorrection) -> ControlSchedule:
    chi = params.chi

    def func(t):
        tau = chi * np.asarray(t, dtype=float)
        return omega_from_ermakov(profile, params, tau) + corr.polynomial(tau)

    return ControlSchedule(scheme="esta", params=params, func=func, profile=profile,
                           correction=corr)


def momentum_eigenfunction(n: int, p, tau: float, profile: ErmakovProfile,
                           params: SystemParams) -> np.ndarray:
    """Invariant eigenfunction in the momentum representation conjugate to z (hbar -> h).

    The mapping mass -> 1/N, mass * omega^2 -> Omega/chi turns H_0 into a standard
    oscillator in p.  The dynamical phase carries the same sign as the position form.
    """
    if n < 0:
        raise ValueError("mode index must be non-negative")
    modes = InvariantModes(profile, params)
    C = modes.C
    b = float(profile.b(tau))
    bd = float(profile.b(tau, 1))
    p = np.asarray(p, dtype=float)
    phase = -(2 * n + 1) * float(modes.phase_integral(tau)[0])
    norm = C ** 0.25 / math.pi ** 0.25 / math.sqrt(2.0 ** n * math.factorial(n) * b)
    gauss = np.exp(-0.5 * p ** 2 * (C / b ** 2 - 1j * bd / (2 * b)))
    return norm * np.exp(1j * phase) * gauss * hermite(n, math.sqrt(C) * p / b)


def position_from_momentum(n: int, z, tau: float, profile: ErmakovProfile,
                           params: SystemParams, n_p: int = 2 ** 12) -> np.ndarray:
    """(2 pi h)^(-1/2) int dp exp(i p z / h) chi~_n(p), by trapezoid on a wide p grid."""
    C = InvariantModes(profile, params).C
    b = float(profile.b(tau))
    half_width = 12.0 * b / math.sqrt(C)
    p = np.linspace(-half_width, half_width, n_p)
    dp = p[1] - p[0]
    chi_p = momentum_eigenfunction(n, p, tau, profile, params)
    h = params.h
    z = np.atleast_1d(np.asarray(z, dtype=float))
    kernel = np.exp(1j * np.outer(z, p) / h)
    return kernel @ chi_p * dp / math.sqrt(2 * math.pi * h)
