"""Squeezing parameters, coherence and fidelity of Dicke-basis states."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .spin_core import DickeState, expectations

JX_ZERO_TOL = 1e-12


class UndefinedSqueezing(ArithmeticError):
    """Coherent spin squeezing is undefined when <J_x> vanishes."""


@dataclass(frozen=True)
class SqueezingRecord:
    t: float
    xi_N_sq: float
    xi_S_sq_dB: float
    zeta: float
    fidelity: float
    jx_mean: float
    jz_var: float
    xi_N_max_sq: float = float("nan")

    @property
    def xi_S_sq(self) -> float:
        return 10 ** (self.xi_S_sq_dB / 10)


def number_squeezing(state: DickeState, N: int | None = None) -> float:
    """Delta J_z^2 / (N/4)."""
    e = expectations(state, N)
    return max(e.var_z, 0.0) / (state.N / 4)


def coherence(state: DickeState, N: int | None = None) -> float:
    """zeta = <2 J_x / N>."""
    return 2 * expectations(state, N).jx / state.N


def coherent_spin_squeezing(state: DickeState, N: int | None = None) -> float:
    """Wineland parameter N Delta J_z^2 / <J_x>^2."""
    e = expectations(state, N)
    if abs(e.jx) < JX_ZERO_TOL:
        raise UndefinedSqueezing("<J_x> vanishes; coherent spin squeezing undefined")
    return state.N * max(e.var_z, 0.0) / e.jx ** 2


def is_entangled(state: DickeState) -> bool:
    try:
        return coherent_spin_squeezing(state) < 1.0
    except UndefinedSqueezing:
        return False


def to_decibels(x: float) -> float:
    if not x > 0:
        raise ValueError(f"decibels need a positive value, got {x}")
    return 10.0 * math.log10(x)


def fidelity(a: DickeState, b: DickeState) -> float:
    """|<a|b>|^2."""
    if a.N != b.N:
        raise ValueError(f"dimension mismatch: N={a.N} vs N={b.N}")
    f = abs(np.vdot(a.amplitudes, b.amplitudes)) ** 2
    return float(min(max(f, 0.0), 1.0))


def yz_covariance(state: DickeState) -> np.ndarray:
    """Symmetrised 2x2 covariance of (J_y, J_z)."""
    e = expectations(state)
    return np.array([[e.var_y, e.cov_yz], [e.cov_yz, e.var_z]])


def max_plane_squeezing(state: DickeState, N: int | None = None) -> float:
    """(4/N) times the smallest variance of cos(t) J_z + sin(t) J_y over angles t."""
    if N is not None and N != state.N:
        raise ValueError("state dimension does not match N")
    cov = yz_covariance(state)
    lam_min = np.linalg.eigvalsh(cov)[0]
    return 4.0 / state.N * max(float(lam_min), 0.0)


def squeezing_record(t: float, state: DickeState, target: DickeState | None = None) -> SqueezingRecord:
    e = expectations(state)
    N = state.N
    var_z = max(e.var_z, 0.0)
    xi_n = var_z / (N / 4)
    if abs(e.jx) < JX_ZERO_TOL or var_z == 0.0:
        xi_s_db = float("nan")
    else:
        xi_s_db = to_decibels(N * var_z / e.jx ** 2)
    return SqueezingRecord(
        t=float(t), xi_N_sq=xi_n, xi_S_sq_dB=xi_s_db, zeta=2 * e.jx / N,
        fidelity=fidelity(target, state) if target is not None else float("nan"),
        jx_mean=e.jx, jz_var=var_z, xi_N_max_sq=max_plane_squeezing(state))
