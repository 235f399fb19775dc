"""Two-mode boson system in the Dicke basis: parameters, states, Hamiltonian and propagation.

The state of N bosons shared between two modes is expanded over the J_z
eigenbasis |m>, m = -N/2 .. N/2.  The Hamiltonian

    H / hbar = chi * J_z**2 - Omega(t) * J_x

is real symmetric tridiagonal in that basis.  All energies are stored as
angular frequencies (rad/s).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Sequence

import numba
import numpy as np
from scipy.linalg import eigh_tridiagonal

if TYPE_CHECKING:  # pragma: no cover
    from .control import ControlSchedule

# Default stepping policy of the Crank-Nicolson propagator.
MIN_STEPS = 2 ** 12
MAX_STEPS = 2 ** 20
STEP_TOLERANCE = 1e-9


class ConvergenceError(RuntimeError):
    """A numerical routine failed to reach its tolerance."""

    def __init__(self, message: str, diagnostics: dict | None = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


@dataclass(frozen=True)
class SystemParams:
    """Physical parameters of one control problem.

    ``chi``, ``omega0`` and ``omega_f`` are angular frequencies (rad/s),
    ``t_f`` is the protocol duration in seconds.
    """

    N: int
    chi: float
    omega0: float
    omega_f: float
    t_f: float

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 2 or self.N % 2:
            raise ValueError(f"particle number must be an even integer >= 2, got {self.N}")
        object.__setattr__(self, "N", int(self.N))
        for name in ("chi", "omega0", "omega_f", "t_f"):
            value = float(getattr(self, name))
            if not (math.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be positive and finite, got {value}")
            object.__setattr__(self, name, value)

    @classmethod
    def from_dimensionless(cls, N: int, lambda0: float, omega_ratio: float, tf_chi: float,
                           chi: float = 1.0) -> "SystemParams":
        """Build parameters from Lambda_0 = N chi / Omega_0, Omega_f / Omega_0 and chi * t_f."""
        omega0 = N * chi / lambda0
        return cls(N=N, chi=chi, omega0=omega0, omega_f=omega_ratio * omega0, t_f=tf_chi / chi)

    @property
    def lambda0(self) -> float:
        return self.N * self.chi / self.omega0

    @property
    def h(self) -> float:
        """Effective Planck constant 2/N of the continuum description."""
        return 2.0 / self.N

    @property
    def tau_f(self) -> float:
        return self.chi * self.t_f

    @property
    def omega_ratio(self) -> float:
        return self.omega_f / self.omega0

    def with_tf(self, t_f: float) -> "SystemParams":
        return SystemParams(self.N, self.chi, self.omega0, self.omega_f, t_f)


@dataclass(frozen=True)
class DickeState:
    """Normalised amplitude vector c_m, index 0 <-> m = -N/2."""

    amplitudes: np.ndarray = field(repr=False)

    def __post_init__(self):
        amps = np.array(self.amplitudes, dtype=complex)
        if amps.ndim != 1 or amps.size < 3 or amps.size % 2 == 0:
            raise ValueError("amplitude vector must have odd length N+1 >= 3")
        amps.setflags(write=False)
        object.__setattr__(self, "amplitudes", amps)

    @property
    def N(self) -> int:
        return self.amplitudes.size - 1

    @property
    def m(self) -> np.ndarray:
        return m_values(self.N)

    @property
    def norm(self) -> float:
        return float(np.vdot(self.amplitudes, self.amplitudes).real)

    @classmethod
    def basis(cls, N: int, m: int) -> "DickeState":
        """The J_z eigenstate |m>."""
        if not -N // 2 <= m <= N // 2:
            raise ValueError(f"m={m} outside -N/2..N/2")
        amps = np.zeros(N + 1, dtype=complex)
        amps[m + N // 2] = 1.0
        return cls(amps)

    def normalized(self) -> "DickeState":
        return DickeState(self.amplitudes / math.sqrt(self.norm))


@dataclass(frozen=True)
class TridiagonalHamiltonian:
    """H/hbar with ``diagonal[k]`` for m_k and ``offdiagonal[k]`` on the m_k <-> m_k + 1 link."""

    diagonal: np.ndarray
    offdiagonal: np.ndarray

    def to_dense(self) -> np.ndarray:
        return (np.diag(self.diagonal) + np.diag(self.offdiagonal, 1)
                + np.diag(self.offdiagonal, -1))


def m_values(N: int) -> np.ndarray:
    return np.arange(N + 1, dtype=float) - N / 2


def beta(m, N: int):
    """Ladder coefficient sqrt((N/2 + m + 1)(N/2 - m)), defined for -N/2-1 <= m <= N/2."""
    m_arr = np.asarray(m, dtype=float)
    if np.any(m_arr < -N / 2 - 1) or np.any(m_arr > N / 2):
        raise ValueError(f"m outside [-N/2-1, N/2] for N={N}")
    out = np.sqrt((N / 2 + m_arr + 1) * (N / 2 - m_arr))
    return float(out) if out.ndim == 0 else out


def ladder_coefficients(N: int) -> np.ndarray:
    """beta_m for the N links m = -N/2 .. N/2 - 1."""
    return beta(m_values(N)[:-1], N)


def build_hamiltonian(params: SystemParams, omega: float) -> TridiagonalHamiltonian:
    if not math.isfinite(omega):
        raise ValueError("omega must be finite")
    m = m_values(params.N)
    return TridiagonalHamiltonian(params.chi * m ** 2,
                                  -0.5 * omega * ladder_coefficients(params.N))


def _fix_phase(vec: np.ndarray) -> np.ndarray:
    k = int(np.argmax(np.abs(vec)))
    return vec * (abs(vec[k]) / vec[k])


def ground_state(params: SystemParams, omega: float) -> DickeState:
    """Lowest eigenvector of H(omega), largest amplitude made real positive."""
    if not omega > 0:
        raise ValueError("ground state requires omega > 0")
    ham = build_hamiltonian(params, omega)
    try:
        w, v = eigh_tridiagonal(ham.diagonal, ham.offdiagonal, select="i",
                                select_range=(0, 0), lapack_driver="stebz")
    except np.linalg.LinAlgError as exc:  # pragma: no cover - LAPACK failure
        raise ConvergenceError("tridiagonal eigensolver failed",
                               {"N": params.N, "omega": omega, "error": str(exc)}) from exc
    vec = _fix_phase(v[:, 0].astype(complex))
    return DickeState(vec / np.linalg.norm(vec))


def css_state(N: int) -> DickeState:
    """Coherent spin state along +x: c_m = 2^{-N/2} sqrt(binom(N, N/2 + m))."""
    if N < 2 or N % 2:
        raise ValueError("N must be even and >= 2")
    k = np.arange(N + 1)
    # log-binomials keep N ~ 10^3 finite
    log_binom = (math.lgamma(N + 1) - np.array([math.lgamma(i + 1) for i in k])
                 - np.array([math.lgamma(N - i + 1) for i in k]))
    amps = np.exp(0.5 * log_binom - 0.5 * N * math.log(2.0))
    return DickeState(amps / np.linalg.norm(amps))


@dataclass(frozen=True)
class SpinExpectations:
    jx: float
    jy: float
    jz: float
    jz2: float
    jy2: float
    jyz_sym: float
    jx2: float

    @property
    def var_z(self) -> float:
        return self.jz2 - self.jz ** 2

    @property
    def var_y(self) -> float:
        return self.jy2 - self.jy ** 2

    @property
    def cov_yz(self) -> float:
        return self.jyz_sym - self.jy * self.jz


def expectations(state: DickeState, N: int | None = None) -> SpinExpectations:
    """Collective-spin moments from the ladder action J_+|m> = beta_m |m+1>."""
    c = state.amplitudes
    if N is not None and N != state.N:
        raise ValueError(f"state dimension {c.size} does not match N={N}")
    N = state.N
    m = m_values(N)
    b = ladder_coefficients(N)
    # <J_+> = sum_m beta_m conj(c_{m+1}) c_m
    jp = np.sum(b * np.conj(c[1:]) * c[:-1])
    # <J_+^2>: J_+^2 |m> = beta_m beta_{m+1} |m+2>
    jp2 = np.sum(b[:-1] * b[1:] * np.conj(c[2:]) * c[:-2])
    p = np.abs(c) ** 2
    jz = float(np.sum(m * p))
    jz2 = float(np.sum(m ** 2 * p))
    j2 = N / 2 * (N / 2 + 1)
    # J_+J_- + J_-J_+ = 2(J^2 - J_z^2)
    jx = jp.real
    jy = jp.imag
    jx2 = 0.5 * (jp2.real + (j2 - jz2))
    jy2 = 0.5 * (-jp2.real + (j2 - jz2))
    # (J_y J_z + J_z J_y)/2 with J_z J_+ |m> = (m+1) beta_m |m+1>
    jyz = float(np.sum((m[:-1] + 0.5) * b * np.conj(c[1:]) * c[:-1]).imag)
    return SpinExpectations(jx=float(jx), jy=float(jy), jz=jz, jz2=jz2, jy2=float(jy2),
                            jyz_sym=jyz, jx2=float(jx2))


# ---------------------------------------------------------------------------
# propagation
# ---------------------------------------------------------------------------

@numba.njit(cache=True)
def _cn_sweep(c0, times, omega_mid, diag, off, shift, record):
    """Crank-Nicolson steps over ``times``; rows of the result are the recorded states."""
    n = c0.size
    n_rec = 0
    for k in range(record.size):
        if record[k]:
            n_rec += 1
    out = np.empty((n_rec, n), dtype=np.complex128)
    c = c0.copy()
    rhs = np.empty(n, dtype=np.complex128)
    upper = np.empty(n, dtype=np.complex128)
    r = 0
    if record[0]:
        out[r, :] = c
        r += 1
    for k in range(omega_mid.size):
        dt = times[k + 1] - times[k]
        om = omega_mid[k]
        if dt > 0.0:
            half = 0.5j * dt
            s = om * shift
            # rhs = (1 - i dt/2 H) c
            for j in range(n):
                acc = (diag[j] + s) * c[j]
                if j > 0:
                    acc += om * off[j - 1] * c[j - 1]
                if j < n - 1:
                    acc += om * off[j] * c[j + 1]
                rhs[j] = c[j] - half * acc
            # (1 + i dt/2 H) c_new = rhs, Thomas algorithm; Re(pivot) >= 1 so no pivoting needed
            piv = 1.0 + half * (diag[0] + s)
            upper[0] = half * om * off[0] / piv if n > 1 else 0.0
            rhs[0] = rhs[0] / piv
            for j in range(1, n):
                lo = half * om * off[j - 1]
                piv = 1.0 + half * (diag[j] + s) - lo * upper[j - 1]
                if j < n - 1:
                    upper[j] = half * om * off[j] / piv
                rhs[j] = (rhs[j] - lo * rhs[j - 1]) / piv
            c[n - 1] = rhs[n - 1]
            for j in range(n - 2, -1, -1):
                c[j] = rhs[j] - upper[j] * c[j + 1]
        if record[k + 1]:
            out[r, :] = c
            r += 1
    return out


@dataclass(frozen=True)
class Propagation:
    states: list
    n_steps: int
    refinement_change: float


def _grid(sample_times: np.ndarray, t_f: float, n_steps: int):
    uniform = np.linspace(0.0, t_f, n_steps + 1)
    times = np.union1d(uniform, sample_times)
    record = np.isin(times, sample_times)
    return times, record


def _sweep(c0, schedule, params, sample_times, n_steps):
    times, record = _grid(sample_times, params.t_f, n_steps)
    mid = 0.5 * (times[1:] + times[:-1])
    omega_mid = np.asarray(schedule(mid), dtype=float)
    m = m_values(params.N)
    diag = params.chi * m ** 2
    if not np.any(omega_mid):
        # Omega == 0: diagonal Hamiltonian, exact phases
        return np.array([c0 * np.exp(-1j * diag * t) for t in sample_times])
    off = -0.5 * ladder_coefficients(params.N)
    # +Omega N/2 on the diagonal is a global phase; it keeps the CN phase error small
    out = _cn_sweep(c0, times, omega_mid, diag, off, params.N / 2.0, record)
    return out


def evolve(initial: DickeState, schedule: "ControlSchedule", params: SystemParams,
           sample_times: Sequence[float], n_steps: int | None = None,
           tol: float = STEP_TOLERANCE, max_steps: int = MAX_STEPS) -> Propagation:
    """Propagate ``initial`` under H(t) = build_hamiltonian(params, schedule(t)).

    With ``n_steps`` given the grid is fixed; otherwise the uniform step count
    starts at MIN_STEPS and doubles until the final state changes by less than
    ``tol`` in fidelity between successive refinements.
    """
    if initial.N != params.N:
        raise ValueError("state dimension does not match params.N")
    ts = np.asarray(sample_times, dtype=float)
    if ts.ndim != 1 or ts.size == 0:
        raise ValueError("sample_times must be a non-empty 1-d sequence")
    if np.any(np.diff(ts) < 0) or ts[0] < 0 or ts[-1] > params.t_f * (1 + 1e-12):
        raise ValueError("sample_times must be sorted and inside [0, t_f]")
    ts = np.clip(ts, 0.0, params.t_f)
    ts_unique = np.unique(ts)
    c0 = np.asarray(initial.amplitudes, dtype=np.complex128)
    # the final time is always tracked so that refinements can be compared
    track = np.union1d(ts_unique, [params.t_f])

    def run(n):
        out = _sweep(c0, schedule, params, track, n)
        return out

    if n_steps is not None:
        out = run(int(n_steps))
        change = float("nan")
        used = int(n_steps)
    else:
        n = MIN_STEPS
        out = run(n)
        change = float("nan")
        while True:
            if 2 * n > max_steps:
                raise ConvergenceError(
                    "propagation not converged under step refinement",
                    {"n_steps": n, "last_change": change,
                     "N": params.N, "t_f": params.t_f})
            finer = run(2 * n)
            overlap = abs(np.vdot(out[-1], finer[-1])) ** 2
            change = 1.0 - overlap
            n *= 2
            out = finer
            if change < tol:
                break
        used = n
    index = {t: i for i, t in enumerate(track)}
    states = [DickeState(out[index[t]]) for t in ts]
    return Propagation(states=states, n_steps=used, refinement_change=change)


def propagate(initial: DickeState, schedule: "ControlSchedule", params: SystemParams,
              sample_times: Sequence[float], n_steps: int | None = None) -> list:
    """States at ``sample_times``; see :func:`evolve`."""
    return evolve(initial, schedule, params, sample_times, n_steps=n_steps).states
