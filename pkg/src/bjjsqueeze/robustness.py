"""Fidelity sensitivities to systematic amplitude and timing errors, and the imperfection score."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .control import ControlSchedule
from .metrics import fidelity
from .spin_core import DickeState, SystemParams, evolve, ground_state

FD_STEP = 1e-3
FD_RTOL = 0.01
FD_ATOL = 1e-4
FD_MAX_HALVINGS = 8
ASYMMETRY_FLAG = 0.05


@dataclass(frozen=True)
class Derivative:
    value: float
    step: float
    converged: bool
    left: float
    right: float

    @property
    def asymmetric(self) -> bool:
        """One-sided estimates differing by more than 5 %."""
        scale = max(abs(self.left), abs(self.right))
        return scale > 0 and abs(self.left - self.right) > ASYMMETRY_FLAG * scale


def central_derivative(f: Callable[[float], float], f0: float | None = None,
                       step: float = FD_STEP, rtol: float = FD_RTOL, atol: float = FD_ATOL,
                       max_halvings: int = FD_MAX_HALVINGS) -> Derivative:
    """Central difference of f at 0, halving the step until two estimates agree."""
    f0 = f(0.0) if f0 is None else f0

    def estimate(d):
        fp, fm = f(d), f(-d)
        return (fp - fm) / (2 * d), (fp - f0) / d, (f0 - fm) / d

    prev, right, left = estimate(step)
    converged = False
    for _ in range(max_halvings):
        step /= 2
        cur, right, left = estimate(step)
        diff = abs(cur - prev)
        if diff <= rtol * abs(cur) or diff <= atol:
            prev = cur
            converged = True
            break
        prev = cur
    return Derivative(value=prev, step=step, converged=converged, left=left, right=right)


def scaled_schedule(schedule: ControlSchedule, delta: float) -> ControlSchedule:
    """Omega_{delta,m}(t) = (1 + delta) Omega(t)."""
    base = schedule.func
    return ControlSchedule(scheme=schedule.scheme, params=schedule.params,
                           func=lambda t: (1.0 + delta) * np.asarray(base(t), dtype=float),
                           profile=schedule.profile, correction=schedule.correction)


def shifted_schedule(schedule: ControlSchedule, delta: float) -> ControlSchedule:
    """Omega(t + t_f delta) where that time lies in [0, t_f], Omega(t) elsewhere."""
    base = schedule.func
    t_f = schedule.params.t_f

    def func(t):
        t = np.asarray(t, dtype=float)
        moved = t + t_f * delta
        inside = (moved >= 0.0) & (moved <= t_f)
        return np.where(inside, base(np.where(inside, moved, t)), base(t))

    if delta == 0.0:
        func = base
    return ControlSchedule(scheme=schedule.scheme, params=schedule.params, func=func,
                           profile=schedule.profile, correction=schedule.correction)


def imperfection(F: float, S_m: float, S_t: float) -> float:
    """sqrt((1 - F)^2 + S_m^2 + S_t^2)."""
    if not 0.0 <= F <= 1.0:
        raise ValueError("fidelity must lie in [0, 1]")
    return math.sqrt((1.0 - F) ** 2 + S_m ** 2 + S_t ** 2)


@dataclass(frozen=True)
class SensitivityReport:
    fidelity: float
    S_m: float
    S_t: float
    eta: float
    fd_step: float
    converged: bool
    timeshift_asymmetric: bool = False
    n_steps: int = 0


class _FidelityProbe:
    """Final-time fidelity for perturbed schedules on a fixed step grid."""

    def __init__(self, schedule, params, initial, target, n_steps=None):
        self.params = params
        self.schedule = schedule
        self.initial = initial if initial is not None else ground_state(params, params.omega0)
        self.target = target if target is not None else ground_state(params, params.omega_f)
        nominal = evolve(self.initial, schedule, params, [params.t_f], n_steps=n_steps)
        self.n_steps = nominal.n_steps
        self.f0 = fidelity(self.target, nominal.states[-1])

    def __call__(self, schedule) -> float:
        state = evolve(self.initial, schedule, self.params, [self.params.t_f],
                       n_steps=self.n_steps).states[-1]
        return fidelity(self.target, state)


def sensitivity_amplitude(schedule: ControlSchedule, params: SystemParams,
                          initial: DickeState | None = None, target: DickeState | None = None,
                          step: float = FD_STEP, _probe: _FidelityProbe | None = None) -> Derivative:
    """|dF/d delta| at 0 for Omega -> (1 + delta) Omega."""
    probe = _probe or _FidelityProbe(schedule, params, initial, target)
    d = central_derivative(lambda x: probe(scaled_schedule(schedule, x)), probe.f0, step)
    return Derivative(abs(d.value), d.step, d.converged, d.left, d.right)


def sensitivity_timeshift(schedule: ControlSchedule, params: SystemParams,
                          initial: DickeState | None = None, target: DickeState | None = None,
                          step: float = FD_STEP, _probe: _FidelityProbe | None = None) -> Derivative:
    """|dF/d delta| at 0 for the clamped shift t -> t + t_f delta."""
    probe = _probe or _FidelityProbe(schedule, params, initial, target)
    d = central_derivative(lambda x: probe(shifted_schedule(schedule, x)), probe.f0, step)
    return Derivative(abs(d.value), d.step, d.converged, d.left, d.right)


def sensitivity_report(schedule: ControlSchedule, params: SystemParams,
                       initial: DickeState | None = None, target: DickeState | None = None,
                       step: float = FD_STEP) -> SensitivityReport:
    probe = _FidelityProbe(schedule, params, initial, target)
    sm = sensitivity_amplitude(schedule, params, step=step, _probe=probe)
    st = sensitivity_timeshift(schedule, params, step=step, _probe=probe)
    return SensitivityReport(
        fidelity=probe.f0, S_m=sm.value, S_t=st.value,
        eta=imperfection(probe.f0, sm.value, st.value),
        fd_step=min(sm.step, st.step), converged=sm.converged and st.converged,
        timeshift_asymmetric=st.asymmetric, n_steps=probe.n_steps)
