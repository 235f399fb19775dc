"""Spin-squeezed state preparation in a bosonic Josephson junction with STA and eSTA controls."""

__version__ = "0.1.0"

from .spin_core import (  # noqa: E402
    ConvergenceError, DickeState, SystemParams, build_hamiltonian, css_state, evolve,
    expectations, ground_state, propagate,
)
from .metrics import (  # noqa: E402
    SqueezingRecord, UndefinedSqueezing, coherence, coherent_spin_squeezing, fidelity,
    max_plane_squeezing, number_squeezing, squeezing_record, to_decibels,
)
from .control import (  # noqa: E402
    ControlSchedule, adiabatic_schedule, omega_from_b, sta1_profile, sta1_schedule,
    sta2_profile, sta2_schedule, zero_schedule,
)
from .esta import EstaCorrection, EstaEngine, compute_G, compute_K, esta_schedule  # noqa: E402
from .robustness import (  # noqa: E402
    SensitivityReport, imperfection, sensitivity_amplitude, sensitivity_report,
    sensitivity_timeshift,
)
