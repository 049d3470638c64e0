"""Runtime feedback laws built from a synthesized control solution.

The commanded scale is

    s = clamp((K (w_ref - x2) + T_in) / t_opt, -s_max, s_max)

and coil j receives i_j = s * g_j(x1).  While unsaturated this renders the
speed dynamics dx2/dt = K (w_ref - x2).  Designers must keep
K * max|w_ref - w| + T_in <= s_max * t_opt over the operating range, otherwise
the clamp engages and the loop leaves the linear regime (currents stay bounded
either way).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .model import MotorParams
from .synth import ControlSolution
from .trigpoly import PolyBank, derivative


@dataclass(frozen=True, eq=False)
class FeedbackLaw:
    solution: ControlSolution
    params: MotorParams
    omega_ref: float
    K: float = 1.0
    s_max: float | None = None

    def __post_init__(self):
        if self.s_max is None:
            object.__setattr__(self, "s_max", self.solution.s_max)
        if not self.K > 0:
            raise ValueError("gain K must be positive")
        if not self.s_max > 0:
            raise ValueError("s_max must be positive")
        if not self.solution.t_opt > 0:
            raise ValueError("solution has non-positive torque constant")
        if self.solution.n_coils != self.params.n_coils:
            raise ValueError("solution and motor disagree on the number of coils")

    @cached_property
    def bank(self) -> PolyBank:
        return PolyBank(self.solution.waveforms)

    @cached_property
    def dbank(self) -> PolyBank:
        return PolyBank([derivative(w) for w in self.solution.waveforms])

    @property
    def torque_headroom(self) -> float:
        """Largest |K (w_ref - w) + T_in| served without saturating."""
        return self.s_max * self.solution.t_opt

    def scale(self, x2, T_in=None):
        """Return ``(s, saturated)`` for measured speed ``x2``."""
        T = self.params.T_in if T_in is None else T_in
        raw = (self.K * (self.omega_ref - np.asarray(x2, dtype=float)) + T) / self.solution.t_opt
        s = np.clip(raw, -self.s_max, self.s_max)
        return s, np.abs(raw) > self.s_max


def _waveform_values(bank: PolyBank, x1, per_coil: bool):
    return bank.per_poly(x1) if per_coil else bank(x1)


def current_refs(law: FeedbackLaw, x1, x2, T_in=None, per_coil_angle: bool = False):
    """Coil current references; faulty coils get 0.

    With ``per_coil_angle`` the leading axis of ``x1`` indexes coils, letting each
    coil see its own (noisy) angle measurement.
    """
    s, _ = law.scale(x2, T_in)
    g = _waveform_values(law.bank, x1, per_coil_angle)
    i = s * g
    mask = law.params.active_mask.reshape((-1,) + (1,) * (i.ndim - 1))
    return np.where(mask, i, 0.0)


def voltage_refs(law: FeedbackLaw, x1, x2, T_in=None, per_coil_angle: bool = False):
    """Coil voltages u_j = L di_j/dt + R i_j + x2 g_j(x1).

    di_j/dt comes from the chain rule with dx1/dt = x2 and the linearized
    dx2/dt = K (w_ref - x2); in saturation the scale is constant.
    """
    p = law.params
    x2 = np.asarray(x2, dtype=float)
    s, sat = law.scale(x2, T_in)
    ds = np.where(sat, 0.0, -(law.K / law.solution.t_opt) * law.K * (law.omega_ref - x2))
    g = _waveform_values(law.bank, x1, per_coil_angle)
    dg = _waveform_values(law.dbank, x1, per_coil_angle)
    emf = _waveform_values(p.backemf_bank, x1, per_coil_angle)
    di = ds * g + s * dg * x2
    u = p.L * di + p.R * s * g + x2 * emf
    mask = p.active_mask.reshape((-1,) + (1,) * (u.ndim - 1))
    return np.where(mask, u, 0.0)
