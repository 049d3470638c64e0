"""Motor parameters and the full / reduced dynamical systems.

Conventions
-----------
* Torque functions ``f_j`` are inertia-normalized: they already include the
  factor 1/J, so ``dx2 = sum_j i_j f_j(x1) - T_in`` has units of rad/s^2.
  To convert a physical torque constant kt(theta) [N m / A] use f = kt / J,
  and likewise T_in = load torque [N m] / J.
* Coil dynamics keep the inductance explicit:
  ``L di_j/dt = u_j - R i_j - x2 g_j(x1)``.
* State vectors are plain arrays.  Reduced state is ``[x1, x2]``; full state
  is ``[x1, x2, i_1, ..., i_n]``.  Any trailing batch axes are carried through.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Sequence

import numpy as np

from .trigpoly import TWO_PI, PolyBank, TrigPoly, shift


@dataclass(frozen=True, eq=False)
class MotorParams:
    """Physical and electrical description of an n-phase open-winding motor."""

    torque_fns: tuple
    backemf_fns: tuple
    offsets: np.ndarray
    L: float = 0.01
    R: float = 1.0
    T_in: float = 0.0
    I_limit: float = 1.0
    V_limit: float = 1e3
    faulty: tuple = field(default=())

    def __post_init__(self):
        n = len(self.torque_fns)
        offsets = np.array(self.offsets, dtype=float).ravel()
        offsets.setflags(write=False)
        object.__setattr__(self, "offsets", offsets)
        object.__setattr__(self, "torque_fns", tuple(self.torque_fns))
        object.__setattr__(self, "backemf_fns", tuple(self.backemf_fns))
        faulty = tuple(bool(x) for x in self.faulty) or (False,) * n
        object.__setattr__(self, "faulty", faulty)

        if n < 2:
            raise ValueError("a motor needs at least 2 coils")
        if len(self.backemf_fns) != n or offsets.size != n or len(faulty) != n:
            raise ValueError("torque_fns, backemf_fns, offsets and faulty must all "
                             f"have one entry per coil ({n})")
        for name in ("L", "R", "I_limit", "V_limit"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if offsets[0] < 0 or offsets[-1] >= TWO_PI or np.any(np.diff(offsets) <= 0):
            raise ValueError("offsets must be strictly increasing in [0, 2 pi)")

    @classmethod
    def balanced(cls, torque_fn: TrigPoly, n_coils: int = 3,
                 offsets: Sequence[float] | None = None,
                 backemf_fn: TrigPoly | None = None, **kwargs) -> "MotorParams":
        """Coils share one prototype shape; coil j sees ``f(theta + phi_j)``."""
        if offsets is None:
            offsets = TWO_PI * np.arange(n_coils) / n_coils
        offsets = np.asarray(offsets, dtype=float)
        g = backemf_fn if backemf_fn is not None else TrigPoly.zero()
        return cls(torque_fns=tuple(shift(torque_fn, phi) for phi in offsets),
                   backemf_fns=tuple(shift(g, phi) for phi in offsets),
                   offsets=offsets, **kwargs)

    @property
    def n_coils(self) -> int:
        return len(self.torque_fns)

    @property
    def tau(self) -> float:
        return self.R / self.L

    @property
    def active(self) -> np.ndarray:
        return np.flatnonzero(~np.asarray(self.faulty))

    @property
    def active_mask(self) -> np.ndarray:
        return ~np.asarray(self.faulty)

    @cached_property
    def torque_bank(self) -> PolyBank:
        """Torque functions with faulty coils zeroed."""
        return PolyBank(f if ok else 0.0 * f
                        for f, ok in zip(self.torque_fns, self.active_mask))

    @cached_property
    def backemf_bank(self) -> PolyBank:
        return PolyBank(self.backemf_fns)

    def with_faulty(self, *coils: int) -> "MotorParams":
        """Copy with the given (0-based) coils marked non-conducting."""
        faulty = list(self.faulty)
        for j in coils:
            faulty[j] = True
        return replace(self, faulty=tuple(faulty))

    def to_json(self) -> dict:
        return {
            "n_coils": self.n_coils,
            "offsets": [float(x) for x in self.offsets],
            "torque_fns": [f.to_json() for f in self.torque_fns],
            "backemf_fns": [g.to_json() for g in self.backemf_fns],
            "L": float(self.L), "R": float(self.R), "T_in": float(self.T_in),
            "I_limit": float(self.I_limit), "V_limit": float(self.V_limit),
            "faulty": list(self.faulty),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "MotorParams":
        """Build from a motor JSON document.

        Either a prototype (``torque_fn`` / ``backemf_fn``) shifted by the coil
        offsets, or explicit per-coil lists (``torque_fns`` / ``backemf_fns``)
        for unbalanced machines.  ``offsets`` defaults to equal spacing.
        """
        n = int(obj["n_coils"])
        offsets = obj.get("offsets")
        offsets = (TWO_PI * np.arange(n) / n if offsets is None
                   else np.asarray(offsets, dtype=float))
        if "torque_fns" in obj:
            f = tuple(TrigPoly.from_json(x) for x in obj["torque_fns"])
        else:
            proto = TrigPoly.from_json(obj["torque_fn"])
            f = tuple(shift(proto, phi) for phi in offsets)
        if "backemf_fns" in obj:
            g = tuple(TrigPoly.from_json(x) for x in obj["backemf_fns"])
        else:
            proto = TrigPoly.from_json(obj.get("backemf_fn",
                                               {"degree": 0, "cos": [0.0], "sin": []}))
            g = tuple(shift(proto, phi) for phi in offsets)
        kwargs = {k: float(obj[k]) for k in ("L", "R", "T_in", "I_limit", "V_limit")
                  if k in obj}
        return cls(torque_fns=f, backemf_fns=g, offsets=offsets,
                   faulty=tuple(obj.get("faulty", ())), **kwargs)


def _check_len(arr, n, what):
    if np.shape(arr)[0] != n:
        raise ValueError(f"{what} has length {np.shape(arr)[0]}, expected {n} (one per coil)")


def electromagnetic_torque(x1, currents, params: MotorParams):
    """sum_j i_j f_j(x1), with faulty coils contributing nothing."""
    currents = np.asarray(currents, dtype=float)
    _check_len(currents, params.n_coils, "currents")
    return np.sum(currents * params.torque_bank(x1), axis=0)


def reduced_rhs(state, currents, params: MotorParams) -> np.ndarray:
    """Right-hand side of the 2-state system driven directly by coil currents."""
    x1, x2 = state[0], state[1]
    dx2 = electromagnetic_torque(x1, currents, params) - params.T_in
    return np.stack(np.broadcast_arrays(x2, dx2))


def full_rhs(state, voltages, params: MotorParams) -> np.ndarray:
    """Right-hand side of the (2 + n)-state system driven by coil voltages."""
    state = np.asarray(state, dtype=float)
    voltages = np.asarray(voltages, dtype=float)
    n = params.n_coils
    if state.shape[0] != n + 2:
        raise ValueError(f"full state has length {state.shape[0]}, expected {n + 2}")
    _check_len(voltages, n, "voltages")
    x1, x2, i = state[0], state[1], state[2:]
    mask = params.active_mask.reshape((-1,) + (1,) * (i.ndim - 1))
    i = np.where(mask, i, 0.0)
    dx2 = electromagnetic_torque(x1, i, params) - params.T_in
    di = (voltages - params.R * i - x2 * params.backemf_bank(x1)) / params.L
    di = np.where(mask, di, 0.0)
    return np.concatenate([np.stack(np.broadcast_arrays(x2, dx2)), di])


def subsume_backemf(u, state, params: MotorParams) -> np.ndarray:
    """Fold the back-emf into the inputs: u_j + x2 g_j(x1)."""
    u = np.asarray(u, dtype=float)
    _check_len(u, params.n_coils, "voltages")
    return u + state[1] * params.backemf_bank(state[0])


def revert_backemf(u, state, params: MotorParams) -> np.ndarray:
    """Inverse of :func:`subsume_backemf`."""
    u = np.asarray(u, dtype=float)
    _check_len(u, params.n_coils, "voltages")
    return u - state[1] * params.backemf_bank(state[0])
