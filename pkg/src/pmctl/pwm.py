"""Two-level PWM realization of a coil voltage reference.

The reference voltage (normalized by the rail ``V``) is compared with a
symmetric triangle carrier in [-1, 1]; the coil sees +V while the reference is
at or above the carrier and -V otherwise.  Switching instants are located
exactly (root refinement on each linear piece of the carrier), and the RL coil
response is propagated in closed form segment by segment, so the only error in
the filtered current is the PWM ripple itself.

For a current reference i(t) the voltage to modulate is L di/dt + R i
(back-emf assumed already folded into the reference, see
``model.subsume_backemf``).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.optimize import brentq


class UnrealizableReference(ValueError):
    """The reference asks for more than the rail voltage can deliver."""


@dataclass(frozen=True)
class PwmConfig:
    V_level: float
    carrier_freq: float
    dt: float
    duration: float

    def __post_init__(self):
        if not self.V_level > 0:
            raise ValueError("V_level must be positive")
        if not self.carrier_freq > 0:
            raise ValueError("carrier_freq must be positive")
        if not (self.dt > 0 and self.duration > 0):
            raise ValueError("dt and duration must be positive")
        if self.carrier_freq * self.dt > 0.02:
            raise ValueError("dt too coarse: need carrier_freq * dt <= 0.02")

    @property
    def period(self) -> float:
        return 1.0 / self.carrier_freq

    def grid(self) -> np.ndarray:
        n = int(round(self.duration / self.dt))
        return np.arange(n + 1) * self.dt


def max_carrier_period(ripple_target: float, L: float, V: float) -> float:
    """Longest carrier period keeping the peak ripple V/(4 L f) at a tenth of
    ``ripple_target``: period <= 0.1 * ripple_target * 4 L / V."""
    if not (ripple_target > 0 and L > 0 and V > 0):
        raise ValueError("ripple_target, L and V must be positive")
    return 0.1 * ripple_target * 4.0 * L / V


def carrier(t, freq: float):
    """Symmetric triangle in [-1, 1], -1 at t = 0, peak at half period."""
    phase = np.mod(np.asarray(t, dtype=float) * freq, 1.0)
    return 1.0 - 4.0 * np.abs(phase - 0.5)


@dataclass
class SwitchedWaveform:
    """Piecewise-constant voltage: ``levels[k]`` on [edges[k], edges[k+1])."""

    edges: np.ndarray
    levels: np.ndarray
    V_level: float

    @property
    def switch_times(self) -> np.ndarray:
        return self.edges[1:-1]

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        k = np.clip(np.searchsorted(self.edges, t, side="right") - 1,
                    0, self.levels.size - 1)
        return self.levels[k]

    def segment_mean(self, a: float, b: float) -> float:
        """Exact time average over [a, b]."""
        e = np.clip(self.edges, a, b)
        return float(np.sum(np.diff(e) * self.levels) / (b - a))


def generate_pwm(reference: Callable, cfg: PwmConfig) -> SwitchedWaveform:
    """Compare ``reference(t) / V`` with the carrier; exact switching instants.

    ``reference`` must accept arrays.  Raises :class:`UnrealizableReference`
    if |reference| exceeds V anywhere on the grid.
    """
    V = cfg.V_level
    t_grid = cfg.grid()
    ref = np.asarray(reference(t_grid), dtype=float)
    if np.any(np.abs(ref) > V * (1 + 1e-12)):
        worst = float(np.max(np.abs(ref)))
        raise UnrealizableReference(
            f"reference peaks at {worst:.6g} V but the rail is only {V:.6g} V")

    # carrier vertices split the horizon into pieces where the carrier is linear
    half = 0.5 / cfg.carrier_freq
    vertices = np.arange(0.0, cfg.duration, half)
    pts = np.union1d(t_grid, vertices)
    pts = pts[pts <= cfg.duration]

    def h(t):
        return float(reference(np.asarray([t]))[0]) / V - float(carrier(t, cfg.carrier_freq))

    hv = np.asarray(reference(pts), dtype=float) / V - carrier(pts, cfg.carrier_freq)
    on = hv >= 0
    cross = np.flatnonzero(on[:-1] != on[1:])
    switches = []
    for k in cross:
        a, b = pts[k], pts[k + 1]
        if hv[k + 1] == 0.0:
            # the comparison flips exactly at the grid point
            switches.append(b)
            continue
        switches.append(brentq(h, a, b, xtol=1e-15, rtol=4 * np.finfo(float).eps))
    edges = np.concatenate([[0.0], switches, [cfg.duration]])
    levels = np.where(np.concatenate([[on[0]], on[cross + 1]]), V, -V)
    return SwitchedWaveform(edges=edges, levels=levels.astype(float), V_level=V)


def filter_through_rl(waveform: SwitchedWaveform, L: float, R: float, i0: float,
                      t_eval) -> np.ndarray:
    """Exact current of L di/dt + R i = u(t) at ``t_eval`` (sorted)."""
    if not (L > 0 and R > 0):
        raise ValueError("L and R must be positive")
    t_eval = np.asarray(t_eval, dtype=float)
    tau = L / R
    edges, levels = waveform.edges, waveform.levels
    # current at the start of every segment
    i_start = np.empty(levels.size)
    i = float(i0)
    for k in range(levels.size):
        i_start[k] = i
        ss = levels[k] / R
        i = ss + (i - ss) * np.exp(-(edges[k + 1] - edges[k]) / tau)
    k = np.clip(np.searchsorted(edges, t_eval, side="right") - 1, 0, levels.size - 1)
    ss = levels[k] / R
    return ss + (i_start[k] - ss) * np.exp(-(t_eval - edges[k]) / tau)


@dataclass
class PwmTrace:
    t: np.ndarray
    u_switched: np.ndarray
    i_filtered: np.ndarray
    i_reference: np.ndarray
    waveform: SwitchedWaveform

    @property
    def rms_error(self) -> float:
        return float(np.sqrt(np.mean((self.i_filtered - self.i_reference) ** 2)))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "u_switched", "i_filtered", "i_reference"])
            for row in zip(self.t, self.u_switched, self.i_filtered, self.i_reference):
                w.writerow([format(v, ".12g") for v in row])


def track_current(i_ref: Callable, di_ref: Callable, L: float, R: float,
                  cfg: PwmConfig, i0: float | None = None) -> PwmTrace:
    """Modulate the voltage L di_ref/dt + R i_ref and filter it through the coil."""
    def u_ref(t):
        return L * np.asarray(di_ref(t)) + R * np.asarray(i_ref(t))

    wf = generate_pwm(u_ref, cfg)
    t = cfg.grid()
    start = float(np.asarray(i_ref(np.array([0.0])))[0]) if i0 is None else i0
    i = filter_through_rl(wf, L, R, start, t)
    return PwmTrace(t=t, u_switched=wf(t), i_filtered=i,
                    i_reference=np.asarray(i_ref(t), dtype=float), waveform=wf)
