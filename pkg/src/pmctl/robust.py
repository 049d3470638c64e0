"""Worst-case disturbance bound and steady-state speed offset under noise.

With noisy feedback the unsaturated speed error e = x2 - w_ref obeys

    de/dt = -K e + d(t),

    d = -K eps_w + eps_T + s * sum_j [ dg_j f_j + g_j ft_j + dg_j ft_j ] + s * r(x1)

where s = command / t_opt is the (bounded) scale, dg_j the waveform error caused
by angle noise, ft_j the torque-function truncation error and r the residual
torque ripple of the synthesized waveforms.  Replacing every factor by its
sup-bound gives |d| <= eta, and the comparison lemma then sandwiches

    |e(t)| <= |e(0)| exp(-K t) + (eta / K) (1 - exp(-K t)),

so the speed settles within eta / K of the reference.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

import numpy as np

from .controller import FeedbackLaw
from .model import MotorParams
from .sim import DisturbanceSpec, SimConfig, simulate_batch
from .synth import ControlSolution, torque_poly
from .trigpoly import TrigPoly, derivative, sup_bound


@dataclass(frozen=True)
class DisturbanceBounds:
    spec: DisturbanceSpec
    f_residual_bound: tuple      # per coil
    envelope: float
    K: float
    eta: float
    offset_bound: float
    terms: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "noise": self.spec.to_json(),
            "f_residual_bound": list(self.f_residual_bound),
            "envelope": self.envelope,
            "K": self.K,
            "eta": self.eta,
            "offset_bound": self.offset_bound,
            "terms": dict(self.terms),
        }


def _per_coil(value, n: int, what: str) -> np.ndarray:
    arr = np.atleast_1d(np.asarray(value, dtype=float))
    if arr.size == 1:
        arr = np.full(n, float(arr[0]))
    if arr.size != n:
        raise ValueError(f"{what} has {arr.size} entries for {n} coils")
    if np.any(arr < 0) or not np.all(np.isfinite(arr)):
        raise ValueError(f"{what} must be finite and nonnegative")
    return arr


def disturbance_bound(sol: ControlSolution, spec: DisturbanceSpec, f_residual_bound,
                      envelope: float, params: MotorParams, K: float = 1.0
                      ) -> DisturbanceBounds:
    """Sup-bound eta on |d(t)|, term by term.

    ``envelope`` bounds |K (w_ref - x2_measured) + T_in_measured| over the
    operating region (noise included); the current scale is then at most
    ``envelope / t_opt``.  Angle noise enters through the mean-value estimate
    |g(x + e) - g(x)| <= sup|g'| |e|.  Faulty coils carry no current and
    contribute nothing.
    """
    n = params.n_coils
    if not (np.isfinite(envelope) and envelope >= 0):
        raise ValueError("envelope must be finite and nonnegative")
    if not K > 0:
        raise ValueError("gain K must be positive")
    res = _per_coil(f_residual_bound, n, "f_residual_bound")
    eta_th = spec.theta_bounds(n)
    active = params.active

    g = sol.waveforms
    dg = np.array([sup_bound(derivative(g[j])) * eta_th[j] for j in range(n)])
    sup_g = np.array([sup_bound(g[j]) for j in range(n)])
    sup_f = np.array([sup_bound(params.torque_fns[j]) for j in range(n)])
    ripple = torque_poly(g, params) - TrigPoly.constant(sol.t_opt)

    scale = envelope / sol.t_opt
    terms = {
        "angle_x_residual": scale * float(np.sum((dg * res)[active])),
        "residual_x_waveform": scale * float(np.sum((res * sup_g)[active])),
        "angle_x_torque": scale * float(np.sum((dg * sup_f)[active])),
        "cancellation_residual": scale * sup_bound(ripple),
        "speed_noise": K * spec.eta_x2,
        "load_noise": spec.eta_Tin,
    }
    eta = float(sum(terms.values()))
    return DisturbanceBounds(spec=spec, f_residual_bound=tuple(res.tolist()),
                             envelope=float(envelope), K=float(K), eta=eta,
                             offset_bound=eta / K, terms=terms)


def operating_bounds(law: FeedbackLaw, spec: DisturbanceSpec, x2_0: float,
                     f_residual_bound=0.0) -> DisturbanceBounds:
    """Bounds with the envelope derived from the initial speed error.

    The speed error never leaves max(|e0|, eta/K) (from the sandwich above), so
    the measured command is bounded by
    K (max(|e0|, eta/K) + eta_x2) + |T_in| + eta_Tin; since eta is affine in
    the envelope this is solved in closed form.
    """
    K = law.K
    e0 = abs(law.omega_ref - x2_0)
    rest = K * spec.eta_x2 + abs(law.params.T_in) + spec.eta_Tin

    def bound(env):
        return disturbance_bound(law.solution, spec, f_residual_bound, env, law.params, K)

    env = K * e0 + rest
    b = bound(env)
    if b.offset_bound > e0:
        b0, b1 = bound(0.0).eta, bound(1.0).eta
        slope = b1 - b0
        if slope >= 1.0:
            raise ValueError("noise too large: no finite operating envelope exists")
        env = (b0 + rest) / (1.0 - slope)
        b = bound(env)
    return b


def truncation_residual(f_ref: TrigPoly, degree: int):
    """Truncate ``f_ref`` to ``degree`` and return ``(truncated, sup|tail|)``."""
    if degree >= f_ref.degree:
        return f_ref, 0.0
    trunc = TrigPoly(f_ref.cos[: degree + 1], f_ref.sin[:degree])
    return trunc, sup_bound(f_ref - trunc)


def gronwall_envelope(t, e0: float, K: float, eta: float) -> np.ndarray:
    """|e0| exp(-K t) + (eta / K)(1 - exp(-K t))."""
    decay = np.exp(-K * np.asarray(t, dtype=float))
    return abs(e0) * decay + (eta / K) * (1.0 - decay)


@dataclass
class OffsetReport:
    n_runs: int
    offset_bound: float
    eta: float
    steady_errors: np.ndarray        # |mean x2 - w_ref| over the steady window, per run
    steady_peak_errors: np.ndarray   # max |x2 - w_ref| over the steady window, per run
    gronwall_violation: float        # max over runs and time of (|e| - envelope)
    gronwall_tol: float
    peak_command: float              # max measured |K (w_ref - x2) + T_in|
    envelope: float
    headroom: float                  # s_max * t_opt of the law
    t_steady: float

    @property
    def max_steady_error(self) -> float:
        return float(np.max(self.steady_errors))

    @property
    def offset_ok(self) -> bool:
        return bool(np.all(self.steady_errors <= self.offset_bound))

    @property
    def gronwall_ok(self) -> bool:
        return bool(self.gronwall_violation <= self.gronwall_tol)

    @property
    def envelope_ok(self) -> bool:
        return bool(self.peak_command <= self.envelope * (1 + 1e-12))

    @property
    def unsaturated(self) -> bool:
        """The bound presumes the scale never clips."""
        return bool(self.envelope <= self.headroom)

    @property
    def passed(self) -> bool:
        return (self.offset_ok and self.gronwall_ok and self.envelope_ok
                and self.unsaturated)

    def to_json(self) -> dict:
        return {
            "n_runs": self.n_runs, "eta": self.eta, "offset_bound": self.offset_bound,
            "max_steady_error": self.max_steady_error,
            "max_steady_peak_error": float(np.max(self.steady_peak_errors)),
            "t_steady": self.t_steady,
            "gronwall_violation": self.gronwall_violation,
            "gronwall_tol": self.gronwall_tol,
            "peak_command": self.peak_command, "envelope": self.envelope,
            "offset_ok": self.offset_ok, "gronwall_ok": self.gronwall_ok,
            "headroom": self.headroom, "envelope_ok": self.envelope_ok,
            "unsaturated": self.unsaturated, "passed": self.passed,
        }


def validate_offset(plant: MotorParams, law: FeedbackLaw, bounds: DisturbanceBounds,
                    n_runs: int, config: SimConfig, steady_fraction: float = 0.25,
                    gronwall_tol: float = 1e-6, backend: str = "auto") -> OffsetReport:
    """Monte-Carlo check of the offset bound and the pointwise sandwich.

    Runs ``n_runs`` noisy closed-loop simulations (noise from ``bounds.spec``)
    and measures the speed error over the final ``steady_fraction`` of the run.
    """
    if n_runs < 1:
        raise ValueError("n_runs must be >= 1")
    if not 0 < steady_fraction <= 1:
        raise ValueError("steady_fraction must be in (0, 1]")
    cfg = replace(config, noise=bounds.spec)
    t, X, W = simulate_batch(plant, law, cfg, n_runs, backend=backend)
    e = X[:, 1, :] - law.omega_ref                        # (T, B)
    window = t >= (1.0 - steady_fraction) * t[-1]
    steady = np.abs(e[window].mean(axis=0))
    peak = np.abs(e[window]).max(axis=0)
    env = gronwall_envelope(t, law.omega_ref - config.x2_0, bounds.K, bounds.eta)
    tol = gronwall_tol * (1.0 + abs(law.omega_ref - config.x2_0))
    violation = float(np.max(np.abs(e) - env[:, None]))
    cmd = np.abs(law.K * (law.omega_ref - (X[:, 1, :] + W["x2"]))
                 + law.params.T_in + W["Tin"])
    return OffsetReport(n_runs=n_runs, offset_bound=bounds.offset_bound, eta=bounds.eta,
                        steady_errors=steady, steady_peak_errors=peak,
                        gronwall_violation=violation, gronwall_tol=tol,
                        peak_command=float(cmd.max()), envelope=bounds.envelope,
                        headroom=law.torque_headroom,
                        t_steady=float(t[window][0]))


def write_report(path, bounds: DisturbanceBounds, validation: OffsetReport | None = None):
    doc = {"bounds": bounds.to_json()}
    if validation is not None:
        doc["validation"] = validation.to_json()
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
