"""Fixed-step closed-loop simulation.

Measurement noise is sampled once per integration step and held over the four
RK4 stages (zero-order hold), so the same seed always reproduces the same trace.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .controller import FeedbackLaw, current_refs, voltage_refs
from .model import MotorParams, full_rhs, reduced_rhs
from .trigpoly import derivative


class IntegrationError(RuntimeError):
    def __init__(self, t: float, message: str):
        super().__init__(message)
        self.t = t

    def __reduce__(self):
        return type(self), (self.t, str(self))


@dataclass(frozen=True)
class DisturbanceSpec:
    """Bounds of uniform noise on the feedback signals.

    ``eta_theta`` is per coil (a scalar applies to every coil): the angle fed to
    coil j's waveform is off by at most that much.
    """

    eta_theta: float | tuple = 0.0
    eta_x2: float = 0.0
    eta_Tin: float = 0.0

    def __post_init__(self):
        th = np.atleast_1d(np.asarray(self.eta_theta, dtype=float))
        if np.any(th < 0) or self.eta_x2 < 0 or self.eta_Tin < 0:
            raise ValueError("noise bounds must be nonnegative")

    def theta_bounds(self, n_coils: int) -> np.ndarray:
        th = np.atleast_1d(np.asarray(self.eta_theta, dtype=float))
        if th.size == 1:
            return np.full(n_coils, float(th[0]))
        if th.size != n_coils:
            raise ValueError(f"eta_theta has {th.size} entries for {n_coils} coils")
        return th

    def scaled(self, factor: float) -> "DisturbanceSpec":
        th = np.atleast_1d(np.asarray(self.eta_theta, dtype=float)) * factor
        return DisturbanceSpec(tuple(th.tolist()) if th.size > 1 else float(th[0]),
                               self.eta_x2 * factor, self.eta_Tin * factor)

    def to_json(self) -> dict:
        th = np.atleast_1d(np.asarray(self.eta_theta, dtype=float))
        return {"eta_theta": th.tolist() if th.size > 1 else float(th[0]),
                "eta_x2": float(self.eta_x2), "eta_Tin": float(self.eta_Tin)}


@dataclass(frozen=True)
class SimConfig:
    dt: float = 1e-4
    t_end: float = 20.0
    x1_0: float = 0.0
    x2_0: float = 0.0
    mode: str = "reduced"
    noise: DisturbanceSpec | None = None
    seed: int = 0
    i0: tuple | None = None
    log_every: int = 1

    def __post_init__(self):
        if not 0 < self.dt <= 1e-3:
            raise ValueError("dt must be in (0, 1e-3]")
        if not self.t_end > 0:
            raise ValueError("t_end must be positive")
        if self.mode not in ("reduced", "full"):
            raise ValueError("mode must be 'reduced' or 'full'")
        if self.log_every < 1:
            raise ValueError("log_every must be >= 1")


def integrate(rhs: Callable, x0, dt: float, t_end: float,
              inputs: Callable | None = None, log_every: int = 1):
    """Classical fixed-step RK4.

    ``rhs(t, x)``, or ``rhs(t, x, w)`` when ``inputs`` is given; ``inputs(k)``
    is called once per step, in order, and its value is held over step k.
    Returns ``(t, X)`` or ``(t, X, W)`` with W the inputs at the logged points.
    """
    x = np.array(x0, dtype=float)
    n_steps = int(round(t_end / dt))
    n_log = n_steps // log_every + 1
    t_log = np.empty(n_log)
    X = np.empty((n_log,) + x.shape)
    W = [] if inputs is not None else None
    j = 0
    for k in range(n_steps + 1):
        t = k * dt
        args = () if inputs is None else (inputs(k),)
        if k % log_every == 0:
            t_log[j] = t
            X[j] = x
            if W is not None:
                W.append(args[0])
            j += 1
        if k == n_steps:
            break
        k1 = rhs(t, x, *args)
        k2 = rhs(t + 0.5 * dt, x + 0.5 * dt * k1, *args)
        k3 = rhs(t + 0.5 * dt, x + 0.5 * dt * k2, *args)
        k4 = rhs(t + dt, x + dt * k3, *args)
        x = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(x)):
            raise IntegrationError(t + dt, f"non-finite state at t = {t + dt:.6g} s")
    t_log, X = t_log[:j], X[:j]
    return (t_log, X) if W is None else (t_log, X, W)


@dataclass
class SimTrace:
    t: np.ndarray
    x1: np.ndarray
    x2: np.ndarray
    currents: np.ndarray        # (n_coils, T)
    voltages: np.ndarray        # (n_coils, T)
    noise: dict = field(default_factory=dict)   # theta (n, T), x2 (T,), Tin (T,)

    @property
    def n_coils(self) -> int:
        return self.currents.shape[0]

    def columns(self):
        n = self.n_coils
        names = (["t", "x1", "x2"] + [f"i_{j + 1}" for j in range(n)]
                 + [f"u_{j + 1}" for j in range(n)]
                 + [f"n_theta_{j + 1}" for j in range(n)] + ["n_x2", "n_Tin"])
        data = np.column_stack([self.t, self.x1, self.x2, self.currents.T,
                                self.voltages.T, self.noise["theta"].T,
                                self.noise["x2"], self.noise["Tin"]])
        return names, data

    def to_csv(self, path) -> None:
        names, data = self.columns()
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(names)
            for row in data:
                w.writerow([format(v, ".12g") for v in row])


def _noise_sampler(noise: DisturbanceSpec | None, n: int, batch: int, seed: int):
    """Per-step sampler; ``chunk(m)`` draws m consecutive steps at once.

    Both forms consume the generator identically, so a chunked run and a
    step-by-step run with the same seed see the same noise.
    """
    rng = np.random.default_rng(seed)
    if noise is None:
        scale = np.zeros((n + 2, 1))
    else:
        scale = np.concatenate([noise.theta_bounds(n),
                                [noise.eta_x2, noise.eta_Tin]])[:, None]

    def chunk(m):
        if noise is None:
            return np.zeros((m, n + 2, batch))
        return rng.uniform(-1.0, 1.0, size=(m, n + 2, batch)) * scale

    def sample(k):
        u = chunk(1)[0]
        return u[:n], u[n], u[n + 1]
    return sample, chunk


def _initial_state(plant: MotorParams, law: FeedbackLaw, config: SimConfig, n_runs: int):
    if config.mode == "reduced":
        return np.array([[config.x1_0], [config.x2_0]]) * np.ones((2, n_runs))
    if config.i0 is not None:
        i0 = np.asarray(config.i0, dtype=float)
        if i0.shape != (plant.n_coils,):
            raise ValueError(f"i0 must have one entry per coil ({plant.n_coils})")
    else:
        i0 = current_refs(law, config.x1_0, config.x2_0)
    x0 = np.concatenate([[config.x1_0, config.x2_0], i0])[:, None] * np.ones((1, n_runs))
    x0[2:][~plant.active_mask] = 0.0
    return x0


def _pack_noise(W, n):
    return {"theta": np.stack([w[0] for w in W]),          # (T, n, B)
            "x2": np.stack([w[1] for w in W]),             # (T, B)
            "Tin": np.stack([w[2] for w in W])}


def _batch_numpy(plant, law, config, x0, sample):
    T_in = law.params.T_in

    def measured(x, w):
        eth, ew, eT = w
        return x[0][None, :] + eth, x[1] + ew, T_in + eT

    if config.mode == "reduced":
        def rhs(t, x, w):
            th, w2, Tm = measured(x, w)
            return reduced_rhs(x, current_refs(law, th, w2, Tm, per_coil_angle=True), plant)
    else:
        def rhs(t, x, w):
            th, w2, Tm = measured(x, w)
            return full_rhs(x, voltage_refs(law, th, w2, Tm, per_coil_angle=True), plant)

    t, X, W = integrate(rhs, x0, config.dt, config.t_end, inputs=sample,
                        log_every=config.log_every)
    return t, X, _pack_noise(W, plant.n_coils)


def _batch_compiled(plant, law, config, x0, chunk):
    from . import _kernel as kern

    n = plant.n_coils
    model = law.params
    D = max(law.bank.degree, model.backemf_bank.degree,
            plant.torque_bank.degree, plant.backemf_bank.degree)
    waves = law.solution.waveforms
    law_c = np.stack([kern.coef_matrix(waves, D),
                      kern.coef_matrix([derivative(w) for w in waves], D),
                      kern.coef_matrix(model.backemf_fns, D)])
    plant_c = np.stack([kern.coef_matrix(plant.torque_fns, D),
                        kern.coef_matrix(plant.backemf_fns, D)])
    p = np.array([law.K, law.omega_ref, model.T_in, law.solution.t_opt, law.s_max,
                  model.L, model.R, plant.L, plant.R, plant.T_in], dtype=float)

    dt, every = config.dt, config.log_every
    n_steps = int(round(config.t_end / dt))
    size = max(1, 4096 // every) * every
    x = np.ascontiguousarray(x0, dtype=float)
    Xs, Ws = [], []
    done = 0
    while done < n_steps:
        m = min(size, n_steps - done)
        w = chunk(m)
        out = np.empty(((m - 1) // every + 1,) + x.shape)
        fail = kern.rk4_chunk(x, w, dt, config.mode == "full", law_c,
                              model.active_mask, plant_c, plant.active_mask, p,
                              every, out)
        if fail >= 0:
            t_fail = (done + fail + 1) * dt
            raise IntegrationError(t_fail, f"non-finite state at t = {t_fail:.6g} s")
        Xs.append(out)
        Ws.append(w[::every])
        done += m
    if n_steps % every == 0:
        Xs.append(x[None].copy())
        Ws.append(chunk(1))
    X = np.concatenate(Xs)
    W = np.concatenate(Ws)
    t = np.arange(X.shape[0]) * (every * dt)
    return t, X, {"theta": W[:, :n], "x2": W[:, n], "Tin": W[:, n + 1]}


def _has_compiler() -> bool:
    try:
        import numba  # noqa: F401
    except ImportError:
        return False
    return True


def simulate_batch(plant: MotorParams, law: FeedbackLaw, config: SimConfig,
                   n_runs: int = 1, backend: str = "auto"):
    """Integrate ``n_runs`` independent noisy runs side by side.

    ``plant`` is the true motor (it may differ from ``law.params``, e.g. by
    torque-function truncation error or coil faults).  Returns ``(t, X, W)``
    where X has shape (T, state_dim, n_runs) and W holds the injected noise:
    ``theta`` (T, n, n_runs), ``x2`` and ``Tin`` (T, n_runs).

    ``backend`` is ``"numpy"`` (reference, composed from the public model and
    controller functions), ``"compiled"`` (numba kernel, same arithmetic) or
    ``"auto"`` (compiled when numba is importable).
    """
    if backend not in ("auto", "numpy", "compiled"):
        raise ValueError("backend must be 'auto', 'numpy' or 'compiled'")
    if law.params.n_coils != plant.n_coils:
        raise ValueError("plant and controller disagree on the number of coils")
    x0 = _initial_state(plant, law, config, n_runs)
    sample, chunk = _noise_sampler(config.noise, plant.n_coils, n_runs, config.seed)
    if backend == "numpy" or (backend == "auto" and not _has_compiler()):
        return _batch_numpy(plant, law, config, x0, sample)
    return _batch_compiled(plant, law, config, x0, chunk)


def run_closed_loop(plant: MotorParams, law: FeedbackLaw, config: SimConfig,
                    backend: str = "auto") -> SimTrace:
    """Single closed-loop run with currents, voltages and noise logged."""
    t, X, W = simulate_batch(plant, law, config, 1, backend=backend)
    X = X[..., 0]
    eth = W["theta"][:, :, 0].T                            # (n, T)
    ew = W["x2"][:, 0]
    eT = W["Tin"][:, 0]
    x1, x2 = X[:, 0], X[:, 1]
    th = x1[None, :] + eth
    Tm = law.params.T_in + eT
    u = voltage_refs(law, th, x2 + ew, Tm, per_coil_angle=True)
    if config.mode == "reduced":
        i = current_refs(law, th, x2 + ew, Tm, per_coil_angle=True)
        i = np.where(plant.active_mask[:, None], i, 0.0)
    else:
        i = X[:, 2:].T
    u = np.where(plant.active_mask[:, None], u, 0.0)
    return SimTrace(t, x1, x2, i, u, {"theta": eth, "x2": ew, "Tin": eT})


def response_time(trace, omega_ref: float, band_fraction: float = 0.02) -> float:
    """First time after which speed stays within the band; ``inf`` if never.

    The band is ``band_fraction * |omega_ref - x2(0)|``.
    """
    t, x2 = np.asarray(trace.t), np.asarray(trace.x2)
    if t.size == 0:
        raise ValueError("empty trace")
    tol = band_fraction * abs(omega_ref - x2[0])
    outside = np.abs(x2 - omega_ref) > tol
    if not outside.any():
        return 0.0
    last = int(np.flatnonzero(outside)[-1])
    if last == t.size - 1:
        return float("inf")
    return float(t[last + 1])
