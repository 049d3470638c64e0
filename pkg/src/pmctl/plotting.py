"""Static figures for simulation and PWM traces (Agg backend, files only)."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .model import MotorParams  # noqa: E402


def plot_trace(trace, params: MotorParams, omega_ref: float, path, title: str = "",
               zoom: float = 0.5):
    """Torque functions, coil currents (full and zoomed) and speed."""
    fig, axes = plt.subplots(2, 2, figsize=(11, 7))
    ax_f, ax_i, ax_z, ax_w = axes.ravel()

    theta = np.linspace(0, 2 * np.pi, 721)
    for j, f in enumerate(params.torque_fns):
        style = ":" if params.faulty[j] else "-"
        ax_f.plot(theta, f(theta), style, label=f"coil {j + 1}")
    ax_f.set(xlabel="rotor angle [rad]", ylabel="torque function", title="Torque functions")
    ax_f.legend(fontsize=8)

    t = trace.t
    for j in range(trace.n_coils):
        ax_i.plot(t, trace.currents[j], lw=0.8, label=f"i{j + 1}")
    ax_i.axhline(params.I_limit, color="k", ls="--", lw=0.8)
    ax_i.axhline(-params.I_limit, color="k", ls="--", lw=0.8)
    ax_i.set(xlabel="time [s]", ylabel="current [A]", title="Coil currents")
    ax_i.legend(fontsize=8, loc="upper right")

    sel = t >= t[-1] - zoom
    for j in range(trace.n_coils):
        ax_z.plot(t[sel], trace.currents[j][sel], lw=1.0)
    ax_z.set(xlabel="time [s]", ylabel="current [A]", title=f"Currents, last {zoom:g} s")

    ax_w.plot(t, trace.x2, label="speed")
    ax_w.axhline(omega_ref, color="k", ls="--", lw=0.8, label="reference")
    ax_w.set(xlabel="time [s]", ylabel="speed [rad/s]", title="Rotor speed")
    ax_w.legend(fontsize=8)

    if title:
        fig.suptitle(title)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_pwm(trace, path, window=None):
    """Switched voltage over the carrier, filtered vs reference current."""
    t = trace.t
    sel = np.ones_like(t, dtype=bool) if window is None else (t >= window[0]) & (t <= window[1])
    fig, (ax_u, ax_i) = plt.subplots(2, 1, figsize=(9, 6), sharex=True)
    ax_u.step(t[sel], trace.u_switched[sel], where="post", lw=0.6)
    ax_u.set(ylabel="coil voltage [V]", title="Two-level switched voltage")
    ax_i.plot(t[sel], trace.i_reference[sel], "k--", lw=1.0, label="reference")
    ax_i.plot(t[sel], trace.i_filtered[sel], lw=0.8, label="coil current")
    ax_i.set(xlabel="time [s]", ylabel="current [A]",
             title=f"Tracking (RMS error {trace.rms_error:.3g} A)")
    ax_i.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
