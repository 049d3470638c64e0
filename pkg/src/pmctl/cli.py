"""Command-line entry point: ``pmctl {synth,simulate,robust,pwm,ident}``.

Artifacts are JSON (controller, reports) and CSV (time series).  Exit codes:
0 success, 2 infeasible, 3 validation-gate or solver failure, 4 I/O / schema.
Failures print one JSON object ``{"error": ..., "message": ...}`` on stderr.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import warnings
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import robust as rb
from .config import ConfigError, ProjectConfig
from .controller import FeedbackLaw
from .model import MotorParams
from .pwm import PwmConfig, UnrealizableReference, track_current
from .scenarios import ALL_SCENARIOS, scenario_motor
from .sim import IntegrationError, response_time, run_closed_loop
from .synth import (ControlSolution, InfeasibleError, SolverError, synthesize,
                    verify_solution)
from .trigpoly import InsufficientCoverageError, derivative, fit_fourier

EXIT_OK, EXIT_INFEASIBLE, EXIT_GATE, EXIT_IO = 0, 2, 3, 4


class GateError(RuntimeError):
    """A post-hoc validation gate failed."""

    def __init__(self, gate: str, message: str, detail: dict | None = None):
        super().__init__(message)
        self.gate = gate
        self.detail = detail or {}

    def __reduce__(self):
        return type(self), (self.gate, str(self), self.detail)


def _dump(obj, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _emit(obj) -> None:
    print(json.dumps(obj, sort_keys=True))


def synthesize_checked(params: MotorParams, cfg: ProjectConfig,
                       solver_mode: str | None = None) -> ControlSolution:
    """Synthesize, then re-audit with :func:`verify_solution`; raise on failure."""
    with warnings.catch_warnings():
        # solver chatter would corrupt the machine-readable stderr channel
        warnings.simplefilter("ignore")
        sol = synthesize(params, M_ctrl=cfg.M_ctrl, s_max=cfg.s_max,
                         options=cfg.synth_options(solver_mode))
    report = verify_solution(sol, params)
    if not report.passed:
        raise GateError("verify", "synthesized waveforms failed the residual/bound audit",
                        report.to_json())
    return sol


def _load_controller(path: Path) -> ControlSolution:
    try:
        return ControlSolution.from_json(json.loads(path.read_text()))
    except OSError as exc:
        raise ConfigError(f"cannot read controller {path}: {exc}") from exc
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"controller {path} is malformed: {exc}") from exc


def _controller_for(args, cfg: ProjectConfig) -> ControlSolution:
    path = Path(args.controller) if args.controller else Path(args.out_dir) / "controller.json"
    if path.exists() or args.controller:
        return _load_controller(path)
    return synthesize_checked(cfg.motor(), cfg, args.solver)


# ---------------------------------------------------------------------------
# synth

def cmd_synth(args) -> int:
    cfg = ProjectConfig.load(args.config)
    params = cfg.motor()
    sol = synthesize_checked(params, cfg, args.solver)
    out = Path(args.out_dir) / "controller.json"
    _dump(sol.to_json(), out)
    _emit({"controller": str(out), "t_opt": sol.t_opt, "M_ctrl": sol.M_ctrl,
           "status": sol.status, "harmonic_residual": sol.residuals.harmonic_residual,
           "bound_peak": sol.residuals.bound_peak})
    return EXIT_OK


# ---------------------------------------------------------------------------
# simulate

def _scenario_slug(name: str) -> str:
    return name.replace(":", "")


def simulate_scenario(cfg_raw: dict, sol_json: dict, scenario: str, seed, out_dir: str,
                      plots: bool, solver_mode, csv_name: str) -> dict:
    """Run one scenario; module-level so it can execute in a worker process."""
    cfg = ProjectConfig.from_dict(cfg_raw)
    sol = ControlSolution.from_json(sol_json)
    plant = scenario_motor(scenario, cfg.motor())
    resynth = sol.motor != plant.to_json()
    if resynth:
        sol = synthesize_checked(plant, cfg, solver_mode)
    law = FeedbackLaw(sol, plant, cfg.omega_ref, K=cfg.K)
    sim_cfg = cfg.sim_config(seed)
    trace = run_closed_loop(plant, law, sim_cfg)
    out = Path(out_dir) / csv_name
    out.parent.mkdir(parents=True, exist_ok=True)
    trace.to_csv(out)
    summary = {
        "scenario": scenario, "csv": str(out), "t_opt": sol.t_opt,
        "resynthesized": resynth,
        "response_time": response_time(trace, cfg.omega_ref),
        "peak_current": float(np.max(np.abs(trace.currents))),
        "I_limit": plant.I_limit, "final_speed": float(trace.x2[-1]),
    }
    if plots:
        from .plotting import plot_trace
        png = out.with_suffix(".png")
        plot_trace(trace, plant, cfg.omega_ref, png, title=scenario)
        summary["plot"] = str(png)
    return summary


def cmd_simulate(args) -> int:
    cfg = ProjectConfig.load(args.config)
    sol = _controller_for(args, cfg)
    if args.all_scenarios:
        names = list(ALL_SCENARIOS)
        jobs = [(cfg.raw, sol.to_json(), n, args.seed, args.out_dir, args.plots,
                 args.solver, f"trace_{_scenario_slug(n)}.csv") for n in names]
        with ProcessPoolExecutor() as pool:
            results = list(pool.map(simulate_scenario, *zip(*jobs)))
        _dump(results, Path(args.out_dir) / "scenarios.json")
    else:
        results = [simulate_scenario(cfg.raw, sol.to_json(), args.scenario, args.seed,
                                     args.out_dir, args.plots, args.solver, "trace.csv")]
    for r in results:
        _emit(r)
    return EXIT_OK


# ---------------------------------------------------------------------------
# robust

def cmd_robust(args) -> int:
    cfg = ProjectConfig.load(args.config)
    sol = _controller_for(args, cfg)
    params = MotorParams.from_json(sol.motor) if sol.motor else cfg.motor()
    law = FeedbackLaw(sol, params, cfg.omega_ref, K=cfg.K)
    r = cfg.section("robust")
    spec = cfg.disturbance()
    f_res = r.get("f_residual_bound", 0.0)
    sim_cfg = cfg.sim_config(args.seed)
    if "envelope" in r:
        bounds = rb.disturbance_bound(sol, spec, f_res, float(r["envelope"]), params, cfg.K)
    else:
        bounds = rb.operating_bounds(law, spec, sim_cfg.x2_0, f_res)

    n_runs = args.validate if args.validate is not None else r.get("validate_runs")
    report = None
    if n_runs:
        from dataclasses import replace
        v_cfg = replace(sim_cfg, dt=float(r.get("validate_dt", 1e-3)), log_every=1)
        report = rb.validate_offset(params, law, bounds, int(n_runs), v_cfg)
    out = Path(args.out_dir) / "robust_report.json"
    out.parent.mkdir(parents=True, exist_ok=True)
    rb.write_report(out, bounds, report)
    summary = {"report": str(out), "eta": bounds.eta, "offset_bound": bounds.offset_bound}
    if report is not None:
        summary.update(validated_runs=report.n_runs, passed=report.passed,
                       max_steady_error=report.max_steady_error)
    _emit(summary)
    if report is not None and not report.passed:
        raise GateError("robust", "Monte-Carlo validation violated the offset bound",
                        report.to_json())
    return EXIT_OK


# ---------------------------------------------------------------------------
# pwm

def _pwm_reference(p: dict, args, cfg: ProjectConfig, params: MotorParams):
    """Current reference (and its derivative) selected by ``pwm.reference``."""
    ref = p.get("reference", {"type": "controller"})
    kind = ref["type"]
    if kind == "constant":
        c = float(ref.get("current", 0.0))
        return (lambda t: np.full(np.shape(t), c)), (lambda t: np.zeros(np.shape(t))), {}
    if kind == "sine":
        a, w = float(ref.get("amplitude", 1.0)), 2 * np.pi * float(ref.get("freq", 1.0))
        return ((lambda t: a * np.sin(w * np.asarray(t))),
                (lambda t: a * w * np.cos(w * np.asarray(t))), {})
    sol = _controller_for(args, cfg)
    law = FeedbackLaw(sol, params, cfg.omega_ref, K=cfg.K)
    coil = int(p.get("coil", 1)) - 1
    if not 0 <= coil < params.n_coils:
        raise ConfigError(f"config.pwm.coil: {coil + 1} out of range 1..{params.n_coils}")
    omega = float(p.get("omega", cfg.omega_ref))
    scale = float(p["scale"]) if "scale" in p else float(law.scale(omega)[0])
    g = sol.waveforms[coil]
    dg = derivative(g)

    def i_ref(t):
        return scale * g(omega * np.asarray(t))

    def di_ref(t):
        return scale * omega * dg(omega * np.asarray(t))
    return i_ref, di_ref, {"coil": coil + 1, "scale": scale, "omega": omega}


def cmd_pwm(args) -> int:
    cfg = ProjectConfig.load(args.config)
    if "pwm" not in cfg.raw:
        raise ConfigError("config.pwm: section required for the pwm command")
    params = cfg.motor()
    p = cfg.section("pwm")
    i_ref, di_ref, info = _pwm_reference(p, args, cfg, params)
    freq = float(p["carrier_freq"])
    pwm_cfg = PwmConfig(V_level=float(p["V_level"]), carrier_freq=freq,
                        dt=float(p.get("dt", 0.02 / freq)),
                        duration=float(p.get("duration", 0.1)))
    trace = track_current(i_ref, di_ref, params.L, params.R, pwm_cfg)
    out = Path(args.out_dir) / "pwm.csv"
    out.parent.mkdir(parents=True, exist_ok=True)
    trace.to_csv(out)
    summary = {"csv": str(out), "rms_error": trace.rms_error, "carrier_freq": freq,
               "switches": int(trace.waveform.switch_times.size), **info}
    if args.plots:
        from .plotting import plot_pwm
        png = out.with_suffix(".png")
        plot_pwm(trace, png)
        summary["plot"] = str(png)
    _emit(summary)
    return EXIT_OK


# ---------------------------------------------------------------------------
# ident

def _read_samples(path: Path):
    try:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise ConfigError(f"cannot read samples {path}: {exc}") from exc
    if not rows:
        raise ConfigError(f"samples {path} is empty")
    header = [h.strip().lower() for h in rows[0]]
    try:
        float(header[0])
        body, ti, vi = rows, 0, 1
    except ValueError:
        body = rows[1:]
        ti = header.index("theta") if "theta" in header else 0
        vi = header.index("value") if "value" in header else 1
    try:
        data = np.array([[float(r[ti]), float(r[vi])] for r in body if r])
    except (ValueError, IndexError) as exc:
        raise ConfigError(f"samples {path}: non-numeric or short row ({exc})") from exc
    if data.size == 0:
        raise ConfigError(f"samples {path} has no data rows")
    return data[:, 0], data[:, 1]


def cmd_ident(args) -> int:
    theta, values = _read_samples(Path(args.samples))
    poly = fit_fourier(theta, values, args.degree)
    resid = values - poly(theta)
    out = Path(args.out) if args.out else Path(args.out_dir) / "fitted.json"
    _dump(poly.to_json(), out)
    _emit({"fitted": str(out), "degree": args.degree, "n_samples": int(theta.size),
           "rms_residual": float(np.sqrt(np.mean(resid ** 2)))})
    return EXIT_OK


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out-dir", default=".", help="directory for artifacts")
    common.add_argument("--plots", action="store_true", help="also write PNG figures")
    common.add_argument("--solver", choices=["sdp", "sampled"], default=None,
                        help="override synthesis.solver")
    common.add_argument("--seed", type=int, default=None, help="override sim.seed")

    with_cfg = argparse.ArgumentParser(add_help=False, parents=[common])
    with_cfg.add_argument("--config", required=True, help="project config JSON")
    with_cfg.add_argument("--controller", default=None,
                          help="controller.json (default: <out-dir>/controller.json, "
                               "synthesized on the fly if absent)")

    ap = argparse.ArgumentParser(prog="pmctl", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", parents=[with_cfg], help="synthesize controller.json")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("simulate", parents=[with_cfg], help="closed-loop trace CSV")
    p.add_argument("--scenario", default="normal",
                   help="normal | faulty:j | unbalanced | fivephase | custom")
    p.add_argument("--all-scenarios", action="store_true",
                   help="run normal, faulty:3, unbalanced, fivephase in parallel")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("robust", parents=[with_cfg], help="disturbance bound report")
    p.add_argument("--validate", type=int, default=None, metavar="N",
                   help="Monte-Carlo check with N noisy runs")
    p.set_defaults(func=cmd_robust)

    p = sub.add_parser("pwm", parents=[with_cfg], help="switched-voltage realization CSV")
    p.set_defaults(func=cmd_pwm)

    p = sub.add_parser("ident", parents=[common], help="fit a torque function to samples")
    p.add_argument("samples", help="CSV with theta,value columns")
    p.add_argument("--degree", type=int, required=True)
    p.add_argument("--out", default=None, help="output JSON (default <out-dir>/fitted.json)")
    p.set_defaults(func=cmd_ident)
    return ap


def _fail(code: int, kind: str, message: str, **extra) -> int:
    print(json.dumps({"error": kind, "message": message, "exit_code": code, **extra},
                     sort_keys=True), file=sys.stderr)
    return code


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except InfeasibleError as exc:
        return _fail(EXIT_INFEASIBLE, "infeasible", str(exc),
                     constraint_class=exc.constraint_class)
    except UnrealizableReference as exc:
        return _fail(EXIT_INFEASIBLE, "unrealizable", str(exc))
    except InsufficientCoverageError as exc:
        return _fail(EXIT_INFEASIBLE, "insufficient_coverage", str(exc))
    except GateError as exc:
        return _fail(EXIT_GATE, "gate_failed", str(exc), gate=exc.gate, detail=exc.detail)
    except SolverError as exc:
        return _fail(EXIT_GATE, "solver_failed", str(exc), status=exc.status)
    except IntegrationError as exc:
        return _fail(EXIT_GATE, "integration_failed", str(exc), t=exc.t)
    except (ConfigError, OSError) as exc:
        return _fail(EXIT_IO, "io_or_schema", str(exc))
    except ValueError as exc:
        return _fail(EXIT_IO, "invalid_input", str(exc))


if __name__ == "__main__":
    sys.exit(main())
