"""Project configuration: one JSON document per experiment.

Units: angles in rad, speeds in rad/s, time in s, currents in A, voltages in V,
inductance in H, resistance in ohm.  Torque functions and T_in are normalized
by the rotor inertia (rad/s^2 per A and rad/s^2).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import jsonschema

from .model import MotorParams
from .sim import DisturbanceSpec, SimConfig
from .synth import SynthOptions, VoltageEnvelope

_NUM = {"type": "number"}
_POS = {"type": "number", "exclusiveMinimum": 0}
_NONNEG = {"type": "number", "minimum": 0}
_NONNEG_OR_LIST = {"oneOf": [_NONNEG, {"type": "array", "items": _NONNEG, "minItems": 1}]}

_TRIG = {
    "type": "object",
    "required": ["degree", "cos", "sin"],
    "additionalProperties": False,
    "properties": {
        "degree": {"type": "integer", "minimum": 0},
        "cos": {"type": "array", "items": _NUM, "minItems": 1},
        "sin": {"type": "array", "items": _NUM},
    },
}

SCHEMA = {
    "type": "object",
    "required": ["motor"],
    "additionalProperties": False,
    "properties": {
        "motor": {
            "type": "object",
            "required": ["n_coils"],
            "additionalProperties": False,
            "properties": {
                "n_coils": {"type": "integer", "minimum": 2},
                "offsets": {"type": "array", "items": _NUM},
                "torque_fn": _TRIG,
                "torque_fns": {"type": "array", "items": _TRIG},
                "backemf_fn": _TRIG,
                "backemf_fns": {"type": "array", "items": _TRIG},
                "L": _POS, "R": _POS, "T_in": _NUM,
                "I_limit": _POS, "V_limit": _POS,
                "faulty": {"type": "array", "items": {"type": "boolean"}},
            },
            "oneOf": [{"required": ["torque_fn"]}, {"required": ["torque_fns"]}],
        },
        "synthesis": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "M_ctrl": {"type": "integer", "minimum": 1},
                "s_max": _POS,
                "solver": {"enum": ["sdp", "sampled"]},
                "conic_solver": {"type": "string"},
                "voltage_constraints": {"type": "boolean"},
                "omega_range": {"type": "array", "items": _NUM,
                                "minItems": 2, "maxItems": 2},
            },
        },
        "control": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"omega_ref": _NUM, "K": _POS},
        },
        "sim": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "dt": {"type": "number", "exclusiveMinimum": 0, "maximum": 1e-3},
                "t_end": _POS, "x1_0": _NUM, "x2_0": _NUM,
                "mode": {"enum": ["reduced", "full"]},
                "seed": {"type": "integer", "minimum": 0},
                "log_every": {"type": "integer", "minimum": 1},
                "noise": {"type": "boolean"},
            },
        },
        "robust": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "eta_theta": _NONNEG_OR_LIST,
                "eta_x2": _NONNEG, "eta_Tin": _NONNEG,
                "f_residual_bound": _NONNEG_OR_LIST,
                "envelope": _NONNEG,
                "validate_runs": {"type": "integer", "minimum": 1},
                "validate_dt": {"type": "number", "exclusiveMinimum": 0, "maximum": 1e-3},
            },
        },
        "pwm": {
            "type": "object",
            "required": ["V_level", "carrier_freq"],
            "additionalProperties": False,
            "properties": {
                "V_level": _POS, "carrier_freq": _POS,
                "dt": _POS, "duration": _POS,
                "coil": {"type": "integer", "minimum": 1},
                "scale": _NUM, "omega": _NUM,
                "reference": {
                    "type": "object",
                    "required": ["type"],
                    "additionalProperties": False,
                    "properties": {
                        "type": {"enum": ["controller", "constant", "sine"]},
                        "current": _NUM, "amplitude": _NUM, "freq": _NONNEG,
                    },
                },
            },
        },
    },
}


class ConfigError(ValueError):
    """Raised for unreadable or schema-invalid configuration."""


def _where(err: jsonschema.ValidationError) -> str:
    path = ".".join(str(p) for p in err.absolute_path)
    return path or "<root>"


def validate(doc: dict) -> None:
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(validator.iter_errors(doc), key=lambda e: list(e.absolute_path))
    if errors:
        err = errors[0]
        raise ConfigError(f"config.{_where(err)}: {err.message}")


@dataclass
class ProjectConfig:
    raw: dict

    @classmethod
    def from_dict(cls, doc: dict) -> "ProjectConfig":
        validate(doc)
        cfg = cls(doc)
        try:
            cfg.motor()
            cfg.sim_config()
            cfg.synth_options()
            cfg.disturbance()
        except (ValueError, KeyError) as exc:
            raise ConfigError(f"config: {exc}") from exc
        return cfg

    @classmethod
    def load(cls, path) -> "ProjectConfig":
        try:
            doc = json.loads(Path(path).read_text())
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
        if not isinstance(doc, dict):
            raise ConfigError("config.<root>: expected a JSON object")
        return cls.from_dict(doc)

    def section(self, name: str) -> dict:
        return dict(self.raw.get(name, {}))

    def motor(self) -> MotorParams:
        return MotorParams.from_json(self.raw["motor"])

    # synthesis ----------------------------------------------------------
    @property
    def M_ctrl(self):
        return self.section("synthesis").get("M_ctrl")

    @property
    def s_max(self) -> float:
        return float(self.section("synthesis").get("s_max", 1.0))

    def synth_options(self, solver_mode: str | None = None) -> SynthOptions:
        s = self.section("synthesis")
        voltage = None
        if s.get("voltage_constraints", False):
            lo, hi = s.get("omega_range", [0.0, max(self.omega_ref, 1.0)])
            voltage = VoltageEnvelope(K=self.K, omega_ref=self.omega_ref,
                                      omega_min=float(lo), omega_max=float(hi))
        return SynthOptions(mode=solver_mode or s.get("solver", "sdp"),
                            solver=s.get("conic_solver", "CLARABEL"), voltage=voltage)

    # control / sim ------------------------------------------------------
    @property
    def omega_ref(self) -> float:
        return float(self.section("control").get("omega_ref", 10.0))

    @property
    def K(self) -> float:
        return float(self.section("control").get("K", 1.0))

    def disturbance(self) -> DisturbanceSpec:
        r = self.section("robust")
        th = r.get("eta_theta", 0.0)
        return DisturbanceSpec(tuple(th) if isinstance(th, list) else float(th),
                               float(r.get("eta_x2", 0.0)), float(r.get("eta_Tin", 0.0)))

    def sim_config(self, seed: int | None = None) -> SimConfig:
        s = self.section("sim")
        noise = self.disturbance() if s.get("noise", False) else None
        return SimConfig(dt=float(s.get("dt", 1e-4)), t_end=float(s.get("t_end", 20.0)),
                         x1_0=float(s.get("x1_0", 0.0)), x2_0=float(s.get("x2_0", 0.0)),
                         mode=s.get("mode", "reduced"), noise=noise,
                         seed=int(s.get("seed", 0) if seed is None else seed),
                         log_every=int(s.get("log_every", 1)))
