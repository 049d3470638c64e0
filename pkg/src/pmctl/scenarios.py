"""Named motor variants used for the comparison experiments.

Every scenario is derived from one base motor so that response times are
comparable: a healthy machine, the same machine with one open coil, an
unbalanced build with deterministic per-coil distortions, and a five-phase
machine with the same prototype torque function on coils pi/5 apart.
"""

from __future__ import annotations

import numpy as np

from .model import MotorParams
from .trigpoly import TrigPoly, shift

SCENARIOS = ("normal", "faulty", "unbalanced", "fivephase", "custom")
ALL_SCENARIOS = ("normal", "faulty:3", "unbalanced", "fivephase")


def representative_motor(**overrides) -> MotorParams:
    """A distorted three-phase machine with a 10 A current budget."""
    f = TrigPoly([0.0, 0.0, 0.1, 0.0], [1.0, 0.0, 0.3])
    kw = dict(I_limit=10.0, T_in=3.0, L=0.05, R=1.0, V_limit=1e3)
    kw.update(overrides)
    return MotorParams.balanced(f, **kw)


def prototype(params: MotorParams, coil: int = 0):
    """Torque and back-emf shapes of ``coil`` referred back to zero offset."""
    phi = params.offsets[coil]
    return shift(params.torque_fns[coil], -phi), shift(params.backemf_fns[coil], -phi)


def _physical(params: MotorParams) -> dict:
    return dict(L=params.L, R=params.R, T_in=params.T_in,
                I_limit=params.I_limit, V_limit=params.V_limit)


def parse_scenario(name: str):
    """Split ``'faulty:3'`` into ``('faulty', 3)``; other names carry no argument."""
    base, _, arg = name.partition(":")
    if base not in SCENARIOS:
        raise ValueError(f"unknown scenario {name!r}; choose from {', '.join(SCENARIOS)}")
    if base == "faulty":
        if not arg.isdigit():
            raise ValueError("faulty scenario needs a 1-based coil index, e.g. 'faulty:3'")
        return base, int(arg)
    if arg:
        raise ValueError(f"scenario {base!r} takes no argument")
    return base, None


def scenario_motor(name: str, base: MotorParams) -> MotorParams:
    """The plant for scenario ``name`` built from ``base``.

    * ``normal``  - ``base`` with every coil healthy
    * ``faulty:j`` - coil j (1-based) open-circuited
    * ``unbalanced`` - coil j's torque function scaled by 1 + 0.04 j and given
      a small extra second harmonic of its own phase
    * ``fivephase`` - base prototype on five coils at offsets k pi / 5
    * ``custom`` - ``base`` exactly as configured
    """
    kind, arg = parse_scenario(name)
    healthy = MotorParams(base.torque_fns, base.backemf_fns, base.offsets,
                          **_physical(base))
    if kind == "custom":
        return base
    if kind == "normal":
        return healthy
    if kind == "faulty":
        if not 1 <= arg <= base.n_coils:
            raise ValueError(f"coil index {arg} out of range 1..{base.n_coils}")
        return healthy.with_faulty(arg - 1)
    if kind == "unbalanced":
        fs = []
        for j, f in enumerate(base.torque_fns):
            extra = 0.03 * TrigPoly.harmonic(2, "cos" if j % 2 else "sin")
            fs.append((1.0 + 0.04 * j) * f + shift(extra, base.offsets[j]))
        return MotorParams(tuple(fs), base.backemf_fns, base.offsets, **_physical(base))
    f0, g0 = prototype(base)
    offsets = np.pi * np.arange(5) / 5
    return MotorParams.balanced(f0, n_coils=5, offsets=offsets, backemf_fn=g0,
                                **_physical(base))
