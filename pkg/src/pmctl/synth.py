"""Synthesis of harmonic-cancelling current waveforms under current/voltage bounds.

The coil currents are trigonometric polynomials in the rotor angle.  Their
product with the torque functions is again a trigonometric polynomial whose
coefficients are linear in the current coefficients; zeroing every non-constant
harmonic leaves a constant torque, which is maximized subject to

    -B <= g_j(theta) <= B   for all theta,  B = I_limit / s_max,

each side certified by a Hermitian PSD Gram matrix (Fejer-Riesz): a degree-N
trig polynomial r is nonnegative iff r(theta) = v^H G v with
v = [1, e^{i theta}, ..., e^{i N theta}] and G >= 0, i.e. the k-th
superdiagonal of G sums to the k-th complex coefficient of r.

Internally the program is solved in its homogeneous form: with h = g / t the
per-unit-torque waveform, maximizing t under |g| <= B is the same as
minimizing beta under |h| <= beta with C_0(h) = 1, and t = B / beta.  That form
keeps the optional voltage constraints (which depend on the physical current
(K (w_ref - w) + T_in) h) linear in the unknowns.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import cvxpy as cp
import numpy as np

from .model import MotorParams
from .trigpoly import TrigPoly, abs_max, design_matrix, mul, sup_bound

log = logging.getLogger(__name__)

HARMONIC_TOL = 1e-6
BOUND_TOL = 1e-6
RANK_RTOL = 1e-10


class InfeasibleError(Exception):
    """No admissible control exists; ``constraint_class`` names the culprit."""

    def __init__(self, constraint_class: str, message: str):
        super().__init__(message)
        self.constraint_class = constraint_class

    def __reduce__(self):
        return type(self), (self.constraint_class, str(self))


class SolverError(RuntimeError):
    def __init__(self, status: str, message: str):
        super().__init__(message)
        self.status = status

    def __reduce__(self):
        return type(self), (self.status, str(self))


# ---------------------------------------------------------------------------
# affine trig polynomials


@dataclass(frozen=True, eq=False)
class AffineTrigPoly:
    """Trig polynomial whose coefficient vector is ``A @ x + b``.

    Vector layout matches ``TrigPoly.to_vector``: [p_0..p_N, q_1..q_N].
    """

    A: np.ndarray
    b: np.ndarray

    @property
    def degree(self) -> int:
        return self.b.size // 2

    @property
    def n_vars(self) -> int:
        return self.A.shape[1]

    @classmethod
    def constant_poly(cls, p: TrigPoly, n_vars: int) -> "AffineTrigPoly":
        v = p.to_vector()
        return cls(np.zeros((v.size, n_vars)), v)

    @classmethod
    def block(cls, n_vars: int, start: int, degree: int) -> "AffineTrigPoly":
        """The polynomial whose coefficients are ``x[start:start + 2M + 1]``."""
        size = 2 * degree + 1
        A = np.zeros((size, n_vars))
        A[:, start:start + size] = np.eye(size)
        return cls(A, np.zeros(size))

    def _lift(self, other):
        if isinstance(other, TrigPoly):
            return AffineTrigPoly.constant_poly(other, self.n_vars)
        if np.isscalar(other):
            return AffineTrigPoly.constant_poly(TrigPoly.constant(float(other)), self.n_vars)
        return other

    def padded(self, degree: int) -> "AffineTrigPoly":
        n = self.degree
        if degree < n:
            raise ValueError("cannot pad to a lower degree")
        rows = np.r_[np.arange(n + 1), degree + 1 + np.arange(n)]
        A = np.zeros((2 * degree + 1, self.n_vars))
        b = np.zeros(2 * degree + 1)
        A[rows] = self.A
        b[rows] = self.b
        return AffineTrigPoly(A, b)

    def __add__(self, other):
        other = self._lift(other)
        m = max(self.degree, other.degree)
        a, o = self.padded(m), other.padded(m)
        return AffineTrigPoly(a.A + o.A, a.b + o.b)

    __radd__ = __add__

    def __neg__(self):
        return AffineTrigPoly(-self.A, -self.b)

    def __sub__(self, other):
        return self + (-self._lift(other))

    def __rsub__(self, other):
        return self._lift(other) - self

    def __mul__(self, scalar):
        return AffineTrigPoly(self.A * scalar, self.b * scalar)

    __rmul__ = __mul__

    def derivative(self) -> "AffineTrigPoly":
        n = self.degree
        k = np.arange(1, n + 1)
        D = np.zeros((2 * n + 1, 2 * n + 1))
        D[k, n + k] = k          # p_k' = k q_k
        D[n + k, k] = -k         # q_k' = -k p_k
        return AffineTrigPoly(D @ self.A, D @ self.b)

    def times(self, p: TrigPoly) -> "AffineTrigPoly":
        """Product with a fixed polynomial (still affine in x)."""
        cols = [mul(TrigPoly.from_vector(col), p).to_vector() for col in self.A.T]
        out_deg = self.degree + p.degree
        A = (np.array(cols).T if cols else np.zeros((2 * out_deg + 1, 0)))
        return AffineTrigPoly(A, mul(TrigPoly.from_vector(self.b), p).to_vector())

    def value(self, x) -> TrigPoly:
        x = np.zeros(0) if x is None else np.asarray(x, dtype=float)
        return TrigPoly.from_vector(self.A @ x + self.b)

    def expr(self, x):
        if self.n_vars == 0:
            return self.b
        return self.A @ x + self.b


@dataclass(frozen=True)
class BoundConstraint:
    """``expr(theta) <= bound`` (sense 'le') or ``>= bound`` ('ge') for all theta."""

    expr: AffineTrigPoly
    sense: str
    bound: float
    label: str = ""

    def __post_init__(self):
        if self.sense not in ("le", "ge"):
            raise ValueError("sense must be 'le' or 'ge'")
        if not np.isfinite(self.bound):
            raise ValueError("bound must be finite")

    def nonnegative_part(self) -> AffineTrigPoly:
        """The polynomial that must be >= 0 everywhere."""
        if self.sense == "le":
            return self.bound - self.expr
        return self.expr - self.bound


def _as_affine(p, n_vars: int = 0) -> AffineTrigPoly:
    if isinstance(p, AffineTrigPoly):
        return p
    if isinstance(p, TrigPoly):
        return AffineTrigPoly.constant_poly(p, n_vars)
    return AffineTrigPoly.constant_poly(TrigPoly.constant(float(p)), n_vars)


# ---------------------------------------------------------------------------
# cancellation system


@dataclass(frozen=True, eq=False)
class CancellationSystem:
    """Linear map from control coefficients to torque harmonics.

    Rows are [C_1..C_K, S_1..S_K, C_0]; columns are (coil, harmonic, 'cos'|'sin')
    for every active coil, coil blocks laid out like ``TrigPoly.to_vector``.
    """

    matrix: np.ndarray
    row_labels: tuple
    col_labels: tuple
    coils: tuple
    n_coils: int
    control_degree: int

    @property
    def harmonic_rows(self) -> np.ndarray:
        return self.matrix[:-1]

    @property
    def objective_row(self) -> np.ndarray:
        return self.matrix[-1]

    @property
    def torque_degree(self) -> int:
        return (self.matrix.shape[0] - 1) // 2

    @property
    def block_size(self) -> int:
        return 2 * self.control_degree + 1

    def waveforms(self, x) -> tuple:
        """Split a coefficient vector into per-coil polys (zero for faulty coils)."""
        x = np.asarray(x, dtype=float)
        out = [TrigPoly.zero(self.control_degree) for _ in range(self.n_coils)]
        for b, c in enumerate(self.coils):
            out[c] = TrigPoly.from_vector(x[b * self.block_size:(b + 1) * self.block_size])
        return tuple(out)

    def stack(self, waveforms: Sequence[TrigPoly]) -> np.ndarray:
        return np.concatenate([waveforms[c].padded(self.control_degree).to_vector()
                               for c in self.coils])


def _torque_vector_to_rows(v: np.ndarray) -> np.ndarray:
    return np.concatenate([v[1:], v[:1]])


def build_cancellation_system(params: MotorParams, M_ctrl: int) -> CancellationSystem:
    if M_ctrl < 1:
        raise ValueError("control degree must be >= 1")
    coils = tuple(int(c) for c in params.active)
    if not coils:
        raise ValueError("all coils are faulty; nothing to synthesize")
    size = 2 * M_ctrl + 1
    n_free = size * len(coils)
    K = M_ctrl + max(params.torque_fns[c].degree for c in coils)
    torque = AffineTrigPoly(np.zeros((2 * K + 1, n_free)), np.zeros(2 * K + 1))
    for b, c in enumerate(coils):
        h = AffineTrigPoly.block(n_free, b * size, M_ctrl)
        torque = torque + h.times(params.torque_fns[c])
    torque = torque.padded(K)
    matrix = _torque_vector_to_rows(torque.A)
    rows = tuple([f"C_{k}" for k in range(1, K + 1)]
                 + [f"S_{k}" for k in range(1, K + 1)] + ["C_0"])
    cols = []
    for c in coils:
        cols += [(c, k, "cos") for k in range(M_ctrl + 1)]
        cols += [(c, k, "sin") for k in range(1, M_ctrl + 1)]
    return CancellationSystem(matrix, rows, tuple(cols), coils,
                              params.n_coils, M_ctrl)


@dataclass(frozen=True)
class Consistency:
    consistent: bool
    rank: int
    nullity: int
    residual: float


def check_consistency(sys: CancellationSystem, tol: float = 1e-8) -> Consistency:
    """Is unit constant torque with zero ripple reachable by some control?"""
    A = sys.matrix
    target = np.zeros(A.shape[0])
    target[-1] = 1.0
    sv = np.linalg.svd(A, compute_uv=False)
    rank = int(np.sum(sv > RANK_RTOL * sv[0])) if sv.size and sv[0] > 0 else 0
    x, *_ = np.linalg.lstsq(A, target, rcond=RANK_RTOL)
    residual = float(np.linalg.norm(A @ x - target))
    return Consistency(residual <= tol, rank, A.shape[1] - rank, residual)


# ---------------------------------------------------------------------------
# nonnegativity certificates


@dataclass
class GramBlock:
    G: cp.Variable
    constraints: list
    label: str = ""


def gram_constraint(c: BoundConstraint, x=None) -> GramBlock:
    """Constraints making ``c`` hold iff a Hermitian PSD Gram matrix exists.

    ``x`` is the cvxpy decision vector the constraint's affine map acts on
    (``None`` for a constraint on a fixed polynomial).
    """
    r = c.nonnegative_part()
    n = r.degree
    vec = r.expr(x)
    G = cp.Variable((n + 1, n + 1), hermitian=True)
    cons = [G >> 0, cp.real(cp.trace(G)) == vec[0]]
    for k in range(1, n + 1):
        diag_sum = sum(G[a, a + k] for a in range(n + 1 - k))
        cons.append(cp.real(diag_sum) == 0.5 * vec[k])
        cons.append(cp.imag(diag_sum) == -0.5 * vec[n + k])
    return GramBlock(G, cons, c.label)


def sampled_constraint(c: BoundConstraint, x=None, n_points: int = 720) -> list:
    """Grid relaxation of ``c``: nonnegativity only at ``n_points`` angles."""
    r = c.nonnegative_part()
    theta = 2 * np.pi * np.arange(n_points) / n_points
    Phi = design_matrix(theta, r.degree)
    if r.n_vars == 0:
        return [cp.Constant(Phi @ r.b) >= 0]
    return [Phi @ r.A @ x + Phi @ r.b >= 0]


def _solve(prob: cp.Problem, solver: str):
    try:
        prob.solve(solver=solver)
    except cp.error.SolverError as exc:
        raise SolverError("solver_error", f"{solver} failed: {exc}") from exc
    return prob.status


def certify_nonnegative(c: BoundConstraint, solver: str = "CLARABEL", tol: float = 1e-9):
    """Decide a bound on a fixed polynomial with a Gram certificate.

    Posed as the always-feasible program ``max gamma`` s.t. ``r - gamma`` has a
    PSD Gram matrix (r the polynomial that must be nonnegative), which is better
    conditioned than a bare feasibility problem near the boundary.  The bound
    holds iff ``gamma* >= -tol``.  Returns ``(holds, G)`` with ``G`` a Gram
    matrix of ``r`` itself when the bound holds.
    """
    r = c.nonnegative_part()
    if r.n_vars:
        raise ValueError("certify_nonnegative needs a constraint on a fixed polynomial")
    shift_col = np.zeros((r.b.size, 1))
    shift_col[0, 0] = -1.0
    gamma = cp.Variable(1)
    blk = gram_constraint(BoundConstraint(AffineTrigPoly(shift_col, r.b), "ge", 0.0,
                                          c.label), gamma)
    prob = cp.Problem(cp.Maximize(gamma[0]), blk.constraints)
    status = _solve(prob, solver)
    if status not in (cp.OPTIMAL, cp.OPTIMAL_INACCURATE):
        raise SolverError(status, f"unexpected status {status!r}")
    g = float(gamma.value[0])
    if g < -tol:
        return False, None
    n = blk.G.shape[0]
    return True, np.asarray(blk.G.value) + (max(g, 0.0) / n) * np.eye(n)


def bernstein_voltage_constraints(F1, F2, F3, V_min: float | None,
                                  V_max: float | None) -> list:
    """Trig constraints that keep w^2 F1 + w F2 + F3 in [V_min, V_max] on w in [0, 1].

    A quadratic in w is nonnegative on [0, 1] when its Bernstein coefficients
    c, c + b/2, a + b + c are; this is sufficient, not necessary.
    Either bound may be ``None`` to skip that side.
    """
    n_vars = max(getattr(F, "n_vars", 0) for F in (F1, F2, F3))
    F1, F2, F3 = (_as_affine(F, n_vars) for F in (F1, F2, F3))
    out = []
    if V_min is not None:
        out += [BoundConstraint(F3, "ge", V_min, "vmin_b0"),
                BoundConstraint(F2 + 2 * F3, "ge", 2 * V_min, "vmin_b1"),
                BoundConstraint(F1 + F2 + F3, "ge", V_min, "vmin_b2")]
    if V_max is not None:
        out += [BoundConstraint(F3, "le", V_max, "vmax_b0"),
                BoundConstraint(F2 + 2 * F3, "le", 2 * V_max, "vmax_b1"),
                BoundConstraint(F1 + F2 + F3, "le", V_max, "vmax_b2")]
    return out


@dataclass(frozen=True)
class VoltageEnvelope:
    """Operating window over which coil voltages are bounded.

    Voltages are those of the unsaturated linearized loop with gain ``K`` and
    reference ``omega_ref``, for speeds in ``[omega_min, omega_max]``.
    """

    K: float
    omega_ref: float
    omega_min: float
    omega_max: float

    def __post_init__(self):
        if not self.omega_max > self.omega_min:
            raise ValueError("omega_max must exceed omega_min")


def voltage_quadratic(h: AffineTrigPoly, g: TrigPoly, params: MotorParams,
                      env: VoltageEnvelope):
    """Coil voltage as w^2 G1 + w G2 + G3 with w in [0, 1] the normalized speed.

    The current is i = (K (w_ref - omega) + T_in) h(theta); its time derivative
    uses d omega/dt = K (w_ref - omega), so u = L di/dt + R i + omega g.
    """
    K, L, R = env.K, params.L, params.R
    a = K * env.omega_ref + params.T_in
    dh = h.derivative()
    F1 = dh * (-K * L)
    F2 = h * (K * K * L - K * R) + dh * (a * L) + g
    F3 = h * (a * R - L * K * K * env.omega_ref)
    lo, span = env.omega_min, env.omega_max - env.omega_min
    G1 = F1 * span ** 2
    G2 = (F1 * (2 * lo) + F2) * span
    G3 = F1 * lo ** 2 + F2 * lo + F3
    return G1, G2, G3


# ---------------------------------------------------------------------------
# main program


@dataclass(frozen=True)
class SynthOptions:
    mode: str = "sdp"                # 'sdp' or 'sampled'
    solver: str = "CLARABEL"
    tie_break: bool = True
    tie_break_slack: float = 1e-9
    n_samples: int = 720
    voltage: VoltageEnvelope | None = None
    verify_points: int | None = None  # default 1e4 (sdp) / 1e5 (sampled)

    def __post_init__(self):
        if self.mode not in ("sdp", "sampled"):
            raise ValueError("mode must be 'sdp' or 'sampled'")


@dataclass
class VerifyReport:
    harmonic_residual: float
    t: float
    per_coil_peak: list
    I_limit: float
    n_points: int
    harmonic_tol: float

    @property
    def bound_peak(self) -> float:
        return max(self.per_coil_peak) if self.per_coil_peak else 0.0

    @property
    def bound_slack(self) -> float:
        return self.I_limit - self.bound_peak

    @property
    def residual_ok(self) -> bool:
        return self.harmonic_residual <= self.harmonic_tol

    @property
    def bound_ok(self) -> bool:
        return self.bound_peak <= self.I_limit + BOUND_TOL

    @property
    def passed(self) -> bool:
        return self.residual_ok and self.bound_ok and self.t > 0

    def to_json(self) -> dict:
        return {"harmonic_residual": self.harmonic_residual, "t": self.t,
                "per_coil_peak": list(self.per_coil_peak),
                "bound_peak": self.bound_peak, "bound_slack": self.bound_slack,
                "I_limit": self.I_limit, "n_points": self.n_points,
                "residual_ok": self.residual_ok, "bound_ok": self.bound_ok,
                "passed": self.passed}


@dataclass
class ControlSolution:
    """Unit-scale control waveforms and their audit.

    The runtime current of coil j is ``s * waveforms[j](theta)`` with
    ``|s| <= s_max``, so ``|waveforms[j]| <= I_limit / s_max`` keeps every
    current inside the limit.
    """

    waveforms: tuple
    t_opt: float
    s_max: float
    I_limit: float
    M_ctrl: int
    faulty: tuple
    status: str = "optimal"
    mode: str = "sdp"
    solver: str = "CLARABEL"
    residuals: VerifyReport | None = None
    certificates: dict = field(default_factory=dict, repr=False)
    motor: dict | None = field(default=None, repr=False)
    voltage_constraints: bool = False

    @property
    def n_coils(self) -> int:
        return len(self.waveforms)

    def to_json(self) -> dict:
        return {
            "n_coils": self.n_coils,
            "M_ctrl": self.M_ctrl,
            "t_opt": self.t_opt,
            "s_max": self.s_max,
            "I_limit": self.I_limit,
            "faulty": list(self.faulty),
            "waveforms": [w.to_json() for w in self.waveforms],
            "residuals": self.residuals.to_json() if self.residuals else None,
            "solver": {"mode": self.mode, "name": self.solver, "status": self.status,
                       "voltage_constraints": self.voltage_constraints},
            "motor": self.motor,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "ControlSolution":
        solver = obj.get("solver") or {}
        res = obj.get("residuals")
        report = None
        if res:
            report = VerifyReport(res["harmonic_residual"], res["t"],
                                  list(res["per_coil_peak"]), res["I_limit"],
                                  res["n_points"],
                                  HARMONIC_TOL * max(1.0, res["t"]))
        return cls(
            waveforms=tuple(TrigPoly.from_json(w) for w in obj["waveforms"]),
            t_opt=float(obj["t_opt"]), s_max=float(obj["s_max"]),
            I_limit=float(obj["I_limit"]), M_ctrl=int(obj["M_ctrl"]),
            faulty=tuple(obj.get("faulty", ())),
            status=solver.get("status", "unknown"), mode=solver.get("mode", "sdp"),
            solver=solver.get("name", ""), residuals=report, motor=obj.get("motor"),
            voltage_constraints=bool(solver.get("voltage_constraints", False)))


def _current_bounds(h: AffineTrigPoly, beta: AffineTrigPoly, rho: float, c: int):
    return [BoundConstraint(h - beta * rho, "le", 0.0, f"current_max[{c}]"),
            BoundConstraint(h + beta * rho, "ge", 0.0, f"current_min[{c}]")]


def synthesize(params: MotorParams, M_ctrl: int | None = None, s_max: float = 1.0,
               options: SynthOptions | None = None) -> ControlSolution:
    """Maximum constant-torque waveforms with zero ripple inside the current budget.

    Raises
    ------
    InfeasibleError
        ``constraint_class`` is 'cancellation' when no ripple-free control exists
        at this degree, 'voltage_bound' when the voltage window cannot be met.
    SolverError
        When the conic solver does not return a usable status.
    """
    opts = options or SynthOptions()
    if not s_max > 0:
        raise ValueError("s_max must be positive")
    if M_ctrl is None:
        M_ctrl = max(params.torque_fns[c].degree for c in params.active)
    sys = build_cancellation_system(params, M_ctrl)
    cons = check_consistency(sys)
    if not cons.consistent:
        raise InfeasibleError(
            "cancellation",
            f"harmonic cancellation system is inconsistent (rank {cons.rank}, "
            f"residual {cons.residual:.3g}); the torque functions cannot give "
            "ripple-free constant torque at this control degree")

    budget = params.I_limit / s_max
    n_h = sys.matrix.shape[1]
    n_vars = n_h + 1
    size = sys.block_size
    x = cp.Variable(n_vars)
    beta = AffineTrigPoly(np.eye(1, n_vars, n_vars - 1), np.zeros(1))
    rho = 1.0
    if opts.mode == "sampled":
        # peak of a degree-M poly over N equispaced points is >= cos(M pi / N) * true peak
        rho = float(np.cos(M_ctrl * np.pi / opts.n_samples))

    bounds = []
    voltage_bounds = []
    for b, c in enumerate(sys.coils):
        h = AffineTrigPoly.block(n_vars, b * size, M_ctrl)
        bounds += _current_bounds(h, beta, rho, c)
        if opts.voltage is not None:
            G1, G2, G3 = voltage_quadratic(h, params.backemf_fns[c], params, opts.voltage)
            for bc in bernstein_voltage_constraints(G1, G2, G3, -params.V_limit,
                                                    params.V_limit):
                voltage_bounds.append(BoundConstraint(bc.expr, bc.sense, bc.bound,
                                                      f"{bc.label}[{c}]"))

    # normalizing the torque rows makes the conic data (and hence the solver
    # path) invariant to an overall scaling of the torque functions
    kappa = max(sup_bound(params.torque_fns[c]) for c in sys.coils)
    A_h = sys.harmonic_rows / kappa
    eq = [A_h @ x[:n_h] == 0, (sys.objective_row / kappa) @ x[:n_h] == 1]
    conic = []
    grams = []
    for bc in bounds + voltage_bounds:
        if opts.mode == "sdp":
            blk = gram_constraint(bc, x)
            grams.append(blk)
            conic += blk.constraints
        else:
            conic += sampled_constraint(bc, x, opts.n_samples)

    prob = cp.Problem(cp.Minimize(x[-1]), eq + conic)
    status = _solve(prob, opts.solver)
    if status in (cp.INFEASIBLE, cp.INFEASIBLE_INACCURATE):
        cls = "voltage_bound" if voltage_bounds else "current_bound"
        raise InfeasibleError(cls, f"bound constraints are infeasible ({status})")
    if status not in (cp.OPTIMAL, cp.OPTIMAL_INACCURATE):
        raise SolverError(status, f"stage-1 solve returned {status!r}")
    beta_opt = float(x.value[-1])
    h_val = np.array(x.value[:n_h])
    beta_used = beta_opt
    final_status = status

    if opts.tie_break:
        slack = opts.tie_break_slack
        for _ in range(4):
            cap = beta_opt * (1.0 + slack)
            prob2 = cp.Problem(cp.Minimize(cp.sum_squares(x[:n_h])),
                               eq + conic + [x[-1] <= cap])
            try:
                status2 = _solve(prob2, opts.solver)
            except SolverError as exc:
                status2 = exc.status
            if status2 in (cp.OPTIMAL, cp.OPTIMAL_INACCURATE):
                h_val = np.array(x.value[:n_h])
                beta_used = cap
                final_status = status2
                break
            log.info("tie-break at slack %.1e returned %s; widening", slack, status2)
            slack *= 100.0
        else:
            log.warning("tie-break stage failed; keeping stage-1 optimizer")

    g_vec = h_val * (budget / beta_used)
    # polish: remove residual ripple left by solver tolerance (min-norm correction)
    corr, *_ = np.linalg.lstsq(A_h, A_h @ g_vec, rcond=RANK_RTOL)
    g_vec = g_vec - corr
    # an inaccurate solve may overshoot the budget slightly; a uniform rescale
    # keeps the ripple at zero and restores the bound
    peak = max(abs_max(w) for w in sys.waveforms(g_vec))
    if peak > budget:
        log.info("rescaling waveforms by %.3g to restore the current bound", budget / peak)
        g_vec = g_vec * (budget / peak)
    waveforms = sys.waveforms(g_vec)
    t_opt = float(sys.objective_row @ g_vec)

    certificates = {blk.label: np.asarray(blk.G.value) for blk in grams
                    if blk.G.value is not None}
    sol = ControlSolution(
        waveforms=waveforms, t_opt=t_opt, s_max=float(s_max),
        I_limit=float(params.I_limit), M_ctrl=M_ctrl, faulty=tuple(params.faulty),
        status=final_status, mode=opts.mode, solver=opts.solver,
        certificates=certificates, motor=params.to_json(),
        voltage_constraints=opts.voltage is not None)
    n_points = opts.verify_points or (10_000 if opts.mode == "sdp" else 100_000)
    sol.residuals = verify_solution(sol, params, s_max, n_points)
    return sol


def torque_poly(waveforms: Sequence[TrigPoly], params: MotorParams) -> TrigPoly:
    """sum_j g_j * f_j over active coils, recomputed with ``trigpoly.mul``."""
    total = TrigPoly.zero()
    for c in params.active:
        total = total + mul(waveforms[c], params.torque_fns[c])
    return total


def verify_solution(sol: ControlSolution, params: MotorParams,
                    s_max: float | None = None, n_points: int = 10_000) -> VerifyReport:
    """Independent audit of ripple cancellation and the current bound.

    Does not look at solver certificates: the torque is rebuilt from the
    waveforms by polynomial multiplication and peaks are taken on a grid.
    """
    s_max = sol.s_max if s_max is None else s_max
    torque = torque_poly(sol.waveforms, params)
    residual = float(max(np.max(np.abs(torque.cos[1:]), initial=0.0),
                         np.max(np.abs(torque.sin), initial=0.0)))
    t = float(torque.cos[0])
    peaks = [abs_max(sol.waveforms[c], n_points) * s_max for c in params.active]
    return VerifyReport(residual, t, peaks, float(params.I_limit), n_points,
                        HARMONIC_TOL * max(1.0, t))
