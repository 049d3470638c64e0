import math

import numpy as np
import pytest
from scipy.optimize import linprog

from pmctl.model import MotorParams
from pmctl.synth import (AffineTrigPoly, BoundConstraint, ControlSolution, InfeasibleError,
                         SynthOptions, VoltageEnvelope, bernstein_voltage_constraints,
                         build_cancellation_system, certify_nonnegative, check_consistency,
                         synthesize, torque_poly, verify_solution)
from pmctl.trigpoly import TrigPoly, abs_max, design_matrix, mul, shift

from conftest import random_poly

SIN = TrigPoly.harmonic(1, "sin")
PHASES = (0.0, 2 * np.pi / 3, 4 * np.pi / 3)
GRID = np.linspace(0, 2 * np.pi, 10_000, endpoint=False)


def textbook_vector(sys):
    return sys.stack([shift(SIN, phi) for phi in PHASES])


def grid_lp_bracket(params, M, budget=1.0, n_grid=4096):
    """Independent bracket on the optimal torque via a grid LP.

    Unknowns are the active coils' cos/sin coefficients plus t.  Constancy is
    imposed by collocation (exact for a trig poly sampled above its Nyquist
    rate) and the current bound only on ``n_grid`` angles, so the LP optimum
    is an upper bound; rescaling its solution to the true peak gives a lower one.
    """
    coils = list(params.active)
    D = M + max(params.torque_fns[c].degree for c in coils)
    th_c = 2 * np.pi * np.arange(4 * D + 3) / (4 * D + 3)
    th_b = 2 * np.pi * np.arange(n_grid) / n_grid
    Pc, Pb = design_matrix(th_c, M), design_matrix(th_b, M)
    size = 2 * M + 1
    nv = size * len(coils) + 1
    A_eq = np.zeros((th_c.size, nv))
    for b, c in enumerate(coils):
        A_eq[:, b * size:(b + 1) * size] = Pc * params.torque_fns[c](th_c)[:, None]
    A_eq[:, -1] = -1.0
    rows = []
    for b in range(len(coils)):
        blk = np.zeros((n_grid, nv))
        blk[:, b * size:(b + 1) * size] = Pb
        rows += [blk, -blk]
    A_ub = np.vstack(rows)
    cobj = np.zeros(nv)
    cobj[-1] = -1.0
    res = linprog(cobj, A_ub=A_ub, b_ub=np.full(A_ub.shape[0], budget), A_eq=A_eq,
                  b_eq=np.zeros(th_c.size), bounds=[(None, None)] * nv, method="highs")
    assert res.status == 0
    t_up = -res.fun
    fine = np.linspace(0, 2 * np.pi, 200_000, endpoint=False)
    Pf = design_matrix(fine, M)
    peak = max(np.max(np.abs(Pf @ res.x[b * size:(b + 1) * size]))
               for b in range(len(coils)))
    return t_up * budget / max(peak, budget), t_up


# -- cancellation system ----------------------------------------------------

def test_cancellation_dimensions_balanced():
    for M in (1, 2, 3):
        sys = build_cancellation_system(MotorParams.balanced(SIN), M)
        # torque degree M + 1: rows 2(M+1) + 1 harmonics, i.e. 4M'+1 in the general count
        assert sys.matrix.shape == (2 * (M + 1) + 1, 6 * M + 3)
        assert sys.row_labels[-1] == "C_0"
    # matched degrees: f and currents both degree M gives 4M+1 rows
    f2 = TrigPoly([0, 0, 0.2], [1.0, 0.1])
    sys = build_cancellation_system(MotorParams.balanced(f2), 2)
    assert sys.matrix.shape == (4 * 2 + 1, 6 * 2 + 3)


def test_textbook_currents_map_to_three_halves():
    sys = build_cancellation_system(MotorParams.balanced(SIN), 1)
    out = sys.matrix @ textbook_vector(sys)
    np.testing.assert_allclose(out[:-1], 0.0, atol=1e-14)
    assert out[-1] == pytest.approx(1.5, abs=1e-14)
    assert check_consistency(sys).consistent


def test_single_active_coil_product_to_sum():
    p = MotorParams.balanced(SIN).with_faulty(1).with_faulty(2)
    sys = build_cancellation_system(p, 1)
    assert sys.coils == (0,)
    out = dict(zip(sys.row_labels, sys.matrix @ SIN.to_vector()))
    assert out["C_0"] == pytest.approx(0.5)
    assert out["C_2"] == pytest.approx(-0.5)
    assert all(abs(v) < 1e-15 for k, v in out.items() if k not in ("C_0", "C_2"))


def test_matrix_matches_mul_oracle(rng):
    fs = tuple(random_poly(rng, 3) for _ in range(4))
    p = MotorParams(fs, tuple(TrigPoly.zero() for _ in fs), [0, 1, 2, 4]).with_faulty(2)
    sys = build_cancellation_system(p, 2)
    for _ in range(5):
        x = rng.standard_normal(sys.matrix.shape[1])
        waves = sys.waveforms(x)
        ref = TrigPoly.zero()
        for c in (0, 1, 3):
            ref = ref + mul(waves[c], fs[c])
        ref = ref.padded(sys.torque_degree)
        expect = np.concatenate([ref.cos[1:], ref.sin, ref.cos[:1]])
        np.testing.assert_allclose(sys.matrix @ x, expect, atol=1e-12)


def test_all_faulty_rejected():
    p = MotorParams.balanced(SIN).with_faulty(0).with_faulty(1).with_faulty(2)
    with pytest.raises(ValueError, match="faulty"):
        build_cancellation_system(p, 1)
    with pytest.raises(ValueError):
        build_cancellation_system(MotorParams.balanced(SIN), 0)


def test_consistency_triplen_and_random():
    trip = MotorParams.balanced(TrigPoly.harmonic(3, "sin"))
    c = check_consistency(build_cancellation_system(trip, 3))
    assert not c.consistent
    assert c.rank + c.nullity == 21
    for seed in range(100):
        r = np.random.default_rng(seed)
        f = random_poly(r, 3)
        f = TrigPoly(np.r_[f.cos[0], 1.0 + abs(f.cos[1]), f.cos[2:]], f.sin)
        sys = build_cancellation_system(MotorParams.balanced(f), f.degree)
        assert check_consistency(sys).consistent, seed


# -- Gram certificates ------------------------------------------------------

def constant_constraint(p, sense, B):
    return BoundConstraint(AffineTrigPoly.constant_poly(p, 0), sense, B)


def test_gram_examples():
    holds, G = certify_nonnegative(constant_constraint(TrigPoly.zero(2), "le", 1.0))
    assert holds and np.min(np.linalg.eigvalsh(G)) >= -1e-8
    holds, _ = certify_nonnegative(constant_constraint(TrigPoly.harmonic(1, "cos"), "le", 0.5))
    assert not holds
    holds, _ = certify_nonnegative(constant_constraint(TrigPoly.harmonic(1, "cos"), "ge", -1.0))
    assert holds


def test_gram_certificate_reproduces_polynomial():
    p = TrigPoly([0.3, 0.5, -0.2], [0.1, 0.4])
    holds, G = certify_nonnegative(constant_constraint(p, "le", 2.0))
    assert holds
    # v^H G v on a grid equals 2 - p
    v = np.exp(1j * np.outer(np.arange(3), GRID[::50]))
    quad = np.real(np.einsum("it,ij,jt->t", v.conj(), G, v))
    np.testing.assert_allclose(quad, 2.0 - p(GRID[::50]), atol=1e-6)


def test_gram_agrees_with_dense_grid():
    theta = np.linspace(0, 2 * np.pi, 100_000, endpoint=False)
    checked = 0
    for seed in range(100):
        r = np.random.default_rng(1000 + seed)
        p = random_poly(r, int(r.integers(1, 6)))
        peak = float(np.max(p(theta)))
        B = peak + r.uniform(-0.3, 0.3)
        if abs(B - peak) < 1e-4:          # too close to call on a grid
            continue
        holds, _ = certify_nonnegative(constant_constraint(p, "le", B))
        assert holds == (peak <= B - 1e-6), (seed, peak, B)
        checked += 1
    assert checked >= 95


# -- synthesis --------------------------------------------------------------

@pytest.fixture(scope="module")
def textbook():
    p = MotorParams.balanced(SIN, I_limit=1.0)
    return p, synthesize(p, 1, 1.0)


def test_textbook_optimum(textbook):
    p, sol = textbook
    assert sol.t_opt == pytest.approx(1.5, abs=1e-6)
    for j, phi in enumerate(PHASES):
        assert sol.waveforms[j].allclose(shift(SIN, phi), atol=1e-5)
    assert sol.residuals.passed
    assert sol.residuals.harmonic_residual <= 1e-6 * max(1.0, sol.t_opt)


def test_torque_constant_on_grid(textbook):
    p, sol = textbook
    tq = torque_poly(sol.waveforms, p)
    assert np.max(np.abs(tq(GRID) - sol.t_opt)) <= 1e-6


def test_certificates_psd(textbook):
    _, sol = textbook
    assert len(sol.certificates) == 6
    for G in sol.certificates.values():
        assert np.min(np.linalg.eigvalsh(G)) >= -1e-7


def test_balanced_symmetry():
    f = TrigPoly([0.0, 0.0, 0.1], [1.0, 0.3])
    p = MotorParams.balanced(f)
    sol = synthesize(p, 2, 1.0)
    for j, phi in enumerate(PHASES):
        assert sol.waveforms[j].allclose(shift(sol.waveforms[0], phi), atol=1e-6)


def test_faulty_coil_optimum_bracketed_by_grid_lp():
    p = MotorParams.balanced(SIN, I_limit=1.0).with_faulty(2)
    sol = synthesize(p, 1, 1.0)
    lo, hi = grid_lp_bracket(p, 1)
    assert lo - 1e-6 <= sol.t_opt <= hi + 1e-6
    assert sol.t_opt < 1.5
    assert sol.t_opt == pytest.approx(0.8660254, abs=1e-6)
    assert sol.residuals.harmonic_residual <= 1e-6
    assert np.all(sol.waveforms[2].cos == 0) and np.all(sol.waveforms[2].sin == 0)


def test_general_motor_matches_grid_lp():
    f = TrigPoly([0.0, 0.0, 0.1, 0.0], [1.0, 0.0, 0.3])
    p = MotorParams.balanced(f, I_limit=10.0)
    sol = synthesize(p, 3, 1.0)
    lo, hi = grid_lp_bracket(p, 3, budget=10.0)
    assert lo - 1e-5 <= sol.t_opt <= hi + 1e-5
    assert sol.residuals.passed


def test_triplen_infeasible():
    with pytest.raises(InfeasibleError) as err:
        synthesize(MotorParams.balanced(TrigPoly.harmonic(3, "sin")), 3)
    assert err.value.constraint_class == "cancellation"


def test_scaling_invariance():
    f = TrigPoly([0.0, 0.1, 0.05], [1.0, -0.2])
    base = synthesize(MotorParams.balanced(f), 2, 1.0)
    scaled = synthesize(MotorParams.balanced(3.0 * f), 2, 1.0)
    assert scaled.t_opt == pytest.approx(3.0 * base.t_opt, rel=1e-6)
    for a, b in zip(base.waveforms, scaled.waveforms):
        assert a.allclose(b, atol=1e-6)


def test_monotone_in_budget():
    f = TrigPoly([0.0, 0.1, 0.05], [1.0, -0.2])
    ts = [synthesize(MotorParams.balanced(f, I_limit=I), 2, 2.0).t_opt
          for I in (1.0, 2.0, 5.0)]
    assert ts[0] <= ts[1] <= ts[2]
    assert ts[1] == pytest.approx(2 * ts[0], rel=1e-6)
    assert synthesize(MotorParams.balanced(f, I_limit=2.0), 2, 1.0).t_opt >= ts[1]


def test_s_max_tightens_bound():
    p = MotorParams.balanced(SIN, I_limit=10.0)
    sol = synthesize(p, 1, 2.0)
    assert sol.t_opt == pytest.approx(7.5, rel=1e-6)
    assert max(abs_max(w) for w in sol.waveforms) <= 5.0 + 1e-6
    with pytest.raises(ValueError):
        synthesize(p, 1, 0.0)


def test_sampled_mode_close_to_sdp(textbook):
    p, sdp = textbook
    sol = synthesize(p, 1, 1.0, SynthOptions(mode="sampled"))
    assert sol.residuals.n_points == 100_000
    assert sol.residuals.passed
    assert sol.t_opt == pytest.approx(sdp.t_opt, rel=1e-4)


def test_five_phase():
    offsets = [np.pi * k / 5 for k in range(5)]
    p = MotorParams.balanced(SIN, n_coils=5, offsets=offsets, I_limit=1.0)
    sol = synthesize(p, 1, 1.0)
    assert sol.t_opt == pytest.approx(2.5, abs=1e-5)


# -- voltage constraints ----------------------------------------------------

def direct_voltage(h, b, p, env, theta, omega):
    """u = L di/dt + R i + omega b with i = a(omega) h(theta), differentiated by hand."""
    a = env.K * (env.omega_ref - omega) + p.T_in
    domega = env.K * (env.omega_ref - omega)
    dh = TrigPoly(np.r_[0.0, h.sin * np.arange(1, h.degree + 1)],
                  -h.cos[1:] * np.arange(1, h.degree + 1))
    i = a * h(theta)
    di = -env.K * domega * h(theta) + a * dh(theta) * omega
    return p.L * di + p.R * i + omega * b(theta)


def test_voltage_constraints():
    env = VoltageEnvelope(K=1.0, omega_ref=10.0, omega_min=0.0, omega_max=10.0)
    loose = MotorParams.balanced(SIN, I_limit=10.0, L=0.05, backemf_fn=SIN, V_limit=1e4,
                                 T_in=1.0)
    free = synthesize(loose, 1, 1.0)
    sol = synthesize(loose, 1, 1.0, SynthOptions(voltage=env))
    assert sol.voltage_constraints
    assert sol.t_opt == pytest.approx(free.t_opt, rel=1e-5)

    V = 20.0
    tight = MotorParams.balanced(SIN, I_limit=10.0, L=0.05, backemf_fn=SIN, V_limit=V,
                                 T_in=1.0)
    sol = synthesize(tight, 1, 1.0, SynthOptions(voltage=env))
    assert 0 < sol.t_opt < free.t_opt
    theta, omega = np.meshgrid(np.linspace(0, 2 * np.pi, 721), np.linspace(0, 10, 201))
    for c in range(3):
        h = sol.waveforms[c] / sol.t_opt
        u = direct_voltage(h, tight.backemf_fns[c], tight, env, theta, omega)
        assert np.max(np.abs(u)) <= V + 1e-5

    hopeless = MotorParams.balanced(SIN, I_limit=10.0, L=0.05, backemf_fn=SIN, V_limit=1.0)
    with pytest.raises(InfeasibleError) as err:
        synthesize(hopeless, 1, 1.0, SynthOptions(voltage=env))
    assert err.value.constraint_class == "voltage_bound"


def test_bernstein_examples():
    one = TrigPoly.constant(1.0)
    cs = bernstein_voltage_constraints(0.0, 0.0, one, 0.0, None)
    vals = [c.nonnegative_part().value(None).cos[0] for c in cs]
    assert vals == [1.0, 2.0, 1.0]
    cs = bernstein_voltage_constraints(one, -2.0 * one, one, 0.0, None)
    assert [c.nonnegative_part().value(None).cos[0] for c in cs] == [1.0, 0.0, 0.0]
    assert all(certify_nonnegative(c)[0] for c in cs)
    assert len(bernstein_voltage_constraints(one, one, one, -1.0, 1.0)) == 6


def test_bernstein_implies_grid_bound():
    w = np.linspace(0, 1, 101)[:, None]
    th = np.linspace(0, 2 * np.pi, 512, endpoint=False)[None, :]
    certified = 0
    for seed in range(20):
        r = np.random.default_rng(500 + seed)
        F = [random_poly(r, 2, 0.5) for _ in range(3)]
        F[2] = F[2] + 2.0
        V_min = r.uniform(-1.0, 1.5)
        cs = bernstein_voltage_constraints(*F, V_min, None)
        if not all(certify_nonnegative(c)[0] for c in cs):
            continue
        certified += 1
        q = w ** 2 * F[0](th) + w * F[1](th) + F[2](th)
        assert np.min(q) >= V_min - 1e-6
    assert certified >= 3


# -- audit and persistence --------------------------------------------------

def textbook_solution(I_limit=10.0, s_max=1.0):
    waves = tuple(shift(SIN, phi) for phi in PHASES)
    return ControlSolution(waves, 1.5, s_max, I_limit, 1, (False,) * 3)


def test_verify_textbook():
    p = MotorParams.balanced(SIN, I_limit=10.0)
    rep = verify_solution(textbook_solution(), p, 1.0)
    assert rep.harmonic_residual < 1e-12
    assert rep.bound_slack == pytest.approx(10.0 - 1.0, abs=1e-6)
    assert rep.passed and rep.n_points >= 10_000


def test_verify_detects_corruption():
    p = MotorParams.balanced(SIN, I_limit=10.0)
    sol = textbook_solution()
    w0 = sol.waveforms[0]
    bad = TrigPoly(w0.cos + np.array([0.0, 0.1]), w0.sin)
    sol.waveforms = (bad,) + sol.waveforms[1:]
    rep = verify_solution(sol, p)
    assert rep.harmonic_residual > 0.01
    assert not rep.passed


def test_verify_detects_bound_violation():
    p = MotorParams.balanced(SIN, I_limit=1.0)
    rep = verify_solution(textbook_solution(I_limit=1.0), p, s_max=2.0)
    assert not rep.bound_ok


def test_json_roundtrip(textbook):
    p, sol = textbook
    doc = sol.to_json()
    back = ControlSolution.from_json(doc)
    assert back.to_json() == doc
    assert back.t_opt == sol.t_opt
    assert doc["motor"] == p.to_json()
    assert math.isclose(doc["residuals"]["t"], sol.t_opt)
