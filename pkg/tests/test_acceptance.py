"""Acceptance suite: one PASS/FAIL line per criterion, tolerances pinned below.

Heavy criteria (full spin-ancilla model with disorder ensembles) take tens of
minutes on one core; run ``pytest tests/test_acceptance.py -s`` to watch them.
"""

import json

import numpy as np
import pytest

from spinsqueeze.analysis import (
    default_sphere_grid,
    min_over_time,
    oat_analytic,
    oat_optimum,
    q_function,
    sphere_integral,
    t_opt,
    t_opt_detuned,
    wineland_xi2,
)
from spinsqueeze.cli import EXIT_OK, main
from spinsqueeze.dynamics import IntegratorConfig, Schedule, evolve, steady_state
from spinsqueeze.geometry import coupling_stats, fq_coupling, fq_sample_box, mr_coupling, mr_sample_box, sample_spins
from spinsqueeze.model import (
    ModelSpec,
    broadening_operator,
    build_dcr,
    build_full,
    build_ideal_oat,
    closed_form_elimination,
    eliminate,
    preset,
    resolve_disorder,
)
from spinsqueeze.operators import (
    QuantumState,
    SpaceLayout,
    collective_op,
    expm_hermitian,
    rotation_operator,
    spin_coherent_state,
    symmetric_isometry,
)
from spinsqueeze.protocols import (
    PulseSequence,
    RunPlan,
    concatenated_xy8,
    dcr_reflection_sequence,
    ensemble_average,
    spin_echo_check,
    steady_state_angles,
)
from spinsqueeze.sensing import REFERENCE_TARGETS, optimize_sensitivity, reference_scenarios

TWO_PI = 2 * np.pi
LAM_FQ = TWO_PI * 12e3
KRYLOV = IntegratorConfig(method="krylov")
MASTER_SEED = 20240611

# regression constants produced by this implementation on first run
FROZEN_DISSIPATION_MARGIN = 0.49874
FROZEN_DCR40_XI2 = 0.539999

# every trajectory produced here is re-checked against the invariants in criterion 15
TRAJECTORIES: list = []


def report(capsys, number, label, passed, detail):
    with capsys.disabled():
        print(f"\n{'PASS' if passed else 'FAIL'} acceptance {number:2d} {label}: {detail}")
    assert passed, detail


def keep(traj):
    TRAJECTORIES.append(traj)
    return traj


def trace_distance(a, b):
    return 0.5 * float(np.sum(np.abs(np.linalg.eigvalsh(a - b))))


def full_run(spec, layout, duration, n_out, theta0=np.pi / 2, phi0=0.0, config=None):
    H, terms = build_full(spec, layout)
    sched = Schedule.single(H, terms, duration, duration / n_out)
    return keep(evolve(spin_coherent_state(layout, theta0, phi0), sched, config))


# --------------------------------------------------------------------------


def test_01_coherent_baseline(capsys):
    rng = np.random.default_rng(1)
    angles = np.column_stack([rng.uniform(0, np.pi, 50), rng.uniform(0, TWO_PI, 50)])
    worst = 0.0
    cases = [SpaceLayout.dicke(n) for n in (1, 2, 3, 4, 5, 6, 40)]
    cases += [SpaceLayout.product(n) for n in (1, 2, 3, 4, 5, 6)]
    for lay in cases:
        for th, ph in angles:
            worst = max(worst, abs(wineland_xi2(spin_coherent_state(lay, th, ph)).xi2 - 1))
    report(capsys, 1, "coherent-state xi^2", worst <= 1e-9,
           f"max |xi^2 - 1| = {worst:.2e} over {len(cases)} layouts x 50 states (tol 1e-9)")


@pytest.fixture(scope="module")
def ideal_oat():
    out = {}
    for n in (10, 20, 40):
        lay = SpaceLayout.dicke(n)
        H, terms = build_ideal_oat(n, 1.0, lay)
        theta_opt, _ = oat_optimum(n)
        t_end = 1.5 * theta_opt  # Theta = 2 chi t spans [0, 3 Theta_opt]
        traj = keep(evolve(spin_coherent_state(lay, np.pi / 2, 0), Schedule.single(H, terms, t_end, t_end / 300)))
        out[n] = traj
    return out


def test_02_ideal_oat_matches_closed_form(capsys, ideal_oat):
    curve_dev, time_dev = {}, {}
    for n, traj in ideal_oat.items():
        ana = oat_analytic(n, 2 * traj.times).xi2
        curve_dev[n] = float(np.max(np.abs(traj.xi2 - ana) / ana))
        _, t_min = min_over_time(traj)
        time_dev[n] = t_min / t_opt(n, 1.0) - 1
    curve_ok = max(curve_dev.values()) <= 1e-4
    time_ok = max(abs(v) for v in time_dev.values()) <= 0.02
    detail = ("curve rel dev " + ", ".join(f"N={n}: {v:.1e}" for n, v in curve_dev.items())
              + " (tol 1e-4); argmin / large-N t_opt - 1 "
              + ", ".join(f"N={n}: {v:+.3f}" for n, v in time_dev.items()) + " (tol 0.02)")
    report(capsys, 2, "ideal OAT vs closed form", curve_ok and time_ok, detail)


def test_03_squeezing_scaling(capsys, ideal_oat):
    ratio = min_over_time(ideal_oat[40])[0] / min_over_time(ideal_oat[20])[0]
    target = 2 ** (-2 / 3)
    dev = abs(ratio / target - 1)
    report(capsys, 3, "N^-2/3 scaling", dev <= 0.05,
           f"min xi^2(40)/min xi^2(20) = {ratio:.4f} vs {target:.4f}, rel dev {dev:.3f} (tol 0.05)")


def _fq40(k, gamma):
    return preset("FQ_NV", 40, detuning=k * LAM_FQ * 40, gamma=gamma, delta_lambda=0.0, delta_omega=0.0)


def test_04_full_model_reaches_oat_optimum(capsys):
    n = 40
    lay = SpaceLayout.dicke(n, "qubit")
    spec0 = _fq40(20, 0.0)
    T = 1.5 * t_opt_detuned(n, LAM_FQ, spec0.detuning)
    gammas = (0.0, 0.0265 * LAM_FQ * n)
    runs = {g: full_run(_fq40(20, g), lay, T, 200, config=KRYLOV) for g in gammas}
    best = oat_optimum(n)[1]
    mins = {g: min_over_time(tr)[0] for g, tr in runs.items()}
    opt_dev = max(abs(m / best - 1) for m in mins.values())
    a, b = (runs[g].xi2 for g in gammas)
    curve_dev = float(np.max(np.abs(b - a) / a))
    # halving the tolerance moves the minimum by far less than the criterion resolves
    tight = IntegratorConfig(method="krylov", rtol=KRYLOV.rtol / 2, atol=KRYLOV.atol / 2)
    tol_shift = abs(min_over_time(full_run(_fq40(20, gammas[1]), lay, T, 200, config=tight))[0] / mins[gammas[1]] - 1)
    vals = ", ".join(f"{m:.5f}" for m in mins.values())
    report(capsys, 4, "full model vs OAT optimum", opt_dev <= 0.05 and curve_dev <= 0.02 and tol_shift < 1e-3,
           f"min xi^2 (gamma=0, gamma>0) = {vals} vs OAT {best:.5f}: rel dev {opt_dev:.4f} (tol 0.05); "
           f"gamma>0 vs gamma=0 curve max rel dev {curve_dev:.4f} (tol 0.02); "
           f"halved tolerances shift the minimum by {tol_shift:.1e} (tol 1e-3)")


def test_05_dissipation_assisted(capsys):
    n = 40
    lay = SpaceLayout.dicke(n, "qubit")
    T = 3 * t_opt_detuned(n, LAM_FQ, 2 * LAM_FQ * n)
    runs, route_dev = {}, 0.0
    for g in (0.0, 0.0265 * LAM_FQ * n):
        runs[g] = full_run(_fq40(2, g), lay, T, 200)
        route = full_run(_fq40(2, g), lay, T, 200, config=KRYLOV)
        route_dev = max(route_dev, float(np.max(np.abs(route.xi2 - runs[g].xi2))))
    m0, mg = (min_over_time(tr)[0] for tr in runs.values())
    margin = 1 - mg / m0
    ok = margin >= 0.10 and margin == pytest.approx(FROZEN_DISSIPATION_MARGIN, abs=2e-4) and route_dev <= 1e-5
    report(capsys, 5, "dissipation-assisted squeezing", ok,
           f"min xi^2 gamma=0 {m0:.5f}, gamma>0 {mg:.5f}, improvement {margin:.4f} "
           f"(need >= 0.10; frozen {FROZEN_DISSIPATION_MARGIN} +- 2e-4); "
           f"Runge-Kutta vs Krylov max |dxi^2| {route_dev:.1e} (tol 1e-5)")


def test_06_optimum_time_formulas(capsys):
    lam_mr = TWO_PI * 56.0
    cases = {
        "FQ N=500 k=2": (t_opt_detuned(500, LAM_FQ, 2 * LAM_FQ * 500), 250e-6),
        "FQ N=500 k=20": (t_opt_detuned(500, LAM_FQ, 20 * LAM_FQ * 500), 2.5e-3),
        "MR N=1.2e4 k=20": (t_opt_detuned(12000, lam_mr, 20 * lam_mr * 12000), 1.6),
    }
    devs = {k: v / ref - 1 for k, (v, ref) in cases.items()}
    detail = "; ".join(f"{k}: {cases[k][0]:.4g} s vs {cases[k][1]:g} s ({d:+.3f})" for k, d in devs.items())
    report(capsys, 6, "optimum-time formula", max(abs(d) for d in devs.values()) <= 0.02, detail + " (tol 0.02)")


def _echo_without_casimir(h_ib, chi, tau, phi=0.0):
    """Echo fidelity with the J.J term left out of both the dynamics and the target."""
    lay = h_ib.layout
    jz = collective_op(lay, "z").matrix
    ket0 = np.linalg.eigh(spin_coherent_state(lay, np.pi / 2, 0).rho)[1][:, -1]
    u = expm_hermitian(h_ib.matrix + chi * (jz @ jz - jz), tau)
    r = rotation_operator(lay, np.pi, phi).matrix
    target = expm_hermitian(chi * jz @ jz, 2 * tau) @ ket0
    return float(abs(np.vdot(target, r.conj().T @ u @ r @ u @ ket0)) ** 2)


def test_07_spin_echo(capsys):
    fid, control = {}, {}
    for n in range(2, 7):
        spec = preset("FQ_NV", n, rng_seed=100 + n, delta_lambda=0.0)
        chi = spec.effective_constants().chi_eff
        tau = t_opt(n, chi) / 2
        lay = SpaceLayout.product(n)
        h_ib = broadening_operator(lay, resolve_disorder(spec)[0])
        fid[n] = spin_echo_check(n, chi, h_ib, tau).fidelity
        control[n] = _echo_without_casimir(h_ib, chi, tau)
    ok = min(fid.values()) >= 1 - 1e-8
    detail = ("1 - F " + ", ".join(f"N={n}: {1 - f:.1e}" for n, f in fid.items()) + " (tol 1e-8); without J.J "
              + ", ".join(f"N={n}: {1 - f:.1e}" for n, f in control.items()))
    report(capsys, 7, "spin-echo exactness", ok, detail)


def test_08_concatenated_xy8(capsys):
    n, tau = 6, 1e-5
    spec = preset("FQ_NV", n)
    seq = concatenated_xy8(tau)
    lay = SpaceLayout.product(n, "qubit")
    # dual route on one realization: Krylov propagation against the default Runge-Kutta
    short = PulseSequence(seq.ops[:18])
    realized = RunPlan(lay, tau, sequence=short, duration=short.duration)
    a = ensemble_average(spec, realized, 1, MASTER_SEED).trajectory
    b = ensemble_average(spec, realized, 1, MASTER_SEED, config=KRYLOV).trajectory
    route_dev = float(np.max(np.abs(a.xi2 - b.xi2)))

    with_seq = ensemble_average(spec, RunPlan(lay, tau, sequence=seq, duration=seq.duration), 100, MASTER_SEED,
                                config=KRYLOV).trajectory
    no_seq = ensemble_average(spec, RunPlan(lay, tau, duration=seq.duration), 100, MASTER_SEED,
                              config=KRYLOV).trajectory
    keep(with_seq)
    keep(no_seq)
    clean = full_run(spec.replace(delta_omega=0.0, delta_lambda=0.0), SpaceLayout.dicke(n, "qubit"),
                     seq.duration, 72, config=KRYLOV)
    m_seq, t_seq = min_over_time(with_seq)
    m_clean = min_over_time(clean)[0]
    at_t = float(np.interp(t_seq, no_seq.times, no_seq.xi2))
    dev = m_seq / m_clean - 1
    ok = abs(dev) <= 0.10 and at_t > 1 and route_dev <= 1e-6
    report(capsys, 8, "concatenated XY8 recovery", ok,
           f"with sequence min xi^2 {m_seq:.4f} at t={t_seq * 1e3:.3f} ms vs disorder-free {m_clean:.4f} "
           f"(rel {dev:+.4f}, tol 0.10); without sequence xi^2 there {at_t:.3f} (need > 1); "
           f"{seq.pulse_count} pulses; Krylov vs Runge-Kutta max |dxi^2| {route_dev:.1e} (tol 1e-6)")


def test_09_drive_protected_oat(capsys):
    n = 6
    spec = preset("FQ_NV", n, detuning=4 * LAM_FQ * n, drive=4 * LAM_FQ)
    T = 60 / LAM_FQ
    chi = spec.effective_constants().chi_eff
    lay = SpaceLayout.product(n, "qubit")
    dis = keep(ensemble_average(spec, RunPlan(lay, T / 120, theta0=0.0, phi0=0.0, duration=T), 100,
                                MASTER_SEED, config=KRYLOV).trajectory)
    hom = full_run(spec.replace(delta_omega=0.0, delta_lambda=0.0), SpaceLayout.dicke(n, "qubit"), T, 120,
                   theta0=0.0, config=KRYLOV)
    m_dis, m_hom = min_over_time(dis)[0], min_over_time(hom)[0]
    dev = m_dis / m_hom - 1
    report(capsys, 9, "drive-protected OAT", abs(dev) <= 0.15,
           f"min xi^2 with disorder {m_dis:.4f} vs homogeneous {m_hom:.4f} (rel {dev:+.4f}, tol 0.15); "
           f"Omega/delta_omega = {spec.drive / spec.delta_omega:.0f}, Omega/(N chi) = {spec.drive / (n * chi):.1f}")


def test_10_dcr_steady_state(capsys):
    n, gamma = 40, 1.0
    lay = SpaceLayout.dicke(n)
    H, terms = build_dcr(lay, gamma, omega_y=0.85 * gamma * n / 2)
    null = steady_state(H, terms, method="nullspace")
    long = steady_state(H, terms, method="longtime")
    xi2 = wineland_xi2(null).xi2
    dist = trace_distance(null.rho, long.rho)
    ok = xi2 < 1 and dist <= 1e-6 and xi2 == pytest.approx(FROZEN_DCR40_XI2, rel=1e-5)
    report(capsys, 10, "DCR steady-state squeezing", ok,
           f"xi^2 = {xi2:.6f} (< 1, frozen {FROZEN_DCR40_XI2} rel 1e-5); null-space vs long-time trace distance "
           f"{dist:.1e} (tol 1e-6)")


def test_11_dcr_reflection(capsys):
    n, tau = 6, 1e-5
    spec = preset("DCR_FQ", n)
    dicke = SpaceLayout.dicke(n, "qubit")
    H, terms = build_full(spec.replace(delta_omega=0.0, delta_lambda=0.0), dicke)
    ang = steady_state_angles(steady_state(H, terms), n, spec.drive_phase)
    seq = dcr_reflection_sequence(ang.theta_ss, spec.drive_phase, tau, 100)
    lay = SpaceLayout.product(n, "qubit")
    runs = {}
    for key, s in (("with", seq), ("without", None)):
        plan = RunPlan(lay, tau, theta0=ang.theta_ss, phi0=ang.phi_ss, sequence=s, duration=seq.duration)
        runs[key] = keep(ensemble_average(spec, plan, 100, MASTER_SEED, config=KRYLOV).trajectory)
    late = runs["with"].times * spec.lambda_bar > 5
    below = bool(np.all(runs["with"].xi2[late] < runs["without"].xi2[late]))
    dip = float(runs["with"].xi2[late].min())
    gap = float(np.min(runs["without"].xi2[late] - runs["with"].xi2[late]))
    report(capsys, 11, "DCR reflection sequence", below and dip < 1,
           f"theta_ss = {ang.theta_ss:.4f}; with sequence below without at every lambda t > 5: {below} "
           f"(smallest gap {gap:+.4f}); min xi^2 with sequence {dip:.4f} (need < 1)")


def test_12_elimination_closed_form(capsys):
    rng = np.random.default_rng(12)
    worst = 0.0
    count = 0
    for n in range(1, 5):
        for ancilla, d in (("qubit", 2), ("boson", 4)):
            for make in (SpaceLayout.dicke, SpaceLayout.product):
                offsets = tuple(rng.normal(0, 0.05, n)) if make is SpaceLayout.product else None
                spec = ModelSpec(n_spins=n, lambda_bar=1.0, detuning=25.0, gamma=3.0, drive=0.3,
                                 drive_phase=float(rng.uniform(0, TWO_PI)), omega_offsets=offsets,
                                 ancilla=ancilla, d_trunc=d)
                lay = make(n, ancilla, d)
                v, l = eliminate(spec, lay, drop_spin_terms=True)
                vc, lc = closed_form_elimination(spec, lay)
                worst = max(worst, float(np.max(np.abs(v.matrix - vc.matrix))),
                            float(np.max(np.abs(l.matrix - lc.matrix))))
                count += 1
    report(capsys, 12, "generic elimination vs closed form", worst <= 1e-12,
           f"max entrywise deviation {worst:.1e} over {count} models (tol 1e-12)")


def test_13_sensitivity_table(capsys):
    scen = reference_scenarios()
    got = {k: optimize_sensitivity(v).delta_B_sqrtT for k, v in scen.items()}
    devs = {k: got[k] / REFERENCE_TARGETS[k] - 1 for k in got}
    f_fq = got["fq_coherent"] / got["fq_squeezed"]
    f_mr = got["mr_coherent"] / got["mr_squeezed"]
    ok = max(abs(d) for d in devs.values()) <= 0.05 and abs(f_fq - 2.7) <= 0.2 and abs(f_mr - 4.1) <= 0.2
    detail = ", ".join(f"{k} {got[k]:.3e} ({d:+.3f})" for k, d in devs.items())
    report(capsys, 13, "sensitivity table", ok,
           f"{detail} (tol 0.05); improvement FQ {f_fq:.3f} vs 2.7, MR {f_mr:.3f} vs 4.1 (tol 0.2)")


def test_14_geometry(capsys):
    rng = np.random.default_rng(14)
    fq = coupling_stats(sample_spins(fq_sample_box(), rng, count=20000), fq_coupling)
    mr = coupling_stats(sample_spins(mr_sample_box(), rng, count=20000), mr_coupling)
    lam_hz, dl_hz, mr_hz = fq.lambda_bar / TWO_PI, fq.delta_lambda / TWO_PI, mr.lambda_bar / TWO_PI
    ok = abs(lam_hz / 12e3 - 1) <= 0.25 and abs(dl_hz / 1e3 - 1) <= 0.5 and 0.5 <= mr_hz / 56 <= 2
    report(capsys, 14, "coupling geometry", ok,
           f"FQ lambda_bar {lam_hz:.0f} Hz (12 kHz +-25%), delta_lambda {dl_hz:.0f} Hz (1 kHz +-50%); "
           f"MR lambda_bar {mr_hz:.1f} Hz (56 Hz within x2)")


def test_15_property_suite(capsys, tmp_path):
    trajs = list(TRAJECTORIES)
    if not trajs:
        lay = SpaceLayout.product(3, "qubit")
        trajs = [full_run(preset("FQ_NV", 3, rng_seed=1), lay, 2e-4, 50)]
    trace_err = max(float(np.max(t.trace_error)) for t in trajs)
    min_eig = min(float(np.nanmin(t.min_eigenvalue)) for t in trajs)
    herm = max(float(np.max(np.abs(t.final_state.rho - t.final_state.rho.conj().T))) for t in trajs)
    invariants_ok = trace_err <= 1e-7 and min_eig >= -1e-6 and herm <= 1e-12

    # Dicke and product representations on the symmetric sector
    equiv = 0.0
    for n in range(1, 5):
        spec = ModelSpec(n_spins=n, lambda_bar=1.0, detuning=3.0, drive=0.7, drive_phase=0.4, gamma=0.5)
        finals = []
        for make in (SpaceLayout.dicke, SpaceLayout.product):
            lay = make(n, "qubit")
            H, terms = build_full(spec, lay)
            tr = keep(evolve(spin_coherent_state(lay, 1.1, 0.3), Schedule.single(H, terms, 5.0, 1.0)))
            finals.append(tr.final_state.rho.reshape(lay.spin_dim, 2, lay.spin_dim, 2).trace(axis1=1, axis2=3))
        iso = symmetric_isometry(n)
        equiv = max(equiv, trace_distance(finals[0], iso.conj().T @ finals[1] @ iso))

    # Q-function normalization on a squeezed state
    th, ph = default_sphere_grid()
    lay = SpaceLayout.dicke(20)
    H, terms = build_ideal_oat(20, 1.0, lay)
    sq = evolve(spin_coherent_state(lay, np.pi / 2, 0), Schedule.single(H, terms, 0.15, 0.15)).final_state
    norm = sphere_integral(q_function(QuantumState(sq.rho, lay), th, ph), th, ph)

    # byte-identical reruns from one manifest
    cfg = {"preset": "FQ_NV", "model": {"n_spins": 3}, "model_kind": "full", "representation": "product",
           "schedule": {"kind": "sequence", "sequence": "concatenated_xy8", "tau_s": 1e-5},
           "ensemble": {"n_runs": 2, "master_seed": 3}, "integrator": {"method": "krylov"},
           "outputs": {"prefix": "rerun"}}
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg), encoding="utf-8")
    codes = [main(["simulate", "--config", str(path), "--out", str(tmp_path / d)]) for d in ("a", "b")]
    same = (tmp_path / "a" / "rerun_trajectory.csv").read_bytes() == (tmp_path / "b" / "rerun_trajectory.csv").read_bytes()

    ok = invariants_ok and equiv <= 1e-8 and abs(norm - 1) <= 1e-3 and codes == [EXIT_OK, EXIT_OK] and same
    report(capsys, 15, "property suite", ok,
           f"{len(trajs)} trajectories: max trace error {trace_err:.1e} (tol 1e-7), min eigenvalue {min_eig:.1e} "
           f"(tol -1e-6), final Hermiticity {herm:.1e}; Dicke vs product {equiv:.1e} (tol 1e-8); "
           f"Q normalization {norm:.6f} (1 +- 1e-3); byte-identical rerun {same}")
