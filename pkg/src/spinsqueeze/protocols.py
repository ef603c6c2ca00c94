"""Pulse sequences, echo checks, steady-state angles and disorder ensembles."""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .analysis import spin_moments, xi2_from_moments
from .dynamics import (
    IntegrationError,
    IntegratorConfig,
    Pulse,
    Schedule,
    Segment,
    Trajectory,
    evolve,
)
from .model import (
    ModelSpec,
    broadening_operator,
    build_dcr_spec,
    build_driven_oat_effective,
    build_effective,
    build_full,
    resolve_disorder,
)
from .operators import (
    LayoutError,
    Operator,
    QuantumState,
    SpaceLayout,
    collective_op,
    expm_hermitian,
    partial_trace_ancilla_matrix,
    rotation_operator,
    spin_coherent_state,
)

log = logging.getLogger(__name__)

OP_KINDS = ("pi_x", "pi_y", "rotation", "drive_phase_shift", "free")


@dataclass(frozen=True)
class SeqOp:
    kind: str
    tau: float = 0.0
    theta: float = 0.0
    phi: float = 0.0
    shift: float = 0.0

    def __post_init__(self):
        if self.kind not in OP_KINDS:
            raise ValueError(f"unknown sequence op {self.kind!r}")
        if self.kind == "free" and not self.tau > 0:
            raise ValueError("free evolution needs tau > 0")

    def to_dict(self) -> dict:
        if self.kind == "free":
            return {"kind": "free", "tau": self.tau}
        if self.kind == "rotation":
            return {"kind": "rotation", "theta": self.theta, "phi": self.phi}
        if self.kind == "drive_phase_shift":
            return {"kind": "drive_phase_shift", "shift": self.shift}
        return {"kind": self.kind}

    @classmethod
    def from_dict(cls, d: dict) -> "SeqOp":
        return cls(**d)


def pi_x() -> SeqOp:
    return SeqOp("pi_x")


def pi_y() -> SeqOp:
    return SeqOp("pi_y")


def free(tau: float) -> SeqOp:
    return SeqOp("free", tau=tau)


@dataclass
class PulseSequence:
    ops: list = field(default_factory=list)

    def __add__(self, other: "PulseSequence") -> "PulseSequence":
        return PulseSequence(self.ops + other.ops)

    def __len__(self):
        return len(self.ops)

    @property
    def duration(self) -> float:
        return float(sum(op.tau for op in self.ops if op.kind == "free"))

    @property
    def pulse_count(self) -> int:
        return sum(op.kind in ("pi_x", "pi_y", "rotation") for op in self.ops)

    def count(self, kind: str) -> int:
        return sum(op.kind == kind for op in self.ops)

    def to_dict(self) -> dict:
        return {"ops": [op.to_dict() for op in self.ops]}

    @classmethod
    def from_dict(cls, d: dict) -> "PulseSequence":
        return cls([SeqOp.from_dict(x) for x in d["ops"]])


XY8_PATTERN = ("pi_x", "pi_y", "pi_x", "pi_y", "pi_y", "pi_x", "pi_y", "pi_x")


def xy8_block(tau: float) -> PulseSequence:
    """Eight pi pulses, each preceded by free evolution for tau."""
    if not tau > 0:
        raise ValueError("tau must be positive")
    ops = []
    for kind in XY8_PATTERN:
        ops += [free(tau), SeqOp(kind)]
    return PulseSequence(ops)


def concatenated_xy8(tau: float) -> PulseSequence:
    """Eight XY8 blocks interleaved with the XY8 pattern of single pulses (72 pulses)."""
    seq = PulseSequence()
    for kind in XY8_PATTERN:
        seq = seq + xy8_block(tau) + PulseSequence([free(tau), SeqOp(kind)])
    return seq


def reflection_rotation(theta_ss: float, eta: float) -> tuple[float, float]:
    """(theta, phi) of the rotation about n_eta mapping |theta_ss, eta+pi/2> to |theta_ss, eta-pi/2>."""
    return -2.0 * theta_ss, eta + np.pi / 2


def dcr_reflection_sequence(theta_ss: float, eta: float, tau: float, count: int) -> PulseSequence:
    """Alternating reflection rotation and its inverse, each followed by a drive phase flip and free(tau)."""
    if count < 1:
        raise ValueError("count must be >= 1")
    if not tau > 0:
        raise ValueError("tau must be positive")
    theta, phi = reflection_rotation(theta_ss, eta)
    ops = []
    for k in range(count):
        sign = 1.0 if k % 2 == 0 else -1.0
        ops += [SeqOp("rotation", theta=sign * theta, phi=phi), SeqOp("drive_phase_shift", shift=np.pi), free(tau)]
    return PulseSequence(ops)


def pulse_unitary(op: SeqOp, layout: SpaceLayout) -> Operator:
    if op.kind == "pi_x":
        return rotation_operator(layout, np.pi, np.pi / 2)
    if op.kind == "pi_y":
        return rotation_operator(layout, np.pi, 0.0)
    if op.kind == "rotation":
        return rotation_operator(layout, op.theta, op.phi)
    raise ValueError(f"{op.kind} is not a pulse")


ModelBuilder = Callable[[ModelSpec, SpaceLayout], tuple]


def sequence_to_schedule(seq: Optional[PulseSequence], spec: ModelSpec, layout: SpaceLayout,
                         output_dt: float, builder: ModelBuilder = build_full,
                         duration: Optional[float] = None) -> Schedule:
    """Turn a sequence into a schedule; drive phase shifts rebuild the Hamiltonian.

    With ``seq=None`` a single free segment of ``duration`` is produced.  Adjacent
    free periods are merged.  ``spec`` should carry explicit disorder lists so every
    rebuild sees the same realization.
    """
    cache: dict = {}

    def model_at(phase: float):
        key = round(float(np.mod(phase, 2 * np.pi)), 12)
        if key not in cache:
            cache[key] = builder(spec.replace(drive_phase=phase), layout)
        return cache[key]

    if seq is None:
        if duration is None:
            raise ValueError("need a sequence or a duration")
        H, terms = model_at(spec.drive_phase)
        return Schedule([Segment(H, tuple(terms), duration)], output_dt)
    phase = spec.drive_phase
    steps: list = []
    pending = 0.0
    unitaries: dict = {}

    def flush():
        nonlocal pending
        if pending > 0:
            H, terms = model_at(phase)
            steps.append(Segment(H, tuple(terms), pending))
            pending = 0.0

    for op in seq.ops:
        if op.kind == "free":
            pending += op.tau
        elif op.kind == "drive_phase_shift":
            flush()
            phase += op.shift
        else:
            flush()
            if op not in unitaries:
                unitaries[op] = pulse_unitary(op, layout)
            steps.append(Pulse(unitaries[op], op.kind))
    flush()
    if duration is not None and duration > seq.duration:
        H, terms = model_at(phase)
        steps.append(Segment(H, tuple(terms), duration - seq.duration))
    return Schedule(steps, output_dt)


# --------------------------------------------------------------------------
# Echo


@dataclass(frozen=True)
class EchoReport:
    fidelity: float
    residuals: dict
    tolerance: float = 1e-8

    @property
    def passed(self) -> bool:
        return self.fidelity >= 1 - self.tolerance and all(r <= 1e-10 for r in self.residuals.values())


def conjugation_residuals(layout: SpaceLayout, h_ib: Operator, phi: float) -> dict:
    r = rotation_operator(layout, np.pi, phi).matrix
    rd = r.conj().T
    jz = collective_op(layout, "z").matrix
    jz2 = jz @ jz
    h = h_ib.matrix
    return {
        "H_IB": float(np.linalg.norm(rd @ h @ r + h)),
        "Jz": float(np.linalg.norm(rd @ jz @ r + jz)),
        "Jz2": float(np.linalg.norm(rd @ jz2 @ r - jz2)),
    }


def spin_echo_check(n_spins: int, chi_eff: float, h_ib: Operator, tau: float, phi: float = 0.0,
                    theta0: float = np.pi / 2, phi0: float = 0.0) -> EchoReport:
    """Evolve the effective OAT Hamiltonian for tau, pulse R(pi, phi), evolve tau more.

    The pulse-frame final state is compared with exp[-2i tau chi (Jz^2 - J.J)] applied to
    the initial coherent state.
    """
    layout = h_ib.layout
    if layout.n_spins != n_spins or layout.has_ancilla:
        raise LayoutError("h_ib must act on the spin-only space of n_spins spins")
    jz = collective_op(layout, "z").matrix
    jx, jy = collective_op(layout, "x").matrix, collective_op(layout, "y").matrix
    casimir = jx @ jx + jy @ jy + jz @ jz
    H = h_ib.matrix + chi_eff * (jz @ jz - jz - casimir)
    psi0 = spin_coherent_state(layout, theta0, phi0)
    ket0 = np.linalg.eigh(psi0.rho)[1][:, -1]
    u = expm_hermitian(H, tau)
    r = rotation_operator(layout, np.pi, phi).matrix
    final = u @ r @ u @ ket0
    target = expm_hermitian(chi_eff * (jz @ jz - casimir), 2 * tau) @ ket0
    fid = float(abs(np.vdot(target, r.conj().T @ final)) ** 2)
    return EchoReport(fid, conjugation_residuals(layout, h_ib, phi))


def spin_echo_check_full(spec: ModelSpec, layout: SpaceLayout, tau: float, phi: float = 0.0,
                         theta0: float = np.pi / 2, phi0: float = 0.0,
                         config: IntegratorConfig | None = None) -> EchoReport:
    """Same echo on the spin-ancilla model; the reduced spin state is compared with the ideal echo."""
    spin_lay = layout.spin_only()
    H, terms = build_full(spec, layout)
    r = rotation_operator(layout, np.pi, phi)
    sched = Schedule([Segment(H, tuple(terms), tau), Pulse(r), Segment(H, tuple(terms), tau)], tau)
    traj = evolve(spin_coherent_state(layout, theta0, phi0), sched, config or IntegratorConfig())
    rho_s = partial_trace_ancilla_matrix(traj.final_state.rho, layout)
    rs = rotation_operator(spin_lay, np.pi, phi).matrix
    rho_s = rs.conj().T @ rho_s @ rs
    chi = spec.effective_constants().chi_eff
    jz = collective_op(spin_lay, "z").matrix
    jx, jy = collective_op(spin_lay, "x").matrix, collective_op(spin_lay, "y").matrix
    psi0 = spin_coherent_state(spin_lay, theta0, phi0).rho
    ket0 = np.linalg.eigh(psi0)[1][:, -1]
    target = expm_hermitian(chi * (jz @ jz - (jx @ jx + jy @ jy + jz @ jz)), 2 * tau) @ ket0
    fid = float(np.real(np.vdot(target, rho_s @ target)))
    offsets, _ = resolve_disorder(spec)
    return EchoReport(fid, conjugation_residuals(spin_lay, broadening_operator(spin_lay, offsets), phi))


# --------------------------------------------------------------------------
# Steady state angles


@dataclass(frozen=True)
class SteadyAngles:
    theta_ss: float
    phi_ss: float
    flags: tuple = ()

    def __iter__(self):
        return iter((self.theta_ss, self.phi_ss))


def steady_state_angles(rho_ss, n_spins: int, eta: float) -> SteadyAngles:
    """Polar angle from <Jz> and azimuth from the transverse mean spin."""
    state = rho_ss if isinstance(rho_ss, QuantumState) else None
    if state is None:
        raise TypeError("rho_ss must be a QuantumState")
    rho = state.rho
    lay = state.layout
    if lay.has_ancilla:
        rho = partial_trace_ancilla_matrix(rho, lay)
        lay = lay.spin_only()
    mean, _ = spin_moments(rho, lay)
    if np.linalg.norm(mean) <= 1e-12 * n_spins:
        raise ValueError("steady state has vanishing mean spin")
    cz = float(np.clip(-2 * mean[2] / n_spins, -1.0, 1.0))
    theta = float(np.arccos(cz))
    expected = eta + np.pi / 2
    if np.hypot(mean[0], mean[1]) <= 1e-12 * n_spins:
        log.warning("transverse mean spin vanishes; azimuth set to eta + pi/2")
        return SteadyAngles(theta, float(expected), ("azimuth_undefined",))
    phi = float(np.arctan2(mean[1], mean[0]))
    off = float(np.angle(np.exp(1j * (phi - expected))))
    flags = ()
    if abs(off) >= 0.05:
        log.warning("steady-state azimuth %.4f differs from eta + pi/2 by %.4f rad", phi, off)
        flags = ("azimuth_offset",)
    return SteadyAngles(theta, phi, flags)


# --------------------------------------------------------------------------
# Ensembles


MODEL_BUILDERS = {
    "full": build_full,
    "effective": build_effective,
    "dcr": build_dcr_spec,
    "driven_oat": build_driven_oat_effective,
}


@dataclass(frozen=True)
class RunPlan:
    """Everything needed to turn one disorder realization into a trajectory."""

    layout: SpaceLayout
    output_dt: float
    theta0: float = np.pi / 2
    phi0: float = 0.0
    sequence: Optional[PulseSequence] = None
    duration: Optional[float] = None
    model: str = "full"  # key of MODEL_BUILDERS

    def builder(self) -> ModelBuilder:
        return MODEL_BUILDERS[self.model]

    def schedule(self, spec: ModelSpec) -> Schedule:
        return sequence_to_schedule(self.sequence, spec, self.layout, self.output_dt, self.builder(), self.duration)

    def initial_state(self) -> QuantumState:
        return spin_coherent_state(self.layout, self.theta0, self.phi0)


class EnsembleError(RuntimeError):
    def __init__(self, failures: list):
        self.failures = failures
        seeds = ", ".join(str(s) for s, _ in failures)
        super().__init__(f"{len(failures)} ensemble run(s) failed; seeds: {seeds}")


@dataclass
class EnsembleResult:
    trajectory: Trajectory
    per_run_xi2: np.ndarray
    seeds: list
    n_realizations: int
    final_state: np.ndarray


def run_seeds(master_seed: int, n_runs: int) -> list[int]:
    children = np.random.SeedSequence(master_seed).spawn(n_runs)
    return [int(c.generate_state(1, np.uint64)[0]) for c in children]


def _single_run(args):
    spec, plan, seed, config = args
    try:
        realized = spec.realized(np.random.default_rng(seed))
        cfg = IntegratorConfig(**{**config.__dict__, "store_states": True})
        traj = evolve(plan.initial_state(), plan.schedule(realized), cfg)
    except (IntegrationError, ValueError) as exc:
        return seed, None, f"{type(exc).__name__}: {exc}"
    return seed, traj, None


def ensemble_average(spec: ModelSpec, plan: RunPlan, n_runs: int, master_seed: int,
                     workers: int = 1, config: IntegratorConfig | None = None) -> EnsembleResult:
    """Average spin density matrices over disorder realizations, reducing in run-index order."""
    if n_runs < 1:
        raise ValueError("n_runs must be >= 1")
    config = config or IntegratorConfig()
    seeds = run_seeds(master_seed, n_runs)
    tasks = [(spec, plan, s, config) for s in seeds]
    total = None
    anc = None
    trace_err = None
    per_run = []
    failures = []
    times = None

    def consume(result):
        nonlocal total, anc, trace_err, times
        seed, traj, err = result
        if err is not None:
            failures.append((seed, err))
            return
        states = np.asarray(traj.spin_states)
        if total is None:
            total = np.zeros_like(states)
            anc = np.zeros(len(traj.times))
            trace_err = np.zeros(len(traj.times))
            times = traj.times
        total += states
        anc += traj.ancilla_population
        trace_err = np.maximum(trace_err, traj.trace_error)
        per_run.append(traj.xi2)

    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for res in pool.map(_single_run, tasks):
                consume(res)
    else:
        for task in tasks:
            consume(_single_run(task))
    if failures:
        raise EnsembleError(failures)
    avg = total / n_runs
    spin_lay = plan.layout.spin_only()
    rows = []
    for rho in avg:
        mean, cov = spin_moments(rho, spin_lay)
        rows.append((xi2_from_moments(mean, cov, spin_lay.n_spins).xi2, *mean,
                     float(np.real(np.vdot(rho, rho))), float(np.linalg.eigvalsh(rho)[0])))
    a = np.array(rows)
    traj = Trajectory(times=times, xi2=a[:, 0], mean_spin=a[:, 1:4], trace_error=trace_err,
                      purity=a[:, 4], ancilla_population=anc / n_runs, min_eigenvalue=a[:, 5],
                      final_state=QuantumState(avg[-1], spin_lay))
    return EnsembleResult(traj, np.array(per_run), seeds, n_runs, avg[-1])
