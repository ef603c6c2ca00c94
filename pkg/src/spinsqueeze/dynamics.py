"""Lindblad master-equation integration over piecewise-constant schedules.

All Hamiltonians are in angular-frequency units (hbar = 1), so the unitary part
of the generator is ``-i[H, rho]``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np
import scipy.linalg
import scipy.sparse
import scipy.sparse.linalg

from .analysis import spin_moments, xi2_from_moments
from .operators import (
    AncillaKind,
    LayoutError,
    Operator,
    QuantumState,
    SpaceLayout,
    ancilla_lowering_matrix,
    partial_trace_ancilla_matrix,
)

log = logging.getLogger(__name__)

EXPM_MAX_DIM = 64
LONGTIME_RTOL, LONGTIME_ATOL = 1e-12, 1e-14


class IntegrationError(RuntimeError):
    """Numerical failure during evolution; ``diagnostic`` names the violated invariant."""

    def __init__(self, message: str, diagnostic: str = "", time: float | None = None):
        super().__init__(message)
        self.diagnostic = diagnostic
        self.time = time


class StepSizeUnderflow(IntegrationError):
    pass


class PositivityViolation(IntegrationError):
    pass


class TruncationGuard(IntegrationError):
    pass


@dataclass(frozen=True)
class LindbladTerm:
    rate: float
    collapse: Operator

    def __post_init__(self):
        if not np.isfinite(self.rate) or self.rate < 0:
            raise ValueError(f"Lindblad rate must be finite and non-negative, got {self.rate}")


@dataclass(frozen=True)
class Segment:
    hamiltonian: Operator
    terms: tuple[LindbladTerm, ...]
    duration: float
    label: str = ""

    def __post_init__(self):
        object.__setattr__(self, "terms", tuple(self.terms))
        if not self.duration > 0:
            raise ValueError(f"segment duration must be positive, got {self.duration}")
        for term in self.terms:
            if term.collapse.layout != self.hamiltonian.layout:
                raise LayoutError("collapse operator layout differs from the Hamiltonian's")

    @property
    def layout(self) -> SpaceLayout:
        return self.hamiltonian.layout


@dataclass(frozen=True)
class Pulse:
    """Instantaneous unitary applied between segments."""

    unitary: Operator
    label: str = ""

    @property
    def layout(self) -> SpaceLayout:
        return self.unitary.layout


Step = Union[Segment, Pulse]


@dataclass
class Schedule:
    steps: list
    output_dt: float

    def __post_init__(self):
        self.steps = list(self.steps)
        layouts = {s.layout for s in self.steps}
        if len(layouts) > 1:
            raise LayoutError("all schedule operators must share one layout")
        if not self.output_dt > 0:
            raise ValueError("output_dt must be positive")
        for s in self.segments:
            if self.output_dt > s.duration * (1 + 1e-12):
                raise ValueError(
                    f"output_dt {self.output_dt:g} exceeds segment duration {s.duration:g}"
                )

    @property
    def segments(self) -> list[Segment]:
        return [s for s in self.steps if isinstance(s, Segment)]

    @property
    def duration(self) -> float:
        return float(sum(s.duration for s in self.segments))

    @property
    def layout(self) -> SpaceLayout | None:
        return self.steps[0].layout if self.steps else None

    @classmethod
    def single(cls, hamiltonian: Operator, terms, duration: float, output_dt: float) -> "Schedule":
        return cls([Segment(hamiltonian, tuple(terms), duration)], output_dt)


@dataclass
class IntegratorConfig:
    method: str = "dopri5"  # "dopri5" | "rk4" | "krylov"
    rtol: float = 1e-8
    atol: float = 1e-10
    rk4_dt: float | None = None
    first_step: float | None = None
    max_steps: int = 50_000_000
    trace_tol: float = 1e-7
    positivity_tol: float = -1e-6
    truncation_tol: float = 1e-6
    check_positivity: bool = True
    store_states: bool = False
    krylov_dim: int = 30

    def __post_init__(self):
        if self.method not in ("dopri5", "rk4", "krylov"):
            raise ValueError(f"unknown integrator method {self.method!r}")
        if self.method == "rk4" and not (self.rk4_dt and self.rk4_dt > 0):
            raise ValueError("rk4 needs a positive rk4_dt")
        if self.krylov_dim < 4:
            raise ValueError("krylov_dim must be >= 4")


@dataclass
class Trajectory:
    times: np.ndarray
    xi2: np.ndarray
    mean_spin: np.ndarray
    trace_error: np.ndarray
    purity: np.ndarray
    ancilla_population: np.ndarray
    min_eigenvalue: np.ndarray
    final_state: QuantumState | None = None
    spin_states: list | None = None
    stats: dict = field(default_factory=dict)
    flags: list = field(default_factory=list)

    def __len__(self):
        return len(self.times)

    CSV_HEADER = "t_s,xi2,jx,jy,jz,trace_err,purity,anc_pop"

    def to_csv(self) -> str:
        rows = [self.CSV_HEADER]
        for i in range(len(self.times)):
            vals = (self.times[i], self.xi2[i], *self.mean_spin[i], self.trace_error[i],
                    self.purity[i], self.ancilla_population[i])
            rows.append(",".join(format_float(v) for v in vals))
        return "\n".join(rows) + "\n"


def format_float(v: float) -> str:
    return f"{float(v):.12g}"


# --------------------------------------------------------------------------
# Right-hand side


def _check_generator(H: Operator, terms: Sequence[LindbladTerm]):
    if not H.is_hermitian(1e-10 * max(1.0, float(np.max(np.abs(H.matrix), initial=0.0)))):
        raise ValueError(f"Hamiltonian is not Hermitian (error {H.hermiticity_error():.3e})")
    for term in terms:
        if term.collapse.layout != H.layout:
            raise LayoutError("collapse operator layout differs from the Hamiltonian's")


def lindblad_rhs(H: Operator, terms: Sequence[LindbladTerm], rho) -> np.ndarray:
    """d(rho)/dt = -i[H, rho] + sum_k rate_k D[L_k](rho)."""
    _check_generator(H, terms)
    rho = rho.rho if isinstance(rho, QuantumState) else np.asarray(rho, dtype=complex)
    if rho.shape != H.matrix.shape:
        raise LayoutError(f"state shape {rho.shape} does not match operator shape {H.matrix.shape}")
    h = H.matrix
    out = -1j * (h @ rho - rho @ h)
    for term in terms:
        L = term.collapse.matrix
        Ld = L.conj().T
        LdL = Ld @ L
        out += term.rate * (L @ rho @ Ld - 0.5 * (LdL @ rho + rho @ LdL))
    return out


class _Generator:
    """Precomputed Liouvillian action for Hermitian density matrices."""

    def __init__(self, H: Operator, terms: Sequence[LindbladTerm]):
        _check_generator(H, terms)
        h_nh = H.matrix.copy()
        self.jumps = []
        dim = H.dim
        for term in terms:
            if term.rate == 0:
                continue
            L = term.collapse.matrix
            h_nh = h_nh - 0.5j * term.rate * (L.conj().T @ L)
            self.jumps.append((term.rate, _maybe_sparse(L)))
        self.h_nh = _maybe_sparse(h_nh)
        self.dim = dim
        self._norm = None

    @property
    def norm_bound(self) -> float:
        """Cheap upper bound on the generator's induced infinity norm."""
        if self._norm is None:
            s = 2 * _inf_norm(self.h_nh)
            for rate, L in self.jumps:
                s += rate * _inf_norm(L) * _inf_norm(L.conj().T)
            self._norm = s
        return self._norm

    def __call__(self, rho: np.ndarray) -> np.ndarray:
        out = self.h_nh @ rho
        out *= -1j
        out += out.conj().T
        for rate, L in self.jumps:
            y = L @ rho
            out += rate * (L @ y.conj().T).conj().T
        return out


def _inf_norm(m) -> float:
    return float(np.max(np.asarray(abs(m).sum(axis=1)), initial=0.0))


def _maybe_sparse(m: np.ndarray):
    if m.shape[0] >= 32 and np.count_nonzero(m) < 0.2 * m.size:
        return scipy.sparse.csr_matrix(m)
    return m


# Dormand-Prince 5(4) tableau
_A = np.array([
    [0, 0, 0, 0, 0, 0],
    [1 / 5, 0, 0, 0, 0, 0],
    [3 / 40, 9 / 40, 0, 0, 0, 0],
    [44 / 45, -56 / 15, 32 / 9, 0, 0, 0],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729, 0, 0],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656, 0],
    [35 / 384, 0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
])
_B = np.array([35 / 384, 0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0])
_E = _B - np.array([5179 / 57600, 0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40])


class _Stepper:
    """Advances a density matrix under one generator; keeps the step-size proposal between calls."""

    def __init__(self, gen: _Generator, config: IntegratorConfig, stats: dict):
        self.gen = gen
        self.cfg = config
        self.stats = stats
        self.h = config.first_step
        self._k1 = None

    def _initial_step(self, rho, f0, span):
        scale = self.cfg.atol + self.cfg.rtol * np.abs(rho)
        with np.errstate(over="ignore", invalid="ignore"):
            d0 = np.sqrt(np.mean(np.abs(rho / scale) ** 2))
            d1 = np.sqrt(np.mean(np.abs(f0 / scale) ** 2))
            h = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
        if not np.isfinite(h) or h <= 0:
            h = 1e-6 * span
        return min(h, span)

    def _hermitize(self, rho):
        corr = 0.5 * (rho - rho.conj().T)
        c = float(np.max(np.abs(corr), initial=0.0))
        if c > self.stats["max_hermitian_correction"]:
            self.stats["max_hermitian_correction"] = c
        return rho - corr

    def advance(self, rho: np.ndarray, t0: float, t1: float) -> np.ndarray:
        if self.cfg.method == "rk4":
            return self._advance_rk4(rho, t0, t1)
        if self.cfg.method == "krylov":
            return self._advance_krylov(rho, t0, t1)
        return self._advance_dopri(rho, t0, t1)

    def _advance_krylov(self, rho, t0, t1):
        """exp(L (t1 - t0)) rho by restarted Arnoldi with an a-posteriori error estimate.

        The generator maps Hermitian matrices to Hermitian matrices, so the Arnoldi
        basis is built over that real vector space (inner product tr(A B) is real).
        Local error per substep is held below rtol times the current norm.
        """
        f = self.gen
        st = self.stats
        m = self.cfg.krylov_dim
        tol = self.cfg.rtol
        d = rho.shape[0]
        span = t1 - t0
        anorm = max(f.norm_bound, 1e-300)
        if self.h is None:
            fact = ((m + 1) / np.e) ** (m + 1) * np.sqrt(2 * np.pi * (m + 1))
            self.h = (fact * tol / 4) ** (1 / m) / anorm
        w = rho.reshape(-1)
        t = 0.0
        V = np.empty((m + 1, d * d), dtype=complex)
        while span - t > 1e-14 * max(abs(t1), span):
            beta = float(np.linalg.norm(w))
            if beta == 0.0:
                break
            step = min(self.h, span - t)
            clipped = step < self.h
            Hk = np.zeros((m + 2, m + 2))
            V[0] = w / beta
            mb, happy = m, False
            for j in range(m):
                p = f(V[j].reshape(d, d)).reshape(-1)
                # classical Gram-Schmidt, applied twice
                for _ in range(2):
                    c = np.real(V[: j + 1].conj() @ p)
                    p = p - c @ V[: j + 1]
                    Hk[: j + 1, j] += c
                nrm = float(np.linalg.norm(p))
                st["rhs_evals"] += 1
                if nrm <= 1e-12 * anorm:
                    mb, happy = j + 1, True
                    step = span - t
                    break
                Hk[j + 1, j] = nrm
                V[j + 1] = p / nrm
            if happy:
                F = scipy.linalg.expm(step * Hk[:mb, :mb])
                err = 0.0
            else:
                Hk[m + 1, m] = 1.0
                avnorm = float(np.linalg.norm(f(V[m].reshape(d, d))))
                st["rhs_evals"] += 1
                for _ in range(50):
                    F = scipy.linalg.expm(step * Hk)
                    phi1 = abs(beta * F[m, 0])
                    phi2 = abs(beta * F[m + 1, 0] * avnorm)
                    if phi1 > 10 * phi2:
                        err, xm = phi2, 1 / m
                    elif phi1 > phi2:
                        err, xm = phi1 * phi2 / (phi1 - phi2), 1 / m
                    else:
                        err, xm = phi1, 1 / (m - 1)
                    if err <= 1.2 * tol * beta:
                        break
                    st["rejected"] += 1
                    step *= 0.9 * (tol * beta / err) ** xm
                    clipped = False
                else:
                    raise StepSizeUnderflow("Krylov error estimate never met the tolerance",
                                            "krylov_error", t0 + t)
            k = mb if happy else m + 1
            w = (beta * F[:k, 0]) @ V[:k]
            w = self._hermitize(w.reshape(d, d)).reshape(-1)
            t += step
            st["steps"] += 1
            if not happy and not clipped:
                grow = 5.0 if err == 0 else 0.9 * (tol * beta / err) ** xm
                self.h = step * min(5.0, max(0.2, grow))
            if st["steps"] + st["rejected"] > self.cfg.max_steps:
                raise IntegrationError(f"exceeded max_steps={self.cfg.max_steps}", "max_steps", t0 + t)
        return w.reshape(d, d)

    def _advance_rk4(self, rho, t0, t1):
        f = self.gen
        t = t0
        while t < t1 - 1e-15 * max(1.0, abs(t1)):
            h = min(self.cfg.rk4_dt, t1 - t)
            k1 = f(rho)
            k2 = f(rho + 0.5 * h * k1)
            k3 = f(rho + 0.5 * h * k2)
            k4 = f(rho + h * k3)
            rho = self._hermitize(rho + (h / 6) * (k1 + 2 * k2 + 2 * k3 + k4))
            t += h
            self.stats["steps"] += 1
            self.stats["rhs_evals"] += 4
        return rho

    def _advance_dopri(self, rho, t0, t1):
        f = self.gen
        cfg = self.cfg
        st = self.stats
        d = rho.shape[0]
        t = t0
        span = t1 - t0
        if self._k1 is None:
            self._k1 = f(rho)
            st["rhs_evals"] += 1
        if self.h is None:
            self.h = self._initial_step(rho, self._k1, span)
        ks = np.empty((7, d * d), dtype=complex)
        ks[0] = self._k1.reshape(-1)
        y = rho.reshape(-1)
        while t1 - t > 1e-14 * max(abs(t1), span):
            h_nat = self.h
            h = min(h_nat, t1 - t)
            clipped = h < h_nat
            if not h >= 1e-14 * max(abs(t), span):
                raise StepSizeUnderflow(
                    f"step size {h:.3e} underflowed at t={t:.6e}", "step_size_underflow", t
                )
            for i in range(1, 7):
                acc = y + (h * _A[i, :i]) @ ks[:i]
                ks[i] = f(acc.reshape(d, d)).reshape(-1)
            st["rhs_evals"] += 6
            # the last stage argument is the 5th-order solution (FSAL)
            err = (h * _E) @ ks
            scale = cfg.atol + cfg.rtol * np.maximum(np.abs(y), np.abs(acc))
            with np.errstate(over="ignore", invalid="ignore"):
                en = float(np.sqrt(np.mean(np.abs(err / scale) ** 2)))
            if not np.isfinite(en):
                en = np.inf
            if en <= 1.0:
                t = t + h
                y = self._hermitize(acc.reshape(d, d)).reshape(-1)
                ks[0] = ks[6]
                st["steps"] += 1
                factor = 5.0 if en == 0 else min(5.0, max(0.2, 0.9 * en ** -0.2))
                if not clipped or factor < 1:
                    self.h = h * factor
            else:
                st["rejected"] += 1
                self.h = h * max(0.2, 0.9 * en ** -0.2)
            if st["steps"] + st["rejected"] > cfg.max_steps:
                raise IntegrationError(f"exceeded max_steps={cfg.max_steps}", "max_steps", t)
        self._k1 = ks[0].reshape(d, d).copy()
        return y.reshape(d, d)


# --------------------------------------------------------------------------
# Evolution


class _Recorder:
    def __init__(self, layout: SpaceLayout, config: IntegratorConfig):
        self.layout = layout
        self.spin_layout = layout.spin_only()
        self.cfg = config
        self.rows = []
        self.states = [] if config.store_states else None
        self.flags = []
        if layout.has_ancilla:
            a = ancilla_lowering_matrix(layout)
            self.n_anc = np.diag(np.real(np.diag(a.T @ a)))
        else:
            self.n_anc = None

    def record(self, t: float, rho: np.ndarray):
        lay = self.layout
        if lay.has_ancilla:
            rho_s = partial_trace_ancilla_matrix(rho, lay)
            ds, da = lay.spin_dim, lay.ancilla_dim
            anc_diag = np.real(np.einsum("iaia->a", rho.reshape(ds, da, ds, da)))
            anc_pop = float(anc_diag @ np.diag(self.n_anc))
            if lay.ancilla is AncillaKind.BOSON and anc_diag[-1] > self.cfg.truncation_tol:
                raise TruncationGuard(
                    f"population {anc_diag[-1]:.3e} in the top boson level exceeds "
                    f"{self.cfg.truncation_tol:g}; increase d_trunc", "boson_truncation", t,
                )
        else:
            rho_s = rho
            anc_pop = 0.0
        tr = complex(np.trace(rho))
        trace_err = abs(tr - 1.0)
        if trace_err > self.cfg.trace_tol and "trace_drift" not in self.flags:
            self.flags.append("trace_drift")
            log.warning("trace drift %.3e at t=%.6e", trace_err, t)
        purity = float(np.real(np.vdot(rho, rho)))
        lmin = float("nan")
        if self.cfg.check_positivity:
            lmin = float(np.linalg.eigvalsh(rho)[0])
            if lmin < self.cfg.positivity_tol:
                raise PositivityViolation(
                    f"minimum eigenvalue {lmin:.3e} below {self.cfg.positivity_tol:g} at t={t:.6e}",
                    "positivity", t,
                )
        mean, cov = spin_moments(rho_s / np.real(tr), self.spin_layout)
        rep = xi2_from_moments(mean, cov, lay.n_spins)
        if not rep.defined and "undefined_xi2" not in self.flags:
            self.flags.append("undefined_xi2")
        self.rows.append((t, rep.xi2, *mean, trace_err, purity, anc_pop, lmin))
        if self.states is not None:
            self.states.append(rho_s.copy())

    def trajectory(self, final: QuantumState, stats: dict) -> Trajectory:
        a = np.array(self.rows, dtype=float).reshape(-1, 9)
        return Trajectory(
            times=a[:, 0], xi2=a[:, 1], mean_spin=a[:, 2:5], trace_error=a[:, 5],
            purity=a[:, 6], ancilla_population=a[:, 7], min_eigenvalue=a[:, 8],
            final_state=final, spin_states=self.states, stats=stats, flags=self.flags,
        )


def _apply_unitary(rho, u):
    out = u @ rho @ u.conj().T
    return 0.5 * (out + out.conj().T)


def evolve(state: QuantumState, schedule: Schedule, config: IntegratorConfig | None = None) -> Trajectory:
    """Integrate ``state`` through ``schedule``, recording observables every ``output_dt``.

    Records are taken on the global grid k*output_dt plus the final time.  Pulses
    falling on a grid time are applied before that time is recorded.
    """
    config = config or IntegratorConfig()
    layout = state.layout
    if schedule.layout is not None and schedule.layout != layout:
        raise LayoutError(f"state layout {layout} does not match schedule layout {schedule.layout}")
    stats = {"steps": 0, "rejected": 0, "rhs_evals": 0, "max_hermitian_correction": 0.0,
             "segments": 0, "pulses": 0}
    rec = _Recorder(layout, config)
    rho = np.array(state.rho, dtype=complex)
    dt_out = schedule.output_dt
    total = schedule.duration
    eps = 1e-9 * dt_out
    n_out = int(np.floor(total / dt_out + 1e-9))
    grid = [k * dt_out for k in range(1, n_out + 1)]
    if not grid or total - grid[-1] > eps:
        grid.append(total)
    pending = [0.0]
    gi = 0
    t = 0.0
    steppers: dict = {}
    for step in schedule.steps:
        if isinstance(step, Pulse):
            rho = _apply_unitary(rho, step.unitary.matrix)
            stats["pulses"] += 1
            continue
        for tp in pending:
            rec.record(tp, rho)
        pending = []
        key = (id(step.hamiltonian),) + tuple((id(x.collapse), x.rate) for x in step.terms)
        stepper = steppers.get(key)
        if stepper is None:
            stepper = _Stepper(_Generator(step.hamiltonian, step.terms), config, stats)
            steppers[key] = stepper
        stepper._k1 = None
        t_end = t + step.duration
        while gi < len(grid) and grid[gi] < t_end - eps:
            rho = stepper.advance(rho, t, grid[gi])
            t = grid[gi]
            rec.record(t, rho)
            gi += 1
        rho = stepper.advance(rho, t, t_end)
        t = t_end
        stats["segments"] += 1
        if gi < len(grid) and abs(grid[gi] - t_end) <= eps:
            pending.append(grid[gi])
            gi += 1
    for tp in pending:
        rec.record(tp, rho)
    if stats["max_hermitian_correction"] > 1e-9:
        log.warning("hermitian correction reached %.3e", stats["max_hermitian_correction"])
    return rec.trajectory(QuantumState(rho, layout), stats)


# --------------------------------------------------------------------------
# Superoperator routes


def liouvillian(H: Operator, terms: Sequence[LindbladTerm], sparse: bool = False):
    """Matrix of the Lindblad generator acting on row-major vec(rho)."""
    _check_generator(H, terms)
    d = H.dim
    eye = scipy.sparse.identity(d, dtype=complex, format="csr")
    h = scipy.sparse.csr_matrix(H.matrix)
    sup = -1j * (scipy.sparse.kron(h, eye) - scipy.sparse.kron(eye, h.T))
    for term in terms:
        if term.rate == 0:
            continue
        L = scipy.sparse.csr_matrix(term.collapse.matrix)
        LdL = (L.conj().T @ L).tocsr()
        sup = sup + term.rate * (
            scipy.sparse.kron(L, L.conj()) - 0.5 * scipy.sparse.kron(LdL, eye) - 0.5 * scipy.sparse.kron(eye, LdL.T)
        )
    sup = sup.tocsc()
    return sup if sparse else sup.toarray()


def evolve_expm(state: QuantumState, segment: Segment) -> QuantumState:
    """Exact propagation of one segment through the exponential of the Liouvillian."""
    if state.layout != segment.layout:
        raise LayoutError("state layout does not match segment layout")
    d = state.layout.dim
    if d > EXPM_MAX_DIM:
        raise ValueError(f"evolve_expm needs dimension <= {EXPM_MAX_DIM}, got {d}")
    sup = liouvillian(segment.hamiltonian, segment.terms)
    vec = scipy.linalg.expm(sup * segment.duration) @ state.rho.reshape(-1)
    rho = vec.reshape(d, d)
    return QuantumState(0.5 * (rho + rho.conj().T), state.layout)


@dataclass(frozen=True)
class SteadyStateInfo:
    method: str
    residual: float
    scale: float
    degenerate: bool
    gap: float
    flags: tuple = ()


def _generator_scale(H: Operator, terms) -> float:
    s = 2 * float(np.linalg.norm(H.matrix, 2))
    for term in terms:
        s += 2 * term.rate * float(np.linalg.norm(term.collapse.matrix, 2)) ** 2
    return s


def _normalize(rho: np.ndarray) -> np.ndarray:
    rho = 0.5 * (rho + rho.conj().T)
    return rho / np.real(np.trace(rho))


def _steady_nullspace(H: Operator, terms) -> tuple[np.ndarray, SteadyStateInfo]:
    d = H.dim
    sup = liouvillian(H, terms, sparse=True)
    scale = float(scipy.sparse.linalg.norm(sup, 1))
    if d * d <= 400:
        vals, vecs = np.linalg.eig(sup.toarray())
    else:
        # small real shift keeps the factorization regular when L is exactly singular
        vals, vecs = scipy.sparse.linalg.eigs(sup, k=2, sigma=-1e-9 * scale, which="LM", tol=1e-14)
    order = np.argsort(np.abs(vals))
    gap = float(np.abs(vals[order[1]]))
    degenerate = gap < 1e-12 * scale
    rho0 = vecs[:, order[0]].reshape(d, d)
    if degenerate:
        log.warning("steady space is degenerate (second eigenvalue %.3e)", gap)
        rho = _normalize(rho0)
    else:
        # polish with a trace-constrained solve: replace one equation by tr(rho) = 1
        a = sup.tolil()
        a[0, :] = np.eye(d).reshape(1, -1)
        b = np.zeros(d * d, dtype=complex)
        b[0] = 1.0
        rho = _normalize(scipy.sparse.linalg.spsolve(a.tocsc(), b).reshape(d, d))
    residual = float(np.linalg.norm(sup @ rho.reshape(-1)))
    flags = ("degenerate_steady_space",) if degenerate else ()
    return rho, SteadyStateInfo("nullspace", residual, scale, degenerate, gap, flags)


def _steady_longtime(H: Operator, terms, tol: float, dwell: float | None, t_max: float | None,
                     config: IntegratorConfig, rho0: np.ndarray | None) -> tuple[np.ndarray, SteadyStateInfo]:
    gen = _Generator(H, terms)
    scale = _generator_scale(H, terms)
    if dwell is None:
        rates = [t.rate for t in terms if t.rate > 0]
        if not rates:
            raise ValueError("long-time steady state needs dissipation or an explicit dwell")
        dwell = 10.0 / min(rates)
    t_max = 1e4 * dwell if t_max is None else t_max
    d = H.dim
    rho = np.eye(d, dtype=complex) / d if rho0 is None else np.array(rho0, dtype=complex)
    stats = {"steps": 0, "rejected": 0, "rhs_evals": 0, "max_hermitian_correction": 0.0}
    stepper = _Stepper(gen, config, stats)
    chunk = dwell / 20
    t = 0.0
    quiet_since = None
    while t < t_max:
        rho = stepper.advance(rho, t, t + chunk)
        t += chunk
        res = float(np.linalg.norm(gen(rho)))
        if res < tol * scale:
            quiet_since = t if quiet_since is None else quiet_since
            if t - quiet_since >= dwell:
                rho = _normalize(rho)
                info = SteadyStateInfo("longtime", float(np.linalg.norm(gen(rho))), scale, False, float("nan"))
                return rho, info
        else:
            quiet_since = None
    raise IntegrationError(f"no steady state within t_max={t_max:g}", "steady_state_not_reached", t)


def steady_state(H: Operator, terms: Sequence[LindbladTerm], method: str = "auto", *,
                 tol: float = 1e-10, dwell: float | None = None, t_max: float | None = None,
                 config: IntegratorConfig | None = None, initial: QuantumState | None = None,
                 return_info: bool = False):
    """Stationary state of the Lindblad generator.

    ``method`` is "nullspace", "longtime" or "auto" (null space up to dimension 64).
    The long-time criterion is ``||d rho/dt|| < tol * ||L||`` held for ``dwell``
    seconds, with ``dwell`` defaulting to ten times the slowest dissipative time.
    """
    if method == "auto":
        method = "nullspace" if H.dim <= EXPM_MAX_DIM else "longtime"
    if method == "nullspace":
        if H.dim > EXPM_MAX_DIM:
            raise ValueError(f"null-space path needs dimension <= {EXPM_MAX_DIM}, got {H.dim}")
        rho, info = _steady_nullspace(H, terms)
    elif method == "longtime":
        rho0 = None if initial is None else initial.rho
        # the default integrator tolerances leave a residual floor near 1e-9 * ||L||
        config = config or IntegratorConfig(rtol=LONGTIME_RTOL, atol=LONGTIME_ATOL)
        rho, info = _steady_longtime(H, terms, tol, dwell, t_max, config, rho0)
    else:
        raise ValueError(f"unknown steady-state method {method!r}")
    state = QuantumState(rho, H.layout)
    return (state, info) if return_info else state
