"""Hamiltonians and dissipators for spins coupled to a damped ancilla, plus adiabatic elimination."""

from __future__ import annotations

import dataclasses
import warnings
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .dynamics import LindbladTerm
from .operators import (
    AncillaKind,
    LayoutError,
    Operator,
    Representation,
    SpaceLayout,
    ancilla_ground_projector,
    ancilla_lowering,
    collective_op,
    embed_spin,
    identity,
    local_pauli,
)

TWO_PI = 2 * np.pi


class DriveConditionWarning(UserWarning):
    """The drive is not strong enough for the rotating-wave step behind the driven OAT Hamiltonian."""


@dataclass(frozen=True)
class EffectiveConstants:
    Gamma: float
    chi_eff: float
    gamma_eff: float


@dataclass(frozen=True)
class ModelSpec:
    """Physical parameters; every rate and energy is an angular frequency in rad/s."""

    n_spins: int
    lambda_bar: float
    delta_lambda: float = 0.0
    lambda_i: Optional[tuple] = None
    delta_omega: float = 0.0
    omega_offsets: Optional[tuple] = None
    detuning: float = 0.0
    drive: float = 0.0
    drive_phase: float = 0.0
    gamma: float = 0.0
    ancilla: AncillaKind = AncillaKind.QUBIT
    d_trunc: int = 4
    rng_seed: Optional[int] = None

    def __post_init__(self):
        object.__setattr__(self, "ancilla", AncillaKind(self.ancilla))
        if self.n_spins < 1:
            raise ValueError("n_spins must be >= 1")
        for name in ("lambda_bar", "delta_lambda", "delta_omega", "gamma"):
            v = getattr(self, name)
            if not np.isfinite(v) or v < 0:
                raise ValueError(f"{name} must be finite and non-negative, got {v}")
        for name in ("detuning", "drive", "drive_phase"):
            if not np.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if self.lambda_i is not None:
            lam = tuple(float(x) for x in self.lambda_i)
            if len(lam) != self.n_spins:
                raise ValueError(f"lambda_i has {len(lam)} entries for {self.n_spins} spins")
            if min(lam) <= 0:
                raise ValueError("all lambda_i must be positive")
            object.__setattr__(self, "lambda_i", lam)
        if self.omega_offsets is not None:
            off = tuple(float(x) for x in self.omega_offsets)
            if len(off) != self.n_spins:
                raise ValueError(f"omega_offsets has {len(off)} entries for {self.n_spins} spins")
            object.__setattr__(self, "omega_offsets", off)

    def replace(self, **changes) -> "ModelSpec":
        return dataclasses.replace(self, **changes)

    @property
    def Gamma(self) -> float:
        return float(np.hypot(self.detuning, self.gamma / 2))

    def effective_constants(self) -> EffectiveConstants:
        g2 = self.detuning**2 + self.gamma**2 / 4
        if g2 == 0:
            raise ValueError("Gamma = 0: the ancilla cannot be eliminated")
        lam2 = self.lambda_bar**2
        return EffectiveConstants(float(np.sqrt(g2)), self.detuning * lam2 / g2, lam2 * self.gamma / g2)

    @property
    def has_disorder(self) -> bool:
        offsets = self.delta_omega > 0 or (self.omega_offsets is not None and any(self.omega_offsets))
        couplings = self.delta_lambda > 0 or (
            self.lambda_i is not None and any(x != self.lambda_bar for x in self.lambda_i)
        )
        return offsets or couplings

    def realized(self, rng: np.random.Generator | None = None) -> "ModelSpec":
        """Copy with explicit per-spin lists filled in (drawing them if needed)."""
        offsets, lams = resolve_disorder(self, rng)
        return self.replace(omega_offsets=tuple(offsets), lambda_i=tuple(lams))


PRESETS = ("FQ_NV", "MR_DONOR", "DCR_FQ")


def preset(name: str, n_spins: int, **overrides) -> ModelSpec:
    """Reference parameter sets: flux qubit with NV centres, microwave resonator with donors, and the DCR regime."""
    key = name.upper()
    if key == "FQ_NV":
        lam = TWO_PI * 12e3
        base = dict(lambda_bar=lam, delta_lambda=TWO_PI * 1e3, delta_omega=TWO_PI * 3e3,
                    gamma=0.0265 * lam * n_spins, detuning=20 * lam * n_spins,
                    ancilla=AncillaKind.QUBIT)
    elif key == "MR_DONOR":
        lam = TWO_PI * 56.0
        base = dict(lambda_bar=lam, delta_lambda=TWO_PI * 4.0, delta_omega=TWO_PI * 15.0,
                    gamma=0.1 * lam * n_spins, detuning=20 * lam * n_spins,
                    ancilla=AncillaKind.BOSON, d_trunc=4)
    elif key == "DCR_FQ":
        lam = TWO_PI * 12e3
        base = dict(lambda_bar=lam, delta_lambda=TWO_PI * 1e3, delta_omega=TWO_PI * 3e3,
                    gamma=20 * lam * n_spins, detuning=0.0, drive=0.07 * lam,
                    ancilla=AncillaKind.QUBIT)
    else:
        raise KeyError(f"unknown preset {name!r}; choose from {PRESETS}")
    base.update(overrides)
    return ModelSpec(n_spins=n_spins, **base)


# --------------------------------------------------------------------------
# Disorder


def sample_disorder(spec: ModelSpec, rng: np.random.Generator | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Gaussian frequency offsets (re-centred to zero mean) and positive Gaussian couplings."""
    if spec.delta_lambda > 0 and spec.delta_lambda >= spec.lambda_bar:
        raise ValueError("delta_lambda >= lambda_bar makes the positive truncation pathological")
    if rng is None:
        rng = np.random.default_rng(spec.rng_seed)
    n = spec.n_spins
    offsets = np.zeros(n)
    if spec.delta_omega > 0:
        offsets = rng.normal(0.0, spec.delta_omega, n)
        offsets -= offsets.mean()
    lams = np.full(n, float(spec.lambda_bar))
    if spec.delta_lambda > 0:
        lams = rng.normal(spec.lambda_bar, spec.delta_lambda, n)
        bad = lams <= 0
        while bad.any():
            lams[bad] = rng.normal(spec.lambda_bar, spec.delta_lambda, int(bad.sum()))
            bad = lams <= 0
    return offsets, lams


def resolve_disorder(spec: ModelSpec, rng: np.random.Generator | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Explicit lists win; otherwise draw from the model's widths."""
    need_draw = (spec.omega_offsets is None and spec.delta_omega > 0) or (
        spec.lambda_i is None and spec.delta_lambda > 0
    )
    if need_draw and rng is None and spec.rng_seed is None:
        raise ValueError("disorder widths are set but neither explicit lists nor rng_seed were given")
    drawn_off, drawn_lam = sample_disorder(spec, rng) if need_draw else (
        np.zeros(spec.n_spins), np.full(spec.n_spins, float(spec.lambda_bar)))
    offsets = np.asarray(spec.omega_offsets, dtype=float) if spec.omega_offsets is not None else drawn_off
    lams = np.asarray(spec.lambda_i, dtype=float) if spec.lambda_i is not None else drawn_lam
    return offsets, lams


# --------------------------------------------------------------------------
# Builders


def drive_operator(layout: SpaceLayout, phase: float) -> Operator:
    """n_eta . J with n_eta = (cos eta, sin eta, 0)."""
    return collective_op(layout, "x") * np.cos(phase) + collective_op(layout, "y") * np.sin(phase)


def broadening_operator(layout: SpaceLayout, offsets: Sequence[float]) -> Operator:
    """(1/2) sum_i (omega_i - omega_bar) sigma_z^(i)."""
    out = identity(layout) * 0.0
    if not np.any(offsets):
        return out
    if layout.representation is Representation.DICKE:
        raise LayoutError("inhomogeneous broadening needs the product representation")
    for i, w in enumerate(offsets, start=1):
        if w:
            out = out + local_pauli(layout, i, "z") * (0.5 * w)
    return out


def _check_disorder_layout(spec: ModelSpec, layout: SpaceLayout):
    if layout.n_spins != spec.n_spins:
        raise LayoutError(f"layout has {layout.n_spins} spins, spec has {spec.n_spins}")
    if layout.representation is Representation.DICKE and spec.has_disorder:
        raise LayoutError("disorder requires the product representation")


def build_full(spec: ModelSpec, layout: SpaceLayout) -> tuple[Operator, list[LindbladTerm]]:
    """Rotating-frame spin-ancilla Hamiltonian and ancilla damping term."""
    if not layout.has_ancilla:
        raise LayoutError("the full model needs an ancilla in the layout")
    if layout.ancilla is not spec.ancilla:
        raise LayoutError(f"layout ancilla {layout.ancilla.value} differs from spec ancilla {spec.ancilla.value}")
    _check_disorder_layout(spec, layout)
    a = ancilla_lowering(layout)
    ad = a.dag()
    jp = collective_op(layout, "plus")
    jm = collective_op(layout, "minus")
    H = (ad @ a) * spec.detuning + drive_operator(layout, spec.drive_phase) * spec.drive
    H = H + (jp @ a + jm @ ad) * spec.lambda_bar
    if spec.has_disorder:
        offsets, lams = resolve_disorder(spec)
        H = H + broadening_operator(layout, offsets)
        for i, dl in enumerate(lams - spec.lambda_bar, start=1):
            if dl:
                sp = local_pauli(layout, i, "plus")
                sm = local_pauli(layout, i, "minus")
                H = H + (sp @ a + sm @ ad) * dl
    return H, [LindbladTerm(spec.gamma, a)]


def build_effective(spec: ModelSpec, layout: SpaceLayout) -> tuple[Operator, list[LindbladTerm]]:
    """Spin-only master equation after eliminating the ancilla (couplings taken homogeneous)."""
    if layout.has_ancilla:
        raise LayoutError("the effective model lives on the spin space only")
    if layout.n_spins != spec.n_spins:
        raise LayoutError(f"layout has {layout.n_spins} spins, spec has {spec.n_spins}")
    c = spec.effective_constants()
    offsets = np.zeros(spec.n_spins)
    if spec.delta_omega > 0 or spec.omega_offsets is not None:
        offsets, _ = resolve_disorder(spec.replace(delta_lambda=0.0, lambda_i=None))
    jz = collective_op(layout, "z")
    H = broadening_operator(layout, offsets) + drive_operator(layout, spec.drive_phase) * spec.drive
    H = H + (jz @ jz - jz - casimir(layout)) * c.chi_eff
    return H, [LindbladTerm(c.gamma_eff, collective_op(layout, "minus"))]


def casimir(layout: SpaceLayout) -> Operator:
    jx, jy, jz = (collective_op(layout, a) for a in ("x", "y", "z"))
    return jx @ jx + jy @ jy + jz @ jz


def build_ideal_oat(n_spins: int, chi: float, layout: SpaceLayout) -> tuple[Operator, list]:
    if layout.n_spins != n_spins:
        raise LayoutError(f"layout has {layout.n_spins} spins, expected {n_spins}")
    jz = collective_op(layout, "z")
    return (jz @ jz) * chi, []


def build_driven_oat_effective(spec: ModelSpec, layout: SpaceLayout) -> tuple[Operator, list]:
    """Time-averaged Hamiltonian for a strong drive: -(chi/2)(n_eta.J)^2 - (chi/2) J.J."""
    if layout.has_ancilla:
        raise LayoutError("the driven OAT Hamiltonian lives on the spin space only")
    chi = spec.effective_constants().chi_eff
    if abs(spec.drive) < 10 * spec.n_spins * abs(chi):
        warnings.warn(
            f"drive {spec.drive:.3g} is not much larger than N*chi_eff = {spec.n_spins * chi:.3g}",
            DriveConditionWarning, stacklevel=2,
        )
    nj = drive_operator(layout, spec.drive_phase)
    return (nj @ nj + casimir(layout)) * (-0.5 * chi), []


def build_dcr(layout: SpaceLayout, gamma: float, omega_x: float = 0.0, omega_y: float = 0.0,
              offsets: Sequence[float] | None = None) -> tuple[Operator, list[LindbladTerm]]:
    """Driven collective relaxation: H = Omega_x J_x + Omega_y J_y, collapse sqrt(gamma) J_-."""
    if layout.has_ancilla:
        raise LayoutError("the DCR master equation lives on the spin space only")
    H = collective_op(layout, "x") * omega_x + collective_op(layout, "y") * omega_y
    if offsets is not None:
        H = H + broadening_operator(layout, offsets)
    return H, [LindbladTerm(gamma, collective_op(layout, "minus"))]


def build_dcr_spec(spec: ModelSpec, layout: SpaceLayout) -> tuple[Operator, list[LindbladTerm]]:
    """DCR master equation from a spec: drive along n_eta, collective decay at ``spec.gamma``."""
    if layout.n_spins != spec.n_spins:
        raise LayoutError(f"layout has {layout.n_spins} spins, spec has {spec.n_spins}")
    offsets = None
    if spec.delta_omega > 0 or spec.omega_offsets is not None:
        offsets, _ = resolve_disorder(spec.replace(delta_lambda=0.0, lambda_i=None))
    return build_dcr(layout, spec.gamma, spec.drive * np.cos(spec.drive_phase),
                     spec.drive * np.sin(spec.drive_phase), offsets)


# --------------------------------------------------------------------------
# Adiabatic elimination


class EliminationError(ValueError):
    pass


def split_hamiltonian(H: Operator, P_g: Operator) -> dict[str, Operator]:
    """Block decomposition of H with respect to the ground projector P_g."""
    q = identity(H.layout) - P_g
    return {
        "V_g": P_g @ H @ P_g,
        "V_e": q @ H @ q,
        "V_plus": q @ H @ P_g,
        "V_minus": P_g @ H @ q,
    }


def _drop_spin_dependence(op: Operator) -> Operator:
    """Keep only the ancilla-only part: I_spin (x) Tr_spin(op) / d_spin."""
    lay = op.layout
    ds, da = lay.spin_dim, lay.ancilla_dim
    anc = np.einsum("iaib->ab", op.matrix.reshape(ds, da, ds, da)) / ds
    return Operator(np.kron(np.eye(ds), anc), lay)


def reiter_sorensen(parts: dict, A: Operator, gamma: float, P_g: Operator,
                    drop_spin_terms: bool = False, tol: float = 1e-12) -> tuple[Operator, Operator]:
    """Effective-operator elimination of the excited manifold.

    Returns ``(V_eff, L_eff)`` with L_eff normalised so that the effective dissipator is
    D[L_eff] at unit rate.  With ``drop_spin_terms`` only the ancilla-only part of V_e
    enters the non-Hermitian propagator.
    """
    layout = A.layout
    p = P_g.matrix
    if np.max(np.abs(p @ p - p)) > tol:
        raise EliminationError("P_g is not a projector")
    q = np.eye(layout.dim) - p
    blocks = {"V_g": (p, p), "V_e": (q, q), "V_plus": (q, p), "V_minus": (p, q)}
    scale = max(1.0, max(float(np.max(np.abs(parts[k].matrix))) for k in blocks))
    for name, (left, right) in blocks.items():
        m = parts[name].matrix
        if np.max(np.abs(left @ m @ right - m)) > tol * scale:
            raise EliminationError(f"{name} is not confined to its block")
    v_e = _drop_spin_dependence(parts["V_e"]) if drop_spin_terms else parts["V_e"]
    v_nh = v_e.matrix - 0.5j * gamma * (A.matrix.conj().T @ A.matrix)
    # invert on the range of Q only
    w, u = np.linalg.eigh(q)
    basis = u[:, w > 0.5]
    block = basis.conj().T @ v_nh @ basis
    if np.linalg.cond(block) > 1e12:
        raise EliminationError("V_NH is singular on the excited subspace")
    inv = basis @ np.linalg.inv(block) @ basis.conj().T
    vm, vp = parts["V_minus"].matrix, parts["V_plus"].matrix
    v_eff = -0.5 * vm @ (inv + inv.conj().T) @ vp + parts["V_g"].matrix
    l_eff = np.sqrt(gamma) * A.matrix @ inv @ vp
    return Operator(v_eff, layout), Operator(l_eff, layout)


def eliminate(spec: ModelSpec, layout: SpaceLayout, drop_spin_terms: bool = False) -> tuple[Operator, Operator]:
    """Adiabatic elimination applied to the full model built from ``spec``."""
    H, _ = build_full(spec, layout)
    pg = ancilla_ground_projector(layout)
    return reiter_sorensen(split_hamiltonian(H, pg), ancilla_lowering(layout), spec.gamma, pg, drop_spin_terms)


def closed_form_elimination(spec: ModelSpec, layout: SpaceLayout) -> tuple[Operator, Operator]:
    """Closed-form V_eff and L_eff on the ancilla ground manifold (homogeneous couplings)."""
    c = spec.effective_constants()
    pg = ancilla_ground_projector(layout)
    spin_lay = layout.spin_only()
    jz = collective_op(spin_lay, "z")
    offsets = spec.omega_offsets if spec.omega_offsets is not None else np.zeros(spec.n_spins)
    h_s = broadening_operator(spin_lay, offsets) + drive_operator(spin_lay, spec.drive_phase) * spec.drive
    h_s = h_s + (jz @ jz - jz - casimir(spin_lay)) * c.chi_eff
    v_eff = embed_spin(layout, h_s.matrix) @ pg
    coeff = np.sqrt(spec.gamma) * spec.lambda_bar * (spec.detuning + 0.5j * spec.gamma) / c.Gamma**2
    l_eff = embed_spin(layout, collective_op(spin_lay, "minus").matrix) @ pg * coeff
    return v_eff, l_eff
