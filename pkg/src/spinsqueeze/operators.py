"""Hilbert-space layouts, collective/local spin operators and spin coherent states.

Conventions used throughout the package:

* single-spin basis is ordered ``|down> = 0``, ``|up> = 1`` and ``|up>`` is the
  +1 eigenstate of sigma_z;
* the Dicke (j = N/2) basis is ordered by increasing m;
* composite spaces are ``spin (x) ancilla``;
* product-space sites are numbered 1..N, site 1 being the most significant
  factor of the Kronecker product.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from functools import lru_cache
from math import comb

import numpy as np

HERMITIAN_TOL = 1e-12


class LayoutError(ValueError):
    """Raised when an operation is not defined for a given layout."""


class Representation(str, enum.Enum):
    DICKE = "dicke"
    PRODUCT = "product"


class AncillaKind(str, enum.Enum):
    NONE = "none"
    QUBIT = "qubit"
    BOSON = "boson"


@dataclass(frozen=True)
class SpaceLayout:
    representation: Representation
    n_spins: int
    ancilla: AncillaKind = AncillaKind.NONE
    d_trunc: int = 4

    def __post_init__(self):
        object.__setattr__(self, "representation", Representation(self.representation))
        object.__setattr__(self, "ancilla", AncillaKind(self.ancilla))
        if int(self.n_spins) != self.n_spins or self.n_spins < 1:
            raise LayoutError(f"n_spins must be a positive integer, got {self.n_spins!r}")
        if self.ancilla is AncillaKind.BOSON and self.d_trunc < 2:
            raise LayoutError("boson truncation must be >= 2")

    @classmethod
    def dicke(cls, n_spins: int, ancilla="none", d_trunc: int = 4) -> "SpaceLayout":
        return cls(Representation.DICKE, n_spins, AncillaKind(ancilla), d_trunc)

    @classmethod
    def product(cls, n_spins: int, ancilla="none", d_trunc: int = 4) -> "SpaceLayout":
        return cls(Representation.PRODUCT, n_spins, AncillaKind(ancilla), d_trunc)

    @property
    def spin_dim(self) -> int:
        if self.representation is Representation.DICKE:
            return self.n_spins + 1
        return 2**self.n_spins

    @property
    def ancilla_dim(self) -> int:
        if self.ancilla is AncillaKind.NONE:
            return 1
        if self.ancilla is AncillaKind.QUBIT:
            return 2
        return self.d_trunc

    @property
    def dim(self) -> int:
        return self.spin_dim * self.ancilla_dim

    @property
    def has_ancilla(self) -> bool:
        return self.ancilla is not AncillaKind.NONE

    def spin_only(self) -> "SpaceLayout":
        return SpaceLayout(self.representation, self.n_spins)

    def with_ancilla(self, ancilla, d_trunc: int | None = None) -> "SpaceLayout":
        return SpaceLayout(
            self.representation, self.n_spins, AncillaKind(ancilla),
            self.d_trunc if d_trunc is None else d_trunc,
        )


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=complex)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Operator:
    """Dense operator on the space described by ``layout``."""

    matrix: np.ndarray
    layout: SpaceLayout

    def __post_init__(self):
        m = np.array(self.matrix, dtype=complex)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise LayoutError(f"operator must be square, got shape {m.shape}")
        if m.shape[0] != self.layout.dim:
            raise LayoutError(
                f"operator dimension {m.shape[0]} does not match layout dimension {self.layout.dim}"
            )
        object.__setattr__(self, "matrix", _frozen(m))

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def dag(self) -> "Operator":
        return Operator(self.matrix.conj().T, self.layout)

    def hermiticity_error(self) -> float:
        return float(np.max(np.abs(self.matrix - self.matrix.conj().T), initial=0.0))

    def is_hermitian(self, tol: float = HERMITIAN_TOL) -> bool:
        return self.hermiticity_error() <= tol

    def _check(self, other: "Operator"):
        if other.layout != self.layout:
            raise LayoutError(f"layout mismatch: {self.layout} vs {other.layout}")

    def __add__(self, other):
        if isinstance(other, Operator):
            self._check(other)
            return Operator(self.matrix + other.matrix, self.layout)
        return NotImplemented

    def __sub__(self, other):
        if isinstance(other, Operator):
            self._check(other)
            return Operator(self.matrix - other.matrix, self.layout)
        return NotImplemented

    def __neg__(self):
        return Operator(-self.matrix, self.layout)

    def __mul__(self, scalar):
        if np.isscalar(scalar):
            return Operator(scalar * self.matrix, self.layout)
        return NotImplemented

    __rmul__ = __mul__

    def __truediv__(self, scalar):
        return Operator(self.matrix / scalar, self.layout)

    def __matmul__(self, other):
        if isinstance(other, Operator):
            self._check(other)
            return Operator(self.matrix @ other.matrix, self.layout)
        return NotImplemented

    def __repr__(self):
        return f"Operator(dim={self.dim}, layout={self.layout})"


def zero_operator(layout: SpaceLayout) -> Operator:
    return Operator(np.zeros((layout.dim, layout.dim)), layout)


def identity(layout: SpaceLayout) -> Operator:
    return Operator(np.eye(layout.dim), layout)


@dataclass(frozen=True, eq=False)
class QuantumState:
    """Density matrix on ``layout``; pure states are promoted on construction."""

    rho: np.ndarray
    layout: SpaceLayout

    def __post_init__(self):
        r = np.array(self.rho, dtype=complex)
        if r.ndim == 1:
            r = np.outer(r, r.conj())
        if r.shape != (self.layout.dim, self.layout.dim):
            raise LayoutError(f"state shape {r.shape} does not match layout dimension {self.layout.dim}")
        object.__setattr__(self, "rho", _frozen(r))

    @classmethod
    def from_ket(cls, psi, layout: SpaceLayout) -> "QuantumState":
        psi = np.asarray(psi, dtype=complex)
        return cls(np.outer(psi, psi.conj()), layout)

    @property
    def trace(self) -> complex:
        return complex(np.trace(self.rho))

    @property
    def purity(self) -> float:
        return float(np.real(np.vdot(self.rho, self.rho)))

    def min_eigenvalue(self) -> float:
        h = 0.5 * (self.rho + self.rho.conj().T)
        return float(np.linalg.eigvalsh(h)[0])

    def check(self, trace_tol=1e-9, herm_tol=1e-10, pos_tol=-1e-8) -> list[str]:
        """Return a list of violated invariants (empty when the state is valid)."""
        problems = []
        if abs(self.trace - 1.0) > trace_tol:
            problems.append(f"trace {self.trace:.3e} deviates from 1 by more than {trace_tol:g}")
        herm = float(np.max(np.abs(self.rho - self.rho.conj().T), initial=0.0))
        if herm > herm_tol:
            problems.append(f"hermiticity error {herm:.3e} exceeds {herm_tol:g}")
        lmin = self.min_eigenvalue()
        if lmin < pos_tol:
            problems.append(f"minimum eigenvalue {lmin:.3e} below {pos_tol:g}")
        return problems

    def expect(self, op: Operator | np.ndarray) -> complex:
        m = op.matrix if isinstance(op, Operator) else op
        return complex(np.sum(self.rho.T * m))


# --------------------------------------------------------------------------
# Spin-factor matrices (no ancilla). Cached and read-only.

PAULI = {
    "x": np.array([[0, 1], [1, 0]], dtype=complex),
    "y": np.array([[0, 1j], [-1j, 0]], dtype=complex),
    "z": np.array([[-1, 0], [0, 1]], dtype=complex),
    "plus": np.array([[0, 0], [1, 0]], dtype=complex),
    "minus": np.array([[0, 1], [0, 0]], dtype=complex),
    "i": np.eye(2, dtype=complex),
}

AXES = ("x", "y", "z", "plus", "minus")


def _check_axis(axis: str) -> str:
    if axis not in AXES:
        raise ValueError(f"unsupported axis {axis!r}; expected one of {AXES}")
    return axis


@lru_cache(maxsize=None)
def dicke_spin_matrix(n_spins: int, axis: str) -> np.ndarray:
    j = n_spins / 2
    m = np.arange(n_spins + 1) - j
    if axis == "z":
        out = np.diag(m).astype(complex)
    else:
        # J+|j,m> = sqrt(j(j+1) - m(m+1)) |j,m+1>
        jp = np.diag(np.sqrt(j * (j + 1) - m[:-1] * (m[:-1] + 1)), -1).astype(complex)
        out = {
            "plus": jp,
            "minus": jp.T.copy(),
            "x": 0.5 * (jp + jp.T),
            "y": -0.5j * (jp - jp.T),
        }[axis]
    return _frozen(out)


def _kron_site(n_spins: int, site: int, single: np.ndarray) -> np.ndarray:
    left = np.eye(2 ** (site - 1))
    right = np.eye(2 ** (n_spins - site))
    return np.kron(np.kron(left, single), right)


@lru_cache(maxsize=None)
def product_local_matrix(n_spins: int, site: int, axis: str) -> np.ndarray:
    return _frozen(_kron_site(n_spins, site, PAULI[axis]))


@lru_cache(maxsize=None)
def product_spin_matrix(n_spins: int, axis: str) -> np.ndarray:
    # J_mu = 1/2 sum sigma_mu ; J_pm = sum sigma_pm
    factor = 1.0 if axis in ("plus", "minus") else 0.5
    total = sum(product_local_matrix(n_spins, i, axis) for i in range(1, n_spins + 1))
    return _frozen(factor * total)


def spin_matrix(layout: SpaceLayout, axis: str) -> np.ndarray:
    """Collective spin matrix on the spin factor only."""
    _check_axis(axis)
    if layout.representation is Representation.DICKE:
        return dicke_spin_matrix(layout.n_spins, axis)
    return product_spin_matrix(layout.n_spins, axis)


def embed_spin(layout: SpaceLayout, spin_part: np.ndarray) -> Operator:
    """Lift a spin-factor matrix to ``spin (x) identity_ancilla``."""
    if layout.ancilla_dim == 1:
        return Operator(spin_part, layout)
    return Operator(np.kron(spin_part, np.eye(layout.ancilla_dim)), layout)


def embed_ancilla(layout: SpaceLayout, anc_part: np.ndarray) -> Operator:
    return Operator(np.kron(np.eye(layout.spin_dim), anc_part), layout)


def collective_op(layout: SpaceLayout, axis: str) -> Operator:
    return embed_spin(layout, spin_matrix(layout, axis))


def local_pauli(layout: SpaceLayout, site: int, axis: str) -> Operator:
    """Pauli operator on ``site`` (1-based) of a product-space layout."""
    if layout.representation is not Representation.PRODUCT:
        raise LayoutError("local operators need the product representation")
    if not 1 <= site <= layout.n_spins:
        raise LayoutError(f"site {site} out of range 1..{layout.n_spins}")
    _check_axis(axis)
    return embed_spin(layout, product_local_matrix(layout.n_spins, site, axis))


def ancilla_lowering_matrix(layout: SpaceLayout) -> np.ndarray:
    d = layout.ancilla_dim
    return np.diag(np.sqrt(np.arange(1, d)), 1).astype(complex)


def ancilla_lowering(layout: SpaceLayout) -> Operator:
    if not layout.has_ancilla:
        raise LayoutError("layout has no ancilla")
    return embed_ancilla(layout, ancilla_lowering_matrix(layout))


def ancilla_ground_projector(layout: SpaceLayout) -> Operator:
    if not layout.has_ancilla:
        raise LayoutError("layout has no ancilla")
    p = np.zeros((layout.ancilla_dim, layout.ancilla_dim))
    p[0, 0] = 1.0
    return embed_ancilla(layout, p)


@lru_cache(maxsize=None)
def symmetric_isometry(n_spins: int) -> np.ndarray:
    """Columns are the Dicke states |j=N/2, m> written in the product basis."""
    dim = 2**n_spins
    ups = np.array([bin(k).count("1") for k in range(dim)])
    s = np.zeros((dim, n_spins + 1))
    for k in range(n_spins + 1):
        mask = ups == k
        s[mask, k] = 1.0 / np.sqrt(mask.sum())
    return _frozen(s)


def single_spin_ket(theta: float, phi: float) -> np.ndarray:
    return np.array([np.cos(theta / 2), np.exp(-1j * phi) * np.sin(theta / 2)])


def coherent_spin_ket(layout: SpaceLayout, theta: float, phi: float) -> np.ndarray:
    """|theta, phi> on the spin factor only."""
    n = layout.n_spins
    if layout.representation is Representation.DICKE:
        k = np.arange(n + 1)
        binom = np.array([comb(n, int(x)) for x in k], dtype=float)
        c, s = np.cos(theta / 2), np.sin(theta / 2)
        return np.sqrt(binom) * c ** (n - k) * s**k * np.exp(-1j * phi * k)
    psi = np.ones(1, dtype=complex)
    single = single_spin_ket(theta, phi)
    for _ in range(n):
        psi = np.kron(psi, single)
    return psi


def with_ancilla_ground(layout: SpaceLayout, spin_ket: np.ndarray) -> np.ndarray:
    if not layout.has_ancilla:
        return spin_ket
    g = np.zeros(layout.ancilla_dim)
    g[0] = 1.0
    return np.kron(spin_ket, g)


def spin_coherent_state(layout: SpaceLayout, theta: float, phi: float) -> QuantumState:
    psi = with_ancilla_ground(layout, coherent_spin_ket(layout, theta, phi))
    return QuantumState.from_ket(psi, layout)


def embed_spin_state(layout: SpaceLayout, rho_s: np.ndarray) -> QuantumState:
    """``rho_s (x) |0><0|`` on a layout with ancilla."""
    if not layout.has_ancilla:
        return QuantumState(rho_s, layout)
    g = np.zeros((layout.ancilla_dim, layout.ancilla_dim))
    g[0, 0] = 1.0
    return QuantumState(np.kron(rho_s, g), layout)


def partial_trace_ancilla_matrix(rho: np.ndarray, layout: SpaceLayout) -> np.ndarray:
    ds, da = layout.spin_dim, layout.ancilla_dim
    return np.einsum("iaja->ij", rho.reshape(ds, da, ds, da))


def partial_trace_ancilla(state: QuantumState) -> QuantumState:
    if not state.layout.has_ancilla:
        raise LayoutError("state has no ancilla to trace out")
    return QuantumState(partial_trace_ancilla_matrix(state.rho, state.layout), state.layout.spin_only())


def expm_hermitian(generator: np.ndarray, t: float = 1.0) -> np.ndarray:
    """exp(-i t G) for Hermitian G via eigendecomposition."""
    w, v = np.linalg.eigh(0.5 * (generator + generator.conj().T))
    return (v * np.exp(-1j * t * w)) @ v.conj().T


def rotation_matrix_spin(layout: SpaceLayout, theta: float, phi: float) -> np.ndarray:
    """exp[-i theta (Jx sin(phi) - Jy cos(phi))] on the spin factor."""
    if layout.representation is Representation.PRODUCT:
        g1 = 0.5 * (np.sin(phi) * PAULI["x"] - np.cos(phi) * PAULI["y"])
        u1 = expm_hermitian(g1, theta)
        u = np.ones((1, 1), dtype=complex)
        for _ in range(layout.n_spins):
            u = np.kron(u, u1)
        return u
    g = np.sin(phi) * spin_matrix(layout, "x") - np.cos(phi) * spin_matrix(layout, "y")
    return expm_hermitian(g, theta)


def rotation_operator(layout: SpaceLayout, theta: float, phi: float) -> Operator:
    return embed_spin(layout, rotation_matrix_spin(layout, theta, phi))


def to_dicke(op_or_state, layout_dicke: SpaceLayout | None = None):
    """Project a product-space spin operator/state onto the symmetric sector."""
    layout = op_or_state.layout
    if layout.representation is not Representation.PRODUCT:
        raise LayoutError("expected a product-space object")
    s = symmetric_isometry(layout.n_spins)
    if layout.has_ancilla:
        s = np.kron(s, np.eye(layout.ancilla_dim))
    target = layout_dicke or SpaceLayout(Representation.DICKE, layout.n_spins, layout.ancilla, layout.d_trunc)
    if isinstance(op_or_state, QuantumState):
        return QuantumState(s.conj().T @ op_or_state.rho @ s, target)
    return Operator(s.conj().T @ op_or_state.matrix @ s, target)
