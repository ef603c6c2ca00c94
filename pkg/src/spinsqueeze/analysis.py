"""Squeezing metrics, Q-function and closed-form one-axis-twisting results."""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from functools import lru_cache
from math import comb

import numpy as np
from scipy.optimize import minimize_scalar

from .operators import (
    LayoutError,
    QuantumState,
    Representation,
    SpaceLayout,
    partial_trace_ancilla_matrix,
    spin_matrix,
    symmetric_isometry,
)

UNDEFINED_MEAN_SPIN = 1e-9


@dataclass(frozen=True)
class SqueezingReport:
    xi2: float
    mean_spin: np.ndarray
    optimal_direction: np.ndarray
    min_variance: float
    defined: bool = True
    flags: tuple[str, ...] = field(default_factory=tuple)


@lru_cache(maxsize=64)
def _moment_ops(representation: Representation, n_spins: int):
    layout = SpaceLayout(representation, n_spins)
    js = [spin_matrix(layout, a) for a in ("x", "y", "z")]
    pairs = {}
    for a in range(3):
        for b in range(a, 3):
            pairs[a, b] = 0.5 * (js[a] @ js[b] + js[b] @ js[a])
    return js, pairs


def _spin_rho(state: QuantumState) -> tuple[np.ndarray, SpaceLayout]:
    if state.layout.has_ancilla:
        return partial_trace_ancilla_matrix(state.rho, state.layout), state.layout.spin_only()
    return state.rho, state.layout


def _tr(rho: np.ndarray, op: np.ndarray) -> float:
    return float(np.real(np.sum(rho.T * op)))


def spin_moments(rho_s: np.ndarray, layout: SpaceLayout) -> tuple[np.ndarray, np.ndarray]:
    """Mean spin vector and symmetrized 3x3 covariance matrix of a spin-only density matrix."""
    js, pairs = _moment_ops(layout.representation, layout.n_spins)
    mean = np.array([_tr(rho_s, j) for j in js])
    cov = np.empty((3, 3))
    for (a, b), m in pairs.items():
        cov[a, b] = cov[b, a] = _tr(rho_s, m) - mean[a] * mean[b]
    return mean, cov


def mean_spin(state: QuantumState) -> np.ndarray:
    rho_s, layout = _spin_rho(state)
    js, _ = _moment_ops(layout.representation, layout.n_spins)
    return np.array([_tr(rho_s, j) for j in js])


def perpendicular_frame(n: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Deterministic orthonormal pair spanning the plane normal to unit vector ``n``."""
    fallback = np.array([0.0, 0.0, 1.0]) if abs(n[2]) < 0.9 else np.array([1.0, 0.0, 0.0])
    e1 = fallback - np.dot(fallback, n) * n
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(n, e1)
    return e1, e2


def xi2_from_moments(mean: np.ndarray, cov: np.ndarray, n_spins: int) -> SqueezingReport:
    length = float(np.linalg.norm(mean))
    if length <= UNDEFINED_MEAN_SPIN * n_spins:
        return SqueezingReport(
            xi2=float("inf"), mean_spin=mean, optimal_direction=np.full(3, np.nan),
            min_variance=float("nan"), defined=False, flags=("vanishing_mean_spin",),
        )
    n = mean / length
    e1, e2 = perpendicular_frame(n)
    a = e1 @ cov @ e1
    c = e2 @ cov @ e2
    b = e1 @ cov @ e2
    half_diff = 0.5 * (a - c)
    root = np.hypot(half_diff, b)
    lam_min = 0.5 * (a + c) - root
    # eigenvector of [[a, b], [b, c]] for lam_min
    angle = 0.5 * np.arctan2(2 * b, a - c) + np.pi / 2
    direction = np.cos(angle) * e1 + np.sin(angle) * e2
    xi2 = n_spins * lam_min / length**2
    return SqueezingReport(float(xi2), mean, direction, float(lam_min))


def wineland_xi2(state: QuantumState) -> SqueezingReport:
    rho_s, layout = _spin_rho(state)
    mean, cov = spin_moments(rho_s, layout)
    return xi2_from_moments(mean, cov, layout.n_spins)


# --------------------------------------------------------------------------
# Q-function


def coherent_amplitudes(n_spins: int, theta: np.ndarray, phi: np.ndarray) -> np.ndarray:
    """Dicke amplitudes <j,m|theta,phi> for every (theta, phi) pair; shape (..., N+1)."""
    theta = np.asarray(theta, dtype=float)[..., None]
    phi = np.asarray(phi, dtype=float)[..., None]
    k = np.arange(n_spins + 1)
    root_binom = np.sqrt([float(comb(n_spins, int(x))) for x in k])
    c = np.cos(theta / 2)
    s = np.sin(theta / 2)
    return root_binom * c ** (n_spins - k) * s**k * np.exp(-1j * phi * k)


def symmetric_spin_rho(state: QuantumState) -> np.ndarray:
    rho_s, layout = _spin_rho(state)
    if layout.representation is Representation.DICKE:
        return rho_s
    s = symmetric_isometry(layout.n_spins)
    proj = s.T @ rho_s @ s
    outside = 1.0 - float(np.real(np.trace(proj))) / float(np.real(np.trace(rho_s)))
    if outside > 1e-6:
        raise LayoutError(f"state has weight {outside:.2e} outside the symmetric sector")
    return proj


def default_sphere_grid(n_theta: int = 181, n_phi: int = 361) -> tuple[np.ndarray, np.ndarray]:
    return np.linspace(0.0, np.pi, n_theta), np.linspace(0.0, 2 * np.pi, n_phi)


def q_function(state: QuantumState, theta_grid=None, phi_grid=None) -> np.ndarray:
    """Husimi Q(theta, phi) = (N+1)/(4 pi) <theta,phi|rho|theta,phi>, rows indexed by theta."""
    if theta_grid is None or phi_grid is None:
        dt, dp = default_sphere_grid()
        theta_grid = dt if theta_grid is None else theta_grid
        phi_grid = dp if phi_grid is None else phi_grid
    rho = symmetric_spin_rho(state)
    n = state.layout.n_spins
    tt, pp = np.meshgrid(theta_grid, phi_grid, indexing="ij")
    amps = coherent_amplitudes(n, tt, pp)
    vals = np.einsum("...i,ij,...j->...", amps.conj(), rho, amps)
    return (n + 1) / (4 * np.pi) * np.real(vals)


def sphere_integral(field_values: np.ndarray, theta_grid, phi_grid) -> float:
    """Trapezoidal integral of a (theta, phi) field against sin(theta) dtheta dphi."""
    integrand = field_values * np.sin(np.asarray(theta_grid))[:, None]
    return float(np.trapezoid(np.trapezoid(integrand, phi_grid, axis=1), theta_grid))


def q_function_csv(q: np.ndarray, theta_grid, phi_grid) -> str:
    """Dense CSV: first row holds phi coordinates, first column theta coordinates."""
    buf = io.StringIO()
    buf.write("theta\\phi," + ",".join(f"{p:.12g}" for p in phi_grid) + "\n")
    for th, row in zip(theta_grid, q):
        buf.write(f"{th:.12g}," + ",".join(f"{v:.12g}" for v in row) + "\n")
    return buf.getvalue()


# --------------------------------------------------------------------------
# Closed-form one-axis twisting


@dataclass(frozen=True)
class OATMoments:
    xi2: np.ndarray | float
    mean_spin_magnitude: np.ndarray | float


def oat_analytic(n_spins: int, theta) -> OATMoments:
    """Exact Wineland parameter of chi*Jz^2 evolution from |pi/2, 0> at twisting angle Theta = 2*chi*t."""
    if n_spins < 2:
        raise ValueError("closed-form OAT moments need N >= 2")
    th = np.asarray(theta, dtype=float)
    n = n_spins
    length = 0.5 * n * np.cos(th / 2) ** (n - 1)
    a = 1.0 - np.cos(th) ** (n - 2)
    c = -0.25 * a + 0.25 * np.sqrt(a**2 + 16 * np.sin(th / 2) ** 2 * np.cos(th / 2) ** (2 * n - 4))
    with np.errstate(divide="ignore", invalid="ignore"):
        xi2 = n**2 / (4 * length**2) * (1 - (n - 1) * c)
    if th.ndim == 0:
        return OATMoments(float(xi2), float(length))
    return OATMoments(xi2, length)


def oat_optimum(n_spins: int) -> tuple[float, float]:
    """(Theta_opt, min xi^2) of the closed-form OAT curve."""
    guess = 2 * 3 ** (1 / 6) * n_spins ** (-2 / 3)
    upper = min(np.pi / 2, 4 * guess)
    grid = np.linspace(upper / 400, upper, 400)
    vals = oat_analytic(n_spins, grid).xi2
    k = int(np.nanargmin(vals))
    lo, hi = grid[max(k - 1, 0)], grid[min(k + 1, len(grid) - 1)]
    res = minimize_scalar(
        lambda t: float(oat_analytic(n_spins, t).xi2), bounds=(lo, hi), method="bounded",
        options={"xatol": 1e-13 * max(1.0, hi)},
    )
    return float(res.x), float(res.fun)


def t_opt(n_spins: int, chi: float) -> float:
    """Large-N optimal twisting time 3^(1/6) N^(-2/3) / chi."""
    if chi <= 0:
        raise ValueError("chi must be positive")
    return 3 ** (1 / 6) * n_spins ** (-2 / 3) / chi


def t_opt_detuned(n_spins: int, lambda_bar: float, detuning: float) -> float:
    """Optimal time with chi_eff ~ lambda_bar^2 / detuning."""
    if detuning <= 0:
        raise ValueError("detuning must be positive")
    return 3 ** (1 / 6) * n_spins ** (-2 / 3) * detuning / lambda_bar**2


def min_over_time(times, xi2=None) -> tuple[float, float]:
    """Minimum of a sampled xi^2(t) curve with local parabolic refinement.

    Accepts either ``(times, xi2)`` arrays or a trajectory object as the first
    argument (with ``xi2`` omitted).
    """
    if xi2 is None:
        traj = times
        times, xi2 = traj.times, traj.xi2
    t = np.asarray(times, dtype=float)
    y = np.asarray(xi2, dtype=float)
    if t.size == 0:
        raise ValueError("empty trajectory")
    finite = np.isfinite(y)
    if not finite.any():
        return float("inf"), float(t[0])
    k = int(np.argmin(np.where(finite, y, np.inf)))
    if 0 < k < t.size - 1 and finite[k - 1] and finite[k + 1]:
        t0, t1, t2 = t[k - 1 : k + 2]
        y0, y1, y2 = y[k - 1 : k + 2]
        denom = (t0 - t1) * (t0 - t2) * (t1 - t2)
        a = (t2 * (y1 - y0) + t1 * (y0 - y2) + t0 * (y2 - y1)) / denom
        b = (t2**2 * (y0 - y1) + t1**2 * (y2 - y0) + t0**2 * (y1 - y2)) / denom
        if a > 0:
            tv = -b / (2 * a)
            if t0 <= tv <= t2:
                c = y1 - a * t1**2 - b * t1
                yv = a * tv**2 + b * tv + c
                if yv <= y1:
                    return float(yv), float(tv)
    return float(y[k]), float(t[k])
