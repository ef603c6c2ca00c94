"""Magnetometry sensitivity of coherent and one-axis-twisted probes under non-Markovian dephasing."""

from __future__ import annotations

import io
import json
import warnings
from dataclasses import asdict, dataclass

import numpy as np
from scipy.optimize import minimize_scalar

from .analysis import oat_analytic, t_opt_detuned
from .geometry import G_E, HBAR, MU_B
from .model import preset

EXP_GUARD = 700.0


class NonUnimodalWarning(UserWarning):
    pass


@dataclass(frozen=True)
class SensingScenario:
    n_spins: float
    gamma_s: float  # spin dephasing rate, 1/s
    t_prep: float = 0.0  # squeezing preparation time, s
    xi2: float = 1.0
    mean_spin: float = 0.0  # |<J>|; 0 means N/2
    label: str = ""

    def __post_init__(self):
        if self.n_spins <= 0 or self.gamma_s < 0 or self.t_prep < 0 or self.xi2 <= 0:
            raise ValueError("scenario parameters must be positive")
        if self.mean_spin == 0:
            object.__setattr__(self, "mean_spin", self.n_spins / 2)
        if self.mean_spin <= 0:
            raise ValueError("mean spin magnitude must be positive")

    @classmethod
    def coherent(cls, n_spins: float, gamma_s: float, label: str = "") -> "SensingScenario":
        return cls(n_spins, gamma_s, 0.0, 1.0, n_spins / 2, label)

    @classmethod
    def squeezed(cls, n_spins: int, gamma_s: float, chi_eff: float, t_prep: float, label: str = "") -> "SensingScenario":
        """OAT probe prepared for ``t_prep`` at twisting rate ``chi_eff`` (closed-form moments)."""
        m = oat_analytic(int(n_spins), 2 * chi_eff * t_prep)
        return cls(n_spins, gamma_s, t_prep, float(m.xi2), float(m.mean_spin_magnitude), label)


def sensitivity(t, scenario: SensingScenario):
    """delta B sqrt(T) in T/sqrt(Hz) for sensing time ``t`` (scalar or array)."""
    t = np.asarray(t, dtype=float)
    if np.any(t <= 0):
        raise ValueError("sensing time must be positive")
    s = scenario
    arg = 2 * s.gamma_s**2 * t**2
    with np.errstate(over="ignore"):
        decay = np.where(arg > EXP_GUARD, np.inf, np.expm1(np.minimum(arg, EXP_GUARD)))
    noise = 2 * s.xi2 / s.n_spins + s.n_spins * decay / (2 * s.mean_spin**2)
    val = HBAR / (G_E * MU_B) * np.sqrt((t + s.t_prep) / t**2 * noise)
    return float(val) if val.ndim == 0 else val


@dataclass(frozen=True)
class SensitivityOptimum:
    t_star: float
    delta_B_sqrtT: float
    unimodal: bool = True


def optimize_sensitivity(scenario: SensingScenario, t_min: float = 1e-9, t_max: float | None = None,
                         n_scan: int = 400) -> SensitivityOptimum:
    """Golden-section minimisation in log t on a bracket found by a coarse log scan."""
    if t_max is None:
        if scenario.gamma_s <= 0:
            raise ValueError("gamma_s = 0 has no finite optimum; pass t_max")
        t_max = 10.0 / scenario.gamma_s
    grid = np.logspace(np.log10(t_min), np.log10(t_max), n_scan)
    vals = sensitivity(grid, scenario)
    k = int(np.argmin(vals))
    finite = vals[np.isfinite(vals)]
    steps = np.sign(np.diff(finite))
    turns = int(np.count_nonzero(np.diff(steps[steps != 0]) != 0))
    unimodal = turns <= 1
    if not unimodal:
        warnings.warn("coarse sensitivity scan is not unimodal; using the grid minimum bracket", NonUnimodalWarning)
    if k == 0 or k == n_scan - 1:
        return SensitivityOptimum(float(grid[k]), float(vals[k]), unimodal)
    lo, mid, hi = np.log(grid[k - 1]), np.log(grid[k]), np.log(grid[k + 1])
    res = minimize_scalar(lambda u: sensitivity(np.exp(u), scenario), bracket=(lo, mid, hi),
                          method="golden", tol=1e-6)
    return SensitivityOptimum(float(np.exp(res.x)), float(res.fun), unimodal)


def improvement_factor(coherent: SensingScenario, squeezed: SensingScenario) -> float:
    return optimize_sensitivity(coherent).delta_B_sqrtT / optimize_sensitivity(squeezed).delta_B_sqrtT


# --------------------------------------------------------------------------
# Reference scenarios

FQ_N = 500
MR_N = 12000
NV_GAMMA_S = 1 / 30e-3
DONOR_GAMMA_S = 1 / 10.0

REFERENCE_TARGETS = {
    "fq_coherent": 3.8e-12,
    "fq_squeezed": 1.4e-12,
    "mr_coherent": 42e-15,
    "mr_squeezed": 10e-15,
    "hybrid_squeezed": 75e-15,
}


def squeezed_from_preset(name: str, n_spins: int, gamma_s: float, k: float = 2.0, label: str = "") -> SensingScenario:
    """Squeezed probe at detuning k*lambda_bar*N of a model preset, prepared at its detuned optimum time."""
    spec = preset(name, n_spins, detuning=k * preset(name, n_spins).lambda_bar * n_spins)
    t_prep = t_opt_detuned(n_spins, spec.lambda_bar, spec.detuning)
    return SensingScenario.squeezed(n_spins, gamma_s, spec.effective_constants().chi_eff, t_prep, label)


def reference_scenarios() -> dict[str, SensingScenario]:
    return {
        "fq_coherent": SensingScenario.coherent(FQ_N, NV_GAMMA_S, "fq_coherent"),
        "fq_squeezed": squeezed_from_preset("FQ_NV", FQ_N, NV_GAMMA_S, label="fq_squeezed"),
        "mr_coherent": SensingScenario.coherent(MR_N, DONOR_GAMMA_S, "mr_coherent"),
        "mr_squeezed": squeezed_from_preset("MR_DONOR", MR_N, DONOR_GAMMA_S, label="mr_squeezed"),
        "hybrid_squeezed": squeezed_from_preset("FQ_NV", FQ_N, DONOR_GAMMA_S, label="hybrid_squeezed"),
    }


def sensitivity_curve_csv(scenario: SensingScenario, times) -> str:
    buf = io.StringIO()
    buf.write("t_s,dB_sqrtT\n")
    for t, v in zip(times, np.atleast_1d(sensitivity(times, scenario))):
        buf.write(f"{t:.12g},{v:.12g}\n")
    return buf.getvalue()


def summary_json(scenarios: dict[str, SensingScenario]) -> str:
    out = {}
    for name, sc in scenarios.items():
        opt = optimize_sensitivity(sc)
        out[name] = {"scenario": asdict(sc), "t_star_s": opt.t_star, "delta_B_sqrtT": opt.delta_B_sqrtT}
    return json.dumps(out, indent=2, sort_keys=True)
