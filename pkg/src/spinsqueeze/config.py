"""JSON experiment configuration.  Frequencies are given in Hz and stored in rad/s."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from .model import PRESETS, ModelSpec, preset

TWO_PI = 2 * np.pi


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class ModelConfig(_Strict):
    """Model parameters; ``*_lambda_n`` values are multiples of lambda_bar*N, ``drive_lambda`` of lambda_bar."""

    n_spins: int = Field(ge=1)
    lambda_bar_hz: Optional[float] = Field(default=None, ge=0)
    delta_lambda_hz: Optional[float] = Field(default=None, ge=0)
    delta_omega_hz: Optional[float] = Field(default=None, ge=0)
    detuning_hz: Optional[float] = None
    detuning_lambda_n: Optional[float] = None
    drive_hz: Optional[float] = None
    drive_lambda: Optional[float] = None
    drive_phase: Optional[float] = None
    gamma_hz: Optional[float] = Field(default=None, ge=0)
    gamma_lambda_n: Optional[float] = Field(default=None, ge=0)
    chi_hz: Optional[float] = None
    ancilla: Optional[Literal["qubit", "boson"]] = None
    d_trunc: Optional[int] = Field(default=None, ge=2)
    lambda_i_hz: Optional[list[float]] = None
    omega_offsets_hz: Optional[list[float]] = None
    rng_seed: Optional[int] = Field(default=None, ge=0)

    @model_validator(mode="after")
    def _exclusive(self):
        for a, b in (("detuning_hz", "detuning_lambda_n"), ("drive_hz", "drive_lambda"),
                     ("gamma_hz", "gamma_lambda_n")):
            if getattr(self, a) is not None and getattr(self, b) is not None:
                raise ValueError(f"give at most one of {a} and {b}")
        return self


class InitialState(_Strict):
    theta: float = float(np.pi / 2)
    phi: float = 0.0
    steady: bool = False  # start from the steady-state coherent angles


class ScheduleConfig(_Strict):
    kind: Literal["free", "sequence", "steady"] = "free"
    duration_s: Optional[float] = Field(default=None, ge=0)
    duration_lambda: Optional[float] = Field(default=None, ge=0)  # in units of 1/lambda_bar
    sequence: Optional[Literal["xy8", "concatenated_xy8", "dcr_reflection"]] = None
    tau_s: Optional[float] = Field(default=None, gt=0)
    count: Optional[int] = Field(default=None, ge=1)
    steady_method: Literal["auto", "nullspace", "longtime"] = "auto"

    @model_validator(mode="after")
    def _check(self):
        if self.kind == "sequence" and (self.sequence is None or self.tau_s is None):
            raise ValueError("sequence schedules need 'sequence' and 'tau_s'")
        if self.sequence == "dcr_reflection" and self.count is None:
            raise ValueError("dcr_reflection needs 'count'")
        if self.duration_s is not None and self.duration_lambda is not None:
            raise ValueError("give at most one of duration_s and duration_lambda")
        return self


class SweepAxis(_Strict):
    param: str
    values: list[float] = Field(min_length=1)


class SweepConfig(_Strict):
    axes: list[SweepAxis] = Field(min_length=1, max_length=2)


class EnsembleConfig(_Strict):
    n_runs: int = Field(ge=1)
    master_seed: int = Field(ge=0)


class IntegratorSettings(_Strict):
    method: Literal["dopri5", "rk4", "krylov"] = "dopri5"
    rtol: float = Field(default=1e-8, gt=0)
    atol: float = Field(default=1e-10, gt=0)
    rk4_dt_s: Optional[float] = Field(default=None, gt=0)
    krylov_dim: int = Field(default=30, ge=4)
    check_positivity: bool = True


class OutputConfig(_Strict):
    output_dt_s: Optional[float] = Field(default=None, gt=0)
    output_dt_lambda: Optional[float] = Field(default=None, gt=0)
    prefix: str = "run"
    observables: list[str] = Field(default_factory=lambda: ["xi2", "mean_spin", "trace_err", "purity", "anc_pop"])


class ExperimentConfig(_Strict):
    preset: Optional[str] = None
    model: ModelConfig
    model_kind: Literal["full", "effective", "ideal_oat", "driven_oat", "dcr"] = "full"
    representation: Literal["dicke", "product"] = "dicke"
    initial_state: InitialState = InitialState()
    schedule: ScheduleConfig = ScheduleConfig()
    sweep: Optional[SweepConfig] = None
    ensemble: Optional[EnsembleConfig] = None
    outputs: OutputConfig = OutputConfig()
    integrator: IntegratorSettings = IntegratorSettings()

    @model_validator(mode="after")
    def _check(self):
        if self.preset is not None and self.preset.upper() not in PRESETS:
            raise ValueError(f"unknown preset {self.preset!r}; choose from {PRESETS}")
        if self.preset is None and self.model.lambda_bar_hz is None and self.model_kind not in ("ideal_oat", "dcr"):
            raise ValueError("model.lambda_bar_hz is required without a preset")
        if self.model_kind == "ideal_oat" and self.model.chi_hz is None:
            raise ValueError("ideal_oat needs model.chi_hz")
        if self.sweep is not None:
            allowed = set(ModelConfig.model_fields) - {"n_spins", "ancilla", "lambda_i_hz", "omega_offsets_hz"}
            for ax in self.sweep.axes:
                if ax.param not in allowed:
                    raise ValueError(f"sweep parameter {ax.param!r} is not a numeric model field")
        return self


def load_config(path: Union[str, Path]) -> ExperimentConfig:
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    return ExperimentConfig.model_validate(data)


def resolve_model(cfg: ExperimentConfig, model: ModelConfig | None = None) -> ModelSpec:
    """ModelSpec in rad/s from a preset plus overrides."""
    m = model or cfg.model
    n = m.n_spins
    if cfg.preset is not None:
        base = preset(cfg.preset, n)
    else:
        base = ModelSpec(n_spins=n, lambda_bar=TWO_PI * (m.lambda_bar_hz or 0.0))
    changes: dict = {}
    if m.lambda_bar_hz is not None:
        changes["lambda_bar"] = TWO_PI * m.lambda_bar_hz
    lam = changes.get("lambda_bar", base.lambda_bar)
    if m.delta_lambda_hz is not None:
        changes["delta_lambda"] = TWO_PI * m.delta_lambda_hz
    if m.delta_omega_hz is not None:
        changes["delta_omega"] = TWO_PI * m.delta_omega_hz
    if m.detuning_hz is not None:
        changes["detuning"] = TWO_PI * m.detuning_hz
    if m.detuning_lambda_n is not None:
        changes["detuning"] = m.detuning_lambda_n * lam * n
    if m.drive_hz is not None:
        changes["drive"] = TWO_PI * m.drive_hz
    if m.drive_lambda is not None:
        changes["drive"] = m.drive_lambda * lam
    if m.drive_phase is not None:
        changes["drive_phase"] = m.drive_phase
    if m.gamma_hz is not None:
        changes["gamma"] = TWO_PI * m.gamma_hz
    if m.gamma_lambda_n is not None:
        changes["gamma"] = m.gamma_lambda_n * lam * n
    if m.ancilla is not None:
        changes["ancilla"] = m.ancilla
    if m.d_trunc is not None:
        changes["d_trunc"] = m.d_trunc
    if m.lambda_i_hz is not None:
        changes["lambda_i"] = tuple(TWO_PI * x for x in m.lambda_i_hz)
    if m.omega_offsets_hz is not None:
        changes["omega_offsets"] = tuple(TWO_PI * x for x in m.omega_offsets_hz)
    if m.rng_seed is not None:
        changes["rng_seed"] = m.rng_seed
    return base.replace(**changes)
