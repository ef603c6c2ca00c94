"""Batch command line front-end.

Exit codes: 0 success, 2 invalid configuration or arguments, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import platform
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Optional

import numpy as np
import pydantic
import scipy

from . import __version__
from .analysis import (
    default_sphere_grid,
    min_over_time,
    q_function,
    q_function_csv,
    sphere_integral,
    wineland_xi2,
)
from .config import ExperimentConfig, ModelConfig, load_config, resolve_model
from .dynamics import IntegrationError, IntegratorConfig, Schedule, Trajectory, evolve, format_float, steady_state
from .geometry import (
    FluxQubitLoop,
    ResonatorWire,
    coupling_map,
    coupling_map_csv,
    coupling_stats,
    fq_coupling,
    fq_sample_box,
    mr_coupling,
    mr_sample_box,
    sample_spins,
)
from .model import PRESETS, ModelSpec, build_ideal_oat
from .operators import LayoutError, QuantumState, SpaceLayout, spin_coherent_state
from .protocols import (
    MODEL_BUILDERS,
    EnsembleError,
    PulseSequence,
    RunPlan,
    concatenated_xy8,
    dcr_reflection_sequence,
    ensemble_average,
    sequence_to_schedule,
    steady_state_angles,
    xy8_block,
)
from .sensing import (
    DONOR_GAMMA_S,
    FQ_N,
    MR_N,
    NV_GAMMA_S,
    SensingScenario,
    optimize_sensitivity,
    reference_scenarios,
    squeezed_from_preset,
)

EXIT_OK, EXIT_INVALID, EXIT_NUMERICAL = 0, 2, 3
DEFAULT_POINTS = 200


class ConfigError(ValueError):
    pass


# --------------------------------------------------------------------------
# Resolution helpers


def _layout(cfg: ExperimentConfig, spec: ModelSpec, spin_only: Optional[bool] = None) -> SpaceLayout:
    make = SpaceLayout.dicke if cfg.representation == "dicke" else SpaceLayout.product
    if spin_only is None:
        spin_only = cfg.model_kind != "full"
    if spin_only:
        return make(spec.n_spins)
    return make(spec.n_spins, spec.ancilla, spec.d_trunc)


def _integrator(cfg: ExperimentConfig, store_states: bool = False) -> IntegratorConfig:
    s = cfg.integrator
    return IntegratorConfig(method=s.method, rtol=s.rtol, atol=s.atol, rk4_dt=s.rk4_dt_s,
                            krylov_dim=s.krylov_dim, check_positivity=s.check_positivity, store_states=store_states)


def _time_unit(spec: ModelSpec, cfg: ExperimentConfig) -> float:
    """Seconds per 1/lambda_bar (or per 1/chi for ideal OAT)."""
    rate = spec.lambda_bar
    if cfg.model_kind == "ideal_oat":
        rate = 2 * np.pi * abs(cfg.model.chi_hz)
    if rate <= 0:
        raise ConfigError("durations in units of 1/lambda_bar need a positive coupling")
    return 1.0 / rate


def _builder(cfg: ExperimentConfig):
    if cfg.model_kind == "ideal_oat":
        chi = 2 * np.pi * cfg.model.chi_hz
        return lambda spec, layout: build_ideal_oat(spec.n_spins, chi, layout)
    return MODEL_BUILDERS[cfg.model_kind]


def _homogeneous(spec: ModelSpec) -> ModelSpec:
    return spec.replace(delta_omega=0.0, delta_lambda=0.0, omega_offsets=None, lambda_i=None)


def _steady_angles(cfg: ExperimentConfig, spec: ModelSpec) -> tuple[float, float]:
    """Steady-state coherent angles of the disorder-free model in the Dicke basis."""
    hom = _homogeneous(spec)
    layout = SpaceLayout.dicke(spec.n_spins) if cfg.model_kind != "full" else \
        SpaceLayout.dicke(spec.n_spins, spec.ancilla, spec.d_trunc)
    H, terms = _builder(cfg)(hom, layout)
    rho = steady_state(H, terms, cfg.schedule.steady_method)
    ang = steady_state_angles(rho, spec.n_spins, spec.drive_phase)
    return ang.theta_ss, ang.phi_ss


def _initial_angles(cfg: ExperimentConfig, spec: ModelSpec) -> tuple[float, float]:
    if cfg.initial_state.steady:
        return _steady_angles(cfg, spec)
    return cfg.initial_state.theta, cfg.initial_state.phi


def _sequence(cfg: ExperimentConfig, spec: ModelSpec) -> Optional[PulseSequence]:
    sc = cfg.schedule
    if sc.kind != "sequence":
        return None
    if sc.sequence == "xy8":
        seq = xy8_block(sc.tau_s)
        reps = sc.count or 1
        return PulseSequence(seq.ops * reps)
    if sc.sequence == "concatenated_xy8":
        seq = concatenated_xy8(sc.tau_s)
        return PulseSequence(seq.ops * (sc.count or 1))
    theta_ss, _ = _steady_angles(cfg, spec)
    return dcr_reflection_sequence(theta_ss, spec.drive_phase, sc.tau_s, sc.count)


def _duration(cfg: ExperimentConfig, spec: ModelSpec, seq: Optional[PulseSequence]) -> float:
    sc = cfg.schedule
    if sc.duration_s is not None:
        return sc.duration_s
    if sc.duration_lambda is not None:
        return sc.duration_lambda * _time_unit(spec, cfg)
    if seq is not None:
        return seq.duration
    raise ConfigError("schedule needs duration_s or duration_lambda")


def _output_dt(cfg: ExperimentConfig, spec: ModelSpec, duration: float, seq: Optional[PulseSequence]) -> float:
    out = cfg.outputs
    if out.output_dt_s is not None:
        dt = out.output_dt_s
    elif out.output_dt_lambda is not None:
        dt = out.output_dt_lambda * _time_unit(spec, cfg)
    else:
        dt = duration / DEFAULT_POINTS if duration > 0 else 1.0
        if seq is not None:
            frees = [op.tau for op in seq.ops if op.kind == "free"]
            if frees:
                dt = min(dt, min(frees))
    return dt


@dataclasses.dataclass
class Plan:
    spec: ModelSpec
    layout: SpaceLayout
    sequence: Optional[PulseSequence]
    duration: float
    output_dt: float
    theta0: float
    phi0: float


def make_plan(cfg: ExperimentConfig, model: Optional[ModelConfig] = None) -> Plan:
    spec = resolve_model(cfg, model)
    layout = _layout(cfg, spec)
    seq = _sequence(cfg, spec)
    duration = _duration(cfg, spec, seq)
    dt = _output_dt(cfg, spec, duration, seq)
    theta0, phi0 = _initial_angles(cfg, spec)
    return Plan(spec, layout, seq, duration, dt, theta0, phi0)


def _schedule(cfg: ExperimentConfig, plan: Plan, spec: ModelSpec) -> Schedule:
    if plan.duration == 0 and plan.sequence is None:
        return Schedule([], plan.output_dt)
    return sequence_to_schedule(plan.sequence, spec, plan.layout, plan.output_dt, _builder(cfg),
                                plan.duration)


def simulate_plan(cfg: ExperimentConfig, plan: Plan, workers: int = 1,
                  seed: Optional[int] = None) -> tuple[Trajectory, dict]:
    """Single run or disorder ensemble; returns the trajectory and the seeds used."""
    spec = plan.spec
    icfg = _integrator(cfg)
    if cfg.ensemble is not None:
        master = cfg.ensemble.master_seed if seed is None else seed
        if cfg.model_kind == "ideal_oat":
            raise ConfigError("ensembles need a disorder-aware model kind")
        run_plan = RunPlan(plan.layout, plan.output_dt, plan.theta0, plan.phi0, plan.sequence,
                           plan.duration, cfg.model_kind)
        res = ensemble_average(spec, run_plan, cfg.ensemble.n_runs, master, workers, icfg)
        return res.trajectory, {"master_seed": master, "run_seeds": res.seeds}
    seeds: dict = {}
    if spec.has_disorder:
        s = spec.rng_seed if seed is None else seed
        if s is None and spec.omega_offsets is None and spec.lambda_i is None:
            raise ConfigError("disordered model without explicit offsets needs model.rng_seed or --seed")
        spec = spec.realized(None if s is None else np.random.default_rng(s))
        seeds["disorder_seed"] = s
    state = spin_coherent_state(plan.layout, plan.theta0, plan.phi0)
    traj = evolve(state, _schedule(cfg, plan, spec), icfg)
    return traj, seeds


# --------------------------------------------------------------------------
# Artifacts


def _versions() -> dict:
    return {"spinsqueeze": __version__, "python": platform.python_version(), "numpy": np.__version__,
            "scipy": scipy.__version__, "pydantic": pydantic.VERSION}


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if hasattr(obj, "value") and not isinstance(obj, (int, float, str)):
        return obj.value
    return obj


def _spec_dict(spec: ModelSpec) -> dict:
    return _jsonable(dataclasses.asdict(spec))


def write_manifest(out: Path, prefix: str, command: str, cfg: Optional[ExperimentConfig], started: float,
                   **extra) -> Path:
    doc = {"command": command, "config": None if cfg is None else cfg.model_dump(mode="json"),
           "versions": _versions(), "wall_time_s": time.time() - started}
    doc.update(_jsonable(extra))
    path = out / f"{prefix}_manifest.json"
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def _write(path: Path, text: str) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    return path


# --------------------------------------------------------------------------
# Sweeps


def _cell_model(cfg: ExperimentConfig, values: dict) -> ModelConfig:
    data = cfg.model.model_dump()
    for k, v in values.items():
        data[k] = v
        # the alternative unit spelling of the same quantity must not linger
        for a, b in (("detuning_hz", "detuning_lambda_n"), ("drive_hz", "drive_lambda"),
                     ("gamma_hz", "gamma_lambda_n")):
            if k == a:
                data[b] = None
            elif k == b:
                data[a] = None
    return ModelConfig.model_validate(data)


def _sweep_cell(args) -> tuple[float, float, dict]:
    cfg_data, values, seed = args
    cfg = ExperimentConfig.model_validate(cfg_data)
    plan = make_plan(cfg, _cell_model(cfg, values))
    traj, _ = simulate_plan(cfg, plan, 1, seed)
    xmin, tmin = min_over_time(traj)
    return xmin, tmin, traj.stats


def sweep_grid(cfg: ExperimentConfig) -> list[dict]:
    axes = cfg.sweep.axes
    if len(axes) == 1:
        return [{axes[0].param: v} for v in axes[0].values]
    return [{axes[0].param: a, axes[1].param: b} for a in axes[0].values for b in axes[1].values]


def run_sweep(cfg: ExperimentConfig, workers: int = 1, seed: Optional[int] = None) -> tuple[str, list]:
    """Row-major CSV ``param1,param2,min_xi2,t_at_min``; cells are independent."""
    cells = sweep_grid(cfg)
    data = cfg.model_dump(mode="json")
    tasks = [(data, c, seed) for c in cells]
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_sweep_cell, tasks))
    else:
        results = [_sweep_cell(t) for t in tasks]
    names = [ax.param for ax in cfg.sweep.axes]
    lines = ["param1,param2,min_xi2,t_at_min"]
    for cell, (xmin, tmin, _) in zip(cells, results):
        p1 = format_float(cell[names[0]])
        p2 = format_float(cell[names[1]]) if len(names) > 1 else ""
        lines.append(f"{p1},{p2},{format_float(xmin)},{format_float(tmin)}")
    return "\n".join(lines) + "\n", [r[2] for r in results]


# --------------------------------------------------------------------------
# Commands


def _steady(cfg: ExperimentConfig, seed: Optional[int]) -> tuple[QuantumState, dict]:
    spec = resolve_model(cfg)
    if spec.has_disorder:
        s = spec.rng_seed if seed is None else seed
        spec = spec.realized(None if s is None else np.random.default_rng(s))
    layout = _layout(cfg, spec)
    H, terms = _builder(cfg)(spec, layout)
    state, info = steady_state(H, terms, cfg.schedule.steady_method, config=_integrator(cfg),
                               return_info=True)
    rep = wineland_xi2(state)
    ang = steady_state_angles(state, spec.n_spins, spec.drive_phase)
    summary = {"xi2": rep.xi2, "mean_spin": list(rep.mean_spin), "theta_ss": ang.theta_ss, "phi_ss": ang.phi_ss,
               "angle_flags": list(ang.flags), "method": info.method, "residual": info.residual,
               "scale": info.scale, "degenerate": info.degenerate, "flags": list(info.flags),
               "purity": state.purity, "dim": layout.dim}
    return state, summary


def cmd_simulate(cfg: ExperimentConfig, out: Path, workers: int, seed: Optional[int]) -> int:
    t0 = time.time()
    plan = make_plan(cfg)
    traj, seeds = simulate_plan(cfg, plan, workers, seed)
    prefix = cfg.outputs.prefix
    csv = _write(out / f"{prefix}_trajectory.csv", traj.to_csv())
    xmin, tmin = min_over_time(traj)
    write_manifest(out, prefix, "simulate", cfg, t0, resolved_model=_spec_dict(plan.spec),
                   layout={"representation": plan.layout.representation.value, "dim": plan.layout.dim},
                   seeds=seeds, integrator_stats=traj.stats, flags=traj.flags,
                   summary={"min_xi2": xmin, "t_at_min": tmin, "duration_s": plan.duration,
                            "output_dt_s": plan.output_dt},
                   outputs=[csv.name])
    print(f"wrote {csv} (min xi2 {xmin:.6g} at t={tmin:.6g} s)")
    return EXIT_OK


def cmd_sweep(cfg: ExperimentConfig, out: Path, workers: int, seed: Optional[int]) -> int:
    if cfg.sweep is None:
        raise ConfigError("sweep needs a 'sweep' section")
    t0 = time.time()
    text, stats = run_sweep(cfg, workers, seed)
    prefix = cfg.outputs.prefix
    csv = _write(out / f"{prefix}_sweep.csv", text)
    total = {k: sum(s.get(k, 0) for s in stats) for k in ("steps", "rejected", "rhs_evals")}
    write_manifest(out, prefix, "sweep", cfg, t0, resolved_model=_spec_dict(resolve_model(cfg)),
                   seeds={"seed": seed}, integrator_stats=total, cells=len(stats), outputs=[csv.name])
    print(f"wrote {csv} ({len(stats)} cells)")
    return EXIT_OK


def cmd_steady(cfg: ExperimentConfig, out: Path, workers: int, seed: Optional[int]) -> int:
    t0 = time.time()
    _, summary = _steady(cfg, seed)
    prefix = cfg.outputs.prefix
    path = _write(out / f"{prefix}_steady.json", json.dumps(_jsonable(summary), indent=2, sort_keys=True) + "\n")
    write_manifest(out, prefix, "steady", cfg, t0, resolved_model=_spec_dict(resolve_model(cfg)),
                   seeds={"seed": seed}, summary=summary, outputs=[path.name])
    print(json.dumps(_jsonable(summary), sort_keys=True))
    return EXIT_OK


def cmd_qfunction(cfg: ExperimentConfig, out: Path, workers: int, seed: Optional[int]) -> int:
    t0 = time.time()
    if cfg.schedule.kind == "steady":
        state, _ = _steady(cfg, seed)
    else:
        plan = make_plan(cfg)
        if cfg.ensemble is not None:
            traj, _ = simulate_plan(cfg, plan, workers, seed)
        else:
            traj, _ = simulate_plan(cfg, plan, 1, seed)
        state = traj.final_state
    th, ph = default_sphere_grid()
    q = q_function(state, th, ph)
    norm = sphere_integral(q, th, ph)
    prefix = cfg.outputs.prefix
    path = _write(out / f"{prefix}_qfunction.csv", q_function_csv(q, th, ph))
    write_manifest(out, prefix, "qfunction", cfg, t0, seeds={"seed": seed}, normalization=norm,
                   outputs=[path.name])
    print(f"wrote {path} (normalization {norm:.6f})")
    return EXIT_OK


def cmd_validate(cfg: ExperimentConfig, out: Optional[Path], workers: int, seed: Optional[int]) -> int:
    """Resolve every cell, build its operators and check dimensions and Hermiticity."""
    cells = sweep_grid(cfg) if cfg.sweep is not None else [{}]
    report = []
    for cell in cells:
        model = _cell_model(cfg, cell) if cell else None
        spec = resolve_model(cfg, model)
        if spec.has_disorder and cfg.representation == "dicke" and cfg.model_kind in ("full",):
            raise ConfigError("disorder requires representation 'product' (set delta_* to 0 for Dicke)")
        layout = _layout(cfg, spec)
        probe = spec
        if spec.has_disorder:
            probe = spec.realized(np.random.default_rng(0 if seed is None else seed))
        H, terms = _builder(cfg)(probe, layout)
        if H.dim != layout.dim:
            raise ConfigError(f"Hamiltonian dimension {H.dim} differs from layout dimension {layout.dim}")
        herm = H.hermiticity_error()
        if herm > 1e-10 * max(1.0, float(np.abs(H.matrix).max())):
            raise ConfigError(f"Hamiltonian is not Hermitian (error {herm:.3e})")
        for term in terms:
            if term.collapse.dim != layout.dim:
                raise ConfigError("collapse operator dimension differs from the layout")
        seq = _sequence(cfg, spec) if cfg.schedule.kind == "sequence" else None
        report.append({"cell": cell, "dim": layout.dim, "hermiticity_error": herm,
                       "pulses": 0 if seq is None else seq.pulse_count})
    doc = {"valid": True, "preset": cfg.preset, "model_kind": cfg.model_kind,
           "representation": cfg.representation, "cells": report}
    print(json.dumps(_jsonable(doc), sort_keys=True))
    return EXIT_OK


def cmd_couplingmap(preset: str, out: Path, seed: Optional[int], n_grid: int = 101,
                    n_samples: int = 20000) -> int:
    t0 = time.time()
    key = preset.upper()
    rng = np.random.default_rng(0 if seed is None else seed)
    if key in ("FQ_NV", "DCR_FQ"):
        loop = FluxQubitLoop()
        fn = lambda p: fq_coupling(p, loop)  # noqa: E731
        ys = np.linspace(-2.5e-6, 2.5e-6, n_grid)
        zs = np.linspace(-2.5e-6, 2.5e-6, n_grid)
        box = fq_sample_box()
    elif key == "MR_DONOR":
        wire = ResonatorWire()
        fn = lambda p: mr_coupling(p, wire)  # noqa: E731
        ys = np.linspace(-3e-6, 3e-6, n_grid)
        zs = np.linspace(50e-9, 1e-6, n_grid)
        box = mr_sample_box(wire)
    else:
        raise ConfigError(f"unknown preset {preset!r}; choose from {PRESETS}")
    lam = coupling_map(fn, ys, zs)
    pts = sample_spins(box, rng, count=n_samples)
    st = coupling_stats(pts, fn)
    path = _write(out / f"{key.lower()}_couplingmap.csv", coupling_map_csv(ys, zs, lam))
    summary = {"lambda_bar_hz": st.lambda_bar / (2 * np.pi), "delta_lambda_hz": st.delta_lambda / (2 * np.pi),
               "samples": st.n, "expected_spin_count": box.expected_count}
    write_manifest(out, key.lower(), "couplingmap", None, t0, seeds={"seed": 0 if seed is None else seed},
                   preset=key, summary=summary, outputs=[path.name])
    print(json.dumps(_jsonable(summary), sort_keys=True))
    return EXIT_OK


def sense_scenario(preset: str, state: str) -> SensingScenario:
    key = preset.upper()
    table = {"FQ_NV": ("FQ_NV", FQ_N, NV_GAMMA_S), "MR_DONOR": ("MR_DONOR", MR_N, DONOR_GAMMA_S),
             "HYBRID": ("FQ_NV", FQ_N, DONOR_GAMMA_S)}
    if key not in table:
        raise ConfigError(f"unknown sensing preset {preset!r}; choose from {sorted(table)}")
    name, n, gs = table[key]
    label = f"{key.lower()}_{state}"
    if state == "coherent":
        return SensingScenario.coherent(n, gs, label)
    return squeezed_from_preset(name, n, gs, label=label)


def cmd_sense(preset: Optional[str], state: str, out: Optional[Path]) -> int:
    t0 = time.time()
    if preset is None:
        scenarios = reference_scenarios()
    else:
        sc = sense_scenario(preset, state)
        scenarios = {sc.label: sc}
    result = {}
    for name, sc in scenarios.items():
        opt = optimize_sensitivity(sc)
        result[name] = {"delta_B_T_per_sqrtHz": opt.delta_B_sqrtT, "t_star_s": opt.t_star,
                        "unimodal": opt.unimodal, "scenario": dataclasses.asdict(sc)}
    text = json.dumps(_jsonable(result), indent=2, sort_keys=True) + "\n"
    if out is not None:
        stem = "sense" if preset is None else f"sense_{preset.lower()}_{state}"
        path = _write(out / f"{stem}.json", text)
        write_manifest(out, stem, "sense", None, t0, outputs=[path.name])
    sys.stdout.write(text)
    return EXIT_OK


CONFIG_COMMANDS = {"simulate": cmd_simulate, "sweep": cmd_sweep, "steady": cmd_steady,
                   "qfunction": cmd_qfunction, "validate": cmd_validate}


# --------------------------------------------------------------------------
# Entry points


def _format_validation(exc: pydantic.ValidationError) -> str:
    lines = []
    for err in exc.errors():
        loc = ".".join(str(x) for x in err["loc"]) or "<root>"
        lines.append(f"  {loc}: {err['msg']}")
    return "invalid configuration:\n" + "\n".join(lines)


def _apply_overrides(cfg: ExperimentConfig, preset: Optional[str]) -> ExperimentConfig:
    if preset is None:
        return cfg
    return ExperimentConfig.model_validate({**cfg.model_dump(), "preset": preset})


def _guarded(fn, *args) -> int:
    try:
        return fn(*args)
    except pydantic.ValidationError as exc:
        print(_format_validation(exc), file=sys.stderr)
        return EXIT_INVALID
    except (ConfigError, LayoutError, KeyError, ValueError) as exc:
        print(f"invalid configuration: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (IntegrationError, EnsembleError, FloatingPointError, np.linalg.LinAlgError) as exc:
        diag = getattr(exc, "diagnostic", "")
        tail = f" [{diag}]" if diag else ""
        print(f"numerical failure: {exc}{tail}", file=sys.stderr)
        return EXIT_NUMERICAL


def _run_config(command: str, config_path, out, workers, seed, preset) -> int:
    try:
        cfg = load_config(config_path)
    except OSError as exc:
        print(f"cannot read config: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except json.JSONDecodeError as exc:
        print(f"config is not valid JSON: {exc}", file=sys.stderr)
        return EXIT_INVALID
    cfg = _apply_overrides(cfg, preset)
    if command == "auto":
        command = "sweep" if cfg.sweep is not None else ("steady" if cfg.schedule.kind == "steady" else "simulate")
    out_dir = Path(out)
    out_dir.mkdir(parents=True, exist_ok=True)
    return CONFIG_COMMANDS[command](cfg, out_dir, workers, seed)


def run(config_path, out: str | Path = ".", workers: int = 1, seed: Optional[int] = None,
        preset: Optional[str] = None, command: str = "auto") -> int:
    """Run a config file (sweep, steady state or simulation by content); returns the exit code."""
    return _guarded(_run_config, command, config_path, out, workers, seed, preset)


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="spinsqueeze", description="Spin squeezing simulations and estimates.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config_required=True):
        sp.add_argument("--config", required=config_required, help="experiment config (JSON)")
        sp.add_argument("--out", default=".", help="output directory")
        sp.add_argument("--workers", type=int, default=os.cpu_count() or 1)
        sp.add_argument("--seed", type=int, default=None, help="overrides the config seed")
        sp.add_argument("--preset", default=None)

    for name in CONFIG_COMMANDS:
        common(sub.add_parser(name))
    cm = sub.add_parser("couplingmap")
    common(cm, config_required=False)
    cm.add_argument("--grid", type=int, default=101)
    cm.add_argument("--samples", type=int, default=20000)
    se = sub.add_parser("sense")
    common(se, config_required=False)
    se.add_argument("--state", choices=("coherent", "squeezed"), default="squeezed")
    return p


def main(argv: Optional[list[str]] = None) -> int:
    parser = _parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_INVALID
    if args.seed is not None and not 0 <= args.seed < 2**64:
        print("--seed must be an unsigned 64-bit integer", file=sys.stderr)
        return EXIT_INVALID
    if args.workers < 1:
        print("--workers must be >= 1", file=sys.stderr)
        return EXIT_INVALID
    if args.command == "couplingmap":
        if args.preset is None:
            print("couplingmap needs --preset", file=sys.stderr)
            return EXIT_INVALID
        out = Path(args.out)
        return _guarded(cmd_couplingmap, args.preset, out, args.seed, args.grid, args.samples)
    if args.command == "sense":
        return _guarded(cmd_sense, args.preset, args.state, Path(args.out) if args.out != "." else None)
    return run(args.config, args.out, args.workers, args.seed, args.preset, args.command)


if __name__ == "__main__":
    sys.exit(main())
