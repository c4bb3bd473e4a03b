"""Command-line entry point: ``fowtlab <subcommand> [options]``.

Each subcommand reads a scenario file in the same ``key = value`` syntax
as parameter files.  Scenario keys (listed in ``SCENARIO_KEYS``) describe
the run; any other key is treated as a turbine parameter and overrides
the base parameter file (``parameters = path``, default the shipped
desk configuration).  ``--override key=value`` may repeat and applies to
either kind of key.

Every output directory receives ``replay.cfg`` (resolved scenario),
``parameters.cfg`` and the two coefficient surfaces, so the run can be
reproduced bit for bit with ``fowtlab <subcommand> --config replay.cfg``.

Exit codes: 0 success, 2 configuration or usage error, 3 runtime failure
(failed simulation, tuning did not converge), 4 file I/O error.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__, analysis, control, sim
from .dynamics import SimulationFailure
from .ensemble import (CampaignSpec, CounterfactualSpec, TrajectoryFileError, counterfactual,
                       load_campaign, load_trajectory, persist_trajectory, run_campaign,
                       run_seeds, write_manifest)
from .environment import (WaveSpec, WindSpec, synthesize_waves, synthesize_wind,
                          write_series)
from .params import (ParameterError, SurfaceError, _parse_lines, _read_data, default_surfaces,
                     load_parameters, load_surface, serialize_parameters, serialize_surface)

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME, EXIT_IO = 0, 2, 3, 4
WORKERS_ENV = "FOWTLAB_WORKERS"

_DEG = math.pi / 180.0

# scenario key -> (type, default)
SCENARIO_KEYS: dict[str, tuple[str, object]] = {
    "parameters": ("path", None),
    "power_surface": ("path", None),
    "thrust_surface": ("path", None),
    # simulation
    "dt": ("float", 0.05),
    "duration": ("float", 1500.0),
    "decimation": ("int", 1),
    "controller": ("bool", True),
    "beta": ("angle", None),             # fixed (controller off) or starting pitch
    "torque": ("float", None),           # fixed generator torque; default constant power
    "wind": ("str", "turbulent"),        # turbulent | constant
    "wind_speed": ("float", 20.0),
    "sigma_u": ("float", 2.884),
    "L_u": ("float", 147.0),
    "wind_seed": ("int", 0),
    "waves": ("str", "pm"),              # pm | none
    "U_wave": ("float", 20.0),
    "n_components": ("int", 128),
    "wave_seed": ("int", 0),
    # steady-state report
    "settle_band": ("float", 0.01),
    "rate_tol": ("float", 1e-3),
    # campaign
    "n_runs": ("int", 100),
    "base_seed": ("int", 0),
    "binary": ("bool", False),
    # tuning
    "stage": ("str", "all"),             # proportional | integral | derivative | all
    "tune_perturb": ("float", 0.02),
    "tune_lower": ("float", 1.0),
    "tune_upper": ("float", 1000.0),
    "kd_min": ("float", 0.02),
    "kd_max": ("float", 1.0),
    "kd_points": ("int", 50),
    "kd_seeds": ("int", 1),
    # counterfactual
    "campaign": ("path", None),
    "source_run": ("int", 0),
    "hold": ("str", "wind"),
    "variant": ("str", "resample"),
    "repetitions": ("int", 1),
    "level": ("float", None),
    # analysis
    "input": ("path", None),
    "n_bins": ("int", 50),
    "scatter_bins": ("int", 100),
    "percentiles": ("floats", (5.0, 25.0, 50.0, 75.0, 95.0)),
    "event_variable": ("str", "surge"),
    "event_level": ("float", 8.0),
    "event_k_sigma": ("float", None),
    "merge_window": ("float", 20.0),
    "quiet_k_sigma": ("float", 2.0),
    "dwell": ("float", 60.0),
    "short_cut": ("float", 200.0),
}


class UsageError(ValueError):
    pass


@dataclass
class Scenario:
    values: dict
    param_overrides: dict = field(default_factory=dict)
    overrides: dict = field(default_factory=dict)
    base_dir: Path = Path(".")

    def __getitem__(self, key):
        return self.values[key]

    def path(self, key) -> Path | None:
        v = self.values[key]
        if v is None:
            return None
        p = Path(v)
        return p if p.is_absolute() else self.base_dir / p


def _convert(key: str, text: str):
    kind = SCENARIO_KEYS[key][0]
    text = text.strip()
    if kind == "str":
        return text
    if text.lower() in ("none", ""):
        return None
    if kind == "path":
        return text
    try:
        if kind == "int":
            return int(text)
        if kind == "float":
            return float(text)
        if kind == "floats":
            return tuple(float(t) for t in text.replace(",", " ").split())
        if kind == "bool":
            low = text.lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError
            return low in ("true", "1", "yes")
        if kind == "angle":
            tokens = text.split()
            scale = _DEG if len(tokens) == 2 and tokens[1] == "deg" else 1.0
            if len(tokens) == 2 and tokens[1] not in ("deg", "rad"):
                raise ValueError
            return float(tokens[0]) * scale
    except ValueError:
        raise UsageError(f"{key}: cannot parse {text!r} as {kind}") from None
    raise AssertionError(kind)


def _parse_overrides(items) -> dict[str, str]:
    out = {}
    for item in items or ():
        key, sep, value = item.partition("=")
        if not sep or not key.strip():
            raise UsageError(f"--override expects key=value, got {item!r}")
        out[key.strip()] = value.strip()
    return out


def load_scenario(config: str | None, overrides: dict[str, str]) -> Scenario:
    raw: dict[str, str] = {}
    base_dir = Path(".")
    if config is not None:
        text = Path(config).read_text()
        raw = {k: v for k, (v, _) in _parse_lines(text).items()}
        base_dir = Path(config).parent
    raw.update(overrides)
    values = {k: d for k, (_, d) in SCENARIO_KEYS.items()}
    params = {}
    for key, text in raw.items():
        if key in SCENARIO_KEYS:
            values[key] = _convert(key, text)
        else:
            params[key] = text
    return Scenario(values, params, dict(overrides), base_dir)


def _load_model(sc: Scenario):
    path = sc.path("parameters")
    if path is None:
        text = _read_data("nrel5mw_tlp.cfg")
    else:
        text = path.read_text()
    p = load_parameters(text, sc.param_overrides)
    surfaces = default_surfaces()
    for key, kind in (("power_surface", "power"), ("thrust_surface", "thrust")):
        sp = sc.path(key)
        if sp is not None:
            surfaces[kind] = load_surface(sp.read_text(), kind)
    return p, surfaces


def _wind(sc: Scenario, seed=None):
    if sc["wind"] == "constant":
        return float(sc["wind_speed"])
    if sc["wind"] != "turbulent":
        raise UsageError("wind must be 'turbulent' or 'constant'")
    return WindSpec(U_ref=sc["wind_speed"], sigma_u=sc["sigma_u"], L_u=sc["L_u"],
                    dt=sc["dt"], duration=sc["duration"],
                    seed=sc["wind_seed"] if seed is None else seed)


def _wave(sc: Scenario, seed=None):
    if sc["waves"] == "none":
        return None
    if sc["waves"] != "pm":
        raise UsageError("waves must be 'pm' or 'none'")
    return WaveSpec(U_wave=sc["U_wave"], n_components=sc["n_components"],
                    seed=sc["wave_seed"] if seed is None else seed)


def _sim_config(sc: Scenario) -> sim.SimConfig:
    return sim.SimConfig(dt=sc["dt"], duration=sc["duration"], decimation=sc["decimation"],
                         controller=sc["controller"], beta=sc["beta"], torque=sc["torque"],
                         wind=_wind(sc), wave=_wave(sc))


def _apply_seed(sc: Scenario, seed: int | None) -> None:
    """``--seed S`` gives the seeds of run 0 of a campaign with base seed S."""
    if seed is None:
        return
    sc.values["base_seed"] = seed
    sc.values["wind_seed"], sc.values["wave_seed"] = run_seeds(seed, 0)


def _fmt(v) -> str:
    if isinstance(v, bool):
        return str(v).lower()
    if isinstance(v, tuple):
        return ", ".join(repr(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return "none" if v is None else str(v)


def _write_replay(out: Path, sc: Scenario, p, surfaces, command: str, extra: dict | None = None):
    out.mkdir(parents=True, exist_ok=True)
    (out / "parameters.cfg").write_text(serialize_parameters(p))
    (out / "cp_surface.csv").write_text(serialize_surface(surfaces["power"], degrees=False))
    (out / "ct_surface.csv").write_text(serialize_surface(surfaces["thrust"], degrees=False))
    values = dict(sc.values)
    values.update(parameters="parameters.cfg", power_surface="cp_surface.csv",
                  thrust_surface="ct_surface.csv")
    for key in ("campaign", "input"):
        pth = sc.path(key)
        if pth is not None:
            values[key] = str(pth.resolve())
    lines = [f"# replay: fowtlab {command} --config replay.cfg"]
    for key in SCENARIO_KEYS:
        v = values[key]
        if key == "beta" and v is not None:
            lines.append(f"{key} = {v!r} rad")
        else:
            lines.append(f"{key} = {_fmt(v)}")
    (out / "replay.cfg").write_text("\n".join(lines) + "\n")
    write_manifest(out / "run.manifest", {
        "version": __version__,
        "command": command,
        "overrides": sc.overrides,
        "parameter_overrides": sc.param_overrides,
        "scenario": {k: (list(v) if isinstance(v, tuple) else v) for k, v in values.items()},
        "parameter_hash": sim.parameter_hash(p, surfaces),
        **(extra or {}),
    })


def _say(args, *msg):
    if not args.quiet:
        print(*msg)


# ---------------------------------------------------------------------------
# subcommands


def cmd_simulate(args, sc: Scenario) -> int:
    p, surfaces = _load_model(sc)
    cfg = _sim_config(sc)
    out = Path(args.out)
    steady = (isinstance(cfg.wind, float) and cfg.wave is None and not cfg.controller)
    extra = {}
    if steady:
        traj, report = sim.steady_state_run(cfg, p, surfaces, band=sc["settle_band"],
                                            rate_tol=sc["rate_tol"])
        extra["steady_state"] = {"converged": report.converged,
                                 "settling_time": report.settling_time,
                                 "final": report.final}
    else:
        traj = sim.simulate(cfg, p, surfaces)
    _write_replay(out, sc, p, surfaces, "simulate", extra)
    persist_trajectory(traj, out / ("trajectory.npz" if sc["binary"] else "trajectory.csv"),
                       binary=sc["binary"])
    if steady:
        lines = [f"converged = {str(report.converged).lower()}",
                 f"settling_time = {report.settling_time!r} s"]
        lines += [f"final.{k} = {v!r}" for k, v in report.final.items()]
        lines.append(f"final.rotor_speed_rpm = {report.final['rotor_speed'] * 30 / math.pi!r}")
        (out / "steady_report.txt").write_text("\n".join(lines) + "\n")
        _say(args, "\n".join(lines))
    _say(args, f"wrote {len(traj)} samples to {out}")
    if traj.failed:
        print(f"simulation failed at t = {traj.failure['time']:g} s: {traj.failure['cause']}",
              file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


def cmd_tune(args, sc: Scenario) -> int:
    p, surfaces = _load_model(sc)
    out = Path(args.out)
    stage = sc["stage"]
    if stage not in ("proportional", "integral", "derivative", "all"):
        raise UsageError("stage must be proportional, integral, derivative or all")
    result = {}
    steady_cfg = _sim_config(sc).with_updates(wind=float(sc["wind_speed"]), wave=None,
                                               controller=True)
    if stage in ("proportional", "all"):
        trial = sim.tuning_trial(steady_cfg, p, surfaces, "a_p", sc["tune_perturb"],
                                 a_i=p.a_i, K_d=0.0)

        def run(a):
            tr = trial(a)
            if tr.failed:
                raise SimulationFailure(tr.failure["message"], None, tr.failure["cause"])
            return tr.t, tr["rotor_speed"]

        a_p = control.tune_proportional(run, lower=sc["tune_lower"], upper=sc["tune_upper"])
        result["a_p"] = a_p
        p = p.with_updates(a_p=a_p)
        _say(args, f"a_p = {a_p!r}")
    turb_cfg = _sim_config(sc).with_updates(controller=True)
    if stage in ("integral", "all"):
        def mean_speed(a_i):
            tr = sim.simulate(turb_cfg, p.with_updates(a_i=a_i), surfaces)
            if tr.failed:
                raise SimulationFailure(tr.failure["message"], None, tr.failure["cause"])
            return float(np.mean(tr["rotor_speed"]))

        a_i = control.tune_integral(mean_speed, p.omega_0, p.a_i)
        result["a_i"] = a_i
        p = p.with_updates(a_i=a_i)
        _say(args, f"a_i = {a_i!r}")
    if stage in ("derivative", "all"):
        grid = np.linspace(sc["kd_min"], sc["kd_max"], sc["kd_points"])
        seeds = [sc["wind_seed"] + k for k in range(sc["kd_seeds"])]

        def objective(kd):
            vals = []
            for s in seeds:
                cfg = turb_cfg.with_updates(wind=_wind(sc, s), wave=_wave(sc, s + 1))
                tr = sim.simulate(cfg, p.with_updates(K_d=kd), surfaces)
                vals.append(math.inf if tr.failed else float(np.std(tr["rotor_speed"])))
            return float(np.mean(vals))

        sweep = control.tune_derivative(objective, grid)
        result["K_d"] = sweep.best
        result["K_d_interior_minimum"] = sweep.interior_minimum
        out.mkdir(parents=True, exist_ok=True)
        (out / "kd_sweep.csv").write_text(sweep.to_text())
        p = p.with_updates(K_d=sweep.best)
        _say(args, f"K_d = {sweep.best!r} (interior minimum: {sweep.interior_minimum})")
    _write_replay(out, sc, p, surfaces, "tune", {"tuned": result})
    (out / "tuned.cfg").write_text("".join(f"{k} = {v!r}\n" for k, v in result.items()
                                           if k in ("a_p", "a_i", "K_d")))
    return EXIT_OK


def _workers(args) -> int:
    if args.workers is not None:
        return args.workers
    env = os.environ.get(WORKERS_ENV)
    if env:
        try:
            return int(env)
        except ValueError:
            raise UsageError(f"{WORKERS_ENV} must be an integer") from None
    return 1


def cmd_campaign(args, sc: Scenario) -> int:
    p, surfaces = _load_model(sc)
    out = Path(args.out)
    cfg = _sim_config(sc)
    wind = cfg.wind if isinstance(cfg.wind, WindSpec) else None
    base_sim = cfg.with_updates(wind=cfg.wind if wind is None else sc["wind_speed"], wave=None)
    spec = CampaignSpec(sc["n_runs"], sc["base_seed"], str(out), base_sim, wind, cfg.wave,
                        _workers(args), sc["binary"])
    _write_replay(out, sc, p, surfaces, "campaign")
    done = []

    def progress(i):
        done.append(i)
        if not args.quiet:
            print(f"run {i} done ({len(done)} new)", flush=True)

    result = run_campaign(spec, p, surfaces, progress)
    _say(args, f"{spec.n_runs} runs in {out} ({result.n_failed} failed)")
    return EXIT_OK


def cmd_counterfactual(args, sc: Scenario) -> int:
    src = sc.path("campaign")
    if src is None:
        raise UsageError("counterfactual needs 'campaign = <directory>'")
    p, surfaces = _load_model(sc)
    cf = CounterfactualSpec(sc["source_run"], sc["hold"], sc["variant"], sc["repetitions"],
                            sc["level"])
    out = Path(args.out)
    _write_replay(out, sc, p, surfaces, "counterfactual")
    trajs = counterfactual(cf, load_campaign(src), p, surfaces, out_dir=out)
    _say(args, f"wrote {len(trajs)} counterfactual runs to {out}")
    return EXIT_RUNTIME if any(t.failed for t in trajs) else EXIT_OK


def cmd_analyze(args, sc: Scenario) -> int:
    src = sc.path("input")
    if src is None:
        raise UsageError("analyze needs 'input = <campaign directory or trajectory file>'")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if src.is_dir():
        trajs = [t for t in load_campaign(src).trajectories() if not t.failed]
    else:
        trajs = [load_trajectory(src)]
    if not trajs:
        raise SimulationFailure("no successful trajectories to analyze", None, "empty")
    summary = {"n_trajectories": len(trajs)}
    for name in sim.STATE_CHANNELS:
        pooled = np.concatenate([t[name] for t in trajs])
        (out / f"pdf_{name}.csv").write_text(analysis.pdf(pooled, sc["n_bins"]).to_text())
        ext = [analysis.trajectory_extremes(t, name) for t in trajs]
        maxima = np.array([e.max for e in ext])
        summary[name] = {"unimodal": analysis.is_unimodal(pooled),
                         "p99": float(np.percentile(pooled, 99)),
                         "mean_of_maxima": float(maxima.mean())}
        with open(out / f"extremes_{name}.csv", "w") as fh:
            fh.write("run,min,max,t_min,t_max\n")
            for i, e in enumerate(ext):
                fh.write(f"{i},{e.min!r},{e.max!r},{e.t_min!r},{e.t_max!r}\n")
    lengths = {len(t) for t in trajs}
    usable = [t for t in trajs if len(t) == max(lengths)]
    for name in ("surge", "heave", "pitch", "rotor_speed"):
        bands = analysis.percentile_bands(usable, name, sc["percentiles"])
        (out / f"bands_{name}.csv").write_text(bands.to_text())
    dt = float(trajs[0].t[1] - trajs[0].t[0])
    for name in ("wind_speed", "wave_elevation", "pitch"):
        if len(trajs[0]) >= 16 and np.ptp(trajs[0][name]) > 0:
            spec = analysis.fft_spectrum(trajs[0][name], dt)
            (out / f"spectrum_{name}.csv").write_text(spec.to_text())
    heave = np.concatenate([t["heave"] for t in trajs])
    pitch = np.concatenate([t["pitch"] for t in trajs])
    scatter = analysis.binned_scatter(heave, pitch, sc["scatter_bins"])
    (out / "scatter_heave_pitch.csv").write_text(scatter.to_text())
    if scatter.centers.size >= 3:
        tr = scatter.trend()
        summary["heave_pitch_trend"] = {"slope": tr.slope, "ci": [tr.ci_low, tr.ci_high],
                                        "empty_bins": len(scatter.empty_bins)}
    if len(trajs) >= 2:
        col = analysis.extreme_collocation(trajs)
        (out / "collocation.csv").write_text(col.to_text())
        summary["collocation_max_ks"] = col.max_ks
    var = sc["event_variable"]
    base = analysis.baseline_from_samples(np.concatenate([t[var] for t in trajs]))
    thr = (analysis.ThresholdSpec(k_sigma=sc["event_k_sigma"]) if sc["event_k_sigma"]
           else analysis.ThresholdSpec(level=sc["event_level"]))
    quiet = analysis.QuietBand(k_sigma=sc["quiet_k_sigma"], dwell=sc["dwell"],
                               cut=sc["short_cut"])
    with open(out / f"events_{var}.csv", "w") as fh:
        fh.write("run," + analysis.events_to_text([]))
        for i, t in enumerate(trajs):
            evs = analysis.classify_events(
                t, analysis.detect_events(t, var, thr, base, sc["merge_window"]), base, quiet)
            for line in analysis.events_to_text(evs).splitlines()[1:]:
                fh.write(f"{i},{line}\n")
    write_manifest(out / "run.manifest", {"version": __version__, "command": "analyze",
                                          "input": str(src.resolve()),
                                          "overrides": sc.overrides,
                                          "scenario": {k: (list(v) if isinstance(v, tuple) else v)
                                                       for k, v in sc.values.items()},
                                          "summary": summary})
    _say(args, json.dumps(summary, indent=1))
    return EXIT_OK


def cmd_synth_env(args, sc: Scenario) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    t = np.arange(int(round(sc["duration"] / sc["dt"])) + 1) * sc["dt"]
    wind = _wind(sc)
    if isinstance(wind, WindSpec):
        series = synthesize_wind(wind)
        write_series(out / "wind.csv", series.t, series.v_w, "wind_speed")
    else:
        write_series(out / "wind.csv", t, np.full(t.size, wind), "wind_speed")
    wave = _wave(sc)
    elev = np.zeros(t.size)
    if wave is not None:
        field_ = synthesize_waves(wave)
        elev = np.array([field_.elevation(np.array([0.0]), ti)[0] for ti in t])
    write_series(out / "wave_elevation.csv", t, elev, "wave_elevation")
    write_manifest(out / "run.manifest", {
        "version": __version__, "command": "synth-env", "overrides": sc.overrides,
        "scenario": {k: (list(v) if isinstance(v, tuple) else v) for k, v in sc.values.items()},
    })
    _say(args, f"wrote wind.csv and wave_elevation.csv to {out}")
    return EXIT_OK


COMMANDS = {
    "simulate": (cmd_simulate, "run one simulation (steady-state report when applicable)"),
    "tune": (cmd_tune, "run the controller tuning procedures"),
    "campaign": (cmd_campaign, "run or resume a seeded Monte Carlo campaign"),
    "counterfactual": (cmd_counterfactual, "re-run a campaign run with one factor changed"),
    "analyze": (cmd_analyze, "write statistics tables for a campaign or trajectory"),
    "synth-env": (cmd_synth_env, "write synthesized wind and wave series"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fowtlab", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=f"fowtlab {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="subcommand")
    for name, (_, help_) in COMMANDS.items():
        sp = sub.add_parser(name, help=help_, description=help_)
        sp.add_argument("--config", help="scenario file (key = value)")
        sp.add_argument("--override", action="append", metavar="KEY=VALUE",
                        help="override a scenario or parameter key (repeatable)")
        sp.add_argument("--out", default=f"fowtlab-{name}", help="output directory")
        sp.add_argument("--workers", type=int, default=None,
                        help=f"worker processes (default ${WORKERS_ENV} or 1)")
        sp.add_argument("--seed", type=int, default=None,
                        help="base seed; single runs use the seeds of campaign run 0")
        sp.add_argument("--quiet", action="store_true", help="suppress progress output")
    return parser


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:          # usage errors (2), --help and --version (0)
        return int(exc.code or 0)
    try:
        if args.workers is not None and args.workers < 1:
            raise UsageError("--workers must be at least 1")
        sc = load_scenario(args.config, _parse_overrides(args.override))
        _apply_seed(sc, args.seed)
        return COMMANDS[args.command][0](args, sc)
    except (UsageError, ParameterError, SurfaceError) as exc:
        parser.print_usage(sys.stderr)
        print(f"fowtlab: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SimulationFailure, control.TuningError) as exc:
        print(f"fowtlab: runtime failure: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except (TrajectoryFileError, OSError) as exc:
        print(f"fowtlab: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"fowtlab: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


def main() -> None:
    sys.exit(run())
