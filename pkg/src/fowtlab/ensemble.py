"""Seeded Monte Carlo campaigns, trajectory files and counterfactual re-runs.

Campaign directory layout::

    campaign.manifest          key = JSON value lines describing the campaign
    index.csv                  one row per run (seeds, failure flag, extremes)
    runs/run_00000.csv         trajectory table (time + channels)
    runs/run_00000.csv.manifest  sidecar: format version, checksum, run manifest

Per-run seeds are derived from the base seed, the run index and a stream
tag, so the wind and wave streams of one run can be varied independently.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .environment import RNG_ALGORITHM, WaveSpec, WindSpec
from .dynamics import StateVector
from .params import ParameterSet
from .sim import STATE_CHANNELS, SimConfig, Trajectory, parameter_hash, simulate

__all__ = [
    "FORMAT_VERSION",
    "TrajectoryFileError",
    "hash64",
    "run_seeds",
    "CampaignSpec",
    "EnsembleResult",
    "CounterfactualSpec",
    "run_config",
    "run_campaign",
    "load_campaign",
    "counterfactual",
    "persist_trajectory",
    "load_trajectory",
    "write_manifest",
    "read_manifest",
]

FORMAT_VERSION = 1
WIND_STREAM = "wind"
WAVE_STREAM = "wave"


class TrajectoryFileError(IOError):
    pass


def hash64(base_seed: int, index: int, tag: str) -> int:
    """Deterministic 64-bit seed from (base seed, run index, stream tag)."""
    h = hashlib.blake2b(f"{int(base_seed)}:{int(index)}:{tag}".encode(), digest_size=8)
    return int.from_bytes(h.digest(), "little")


def run_seeds(base_seed: int, index: int) -> tuple[int, int]:
    return hash64(base_seed, index, WIND_STREAM), hash64(base_seed, index, WAVE_STREAM)


# ---------------------------------------------------------------------------
# key/value manifests


def write_manifest(path, data: dict) -> None:
    with open(path, "w") as fh:
        for key, value in data.items():
            fh.write(f"{key} = {json.dumps(value, sort_keys=True)}\n")


def read_manifest(path) -> dict:
    out = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            key, sep, value = line.partition(" = ")
            if not sep:
                raise TrajectoryFileError(f"{path}:{lineno}: malformed manifest line")
            out[key] = json.loads(value)
    return out


# ---------------------------------------------------------------------------
# trajectory files


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def persist_trajectory(traj: Trajectory, path, binary: bool = False) -> Path:
    """Write a trajectory table (CSV, or ``.npz`` when ``binary``) plus sidecar."""
    path = Path(path)
    names = list(traj.channels)
    if binary:
        with open(path, "wb") as fh:
            np.savez(fh, time=traj.t, **traj.channels)
    else:
        data = np.column_stack([traj.t] + [traj.channels[k] for k in names]) if len(traj) else \
            np.zeros((0, len(names) + 1))
        np.savetxt(path, data, delimiter=",", fmt="%.17g",
                   header=",".join(["time"] + names), comments="")
    write_manifest(str(path) + ".manifest", {
        "format_version": FORMAT_VERSION,
        "format": "npz" if binary else "csv",
        "sha256": _sha256(path),
        "rows": len(traj),
        "channels": names,
        "manifest": traj.manifest,
        "failure": traj.failure,
    })
    return path


def load_trajectory(path) -> Trajectory:
    path = Path(path)
    side = Path(str(path) + ".manifest")
    if not side.exists():
        raise TrajectoryFileError(f"missing sidecar manifest {side}")
    meta = read_manifest(side)
    if meta.get("format_version") != FORMAT_VERSION:
        raise TrajectoryFileError(f"unsupported trajectory format version "
                                  f"{meta.get('format_version')!r} (expected {FORMAT_VERSION})")
    if _sha256(path) != meta["sha256"]:
        raise TrajectoryFileError(f"checksum mismatch for {path}")
    names = meta["channels"]
    if meta["format"] == "npz":
        with np.load(path) as z:
            t = z["time"].copy()
            channels = {k: z[k].copy() for k in names}
    else:
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        if data.size == 0:
            data = np.zeros((0, len(names) + 1))
        t = data[:, 0].copy()
        channels = {k: data[:, i + 1].copy() for i, k in enumerate(names)}
    if t.size != meta["rows"]:
        raise TrajectoryFileError(f"{path}: expected {meta['rows']} rows, found {t.size}")
    return Trajectory(t, channels, meta["manifest"], meta["failure"])


# ---------------------------------------------------------------------------
# campaigns


@dataclass(frozen=True)
class CampaignSpec:
    n_runs: int
    base_seed: int
    out_dir: str
    sim: SimConfig = SimConfig(duration=300.0)
    wind: WindSpec | None = WindSpec(duration=300.0)
    wave: WaveSpec | None = WaveSpec()
    workers: int = 1
    binary: bool = False

    def __post_init__(self):
        if self.n_runs < 1:
            raise ValueError("n_runs must be at least 1")
        if self.workers < 1:
            raise ValueError("workers must be at least 1")


@dataclass
class EnsembleResult:
    directory: Path
    entries: list[dict]
    manifest: dict

    def path(self, run_id: int) -> Path:
        return self.directory / self.entries[run_id]["path"]

    def load(self, run_id: int) -> Trajectory:
        return load_trajectory(self.path(run_id))

    def trajectories(self):
        for e in self.entries:
            yield load_trajectory(self.directory / e["path"])

    def extremes(self, variable: str) -> tuple[np.ndarray, np.ndarray]:
        return (np.array([e[f"{variable}_min"] for e in self.entries]),
                np.array([e[f"{variable}_max"] for e in self.entries]))

    @property
    def n_failed(self) -> int:
        return sum(1 for e in self.entries if e["failed"])


def run_config(spec: CampaignSpec, index: int) -> SimConfig:
    """Simulation config of run ``index`` with its derived seeds."""
    wind_seed, wave_seed = run_seeds(spec.base_seed, index)
    wind = dataclasses.replace(spec.wind, seed=wind_seed) if spec.wind is not None else spec.sim.wind
    wave = dataclasses.replace(spec.wave, seed=wave_seed) if spec.wave is not None else None
    return spec.sim.with_updates(wind=wind, wave=wave)


def _run_name(index: int, binary: bool) -> str:
    return f"runs/run_{index:05d}.{'npz' if binary else 'csv'}"


def _entry(index: int, traj: Trajectory, rel_path: str, seeds) -> dict:
    e = {"run_id": index, "wind_seed": seeds[0], "wave_seed": seeds[1],
         "failed": traj.failed,
         "cause": traj.failure["cause"] if traj.failed else "",
         "path": rel_path}
    for name in STATE_CHANNELS:
        x = traj[name]
        e[f"{name}_min"] = float(np.min(x)) if x.size else math.nan
        e[f"{name}_max"] = float(np.max(x)) if x.size else math.nan
    return e


def _execute(args):
    spec, index, p, surfaces = args
    directory = Path(spec.out_dir)
    rel = _run_name(index, spec.binary)
    traj = simulate(run_config(spec, index), p, surfaces)
    persist_trajectory(traj, directory / rel, binary=spec.binary)
    return _entry(index, traj, rel, run_seeds(spec.base_seed, index))


def _existing_entry(spec: CampaignSpec, index: int):
    directory = Path(spec.out_dir)
    rel = _run_name(index, spec.binary)
    try:
        traj = load_trajectory(directory / rel)
    except (OSError, ValueError, KeyError):
        return None
    return _entry(index, traj, rel, run_seeds(spec.base_seed, index))


def _campaign_manifest(spec: CampaignSpec, p: ParameterSet, surfaces) -> dict:
    s = spec.sim
    return {
        "version": __version__,
        "rng": RNG_ALGORITHM,
        "seed_derivation": "blake2b-64(base_seed:index:stream)",
        "n_runs": spec.n_runs,
        "base_seed": spec.base_seed,
        "sim": {"dt": s.dt, "duration": s.duration, "decimation": s.decimation,
                "controller": s.controller, "beta": s.beta, "torque": s.torque,
                "wind": s.wind if isinstance(s.wind, (int, float)) else None},
        "wind": dataclasses.asdict(spec.wind) if spec.wind is not None else None,
        "wave": _wave_dict(spec.wave),
        "binary": spec.binary,
        "parameter_hash": parameter_hash(p, surfaces),
    }


def _wave_dict(spec):
    if spec is None:
        return None
    d = dataclasses.asdict(spec)
    if d["omega_range"] is not None:
        d["omega_range"] = list(d["omega_range"])
    return d


_INDEX_FIELDS = ["run_id", "wind_seed", "wave_seed", "failed", "cause", "path"] + [
    f"{n}_{m}" for n in STATE_CHANNELS for m in ("min", "max")]


def _write_index(path, entries):
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=_INDEX_FIELDS)
        w.writeheader()
        for e in entries:
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in e.items()})


def _read_index(path) -> list[dict]:
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            e = {"run_id": int(row["run_id"]), "wind_seed": int(row["wind_seed"]),
                 "wave_seed": int(row["wave_seed"]), "failed": row["failed"] == "True",
                 "cause": row["cause"], "path": row["path"]}
            for k in _INDEX_FIELDS[6:]:
                e[k] = float(row[k])
            out.append(e)
    return out


def run_campaign(spec: CampaignSpec, p: ParameterSet, surfaces, progress=None) -> EnsembleResult:
    """Run (or resume) a campaign; completed runs with valid files are kept.

    Results do not depend on ``workers``: each run is a pure function of
    the spec and its index, and the index is assembled in run order.
    """
    directory = Path(spec.out_dir)
    (directory / "runs").mkdir(parents=True, exist_ok=True)
    manifest = _campaign_manifest(spec, p, surfaces)
    mpath = directory / "campaign.manifest"
    if mpath.exists():
        old = read_manifest(mpath)
        if {k: v for k, v in old.items() if k != "n_runs"} != \
                {k: v for k, v in manifest.items() if k != "n_runs"}:
            raise ValueError(f"{directory} holds a different campaign; use a new directory")
    write_manifest(mpath, manifest)

    entries: dict[int, dict] = {}
    todo = []
    for i in range(spec.n_runs):
        e = _existing_entry(spec, i)
        if e is None:
            todo.append(i)
        else:
            entries[i] = e
    jobs = [(spec, i, p, surfaces) for i in todo]
    if spec.workers == 1 or len(jobs) <= 1:
        for job in jobs:
            entries[job[1]] = _execute(job)
            if progress:
                progress(job[1])
    else:
        with ProcessPoolExecutor(max_workers=spec.workers) as pool:
            for job, e in zip(jobs, pool.map(_execute, jobs)):
                entries[job[1]] = e
                if progress:
                    progress(job[1])
    ordered = [entries[i] for i in range(spec.n_runs)]
    _write_index(directory / "index.csv", ordered)
    return EnsembleResult(directory, ordered, manifest)


def load_campaign(directory) -> EnsembleResult:
    directory = Path(directory)
    return EnsembleResult(directory, _read_index(directory / "index.csv"),
                          read_manifest(directory / "campaign.manifest"))


def campaign_spec_from_manifest(directory, out_dir=None, workers: int = 1) -> CampaignSpec:
    """Rebuild the :class:`CampaignSpec` recorded in a campaign directory."""
    m = read_manifest(Path(directory) / "campaign.manifest")
    s = m["sim"]
    sim = SimConfig(dt=s["dt"], duration=s["duration"], decimation=s["decimation"],
                    controller=s["controller"], beta=s["beta"], torque=s["torque"],
                    wind=s["wind"] if s["wind"] is not None else 20.0)
    wind = WindSpec(**m["wind"]) if m["wind"] is not None else None
    wave = _wave_from_dict(m["wave"])
    return CampaignSpec(m["n_runs"], m["base_seed"], str(out_dir or directory), sim, wind,
                        wave, workers, m["binary"])


def _wave_from_dict(d):
    if d is None:
        return None
    d = dict(d)
    if d.get("omega_range") is not None:
        d["omega_range"] = tuple(d["omega_range"])
    return WaveSpec(**d)


# ---------------------------------------------------------------------------
# counterfactuals


@dataclass(frozen=True)
class CounterfactualSpec:
    """Re-run one source run with exactly one forcing factor changed.

    ``hold`` names the factor kept identical; the other is replaced
    according to ``variant``: ``resample`` (new seeds, or ``seeds`` if
    given), ``constant`` (steady wind at ``level``; only when holding the
    wave) or ``none`` (still water; only when holding the wind).
    """

    source_run: int
    hold: str
    variant: str
    repetitions: int = 1
    level: float | None = None
    seeds: tuple[int, ...] | None = None

    def __post_init__(self):
        if self.hold not in ("wind", "wave"):
            raise ValueError("hold must be 'wind' or 'wave'")
        if self.variant not in ("resample", "constant", "none"):
            raise ValueError("variant must be resample, constant or none")
        if self.variant == "none" and self.hold != "wind":
            raise ValueError("variant 'none' (still water) requires hold='wind'")
        if self.variant == "constant" and self.hold != "wave":
            raise ValueError("variant 'constant' (steady wind) requires hold='wave'")
        if self.variant == "constant" and self.level is None:
            raise ValueError("variant 'constant' needs a wind level")
        if self.repetitions < 1:
            raise ValueError("repetitions must be at least 1")
        if self.seeds is not None and len(self.seeds) != self.repetitions:
            raise ValueError("give one seed per repetition")


def _source_specs(manifest: dict):
    wind = manifest.get("wind") or {}
    if "spec" in wind:
        wind = wind["spec"]
    wave = manifest.get("wave")
    if wave is not None and "spec" in wave:
        wave = wave["spec"]
    if "seed" not in wind:
        raise ValueError("source manifest has no replayable wind spec")
    if wave is not None and "seed" not in wave:
        raise ValueError("source manifest has no replayable wave spec")
    return WindSpec(**wind), _wave_from_dict(wave)


def counterfactual(cf: CounterfactualSpec, campaign: EnsembleResult, p: ParameterSet,
                   surfaces, out_dir=None) -> list[Trajectory]:
    """Variants of ``cf.source_run`` with one factor altered (see spec)."""
    entry = campaign.entries[cf.source_run]
    meta = read_manifest(str(campaign.path(cf.source_run)) + ".manifest")
    run_manifest = meta["manifest"]
    wind, wave = _source_specs(run_manifest)
    base = SimConfig(dt=run_manifest["dt"], duration=run_manifest["duration"],
                     decimation=run_manifest["decimation"],
                     controller=run_manifest["controller"],
                     beta=None if run_manifest["controller"] else run_manifest["initial_beta"],
                     torque=None if run_manifest["torque"] == "region3" else run_manifest["torque"],
                initial=StateVector.from_array(run_manifest["initial_state"]),
                report_surge=run_manifest["report_surge"])
    base_seed = campaign.manifest["base_seed"]
    out = []
    for r in range(cf.repetitions):
        if cf.seeds is not None:
            seed = int(cf.seeds[r])
        else:
            tag = f"cf:{cf.hold}:{r}"
            seed = hash64(base_seed, entry["run_id"], tag)
        if cf.hold == "wind":
            new_wave = None if cf.variant == "none" else (
                dataclasses.replace(wave if wave is not None else WaveSpec(), seed=seed))
            cfg = base.with_updates(wind=wind, wave=new_wave)
        else:
            new_wind = float(cf.level) if cf.variant == "constant" else dataclasses.replace(wind, seed=seed)
            cfg = base.with_updates(wind=new_wind, wave=wave)
        traj = simulate(cfg, p, surfaces)
        traj.manifest["counterfactual"] = {"source_run": cf.source_run, "hold": cf.hold,
                                           "variant": cf.variant, "repetition": r,
                                           "seed": None if cf.variant != "resample" else seed,
                                           "level": cf.level}
        if out_dir is not None:
            d = Path(out_dir)
            d.mkdir(parents=True, exist_ok=True)
            persist_trajectory(traj, d / f"cf_{cf.source_run:05d}_{cf.hold}_{cf.variant}_{r:03d}.csv")
        out.append(traj)
    return out
