"""Strict JSON configuration parsing for the command-line tools.

Every config is a JSON object with a fixed key set; unknown keys are
rejected by full dotted path so typos fail loudly. Dimensioned values are
either a bare number in SI units or a string like "49.9 kHz" / "1.5 us",
normalized at parse time. Keys starting with an underscore are reserved
for human-readable annotations and ignored.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass

import numpy as np

from .core import (ConfigError, DriveParams, IonSpecies, ModeSpec,
                   RamanGeometry, YB171, lamb_dicke, thermal_pmf)
from .cooling import PulseSchedule, SidebandPulse
from .msgate import ConfusionMatrix, MSGateParams
from .trap import TrapLayout, default_layout, layout_from_dict

_UNITS = {
    "frequency": {"hz": 1.0, "khz": 1e3, "mhz": 1e6, "ghz": 1e9},
    "time": {"s": 1.0, "ms": 1e-3, "us": 1e-6, "ns": 1e-9},
    "length": {"m": 1.0, "mm": 1e-3, "um": 1e-6, "nm": 1e-9},
    "voltage": {"v": 1.0, "mv": 1e-3, "kv": 1e3},
    "field": {"v/m": 1.0, "mv/m": 1e-3, "kv/m": 1e3, "v/mm": 1e3},
    "rate": {"1/s": 1.0, "/s": 1.0, "quanta/s": 1.0},
    "angle": {"deg": 1.0, "rad": 180.0 / math.pi},
}

_SPECIES = {"yb171": YB171}


def parse_quantity(value, kind: str, path: str) -> float:
    """Normalize a config value to SI (angles to degrees).

    Accepts a number (already in the base unit) or a "number unit" string
    with a unit from the table for `kind`.
    """
    if isinstance(value, bool):
        raise ConfigError(f"{path}: expected a quantity, got a boolean")
    if isinstance(value, (int, float)):
        return float(value)
    if isinstance(value, str):
        parts = value.split()
        if len(parts) != 2:
            raise ConfigError(
                f"{path}: quantity strings look like '49.9 kHz', got {value!r}")
        num, unit = parts
        table = _UNITS[kind]
        factor = table.get(unit.lower())
        if factor is None:
            raise ConfigError(f"{path}: unknown {kind} unit {unit!r}",
                              allowed=sorted(table))
        try:
            return float(num) * factor
        except ValueError:
            raise ConfigError(f"{path}: {num!r} is not a number") from None
    raise ConfigError(f"{path}: expected number or 'value unit' string, "
                      f"got {type(value).__name__}")


def _check_keys(obj: dict, allowed, path: str):
    if not isinstance(obj, dict):
        raise ConfigError(f"{path or 'config'}: expected an object")
    for key in obj:
        if key.startswith("_"):
            continue
        if key not in allowed:
            where = f"{path}.{key}" if path else key
            raise ConfigError(f"unknown config key {where!r}",
                              allowed=sorted(allowed))


def _get_number(obj, key, path, default=None, minimum=None):
    if key not in obj:
        if default is None:
            raise ConfigError(f"{path}: missing required key {key!r}")
        return default
    v = obj[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{path}.{key}: expected a number")
    if minimum is not None and v < minimum:
        raise ConfigError(f"{path}.{key}: must be >= {minimum}", value=v)
    return float(v)


def load_json(path: str) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON at line {exc.lineno}, "
                          f"column {exc.colno}: {exc.msg}") from None


def geometry_from_dict(d: dict | None, path: str = "geometry") -> RamanGeometry:
    if d is None:
        return RamanGeometry()
    _check_keys(d, {"wavelength", "configuration", "projection_angles_deg"},
                path)
    wavelength = parse_quantity(d.get("wavelength", 355e-9), "length",
                                f"{path}.wavelength")
    configuration = d.get("configuration", "counter")
    angles = d.get("projection_angles_deg", (45.0, 45.0))
    if not (isinstance(angles, (list, tuple)) and len(angles) == 2):
        raise ConfigError(f"{path}.projection_angles_deg: expected two angles")
    return RamanGeometry(wavelength_m=wavelength,
                         configuration=configuration,
                         projection_angles_deg=tuple(float(a) for a in angles))


def _mode_from_dict(d: dict, species: IonSpecies, geometry: RamanGeometry,
                    index: int, path: str) -> tuple[ModeSpec, float]:
    _check_keys(d, {"mode_id", "frequency", "nbar", "lamb_dicke"}, path)
    freq = parse_quantity(d.get("frequency") if "frequency" in d else
                          _missing(path, "frequency"), "frequency",
                          f"{path}.frequency")
    nbar = _get_number(d, "nbar", path, minimum=0.0)
    if "lamb_dicke" in d:
        eta = _get_number(d, "lamb_dicke", path, minimum=0.0)
    else:
        angles = geometry.projection_angles_deg
        angle = angles[index] if index < len(angles) else angles[-1]
        eta = lamb_dicke(species, geometry, freq, angle)
    mode_id = d.get("mode_id", f"mode{index + 1}")
    return ModeSpec(frequency_hz=freq, lamb_dicke=eta,
                    mode_id=str(mode_id)), nbar


def _missing(path, key):
    raise ConfigError(f"{path}: missing required key {key!r}")


def _times_from_value(v, path: str) -> np.ndarray:
    if isinstance(v, list):
        return np.array([parse_quantity(t, "time", f"{path}[{i}]")
                         for i, t in enumerate(v)], dtype=float)
    if isinstance(v, dict):
        _check_keys(v, {"start", "stop", "n"}, path)
        start = parse_quantity(v.get("start", 0.0), "time", f"{path}.start")
        stop = parse_quantity(v["stop"] if "stop" in v else
                              _missing(path, "stop"), "time", f"{path}.stop")
        n = v.get("n", 50)
        if not isinstance(n, int) or n < 2:
            raise ConfigError(f"{path}.n: expected an integer >= 2")
        return np.linspace(start, stop, n)
    raise ConfigError(f"{path}: expected a list of times or "
                      "{{start, stop, n}}")


def _shots_from_value(v, path: str):
    if v is None or v == "inf":
        return None
    if isinstance(v, bool) or not isinstance(v, int) or v <= 0:
        raise ConfigError(f"{path}: shots must be a positive integer, "
                          "null, or \"inf\"")
    return v


def resolve_seed(seed: int) -> int:
    """Config seed, unless TRAPSIM_SEED overrides it."""
    env = os.environ.get("TRAPSIM_SEED")
    if env is None:
        return int(seed)
    try:
        return int(env)
    except ValueError:
        raise ConfigError(f"TRAPSIM_SEED must be an integer, got {env!r}") \
            from None


@dataclass
class ExperimentConfig:
    """Parsed flopping-experiment description for rabi / fit-rabi."""

    species: IonSpecies
    geometry: RamanGeometry
    modes: tuple[ModeSpec, ...]
    nbars: tuple[float, ...]
    drive: DriveParams
    times_s: np.ndarray
    shots: int | None
    seed: int
    layout: TrapLayout | None
    out: str | None

    def distributions(self):
        return [thermal_pmf(nb) for nb in self.nbars]


def load_experiment(path: str) -> ExperimentConfig:
    raw = load_json(path)
    _check_keys(raw, {"species", "geometry", "modes", "drive", "times",
                      "shots", "seed", "layout", "out"}, "")

    species_name = raw.get("species", "yb171")
    species = _SPECIES.get(str(species_name).lower())
    if species is None:
        raise ConfigError(f"species: unknown species {species_name!r}",
                          allowed=sorted(_SPECIES))
    geometry = geometry_from_dict(raw.get("geometry"))

    if "modes" not in raw or not isinstance(raw["modes"], list) \
            or not raw["modes"]:
        raise ConfigError("modes: expected a nonempty list of mode objects")
    modes, nbars = [], []
    for i, md in enumerate(raw["modes"]):
        mode, nbar = _mode_from_dict(md, species, geometry, i, f"modes[{i}]")
        modes.append(mode)
        nbars.append(nbar)

    drv = raw.get("drive")
    if not isinstance(drv, dict):
        raise ConfigError("drive: expected an object with a rabi key")
    _check_keys(drv, {"rabi", "duration", "detuning"}, "drive")
    drive = DriveParams(
        rabi_hz=parse_quantity(drv["rabi"] if "rabi" in drv else
                               _missing("drive", "rabi"), "frequency",
                               "drive.rabi"),
        duration_s=parse_quantity(drv.get("duration", 0.0), "time",
                                  "drive.duration"),
        detuning_hz=parse_quantity(drv.get("detuning", 0.0), "frequency",
                                   "drive.detuning"))

    if "times" not in raw:
        raise ConfigError("times: missing required key")
    times = _times_from_value(raw["times"], "times")
    shots = _shots_from_value(raw.get("shots", 500), "shots")
    seed = raw.get("seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int):
        raise ConfigError("seed: expected an integer")

    layout = None
    if "layout" in raw:
        ref = raw["layout"]
        if ref == "default":
            layout = default_layout()
        elif isinstance(ref, str):
            layout = layout_from_dict(load_json(ref))
        else:
            raise ConfigError("layout: expected \"default\" or a file path")

    out = raw.get("out")
    if out is not None and not isinstance(out, str):
        raise ConfigError("out: expected a file path string")

    return ExperimentConfig(species=species, geometry=geometry,
                            modes=tuple(modes), nbars=tuple(nbars),
                            drive=drive, times_s=times, shots=shots,
                            seed=seed, layout=layout, out=out)


def load_schedule(path: str):
    """Parse a cooling schedule file.

    Returns (distributions by mode_id, etas by mode_id, PulseSchedule).
    """
    raw = load_json(path)
    _check_keys(raw, {"species", "geometry", "modes", "pulses",
                      "repump_after_each"}, "")
    species = _SPECIES.get(str(raw.get("species", "yb171")).lower())
    if species is None:
        raise ConfigError(f"species: unknown species {raw.get('species')!r}")
    geometry = geometry_from_dict(raw.get("geometry"))

    if not isinstance(raw.get("modes"), list) or not raw["modes"]:
        raise ConfigError("modes: expected a nonempty list")
    dists, etas = {}, {}
    for i, md in enumerate(raw["modes"]):
        mode, nbar = _mode_from_dict(md, species, geometry, i, f"modes[{i}]")
        if not mode.mode_id or mode.mode_id in dists:
            raise ConfigError(f"modes[{i}]: every mode needs a unique mode_id")
        dists[mode.mode_id] = thermal_pmf(nbar)
        etas[mode.mode_id] = mode.lamb_dicke

    if not isinstance(raw.get("pulses"), list) or not raw["pulses"]:
        raise ConfigError("pulses: expected a nonempty list")
    pulses = []
    for i, pd in enumerate(raw["pulses"]):
        path_i = f"pulses[{i}]"
        _check_keys(pd, {"mode_id", "sideband", "duration", "rabi"}, path_i)
        for key in ("mode_id", "sideband", "duration", "rabi"):
            if key not in pd:
                _missing(path_i, key)
        pulses.append(SidebandPulse(
            mode_id=str(pd["mode_id"]), sideband=str(pd["sideband"]),
            duration_s=parse_quantity(pd["duration"], "time",
                                      f"{path_i}.duration"),
            rabi_hz=parse_quantity(pd["rabi"], "frequency",
                                   f"{path_i}.rabi")))
        if pulses[-1].mode_id not in dists:
            raise ConfigError(f"{path_i}.mode_id: no such mode "
                              f"{pulses[-1].mode_id!r}", known=sorted(dists))

    repump = raw.get("repump_after_each", True)
    if not isinstance(repump, bool):
        raise ConfigError("repump_after_each: expected true/false")
    return dists, etas, PulseSchedule(pulses=tuple(pulses),
                                      repump_after_each=repump)


def load_gate_params(path: str):
    """Parse an entangling-gate parameter file.

    Returns (MSGateParams, ConfusionMatrix, times array in seconds).
    """
    raw = load_json(path)
    _check_keys(raw, {"rabi", "detuning", "mode", "nbar", "heating_rate",
                      "duration", "n_max", "confusion", "times"}, "")
    if "rabi" not in raw:
        _missing("", "rabi")
    rabi_raw = raw["rabi"]
    if isinstance(rabi_raw, list):
        if len(rabi_raw) != 2:
            raise ConfigError("rabi: per-ion list must have two entries")
        rabi = tuple(parse_quantity(r, "frequency", f"rabi[{i}]")
                     for i, r in enumerate(rabi_raw))
    else:
        rabi = parse_quantity(rabi_raw, "frequency", "rabi")
    detuning = parse_quantity(raw["detuning"] if "detuning" in raw else
                              _missing("", "detuning"), "frequency",
                              "detuning")

    md = raw.get("mode")
    if not isinstance(md, dict):
        raise ConfigError("mode: expected an object")
    _check_keys(md, {"mode_id", "frequency", "lamb_dicke"}, "mode")
    for key in ("frequency", "lamb_dicke"):
        if key not in md:
            _missing("mode", key)
    mode = ModeSpec(
        frequency_hz=parse_quantity(md["frequency"], "frequency",
                                    "mode.frequency"),
        lamb_dicke=_get_number(md, "lamb_dicke", "mode", minimum=0.0),
        mode_id=str(md.get("mode_id", "tilt")))

    nbar = _get_number(raw, "nbar", "", default=0.0, minimum=0.0)
    rate = parse_quantity(raw.get("heating_rate", 0.0), "rate",
                          "heating_rate")
    duration = parse_quantity(raw["duration"] if "duration" in raw else
                              _missing("", "duration"), "time", "duration")
    n_max = raw.get("n_max", 40)
    if isinstance(n_max, bool) or not isinstance(n_max, int):
        raise ConfigError("n_max: expected an integer")

    cm = ConfusionMatrix()
    if "confusion" in raw:
        cd = raw["confusion"]
        _check_keys(cd, {"p10", "p01"}, "confusion")
        cm = ConfusionMatrix(p10=_get_number(cd, "p10", "confusion", 0.0, 0.0),
                             p01=_get_number(cd, "p01", "confusion", 0.0, 0.0))

    if "times" in raw:
        times = _times_from_value(raw["times"], "times")
    else:
        times = np.linspace(0.0, duration, 60)

    params = MSGateParams(rabi_hz=rabi, detuning_hz=detuning, mode=mode,
                          initial_nbar=nbar,
                          heating_rate_quanta_per_s=rate,
                          gate_duration_s=duration, n_max=n_max)
    return params, cm, times
