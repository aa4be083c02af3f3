"""
Configuration ingestion, deterministic CSV emission and the experiment runner.

Configs are JSON. A bare ``{"variant": "A"}`` gives the System A defaults; any
section may override individual fields and unknown keys are rejected. Every run
writes ``effective_config.json`` (defaults resolved), one result CSV and a
``manifest.json`` that carries the SHA-256 of the effective config.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from . import __version__
from .core import ChannelPlan, ConfigError, TransmitterSpec
from .fiber import FiberSpec, StepConfig
from .photonics import AmplifierSpec, SplitterSpec
from .receiver import ElectricalFilterSpec, PinSpec
from .scenarios import (
    DEFAULT_DISTANCES,
    PAPER_BANDWIDTHS,
    FilterShape,
    SimulationSettings,
    Subarea,
    SweepRow,
    SystemConfig,
    allocate_wavelengths,
    back_to_back_ber,
    build_system,
    calibrated_pin,
    compute_link_budget,
    gamma_label,
    resolve_gamma,
    spectrum_at_splitter,
    sweep_bandwidth,
    sweep_distance,
)
from .units import bandwidth_nm_to_hz

SECTIONS = {
    "plan": ChannelPlan,
    "tx": TransmitterSpec,
    "mux": FilterShape,
    "drop_filter": FilterShape,
    "fiber": FiberSpec,
    "splitter": SplitterSpec,
    "amplifier": AmplifierSpec,
    "pin": PinSpec,
    "lpf": ElectricalFilterSpec,
    "simulation": SimulationSettings,
}
NESTED = {SimulationSettings: {"step": StepConfig}}
# the channel plan owns the wavelengths; the per-channel transmitters copy them
EXCLUDED = {TransmitterSpec: {"wavelength"}}
SCALARS = ("variant", "feeder_length", "amplifier_position", "seed")
NULLABLE = {(PinSpec, "thermal_noise_density"), (SimulationSettings, "prbs_order")}


class ConfigParseError(ConfigError):
    """Malformed JSON; the message carries line and column."""


# -- config <-> dict ----------------------------------------------------------------


def _section_to_dict(obj):
    skip = EXCLUDED.get(type(obj), set())
    out = {}
    for f in dataclasses.fields(obj):
        if f.name in skip:
            continue
        v = getattr(obj, f.name)
        if dataclasses.is_dataclass(v):
            v = _section_to_dict(v)
        elif isinstance(v, tuple):
            v = list(v)
        out[f.name] = v
    return out


def config_to_dict(config):
    out = {k: getattr(config, k) for k in SCALARS}
    for name in SECTIONS:
        out[name] = _section_to_dict(getattr(config, name))
    return out


def canonical_json(data):
    return json.dumps(data, indent=2, sort_keys=True) + "\n"


def config_digest(config):
    return hashlib.sha256(canonical_json(config_to_dict(config)).encode()).hexdigest()


def _is_number(v):
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def _check_value(cls, name, value, default):
    where = f"{cls.__name__}.{name}"
    if value is None:
        if (cls, name) in NULLABLE:
            return None
        raise ConfigError(f"{where} must not be null")
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{where} must be true or false")
        return value
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(f"{where} must be a string")
        return value
    if isinstance(default, tuple):
        if not isinstance(value, list) or not all(_is_number(x) for x in value):
            raise ConfigError(f"{where} must be a list of numbers")
        return tuple(float(x) for x in value)
    if not _is_number(value):
        raise ConfigError(f"{where} must be a number")
    if isinstance(default, int) or name in ("order", "n_outputs", "n_bits", "samples_per_bit", "prbs_order"):
        if float(value) != int(value):
            raise ConfigError(f"{where} must be an integer")
        return int(value)
    return float(value)


def _overlay(base, data, where):
    cls = type(base)
    if not isinstance(data, dict):
        raise ConfigError(f"{where} must be an object")
    names = {f.name for f in dataclasses.fields(cls)} - EXCLUDED.get(cls, set())
    unknown = sorted(set(data) - names)
    if unknown:
        raise ConfigError(f"{where}: unknown key(s) {', '.join(unknown)}")
    changes = {}
    for key, value in data.items():
        current = getattr(base, key)
        sub = NESTED.get(cls, {}).get(key)
        if sub is not None:
            changes[key] = _overlay(current, value, f"{where}.{key}")
        else:
            changes[key] = _check_value(cls, key, value, current)
    try:
        return dataclasses.replace(base, **changes)
    except TypeError as exc:
        raise ConfigError(f"{where}: {exc}") from None


def config_from_dict(data):
    """Build a SystemConfig from a parsed JSON document (strict keys)."""
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    unknown = sorted(set(data) - set(SCALARS) - set(SECTIONS))
    if unknown:
        raise ConfigError(f"SystemConfig: unknown key(s) {', '.join(unknown)}")
    variant = data.get("variant", "A")
    if variant not in ("A", "B"):
        raise ConfigError(f"SystemConfig.variant must be 'A' or 'B', got {variant!r}")
    base = build_system(variant)
    changes = {}
    for name in SECTIONS:
        if name in data:
            changes[name] = _overlay(getattr(base, name), data[name], SECTIONS[name].__name__)
    for key in ("feeder_length", "amplifier_position", "seed"):
        if key in data:
            changes[key] = _check_value(SystemConfig, key, data[key], getattr(base, key))
    return dataclasses.replace(base, **changes)


def parse_config_text(text, source="<config>"):
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigParseError(f"{source}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
    return config_from_dict(data)


def parse_config(path):
    """Read a JSON config file into a validated :class:`SystemConfig`."""
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {p}: {exc.strerror}") from None
    return parse_config_text(text, str(p))


def write_effective_config(config, out_dir):
    path = Path(out_dir) / "effective_config.json"
    text = canonical_json(config_to_dict(config))
    path.write_text(text, encoding="utf-8", newline="\n")
    return path, hashlib.sha256(text.encode()).hexdigest()


# -- CSV ----------------------------------------------------------------------------

SWEEP_HEADER = (
    "channel_nm", "distance_km", "bandwidth_nm", "filter_order",
    "gamma_mode", "rx_power_dbm", "q_factor", "min_ber",
)  # fmt: skip
HEADERS = {
    "sweep": SWEEP_HEADER,
    "spectrum": ("wavelength_nm", "power_dbm"),
    "budget": (
        "direction", "distance_km", "tx_power_dbm", "fiber_loss_db", "splitter_loss_db",
        "amplifier_gain_db", "received_power_dbm", "sensitivity_dbm", "margin_db",
    ),
    "allocate": (
        "subarea", "distance_km", "table_distance_km", "users", "per_user_rate",
        "n_wavelengths", "wavelengths_nm", "universal_nm",
    ),
    "calibrate": (
        "bit_rate", "sensitivity_dbm", "target_ber", "thermal_noise_density", "verified_min_ber",
    ),
}  # fmt: skip


def format_value(v):
    """Locale-independent shortest round-trip text."""
    if hasattr(v, "item") and not isinstance(v, (list, tuple)):  # numpy scalar
        v = v.item()
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        return repr(v)
    if v is None:
        return ""
    if isinstance(v, (tuple, list)):
        return ";".join(format_value(x) for x in v)
    return str(v)


def _as_row(item, header):
    if dataclasses.is_dataclass(item):
        return tuple(getattr(item, h) for h in header)
    if isinstance(item, dict):
        return tuple(item[h] for h in header)
    row = tuple(item)
    if len(row) != len(header):
        raise ValueError(f"row has {len(row)} fields, header has {len(header)}")
    return row


def _sort_key(kind, header):
    if kind == "sweep":
        order = ("channel_nm", "distance_km", "bandwidth_nm", "filter_order", "gamma_mode")
        idx = [header.index(h) for h in order]
        return lambda r: tuple(r[i] for i in idx)
    if kind == "spectrum":
        return lambda r: r[0]
    return None  # keep caller order


def emit_csv(table, path, kind="sweep"):
    """Write ``table`` as UTF-8 CSV with a fixed header and ``\\n`` newlines.

    Rows may be dataclasses, dicts keyed by column or plain sequences. Sweep
    rows are sorted by (channel, distance, bandwidth, order, gamma mode) and
    spectrum rows by wavelength, so equal tables always give identical bytes.
    """
    if kind not in HEADERS:
        raise ValueError(f"emit_csv: unknown table kind {kind!r}")
    header = HEADERS[kind]
    rows = [_as_row(item, header) for item in table]
    key = _sort_key(kind, header)
    if key is not None:
        rows.sort(key=key)
    path = Path(path)
    try:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for r in rows:
                w.writerow([format_value(v) for v in r])
    except OSError as exc:
        raise OSError(f"emit_csv: cannot write {path}: {exc.strerror}") from None
    return path


def read_sweep_csv(path):
    """Load a sweep CSV back into :class:`SweepRow` records."""
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != SWEEP_HEADER:
            raise ValueError(f"{path}: not a sweep table (header {reader.fieldnames})")
        return [
            SweepRow(
                float(r["channel_nm"]), float(r["distance_km"]), float(r["bandwidth_nm"]),
                int(r["filter_order"]), r["gamma_mode"], float(r["rx_power_dbm"]),
                float(r["q_factor"]), float(r["min_ber"]),
            )
            for r in reader
        ]  # fmt: skip


# -- experiments ---------------------------------------------------------------------

KINDS = ("spectrum", "bandwidth-sweep", "distance-sweep", "budget", "allocate", "calibrate")
OUTPUT_NAMES = {
    "spectrum": "spectrum.csv",
    "bandwidth-sweep": "bandwidth_sweep.csv",
    "distance-sweep": "distance_sweep.csv",
    "budget": "budget.csv",
    "allocate": "allocation.csv",
    "calibrate": "calibration.csv",
}


@dataclass(frozen=True)
class ExperimentOptions:
    seed: Optional[int] = None
    distances: Optional[tuple] = None
    bandwidths: tuple = PAPER_BANDWIDTHS
    order: int = 1
    gamma_modes: tuple = ("default",)
    threshold: float = 1e-12
    subareas: Optional[tuple] = None  # (index, distance, users)
    table: Optional[str] = None  # existing distance-sweep CSV for allocate
    resolution_bandwidth_nm: float = 0.01
    direction: str = "downstream"
    noiseless: bool = False
    workers: int = 1


@dataclass(frozen=True)
class RunManifest:
    kind: str
    config_digest: str
    seed: int
    software_version: str
    thermal_noise_density: Optional[float]
    gamma_modes: tuple
    gamma_values: tuple
    wall_clock_s: float
    outputs: tuple = field(default_factory=tuple)
    config_file: str = "effective_config.json"

    def write(self, out_dir):
        data = dataclasses.asdict(self)
        data["gamma_modes"] = list(self.gamma_modes)
        data["gamma_values"] = list(self.gamma_values)
        data["outputs"] = list(self.outputs)
        path = Path(out_dir) / "manifest.json"
        path.write_text(canonical_json(data), encoding="utf-8", newline="\n")
        return path


def _budget_rows(config, opts):
    distances = opts.distances or (config.total_distance,)
    rows = []
    for d in distances:
        b = compute_link_budget(config, d, opts.direction)
        rows.append(
            (b.direction, b.distance, b.tx_power, b.fiber_loss, b.splitter_loss,
             b.amplifier_gain, b.received_power, b.sensitivity, b.margin)
        )  # fmt: skip
    return rows


def _allocation_rows(config, opts, seed, out_dir, outputs):
    if opts.table:
        table = read_sweep_csv(opts.table)
    else:
        table = sweep_distance(
            config, opts.distances or DEFAULT_DISTANCES, opts.gamma_modes[:1], seed,
            opts.noiseless, workers=opts.workers,
        )  # fmt: skip
        outputs.append(emit_csv(table, Path(out_dir) / OUTPUT_NAMES["distance-sweep"]).name)
    label = gamma_label(opts.gamma_modes[0])
    table = [r for r in table if r.gamma_mode == label]
    if not table:
        raise ValueError(f"allocate: BER table has no rows for gamma mode {label!r}")
    if opts.subareas is None:
        dists = sorted({r.distance_km for r in table})
        subareas = [Subarea(k, d, config.splitter.n_outputs) for k, d in enumerate(dists)]
    else:
        subareas = [Subarea(int(k), float(d), int(n)) for k, d, n in opts.subareas]
    res = allocate_wavelengths(table, opts.threshold, subareas, config.bit_rate)
    return [
        (s.index, s.distance, s.table_distance, s.users, s.per_user_rate,
         len(s.wavelengths), s.wavelengths, res.universal)
        for s in res.subareas
    ]  # fmt: skip


def _calibration_rows(config, seed):
    pin = calibrated_pin(config)
    verified = back_to_back_ber(
        pin, config.bit_rate, pin.sensitivity_reference, config.tx.extinction_ratio,
        config.lpf, seed=seed + 7919,
    )  # fmt: skip
    return [(config.bit_rate, pin.sensitivity_reference, 1e-12, pin.thermal_noise_density, verified)]


def run_experiment(kind, config, out_dir, options=None):
    """Run one experiment and write its CSV, the effective config and the manifest.

    Returns the :class:`RunManifest`.
    """
    if kind not in KINDS:
        raise ValueError(f"unknown experiment kind {kind!r}; choose from {', '.join(KINDS)}")
    opts = options or ExperimentOptions()
    seed = config.seed if opts.seed is None else int(opts.seed)
    gammas = tuple(resolve_gamma(config, m) for m in opts.gamma_modes)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    cfg_path, digest = write_effective_config(config, out)
    outputs = []
    target = out / OUTPUT_NAMES[kind]
    density = config.pin.thermal_noise_density

    detects = kind in ("bandwidth-sweep", "distance-sweep") or (kind == "allocate" and not opts.table)
    if kind == "calibrate" or (detects and not opts.noiseless):
        density = calibrated_pin(config).thermal_noise_density

    try:
        if kind == "budget":
            emit_csv(_budget_rows(config, opts), target, "budget")
        elif kind == "calibrate":
            emit_csv(_calibration_rows(config, seed), target, "calibrate")
        elif kind == "spectrum":
            if len(gammas) != 1:
                raise ValueError("spectrum takes a single gamma mode")
            mean_nm = sum(config.plan.wavelengths) / config.plan.n_channels
            rbw = float(bandwidth_nm_to_hz(opts.resolution_bandwidth_nm, mean_nm))
            spec = spectrum_at_splitter(config, rbw, seed, gammas[0], opts.noiseless)
            emit_csv(spec.rows(), target, "spectrum")
        elif kind == "bandwidth-sweep":
            d = opts.distances[0] if opts.distances else None
            if opts.distances and len(opts.distances) > 1:
                raise ValueError("bandwidth-sweep takes a single distance")
            rows = sweep_bandwidth(
                config, opts.bandwidths, opts.order, opts.gamma_modes, d, seed, opts.noiseless,
                workers=opts.workers,
            )  # fmt: skip
            emit_csv(rows, target, "sweep")
        elif kind == "distance-sweep":
            rows = sweep_distance(
                config, opts.distances or DEFAULT_DISTANCES, opts.gamma_modes, seed, opts.noiseless,
                workers=opts.workers,
            )  # fmt: skip
            emit_csv(rows, target, "sweep")
        elif kind == "allocate":
            emit_csv(_allocation_rows(config, opts, seed, out, outputs), target, "allocate")
    except (ValueError, ArithmeticError, RuntimeError) as exc:
        raise type(exc)(f"{kind}: {exc}") from exc
    outputs.append(target.name)

    manifest = RunManifest(
        kind=kind,
        config_digest=digest,
        seed=seed,
        software_version=__version__,
        thermal_noise_density=density,
        gamma_modes=tuple(gamma_label(m) for m in opts.gamma_modes),
        gamma_values=gammas,
        wall_clock_s=round(time.perf_counter() - t0, 3),
        outputs=tuple(sorted(outputs)),
        config_file=cfg_path.name,
    )
    manifest.write(out)
    return manifest


def verify_manifest(out_dir):
    """True when manifest.json's digest matches effective_config.json."""
    out = Path(out_dir)
    m = json.loads((out / "manifest.json").read_text(encoding="utf-8"))
    text = (out / m["config_file"]).read_bytes()
    return hashlib.sha256(text).hexdigest() == m["config_digest"]


__all__ = [
    "ConfigParseError",
    "config_to_dict",
    "config_from_dict",
    "config_digest",
    "canonical_json",
    "parse_config",
    "parse_config_text",
    "emit_csv",
    "read_sweep_csv",
    "format_value",
    "HEADERS",
    "KINDS",
    "ExperimentOptions",
    "RunManifest",
    "run_experiment",
    "verify_manifest",
]
