"""Scenario files: strict YAML schema, validation with field paths, and the
canonical config digest used for replay verification.

The digest is a SHA-256 over the fully resolved configuration (defaults
materialized, output options excluded), serialized as canonical JSON, so it is
invariant to comments, whitespace, key order, and spelled-out defaults, and
changes exactly when a semantically meaningful field changes.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
import yaml

from .chain import (Beamsplitter, ChainConfig, FiberDelay, Loss, Modulator,
                    ModulatorParams)
from .detection import DetectorParams, TdcConfig
from .errors import ParseError, ValidationError
from .pipeline import DetectorBank, SimConfig, TriggerSpec
from .source import (BiphotonShape, FlatTopPrecursor, SourceParams,
                     TabulatedShape, normalize_shape)
from .waveform import (DriveWaveform, GaussianPulse, GeneratorParams,
                       RectPulses, RisingExponential, TabulatedWaveform,
                       predistort, read_waveform_csv)

_REQUIRED = object()
_OUTPUT_FORMATS = ("report", "histograms", "events", "waveform", "gnuplot")


@dataclass(frozen=True)
class Scenario:
    name: str
    sim: SimConfig
    outputs: tuple[str, ...]
    resolved: dict

    @property
    def seed(self) -> int:
        return self.sim.source.seed

    def digest(self) -> str:
        blob = json.dumps(self.resolved, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def with_overrides(self, seed: int | None = None,
                       time_scale: float | None = None) -> Scenario:
        """Apply CLI-level overrides; the digest reflects the result."""
        resolved = json.loads(json.dumps(self.resolved))
        source = self.sim.source
        if seed is not None:
            source = replace(source, seed=int(seed))
            resolved["source"]["seed"] = int(seed)
        if time_scale is not None:
            if time_scale <= 0:
                raise ValidationError("time_scale must be > 0")
            duration = source.run_duration * time_scale
            source = replace(source, run_duration=duration)
            resolved["source"]["run_duration_s"] = duration
        return Scenario(self.name, replace(self.sim, source=source),
                        self.outputs, resolved)


def _mapping(node, path: str) -> dict:
    if not isinstance(node, dict):
        raise ValidationError(f"{path}: expected a mapping")
    return node


def _no_unknown(node: dict, path: str, allowed) -> None:
    unknown = set(node) - set(allowed)
    if unknown:
        raise ValidationError(f"{path}: unknown field '{sorted(unknown)[0]}'")


def _get_num(node: dict, key: str, path: str, default=_REQUIRED,
             lo: float | None = None, hi: float | None = None,
             lo_open: bool = False, allow_none: bool = False):
    if key not in node:
        if default is _REQUIRED:
            raise ValidationError(f"{path}.{key}: required field missing")
        return default
    value = node[key]
    if value is None and allow_none:
        return None
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ValidationError(f"{path}.{key}: expected a number")
    value = float(value)
    if lo is not None and (value <= lo if lo_open else value < lo):
        cmp = ">" if lo_open else ">="
        raise ValidationError(f"{path}.{key}: must be {cmp} {lo}")
    if hi is not None and value > hi:
        raise ValidationError(f"{path}.{key}: must be <= {hi}")
    return value


def _get_int(node: dict, key: str, path: str, default=_REQUIRED) -> int:
    if key not in node:
        if default is _REQUIRED:
            raise ValidationError(f"{path}.{key}: required field missing")
        return default
    value = node[key]
    if isinstance(value, bool) or not isinstance(value, int):
        raise ValidationError(f"{path}.{key}: expected an integer")
    return value


def _get_bool(node: dict, key: str, path: str, default: bool) -> bool:
    value = node.get(key, default)
    if not isinstance(value, bool):
        raise ValidationError(f"{path}.{key}: expected true/false")
    return value


def _get_str(node: dict, key: str, path: str, default=_REQUIRED,
             choices=None) -> str:
    if key not in node:
        if default is _REQUIRED:
            raise ValidationError(f"{path}.{key}: required field missing")
        return default
    value = node[key]
    if not isinstance(value, str):
        raise ValidationError(f"{path}.{key}: expected a string")
    if choices and value not in choices:
        raise ValidationError(f"{path}.{key}: must be one of {sorted(choices)}")
    return value


def _parse_source(node, path: str) -> tuple[SourceParams, dict]:
    node = _mapping(node, path)
    _no_unknown(node, path, {"stokes_rate_per_s", "antistokes_singles_rate_per_s",
                             "intrinsic_retrieval", "duty_cycle", "gate_period_ns",
                             "run_duration_s", "seed"})
    params = SourceParams(
        stokes_rate=_get_num(node, "stokes_rate_per_s", path, lo=0.0),
        antistokes_singles_rate=_get_num(node, "antistokes_singles_rate_per_s",
                                         path, default=0.0, lo=0.0),
        intrinsic_retrieval=_get_num(node, "intrinsic_retrieval", path,
                                     lo=0.0, hi=1.0),
        duty_cycle=_get_num(node, "duty_cycle", path, default=1.0,
                            lo=0.0, hi=1.0, lo_open=True),
        run_duration=_get_num(node, "run_duration_s", path, lo=0.0),
        seed=_get_int(node, "seed", path, default=0),
        gate_period_ns=_get_num(node, "gate_period_ns", path, default=None,
                                lo=0.0, lo_open=True, allow_none=True),
    )
    resolved = {
        "stokes_rate_per_s": params.stokes_rate,
        "antistokes_singles_rate_per_s": params.antistokes_singles_rate,
        "intrinsic_retrieval": params.intrinsic_retrieval,
        "duty_cycle": params.duty_cycle,
        "gate_period_ns": params.gate_period_ns,
        "run_duration_s": params.run_duration,
        "seed": params.seed,
    }
    return params, resolved


def _parse_shape(node, path: str) -> tuple[BiphotonShape, dict]:
    node = _mapping(node, path)
    model = _get_str(node, "model", path,
                     choices={"flat_top_precursor", "tabulated"})
    if model == "flat_top_precursor":
        _no_unknown(node, path, {"model", "group_delay_ns", "precursor_width_ns",
                                 "precursor_height_ratio", "tail_decay_ns"})
        shape = FlatTopPrecursor(
            group_delay=_get_num(node, "group_delay_ns", path, lo=0.0, lo_open=True),
            precursor_width=_get_num(node, "precursor_width_ns", path,
                                     default=0.0, lo=0.0),
            precursor_height_ratio=_get_num(node, "precursor_height_ratio", path,
                                            default=0.0, lo=0.0),
            tail_decay=_get_num(node, "tail_decay_ns", path, default=0.0, lo=0.0),
        )
        resolved = {
            "model": model,
            "group_delay_ns": shape.group_delay,
            "precursor_width_ns": shape.precursor_width,
            "precursor_height_ratio": shape.precursor_height_ratio,
            "tail_decay_ns": shape.tail_decay,
        }
        return shape, resolved
    _no_unknown(node, path, {"model", "samples"})
    samples = node.get("samples")
    if not isinstance(samples, list) or not all(
            isinstance(s, list) and len(s) == 2 for s in samples):
        raise ValidationError(f"{path}.samples: expected a list of [tau_ns, density]")
    shape = normalize_shape(TabulatedShape(
        tuple((float(t), float(d)) for t, d in samples)))
    return shape, {"model": model,
                   "samples": [[t, d] for t, d in shape.samples]}


def _parse_chain(node, path: str) -> tuple[ChainConfig, dict]:
    node = _mapping(node, path)
    _no_unknown(node, path, {"elements"})
    items = node.get("elements")
    if not isinstance(items, list) or not items:
        raise ValidationError(f"{path}.elements: expected a non-empty list")
    elements = []
    resolved = []
    for i, raw in enumerate(items):
        epath = f"{path}.elements[{i}]"
        raw = _mapping(raw, epath)
        etype = _get_str(raw, "type", epath,
                         choices={"loss", "fiber_delay", "modulator", "beamsplitter"})
        if etype == "loss":
            _no_unknown(raw, epath, {"type", "transmission", "label"})
            e = Loss(transmission=_get_num(raw, "transmission", epath, lo=0.0, hi=1.0),
                     label=_get_str(raw, "label", epath))
            resolved.append({"type": etype, "transmission": e.transmission,
                             "label": e.label})
        elif etype == "fiber_delay":
            _no_unknown(raw, epath, {"type", "delay_ns"})
            e = FiberDelay(delay_ns=_get_num(raw, "delay_ns", epath, lo=0.0))
            resolved.append({"type": etype, "delay_ns": e.delay_ns})
        elif etype == "modulator":
            _no_unknown(raw, epath, {"type", "v_pi_volts", "alpha",
                                     "insertion_transmission", "max_frequency_hz",
                                     "leakage"})
            params = ModulatorParams(
                v_pi=_get_num(raw, "v_pi_volts", epath, default=1.3, lo=0.0, lo_open=True),
                alpha=_get_num(raw, "alpha", epath, default=0.75, lo=0.0, hi=1.0),
                insertion_transmission=_get_num(raw, "insertion_transmission",
                                                epath, default=0.5, lo=0.0, hi=1.0),
                max_frequency=_get_num(raw, "max_frequency_hz", epath,
                                       default=10e9, lo=0.0, lo_open=True),
                leakage=_get_num(raw, "leakage", epath, default=0.0, lo=0.0, hi=1.0),
            )
            e = Modulator(params=params)  # mode filled in after modulator_mode
            resolved.append({"type": etype, "v_pi_volts": params.v_pi,
                             "alpha": params.alpha,
                             "insertion_transmission": params.insertion_transmission,
                             "max_frequency_hz": params.max_frequency,
                             "leakage": params.leakage})
        else:
            _no_unknown(raw, epath, {"type", "reflect_probability",
                                     "excess_transmission"})
            e = Beamsplitter(
                reflect_probability=_get_num(raw, "reflect_probability", epath,
                                             default=0.5, lo=0.0, hi=1.0),
                excess_transmission=_get_num(raw, "excess_transmission", epath,
                                             default=1.0, lo=0.0, hi=1.0),
            )
            resolved.append({"type": etype,
                             "reflect_probability": e.reflect_probability,
                             "excess_transmission": e.excess_transmission})
        elements.append(e)
    try:
        chain = ChainConfig(tuple(elements))
    except Exception as exc:
        raise ValidationError(f"{path}: {exc}") from exc
    return chain, {"elements": resolved}


def _parse_drive(node, path: str, v_pi: float,
                 base_dir: Path) -> tuple[DriveWaveform | None, TriggerSpec, dict | None]:
    if node is None:
        return None, TriggerSpec(), None
    node = _mapping(node, path)
    kind = _get_str(node, "kind", path,
                    choices={"rect_pulses", "gaussian", "rising_exponential",
                             "tabulated", "predistorted_exponential"})
    trigger_node = node.get("trigger")
    trigger = TriggerSpec()
    trigger_resolved = {"mode": "herald", "period_ns": None}
    if trigger_node is not None:
        tpath = f"{path}.trigger"
        trigger_node = _mapping(trigger_node, tpath)
        _no_unknown(trigger_node, tpath, {"mode", "period_ns"})
        mode = _get_str(trigger_node, "mode", tpath, default="herald",
                        choices={"herald", "periodic"})
        period = _get_num(trigger_node, "period_ns", tpath, default=100.0,
                          lo=0.0, lo_open=True)
        trigger = TriggerSpec(mode=mode, period_ns=period)
        trigger_resolved = {"mode": mode,
                            "period_ns": period if mode == "periodic" else None}

    bias = _get_num(node, "bias_voltage", path, default=0.0)
    common = {"kind", "bias_voltage", "trigger"}
    if kind == "rect_pulses":
        _no_unknown(node, path, common | {"pulses_ns_volts"})
        pulses = node.get("pulses_ns_volts")
        if not isinstance(pulses, list) or not all(
                isinstance(p, list) and len(p) == 3 for p in pulses):
            raise ValidationError(
                f"{path}.pulses_ns_volts: expected a list of [start, stop, volts]")
        w = RectPulses(tuple((float(a), float(b), float(v)) for a, b, v in pulses),
                       bias_voltage=bias)
        resolved = {"kind": kind, "bias_voltage": bias,
                    "pulses_ns_volts": [[a, b, v] for a, b, v in w.pulses]}
    elif kind == "gaussian":
        _no_unknown(node, path, common | {"center_ns", "sigma_ns", "peak_volts"})
        w = GaussianPulse(center=_get_num(node, "center_ns", path),
                          sigma=_get_num(node, "sigma_ns", path, lo=0.0, lo_open=True),
                          peak=_get_num(node, "peak_volts", path),
                          bias_voltage=bias)
        resolved = {"kind": kind, "bias_voltage": bias, "center_ns": w.center,
                    "sigma_ns": w.sigma, "peak_volts": w.peak}
    elif kind == "rising_exponential":
        _no_unknown(node, path, common | {"time_constant_ns", "end_ns", "peak_volts"})
        w = RisingExponential(
            time_constant=_get_num(node, "time_constant_ns", path, lo=0.0, lo_open=True),
            end=_get_num(node, "end_ns", path, lo=0.0, lo_open=True),
            peak=_get_num(node, "peak_volts", path), bias_voltage=bias)
        resolved = {"kind": kind, "bias_voltage": bias,
                    "time_constant_ns": w.time_constant, "end_ns": w.end,
                    "peak_volts": w.peak}
    elif kind == "predistorted_exponential":
        _no_unknown(node, path, common | {"time_constant_ns", "start_ns", "end_ns",
                                          "peak_amplitude", "sample_period_ns"})
        tc = _get_num(node, "time_constant_ns", path, lo=0.0, lo_open=True)
        start = _get_num(node, "start_ns", path, default=0.0, lo=0.0)
        end = _get_num(node, "end_ns", path, lo=0.0, lo_open=True)
        peak = _get_num(node, "peak_amplitude", path, lo=0.0, hi=1.0)
        period = _get_num(node, "sample_period_ns", path, default=0.5,
                          lo=0.0, lo_open=True)
        if end <= start:
            raise ValidationError(f"{path}.end_ns: must be > start_ns")
        target = lambda t: peak * np.exp((t - end) / tc)
        w = predistort(target, v_pi=v_pi, sample_period=period, support=(start, end))
        resolved = {"kind": kind, "bias_voltage": bias, "time_constant_ns": tc,
                    "start_ns": start, "end_ns": end, "peak_amplitude": peak,
                    "sample_period_ns": period}
    else:  # tabulated
        _no_unknown(node, path, common | {"csv", "sample_period_ns", "volts",
                                          "t_start_ns"})
        if "csv" in node:
            rel = _get_str(node, "csv", path)
            csv_path = base_dir / rel
            if not csv_path.exists():
                raise ValidationError(f"{path}.csv: file '{rel}' not found")
            w = read_waveform_csv(csv_path, bias_voltage=bias)
            resolved = {"kind": kind, "bias_voltage": bias,
                        "sample_period_ns": w.sample_period,
                        "t_start_ns": w.t_start, "volts": list(w.volts)}
        else:
            volts = node.get("volts")
            if not isinstance(volts, list) or len(volts) < 2:
                raise ValidationError(f"{path}.volts: expected >= 2 samples")
            w = TabulatedWaveform(
                sample_period=_get_num(node, "sample_period_ns", path,
                                       lo=0.0, lo_open=True),
                volts=tuple(float(v) for v in volts),
                bias_voltage=bias,
                t_start=_get_num(node, "t_start_ns", path, default=0.0))
            resolved = {"kind": kind, "bias_voltage": bias,
                        "sample_period_ns": w.sample_period,
                        "t_start_ns": w.t_start, "volts": list(w.volts)}
    resolved["trigger"] = trigger_resolved
    return w, trigger, resolved


def _parse_detector(node, path: str) -> tuple[DetectorParams, dict]:
    node = _mapping(node, path)
    _no_unknown(node, path, {"efficiency", "jitter_sigma_ns", "dead_time_ns"})
    params = DetectorParams(
        efficiency=_get_num(node, "efficiency", path, lo=0.0, hi=1.0),
        jitter_sigma=_get_num(node, "jitter_sigma_ns", path, default=0.04, lo=0.0),
        dead_time=_get_num(node, "dead_time_ns", path, default=50.0, lo=0.0),
    )
    return params, {"efficiency": params.efficiency,
                    "jitter_sigma_ns": params.jitter_sigma,
                    "dead_time_ns": params.dead_time}


def scenario_from_dict(data: dict, base_dir: Path | None = None,
                       default_name: str = "scenario") -> Scenario:
    base_dir = base_dir or Path.cwd()
    data = _mapping(data, "scenario")
    _no_unknown(data, "scenario",
                {"name", "source", "shape", "stokes_path", "chain",
                 "modulator_mode", "generator", "drive", "detection", "tdc",
                 "analysis", "outputs"})
    name = _get_str(data, "name", "scenario", default=default_name)

    source, r_source = _parse_source(data.get("source"), "source")
    shape, r_shape = _parse_shape(data.get("shape"), "shape")

    sp = _mapping(data.get("stokes_path", {"transmission": 1.0}), "stokes_path")
    _no_unknown(sp, "stokes_path", {"transmission"})
    stokes_t = _get_num(sp, "transmission", "stokes_path", default=1.0,
                        lo=0.0, hi=1.0)

    chain, r_chain = _parse_chain(data.get("chain"), "chain")

    gen_node = _mapping(data.get("generator", {}), "generator")
    _no_unknown(gen_node, "generator", {"electronic_delay_ns", "bandwidth_hz",
                                        "v_max_volts", "retriggerable"})
    generator = GeneratorParams(
        electronic_delay=_get_num(gen_node, "electronic_delay_ns", "generator",
                                  default=190.0, lo=0.0),
        bandwidth=_get_num(gen_node, "bandwidth_hz", "generator", default=80e6,
                           lo=0.0, lo_open=True, allow_none=True),
        v_max=_get_num(gen_node, "v_max_volts", "generator", default=5.0,
                       lo=0.0, lo_open=True),
        retriggerable=_get_bool(gen_node, "retriggerable", "generator", False),
    )
    r_generator = {"electronic_delay_ns": generator.electronic_delay,
                   "bandwidth_hz": generator.bandwidth,
                   "v_max_volts": generator.v_max,
                   "retriggerable": generator.retriggerable}

    mod = chain.modulator
    v_pi = mod.params.v_pi if mod else 1.3
    drive, trigger, r_drive = _parse_drive(data.get("drive"), "drive", v_pi, base_dir)

    default_mode = "driven" if drive is not None else "open"
    mode = _get_str(data, "modulator_mode", "scenario", default=default_mode,
                    choices={"open", "driven"})
    if mod is not None and mod.mode != mode:
        elements = tuple(Modulator(e.params, mode) if isinstance(e, Modulator) else e
                         for e in chain.elements)
        chain = ChainConfig(elements)

    det_node = _mapping(data.get("detection"), "detection")
    _no_unknown(det_node, "detection", {"d1", "d2", "d3"})
    d1, r_d1 = _parse_detector(det_node.get("d1"), "detection.d1")
    d2, r_d2 = _parse_detector(det_node.get("d2"), "detection.d2")
    d3, r_d3 = _parse_detector(det_node.get("d3"), "detection.d3")

    tdc_node = _mapping(data.get("tdc", {}), "tdc")
    _no_unknown(tdc_node, "tdc", {"bin_width_ns", "histogram_range_ns",
                                  "coincidence_window_ns"})
    try:
        tdc = TdcConfig(
            bin_width=_get_num(tdc_node, "bin_width_ns", "tdc", default=1.0,
                               lo=0.0, lo_open=True),
            histogram_range=_get_num(tdc_node, "histogram_range_ns", "tdc",
                                     default=585.0, lo=0.0, lo_open=True),
            coincidence_window=_get_num(tdc_node, "coincidence_window_ns", "tdc",
                                        default=285.0, lo=0.0, lo_open=True),
        )
    except Exception as exc:
        raise ValidationError(f"tdc: {exc}") from exc

    ana = _mapping(data.get("analysis", {}), "analysis")
    _no_unknown(ana, "analysis", {"window_offset_ns", "floor_tail_ns",
                                  "drive_sample_period_ns"})
    offset_raw = ana.get("window_offset_ns", "auto")
    if offset_raw == "auto" or offset_raw is None:
        window_offset = None
    elif isinstance(offset_raw, (int, float)) and not isinstance(offset_raw, bool):
        window_offset = float(offset_raw)
    else:
        raise ValidationError("analysis.window_offset_ns: expected 'auto' or a number")
    floor_tail = _get_num(ana, "floor_tail_ns", "analysis", default=200.0,
                          lo=0.0, lo_open=True)
    drive_period = _get_num(ana, "drive_sample_period_ns", "analysis",
                            default=0.5, lo=0.0, lo_open=True)

    out = _mapping(data.get("outputs", {}), "outputs")
    _no_unknown(out, "outputs", {"formats"})
    formats = out.get("formats", ["report", "histograms"])
    if (not isinstance(formats, list)
            or not all(isinstance(f, str) and f in _OUTPUT_FORMATS for f in formats)):
        raise ValidationError(f"outputs.formats: entries must be in {_OUTPUT_FORMATS}")

    sim = SimConfig(
        source=source, shape=shape, chain=chain,
        detectors=DetectorBank(d1=d1, d2=d2, d3=d3), tdc=tdc,
        stokes_path_transmission=stokes_t, generator=generator,
        drive=drive, trigger=trigger, window_offset_ns=window_offset,
        drive_sample_period_ns=drive_period, floor_tail_ns=floor_tail,
    )
    resolved = {
        "name": name,
        "source": r_source,
        "shape": r_shape,
        "stokes_path": {"transmission": stokes_t},
        "chain": r_chain,
        "modulator_mode": mode,
        "generator": r_generator,
        "drive": r_drive,
        "detection": {"d1": r_d1, "d2": r_d2, "d3": r_d3},
        "tdc": {"bin_width_ns": tdc.bin_width,
                "histogram_range_ns": tdc.histogram_range,
                "coincidence_window_ns": tdc.coincidence_window},
        "analysis": {"window_offset_ns": window_offset,
                     "floor_tail_ns": floor_tail,
                     "drive_sample_period_ns": drive_period},
    }
    return Scenario(name=name, sim=sim, outputs=tuple(formats), resolved=resolved)


def parse_scenario(path: str | Path) -> Scenario:
    """Load and validate a scenario file."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc}") from exc
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ParseError(f"{path}: {exc}") from exc
    return scenario_from_dict(data, base_dir=path.parent, default_name=path.stem)
