"""Function-generator drive waveforms.

Waveforms are authored in generator-local time: t = 0 is the instant the
triggered waveform starts, which the trigger scheduler places one electronic
delay after the herald. Outside its defined support (and always before t = 0
once scheduled) the generator holds bias_voltage.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ._timing import enforce_min_spacing
from .errors import InvalidParams, TargetOutOfRange, UndersampledInput

# A gaussian pulse is treated as supported out to this many sigmas.
_GAUSSIAN_SUPPORT_SIGMAS = 8.0
# The low-pass response is followed for this many time constants past the
# input support before the output is truncated back to bias.
_SETTLE_TIME_CONSTANTS = 12.0


@dataclass(frozen=True)
class GeneratorParams:
    electronic_delay: float = 190.0  # ns
    bandwidth: float | None = 80e6   # Hz single-pole low-pass; None = ideal
    v_max: float = 5.0               # volts, output clamp
    retriggerable: bool = False

    def __post_init__(self):
        if self.electronic_delay < 0:
            raise InvalidParams("electronic_delay must be >= 0")
        if self.bandwidth is not None and self.bandwidth <= 0:
            raise InvalidParams("bandwidth must be > 0")


class DriveWaveform:
    """Voltage vs generator-local time; subclasses define the shape."""

    bias_voltage: float

    def voltage_at(self, t) -> np.ndarray:
        raise NotImplementedError

    def support(self) -> tuple[float, float]:
        raise NotImplementedError


@dataclass(frozen=True)
class RectPulses(DriveWaveform):
    """Sorted, non-overlapping (start_ns, stop_ns, volts) intervals."""

    pulses: tuple[tuple[float, float, float], ...]
    bias_voltage: float = 0.0

    def __post_init__(self):
        if not self.pulses:
            raise InvalidParams("at least one pulse is required")
        prev_stop = -np.inf
        for start, stop, _v in self.pulses:
            if stop <= start:
                raise InvalidParams(f"pulse ({start}, {stop}) has no width")
            if start < prev_stop:
                raise InvalidParams("pulses must be sorted and non-overlapping")
            prev_stop = stop

    def voltage_at(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        out = np.full(t.shape, self.bias_voltage)
        for start, stop, v in self.pulses:
            out = np.where((t >= start) & (t < stop), v, out)
        return out

    def support(self) -> tuple[float, float]:
        return self.pulses[0][0], self.pulses[-1][1]


@dataclass(frozen=True)
class GaussianPulse(DriveWaveform):
    center: float
    sigma: float
    peak: float
    bias_voltage: float = 0.0

    def __post_init__(self):
        if self.sigma <= 0:
            raise InvalidParams("sigma must be > 0")

    def voltage_at(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        lo, hi = self.support()
        v = self.peak * np.exp(-0.5 * ((t - self.center) / self.sigma) ** 2)
        return np.where((t >= lo) & (t <= hi), v, self.bias_voltage)

    def support(self) -> tuple[float, float]:
        half = _GAUSSIAN_SUPPORT_SIGMAS * self.sigma
        return self.center - half, self.center + half


@dataclass(frozen=True)
class RisingExponential(DriveWaveform):
    """peak * exp((t - end) / time_constant) on [0, end]."""

    time_constant: float
    end: float
    peak: float
    bias_voltage: float = 0.0

    def __post_init__(self):
        if self.time_constant <= 0 or self.end <= 0:
            raise InvalidParams("time_constant and end must be > 0")

    def voltage_at(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        v = self.peak * np.exp((t - self.end) / self.time_constant)
        return np.where((t >= 0.0) & (t <= self.end), v, self.bias_voltage)

    def support(self) -> tuple[float, float]:
        return 0.0, self.end


@dataclass(frozen=True)
class TabulatedWaveform(DriveWaveform):
    """Uniformly sampled voltages, linearly interpolated between samples."""

    sample_period: float
    volts: tuple[float, ...]
    bias_voltage: float = 0.0
    t_start: float = 0.0

    def __post_init__(self):
        if self.sample_period <= 0:
            raise InvalidParams("sample_period must be > 0")
        if len(self.volts) < 2:
            raise InvalidParams("tabulated waveform needs at least two samples")

    def times(self) -> np.ndarray:
        return self.t_start + self.sample_period * np.arange(len(self.volts))

    def voltage_at(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        v = np.interp(t, self.times(), np.asarray(self.volts),
                      left=self.bias_voltage, right=self.bias_voltage)
        lo, hi = self.support()
        return np.where((t >= lo) & (t <= hi), v, self.bias_voltage)

    def support(self) -> tuple[float, float]:
        return self.t_start, self.t_start + self.sample_period * (len(self.volts) - 1)


def voltage_at(w: DriveWaveform, t) -> np.ndarray:
    """Evaluate the drive voltage at time t (ns); bias outside support."""
    return w.voltage_at(t)


def predistort(target, v_pi: float, sample_period: float,
               support: tuple[float, float]) -> TabulatedWaveform:
    """Tabulate V(t) = (2 V_pi / pi) * arcsin(f(t)) over the support.

    Composing the result with the sin-shaped modulator transfer reproduces the
    target amplitude f exactly at every sample point.
    """
    if v_pi <= 0:
        raise InvalidParams("v_pi must be > 0")
    if sample_period <= 0:
        raise InvalidParams("sample_period must be > 0")
    lo, hi = support
    if hi <= lo:
        raise InvalidParams("support must be a non-empty interval")
    ts = lo + sample_period * np.arange(int(np.floor((hi - lo) / sample_period)) + 1)
    f = np.asarray(target(ts), dtype=float)
    bad = np.flatnonzero((f < 0.0) | (f > 1.0))
    if bad.size:
        t_bad = float(ts[bad[0]])
        raise TargetOutOfRange(
            f"target amplitude {f[bad[0]]:.6g} at t = {t_bad:.6g} ns is outside [0, 1]",
            tau_ns=t_bad,
        )
    volts = (2.0 * v_pi / np.pi) * np.arcsin(f)
    return TabulatedWaveform(sample_period, tuple(float(v) for v in volts),
                             bias_voltage=0.0, t_start=float(ts[0]))


def bandwidth_limit(w: DriveWaveform, params: GeneratorParams,
                    sample_period: float) -> TabulatedWaveform:
    """Apply the generator's single-pole low-pass response and voltage clamp.

    Exact zero-order-hold discretization of dy/dt = (x - y) / tau_rc with
    tau_rc = 1 / (2 pi bandwidth); DC gain is exactly one. The filter starts
    from bias (the generator's resting level) and is followed for
    _SETTLE_TIME_CONSTANTS * tau_rc past the input support.
    """
    if params.bandwidth is None:
        raise InvalidParams("bandwidth_limit needs a finite bandwidth")
    max_period = 1e9 / (20.0 * params.bandwidth)
    if sample_period > max_period * (1 + 1e-12):
        raise UndersampledInput(
            f"sample_period {sample_period} ns exceeds {max_period:.6g} ns "
            f"allowed for a {params.bandwidth:.6g} Hz filter")
    tau_rc = 1e9 / (2.0 * np.pi * params.bandwidth)
    lo, hi = w.support()
    n = int(np.ceil((hi - lo + _SETTLE_TIME_CONSTANTS * tau_rc) / sample_period)) + 1
    ts = lo + sample_period * np.arange(n)
    x = w.voltage_at(ts)
    a = 1.0 - np.exp(-sample_period / tau_rc)
    y = np.empty_like(x)
    prev = w.bias_voltage
    for i in range(n):
        prev = prev + a * (x[i] - prev)
        y[i] = prev
    if np.any(np.abs(y) > params.v_max):
        warnings.warn("waveform clipped to generator v_max", stacklevel=2)
        y = np.clip(y, -params.v_max, params.v_max)
    return TabulatedWaveform(sample_period, tuple(float(v) for v in y),
                             bias_voltage=w.bias_voltage, t_start=lo)


@dataclass(frozen=True)
class ScheduledWaveform:
    """A drive waveform pinned to an absolute time origin."""

    waveform: DriveWaveform
    origin: float  # ns, absolute

    def voltage_at(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        local = t - self.origin
        v = self.waveform.voltage_at(local)
        return np.where(local < 0.0, self.waveform.bias_voltage, v)


def trigger_schedule(herald_time: float, params: GeneratorParams,
                     w: DriveWaveform) -> ScheduledWaveform:
    """Schedule the drive one electronic delay after a herald detection."""
    return ScheduledWaveform(w, herald_time + params.electronic_delay)


@dataclass(frozen=True)
class DriveSchedule:
    """Drive waveform fired at many origins (one generator, repeated triggers).

    At any instant the most recent origin defines local time; before the first
    origin, or once local time passes the waveform support, the generator sits
    at bias. Origins must be sorted.
    """

    waveform: DriveWaveform
    origins: np.ndarray
    ignored_triggers: int = 0

    def local_time(self, t: np.ndarray) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        if self.origins.size == 0:
            return np.full(t.shape, -1.0)
        idx = np.searchsorted(self.origins, t, side="right") - 1
        local = np.where(idx >= 0, t - self.origins[np.maximum(idx, 0)], -1.0)
        return local

    def voltage_at(self, t) -> np.ndarray:
        local = self.local_time(t)
        v = self.waveform.voltage_at(local)
        return np.where(local < 0.0, self.waveform.bias_voltage, v)


def build_schedule(trigger_times: np.ndarray, params: GeneratorParams,
                   w: DriveWaveform) -> DriveSchedule:
    """Turn trigger detections into accepted waveform origins.

    Every trigger requests an origin one electronic delay later. A
    non-retriggerable generator ignores triggers whose waveform would start
    before the active one has finished playing.
    """
    origins = np.sort(np.asarray(trigger_times, dtype=float)) + params.electronic_delay
    if not params.retriggerable:
        hold_off = w.support()[1]
        accepted = enforce_min_spacing(origins, hold_off)
    else:
        accepted = origins
    return DriveSchedule(w, accepted, ignored_triggers=origins.size - accepted.size)


def periodic_triggers(period_ns: float, duration_ns: float) -> np.ndarray:
    """Trigger train of an external clock, e.g. a 10 MHz digital signal."""
    if period_ns <= 0:
        raise InvalidParams("period must be > 0")
    n = int(np.floor(duration_ns / period_ns)) + 1
    return period_ns * np.arange(n)


def write_waveform_csv(w: DriveWaveform, path: str | Path,
                       sample_period: float | None = None) -> None:
    """Write `time_ns,volts` samples at 6 significant digits."""
    if isinstance(w, TabulatedWaveform) and sample_period is None:
        ts = w.times()
    else:
        lo, hi = w.support()
        step = sample_period if sample_period else (hi - lo) / 1000.0
        ts = lo + step * np.arange(int(np.floor((hi - lo) / step)) + 1)
    vs = w.voltage_at(ts)
    with open(path, "w", newline="\n") as fh:
        fh.write("time_ns,volts\n")
        for t, v in zip(ts, vs):
            fh.write(f"{t:.6g},{v:.6g}\n")


def read_waveform_csv(path: str | Path, bias_voltage: float = 0.0) -> TabulatedWaveform:
    """Read a `time_ns,volts` file written on a uniform grid."""
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    ts, vs = data[:, 0], data[:, 1]
    if ts.size < 2:
        raise InvalidParams("waveform file needs at least two samples")
    steps = np.diff(ts)
    if not np.allclose(steps, steps[0], rtol=1e-6, atol=1e-9):
        raise InvalidParams("waveform file must be uniformly sampled")
    return TabulatedWaveform(float(steps[0]), tuple(float(v) for v in vs),
                             bias_voltage=bias_voltage, t_start=float(ts[0]))
