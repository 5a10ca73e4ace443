"""Time-tagged biphoton generation.

Produces Stokes herald events as a homogeneous Poisson process, pairs each
herald with an anti-Stokes partner with a configurable probability at a delay
drawn from a normalized delay density, and adds an independent Poisson stream
of uncorrelated anti-Stokes background photons.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass
from enum import IntEnum
from pathlib import Path

import numpy as np

from .errors import InvalidParams, NegativeDensity, ZeroDensity

# Resolution of the internal quadrature/inversion grid, in ns.
_GRID_STEP_NS = 0.005
# Tail is truncated where the exponential roll-off reaches exp(-12).
_TAIL_SPAN = 12.0


class Channel(IntEnum):
    STOKES = 0
    ANTI_STOKES = 1


@dataclass(frozen=True)
class PhotonEvent:
    """A single emitted photon; paired partners share a pair_id."""

    channel: Channel
    emit_time: float  # ns since run start
    pair_id: int | None = None


@dataclass(frozen=True)
class EventStream:
    """Column-oriented photon stream, sorted by emission time.

    pair_id is -1 for uncorrelated singles.
    """

    emit_time: np.ndarray
    channel: np.ndarray
    pair_id: np.ndarray

    def __len__(self) -> int:
        return self.emit_time.size

    def to_list(self) -> list[PhotonEvent]:
        return [
            PhotonEvent(Channel(int(c)), float(t), None if p < 0 else int(p))
            for t, c, p in zip(self.emit_time, self.channel, self.pair_id)
        ]

    def select(self, channel: Channel) -> EventStream:
        m = self.channel == int(channel)
        return EventStream(self.emit_time[m], self.channel[m], self.pair_id[m])


@dataclass(frozen=True)
class SourceParams:
    """Rates in events/s, run duration in seconds, times elsewhere in ns."""

    stokes_rate: float
    antistokes_singles_rate: float
    intrinsic_retrieval: float
    duty_cycle: float = 1.0
    run_duration: float = 1.0
    seed: int = 0
    # Optional gated duty-cycle mode: photons confined to the leading
    # duty_cycle fraction of every gate period. None means rate thinning.
    gate_period_ns: float | None = None

    def __post_init__(self):
        if self.stokes_rate < 0 or self.antistokes_singles_rate < 0:
            raise InvalidParams("rates must be >= 0")
        if self.run_duration < 0:
            raise InvalidParams("run_duration must be >= 0")
        if not 0.0 <= self.intrinsic_retrieval <= 1.0:
            raise InvalidParams("intrinsic_retrieval must be in [0, 1]")
        if not 0.0 < self.duty_cycle <= 1.0:
            raise InvalidParams("duty_cycle must be in (0, 1]")
        if self.gate_period_ns is not None and self.gate_period_ns <= 0:
            raise InvalidParams("gate_period_ns must be > 0")


class BiphotonShape:
    """Delay density of the photon pair, zero for negative delays."""

    def density(self, tau: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def support_ns(self) -> float:
        raise NotImplementedError

    def is_normalized(self, tol: float = 1e-6) -> bool:
        taus, dens = _dense_grid(self)
        return abs(np.trapezoid(dens, taus) - 1.0) <= tol


@dataclass(frozen=True)
class FlatTopPrecursor(BiphotonShape):
    """Flat plateau of the group-delay duration with a leading-edge spike
    and an exponential trailing roll-off.

    density(tau) = A * (1 + (h - 1) exp(-tau / w_p))   for 0 <= tau <= T_g
                 = A * exp(-(tau - T_g) / w_t)         for tau > T_g

    where h = precursor_height_ratio is the spike peak relative to the
    plateau. h = 0 (or precursor_width = 0) disables the spike entirely, so
    the h = 0, tail_decay = 0 case degenerates to an exact uniform density
    of width group_delay. A is fixed analytically so the density integrates
    to one.
    """

    group_delay: float
    precursor_width: float = 0.0
    precursor_height_ratio: float = 0.0
    tail_decay: float = 0.0

    def __post_init__(self):
        if self.group_delay <= 0:
            raise InvalidParams("group_delay must be > 0")
        if self.precursor_width < 0 or self.tail_decay < 0:
            raise InvalidParams("widths must be >= 0")
        if self.precursor_height_ratio < 0:
            raise NegativeDensity("precursor_height_ratio must be >= 0")
        if self.precursor_width >= self.group_delay:
            raise InvalidParams("precursor_width must be < group_delay")

    @property
    def _spike_on(self) -> bool:
        return self.precursor_height_ratio > 0 and self.precursor_width > 0

    @property
    def _amplitude(self) -> float:
        total = self.group_delay + self.tail_decay
        if self._spike_on:
            h, w = self.precursor_height_ratio, self.precursor_width
            total += (h - 1.0) * w * (1.0 - np.exp(-self.group_delay / w))
        if total <= 0:
            raise ZeroDensity("density integrates to zero")
        return 1.0 / total

    def density(self, tau: np.ndarray) -> np.ndarray:
        tau = np.asarray(tau, dtype=float)
        a = self._amplitude
        plateau = np.ones_like(tau)
        if self._spike_on:
            h, w = self.precursor_height_ratio, self.precursor_width
            plateau = plateau + (h - 1.0) * np.exp(-tau / w)
        if self.tail_decay > 0:
            tail = np.exp(-(tau - self.group_delay) / self.tail_decay)
        else:
            tail = np.zeros_like(tau)
        out = a * np.where(tau <= self.group_delay, plateau, tail)
        return np.where(tau < 0, 0.0, out)

    def support_ns(self) -> float:
        return self.group_delay + _TAIL_SPAN * self.tail_decay


@dataclass(frozen=True)
class TabulatedShape(BiphotonShape):
    """Piecewise-linear density given as (tau_ns, density) samples; zero
    outside the tabulated range."""

    samples: tuple[tuple[float, float], ...]

    def __post_init__(self):
        if len(self.samples) < 2:
            raise InvalidParams("tabulated shape needs at least two samples")
        taus = np.array([s[0] for s in self.samples])
        dens = np.array([s[1] for s in self.samples])
        if np.any(np.diff(taus) <= 0):
            raise InvalidParams("tabulated delays must be strictly increasing")
        if taus[0] < 0:
            raise InvalidParams("tabulated delays must be >= 0")
        if np.any(dens < 0):
            raise NegativeDensity("tabulated density has negative samples")

    def _arrays(self) -> tuple[np.ndarray, np.ndarray]:
        taus = np.array([s[0] for s in self.samples], dtype=float)
        dens = np.array([s[1] for s in self.samples], dtype=float)
        return taus, dens

    def density(self, tau: np.ndarray) -> np.ndarray:
        taus, dens = self._arrays()
        tau = np.asarray(tau, dtype=float)
        return np.interp(tau, taus, dens, left=0.0, right=0.0)

    def support_ns(self) -> float:
        return self.samples[-1][0]


def normalize_shape(shape: BiphotonShape) -> BiphotonShape:
    """Rescale a shape so its density integrates to one.

    FlatTopPrecursor is normalized analytically at construction and is
    returned unchanged; tabulated samples are rescaled by the trapezoid
    integral.
    """
    if isinstance(shape, FlatTopPrecursor):
        shape._amplitude  # raises ZeroDensity on a degenerate parameter set
        return shape
    if isinstance(shape, TabulatedShape):
        taus, dens = shape._arrays()
        integral = float(np.trapezoid(dens, taus))
        if integral <= 0.0:
            raise ZeroDensity("tabulated density integrates to zero")
        scaled = tuple((float(t), float(d / integral)) for t, d in zip(taus, dens))
        out = TabulatedShape(scaled)
        t2, d2 = out._arrays()
        if abs(float(np.trapezoid(d2, t2)) - 1.0) > 1e-9:
            raise ZeroDensity("normalization failed to reach unit integral")
        return out
    raise InvalidParams(f"unknown shape type {type(shape).__name__}")


def _dense_grid(shape: BiphotonShape) -> tuple[np.ndarray, np.ndarray]:
    span = shape.support_ns()
    n = max(int(np.ceil(span / _GRID_STEP_NS)) + 1, 64)
    taus = np.linspace(0.0, span, n)
    if isinstance(shape, TabulatedShape):
        # Keep the tabulated knots exact so linear segments are reproduced.
        knots = np.array([s[0] for s in shape.samples])
        taus = np.unique(np.concatenate([taus, knots]))
    return taus, shape.density(taus)


@functools.lru_cache(maxsize=32)
def _inverse_cdf_table(shape: BiphotonShape) -> tuple[np.ndarray, np.ndarray]:
    taus, dens = _dense_grid(shape)
    seg = 0.5 * (dens[1:] + dens[:-1]) * np.diff(taus)
    cdf = np.concatenate([[0.0], np.cumsum(seg)])
    total = cdf[-1]
    if total <= 0:
        raise ZeroDensity("density integrates to zero")
    return cdf / total, taus


def sample_delay(shape: BiphotonShape, rng: np.random.Generator, size=None):
    """Draw pairing delays (ns) from the shape via inverse-CDF interpolation."""
    if not shape.is_normalized():
        raise InvalidParams("shape must be normalized before sampling")
    cdf, taus = _inverse_cdf_table(shape)
    u = rng.random(size)
    return np.interp(u, cdf, taus)


def group_delay_from_velocity(length_m: float, v_g: float) -> float:
    """Group delay in ns of a medium of the given length and group velocity."""
    if length_m <= 0 or v_g <= 0:
        raise InvalidParams("length and group velocity must be > 0")
    return length_m / v_g * 1e9


def _poisson_times(rate_per_s: float, params: SourceParams,
                   rng: np.random.Generator) -> np.ndarray:
    """Arrival times (ns, sorted) of a duty-cycled Poisson process.

    Default duty handling thins the rate uniformly; in gated mode events are
    confined to the leading duty_cycle fraction of every gate period.
    """
    duration_ns = params.run_duration * 1e9
    if params.gate_period_ns is None:
        n = int(rng.poisson(rate_per_s * params.duty_cycle * params.run_duration))
        times = rng.random(n) * duration_ns
    else:
        period = params.gate_period_ns
        on = period * params.duty_cycle
        full_periods = np.floor(duration_ns / period)
        remainder = duration_ns - full_periods * period
        on_total = full_periods * on + min(remainder, on)
        n = int(rng.poisson(rate_per_s * 1e-9 * on_total))
        folded = rng.random(n) * on_total
        times = (folded // on) * period + (folded % on)
    times.sort()
    return times


def generate_events(params: SourceParams, shape: BiphotonShape,
                    rng: np.random.Generator,
                    pair_id_base: int = 0) -> EventStream:
    """Array-backed core of generate_stream; see that function for semantics."""
    if not shape.is_normalized():
        raise InvalidParams("shape must be normalized")

    stokes = _poisson_times(params.stokes_rate, params, rng)
    paired = rng.random(stokes.size) < params.intrinsic_retrieval
    delays = sample_delay(shape, rng, size=int(paired.sum()))
    partner_times = stokes[paired] + delays
    uncorr = _poisson_times(params.antistokes_singles_rate, params, rng)

    stokes_ids = np.full(stokes.size, -1, dtype=np.int64)
    stokes_ids[paired] = pair_id_base + np.arange(paired.sum(), dtype=np.int64)

    times = np.concatenate([stokes, partner_times, uncorr])
    channels = np.concatenate([
        np.zeros(stokes.size, dtype=np.int8),
        np.ones(partner_times.size, dtype=np.int8),
        np.ones(uncorr.size, dtype=np.int8),
    ])
    ids = np.concatenate([
        stokes_ids,
        stokes_ids[paired],
        np.full(uncorr.size, -1, dtype=np.int64),
    ])
    order = np.argsort(times, kind="stable")
    return EventStream(times[order], channels[order], ids[order])


def generate_stream(params: SourceParams, shape: BiphotonShape,
                    rng: np.random.Generator) -> list[PhotonEvent]:
    """Generate the time-sorted photon stream of one run.

    Stokes events form a homogeneous Poisson process of rate
    stokes_rate * duty_cycle over run_duration; each independently acquires an
    anti-Stokes partner with probability intrinsic_retrieval at a delay drawn
    from the shape. Uncorrelated anti-Stokes events form an independent
    Poisson process. Multi-pair coincidences arise naturally from the Poisson
    statistics; nothing suppresses them.
    """
    return generate_events(params, shape, rng).to_list()


def dump_events_csv(stream: EventStream, path: str | Path) -> None:
    """Write `channel,emit_time_ns,pair_id` rows, times at ps resolution."""
    names = {0: "stokes", 1: "anti_stokes"}
    with open(path, "w", newline="\n") as fh:
        fh.write("channel,emit_time_ns,pair_id\n")
        for t, c, p in zip(stream.emit_time, stream.channel, stream.pair_id):
            pid = "" if p < 0 else str(int(p))
            fh.write(f"{names[int(c)]},{t:.3f},{pid}\n")
