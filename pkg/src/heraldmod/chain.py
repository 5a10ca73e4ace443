"""Anti-Stokes optical chain: losses, fiber delay, triggered modulator,
and the output beamsplitter feeding the two stop detectors."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import AmplitudeOutOfRange, ChannelMismatch, InvalidParams
from .source import Channel, PhotonEvent
from .waveform import DriveSchedule, ScheduledWaveform

D2_PORT = 0
D3_PORT = 1


@dataclass(frozen=True)
class ModulatorParams:
    v_pi: float = 1.3                   # volts for extinction -> full transmission
    alpha: float = 0.75                 # residual phase-modulation ratio (z-cut)
    insertion_transmission: float = 0.5
    max_frequency: float = 10e9         # Hz, metadata; the generator bandwidth dominates
    leakage: float = 0.0                # optional static extinction floor on |m|^2

    def __post_init__(self):
        if self.v_pi <= 0:
            raise InvalidParams("v_pi must be > 0")
        if not 0.0 <= self.insertion_transmission <= 1.0:
            raise InvalidParams("insertion_transmission must be in [0, 1]")
        if not 0.0 <= self.alpha <= 1.0:
            raise InvalidParams("alpha must be in [0, 1]")
        if not 0.0 <= self.leakage < 1.0:
            raise InvalidParams("leakage must be in [0, 1)")


@dataclass(frozen=True)
class Loss:
    transmission: float
    label: str

    def __post_init__(self):
        if not 0.0 <= self.transmission <= 1.0:
            raise InvalidParams(f"loss '{self.label}' transmission must be in [0, 1]")


@dataclass(frozen=True)
class FiberDelay:
    delay_ns: float

    def __post_init__(self):
        if self.delay_ns < 0:
            raise InvalidParams("fiber delay must be >= 0")


@dataclass(frozen=True)
class Modulator:
    params: ModulatorParams
    # "open" parks the modulator at maximum transmission (|m| = 1); "driven"
    # evaluates the scheduled drive voltage at the photon's arrival.
    mode: str = "driven"

    def __post_init__(self):
        if self.mode not in ("driven", "open"):
            raise InvalidParams("modulator mode must be 'driven' or 'open'")


@dataclass(frozen=True)
class Beamsplitter:
    reflect_probability: float = 0.5
    excess_transmission: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.reflect_probability <= 1.0:
            raise InvalidParams("reflect_probability must be in [0, 1]")
        if not 0.0 <= self.excess_transmission <= 1.0:
            raise InvalidParams("excess_transmission must be in [0, 1]")


@dataclass(frozen=True)
class ChainConfig:
    """Ordered chain elements; exactly one Beamsplitter, which must be last."""

    elements: tuple

    def __post_init__(self):
        splitters = [e for e in self.elements if isinstance(e, Beamsplitter)]
        if len(splitters) != 1 or not isinstance(self.elements[-1], Beamsplitter):
            raise InvalidParams("chain needs exactly one beamsplitter, last")
        if sum(isinstance(e, Modulator) for e in self.elements) > 1:
            raise InvalidParams("at most one modulator allowed")
        if sum(isinstance(e, FiberDelay) for e in self.elements) > 1:
            raise InvalidParams("at most one fiber delay allowed")

    @property
    def beamsplitter(self) -> Beamsplitter:
        return self.elements[-1]

    @property
    def modulator(self) -> Modulator | None:
        for e in self.elements:
            if isinstance(e, Modulator):
                return e
        return None

    def total_delay_ns(self) -> float:
        return sum(e.delay_ns for e in self.elements if isinstance(e, FiberDelay))

    def delay_before_modulator_ns(self) -> float:
        delay = 0.0
        for e in self.elements:
            if isinstance(e, Modulator):
                break
            if isinstance(e, FiberDelay):
                delay += e.delay_ns
        return delay

    def survival_product(self, modulator_transmission: float = 1.0) -> float:
        """Closed-form survival through every Bernoulli stage (both ports
        summed). Exact because independent pass probabilities multiply, so it
        is invariant under any permutation of the Loss elements."""
        p = 1.0
        for e in self.elements:
            if isinstance(e, Loss):
                p *= e.transmission
            elif isinstance(e, Modulator):
                p *= modulator_transmission * e.params.insertion_transmission
            elif isinstance(e, Beamsplitter):
                p *= e.excess_transmission
        return p


@dataclass(frozen=True)
class Arrived:
    port: int          # D2_PORT or D3_PORT
    arrival_time: float

    @property
    def port_name(self) -> str:
        return "D2" if self.port == D2_PORT else "D3"


@dataclass(frozen=True)
class Lost:
    at: str


def modulator_transfer(v, p: ModulatorParams):
    """Field transfer m = sin(phi) exp(i alpha phi) with phi = pi V / (2 V_pi).

    Insertion loss is not included here; it is applied as a separate Bernoulli
    stage. Overdrive beyond V_pi folds back through the sine.
    """
    phi = np.pi * np.asarray(v, dtype=float) / (2.0 * p.v_pi)
    m = np.sin(phi) * np.exp(1j * p.alpha * phi)
    if p.leakage > 0.0:
        mag = np.sqrt(p.leakage + (1.0 - p.leakage) * np.sin(phi) ** 2)
        m = mag * np.exp(1j * np.angle(m))
    if np.ndim(v) == 0:
        return complex(m)
    return m


def survival_probability(m) -> np.ndarray | float:
    """Pass probability |m|^2 of a field-transfer amplitude."""
    mag2 = np.abs(np.asarray(m)) ** 2
    if np.any(mag2 > 1.0 + 1e-12):
        raise AmplitudeOutOfRange("transfer amplitude exceeds 1")
    if np.ndim(m) == 0:
        return float(mag2)
    return mag2


def stokes_path_survival(transmission_product: float,
                         rng: np.random.Generator) -> bool:
    """Bernoulli pass of a Stokes photon through its filter/coupling stack."""
    if not 0.0 <= transmission_product <= 1.0:
        raise InvalidParams("transmission_product must be in [0, 1]")
    return bool(rng.random() < transmission_product)


def stokes_path_mask(n: int, transmission_product: float,
                     rng: np.random.Generator) -> np.ndarray:
    if not 0.0 <= transmission_product <= 1.0:
        raise InvalidParams("transmission_product must be in [0, 1]")
    return rng.random(n) < transmission_product


@dataclass
class PropagationResult:
    """Array outcome of propagating many photons through one chain."""

    port: np.ndarray            # D2_PORT/D3_PORT, or -1 if lost
    arrival_time: np.ndarray    # emit time plus all fiber delays
    lost_at: dict[str, int] = field(default_factory=dict)
    modulator_phase: np.ndarray | None = None  # alpha*phi of survivors

    def arrivals(self, port: int) -> np.ndarray:
        return np.sort(self.arrival_time[self.port == port])


def propagate_times(emit_times: np.ndarray, chain: ChainConfig,
                    drive: DriveSchedule | ScheduledWaveform | None,
                    rng: np.random.Generator) -> PropagationResult:
    """Propagate anti-Stokes emission times through the chain.

    The modulator evaluates the scheduled drive at the photon's local arrival
    time (emission plus any fiber delay earlier in the chain); with no drive
    scheduled, a driven modulator sits at bias and an open one transmits
    fully. Every Bernoulli stage consumes one uniform draw per photon so that
    equal-probability configurations are stream-identical.
    """
    times = np.asarray(emit_times, dtype=float)
    n = times.size
    port = np.full(n, -1, dtype=np.int8)
    alive = np.ones(n, dtype=bool)
    lost_at: dict[str, int] = {}
    arrival = times.copy()
    elapsed = 0.0
    phase = None

    for element in chain.elements:
        if isinstance(element, FiberDelay):
            arrival += element.delay_ns
            elapsed += element.delay_ns
            continue
        if isinstance(element, Loss):
            passed = rng.random(n) < element.transmission
            newly_lost = alive & ~passed
            lost_at[element.label] = int(newly_lost.sum())
            alive &= passed
            continue
        if isinstance(element, Modulator):
            p = element.params
            if element.mode == "open":
                m_abs2 = np.ones(n)
                phase = np.full(n, p.alpha * np.pi / 2.0)
            elif drive is None:
                v = np.full(n, 0.0)
                m = modulator_transfer(v, p)
                m_abs2 = np.abs(m) ** 2
                phase = np.angle(m)
            else:
                at_modulator = times + elapsed
                v = drive.voltage_at(at_modulator)
                m = modulator_transfer(v, p)
                m_abs2 = np.abs(m) ** 2
                phase = np.angle(m)
            passed = rng.random(n) < m_abs2 * p.insertion_transmission
            newly_lost = alive & ~passed
            lost_at["modulator"] = int(newly_lost.sum())
            alive &= passed
            continue
        if isinstance(element, Beamsplitter):
            passed = rng.random(n) < element.excess_transmission
            newly_lost = alive & ~passed
            lost_at["beamsplitter"] = int(newly_lost.sum())
            alive &= passed
            to_d3 = rng.random(n) < element.reflect_probability
            port[alive] = np.where(to_d3[alive], D3_PORT, D2_PORT)
            continue
        raise InvalidParams(f"unknown chain element {type(element).__name__}")

    if phase is not None:
        phase = phase[port >= 0]
    return PropagationResult(port=port, arrival_time=arrival,
                             lost_at=lost_at, modulator_phase=phase)


def propagate(event: PhotonEvent, chain: ChainConfig,
              drive: DriveSchedule | ScheduledWaveform | None,
              rng: np.random.Generator) -> Arrived | Lost:
    """Propagate one anti-Stokes photon; returns where it landed or died."""
    if event.channel != Channel.ANTI_STOKES:
        raise ChannelMismatch("only anti-Stokes photons traverse the chain")
    result = propagate_times(np.array([event.emit_time]), chain, drive, rng)
    if result.port[0] >= 0:
        return Arrived(int(result.port[0]), float(result.arrival_time[0]))
    label = next(label for label, count in result.lost_at.items() if count)
    return Lost(at=label)
