"""End-to-end simulation core.

Simulated time is split into fixed-length shards. Each shard draws from its
own seeded substreams, so results are independent of how many workers process
the shards. Two passes are used: the first produces the global herald (D1) tag
list that is needed to schedule the triggered drive, the second regenerates
each shard's photons (identical substream) and propagates the anti-Stokes arm.
Dead-time vetoes and trigger hold-off run globally on the merged streams.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ._timing import enforce_min_spacing
from .chain import (ChainConfig, PropagationResult, modulator_transfer,
                    propagate_times, stokes_path_mask, survival_probability)
from .detection import (CoincidenceCounts, DetectorParams, Histogram, TagStream,
                        TdcConfig, coincidence_counts, start_stop_histogram)
from .errors import InvalidParams
from .source import BiphotonShape, Channel, EventStream, SourceParams, generate_events
from .waveform import (DriveSchedule, DriveWaveform, GeneratorParams,
                       bandwidth_limit, build_schedule, periodic_triggers)

SHARD_SECONDS = 5.0

# Seeded substream tags, one per independent random stage of a shard.
_STAGE_GENERATE = 0
_STAGE_D1 = 1
_STAGE_PROPAGATE = 2
_STAGE_STOPS = 3


@dataclass(frozen=True)
class TriggerSpec:
    mode: str = "herald"          # "herald" or "periodic"
    period_ns: float = 100.0      # external clock period for "periodic"

    def __post_init__(self):
        if self.mode not in ("herald", "periodic"):
            raise InvalidParams("trigger mode must be 'herald' or 'periodic'")
        if self.mode == "periodic" and self.period_ns <= 0:
            raise InvalidParams("trigger period must be > 0")


@dataclass(frozen=True)
class DetectorBank:
    d1: DetectorParams
    d2: DetectorParams
    d3: DetectorParams


@dataclass(frozen=True)
class SimConfig:
    source: SourceParams
    shape: BiphotonShape
    chain: ChainConfig
    detectors: DetectorBank
    tdc: TdcConfig
    stokes_path_transmission: float = 1.0
    generator: GeneratorParams = GeneratorParams()
    drive: DriveWaveform | None = None
    trigger: TriggerSpec = TriggerSpec()
    window_offset_ns: float | None = None   # None: total chain fiber delay
    drive_sample_period_ns: float = 0.5
    floor_tail_ns: float = 200.0

    def resolved_window_offset(self) -> float:
        if self.window_offset_ns is not None:
            return self.window_offset_ns
        return self.chain.total_delay_ns()


@dataclass
class SimResult:
    tags: TagStream
    hist_d2: Histogram
    hist_d3: Histogram
    hist_sum: Histogram
    counts: CoincidenceCounts
    live_time_s: float
    window_offset_ns: float
    ignored_triggers: int
    n_source_stokes: int
    n_source_antistokes: int
    loss_ledger: dict[str, int] = field(default_factory=dict)
    mean_modulator_phase: float | None = None
    mean_drive_transmission: float | None = None


def resolve_drive(cfg: SimConfig) -> DriveWaveform | None:
    """Authored drive after the generator's bandwidth model (None bandwidth
    means an ideal generator and leaves the waveform untouched)."""
    if cfg.drive is None:
        return None
    if cfg.generator.bandwidth is None:
        return cfg.drive
    return bandwidth_limit(cfg.drive, cfg.generator, cfg.drive_sample_period_ns)


def _shard_bounds(duration_s: float) -> list[tuple[float, float]]:
    if duration_s <= 0:
        return []
    n = max(1, int(np.ceil(duration_s / SHARD_SECONDS)))
    edges = np.linspace(0.0, duration_s, n + 1)
    return list(zip(edges[:-1], edges[1:]))


def _shard_events(cfg: SimConfig, seed: int, shard: int,
                  bounds: tuple[float, float]) -> EventStream:
    t0, t1 = bounds
    rng = np.random.default_rng([seed, shard, _STAGE_GENERATE])
    params = SourceParams(
        stokes_rate=cfg.source.stokes_rate,
        antistokes_singles_rate=cfg.source.antistokes_singles_rate,
        intrinsic_retrieval=cfg.source.intrinsic_retrieval,
        duty_cycle=cfg.source.duty_cycle,
        run_duration=t1 - t0,
        seed=cfg.source.seed,
        gate_period_ns=cfg.source.gate_period_ns,
    )
    stream = generate_events(params, cfg.shape, rng, pair_id_base=shard << 32)
    return EventStream(stream.emit_time + t0 * 1e9, stream.channel, stream.pair_id)


def _shard_heralds(cfg: SimConfig, seed: int, shard: int,
                   bounds: tuple[float, float]) -> np.ndarray:
    """Jittered D1 detections of one shard, before the global dead-time veto."""
    stream = _shard_events(cfg, seed, shard, bounds)
    stokes = stream.emit_time[stream.channel == int(Channel.STOKES)]
    rng = np.random.default_rng([seed, shard, _STAGE_D1])
    kept = stokes[stokes_path_mask(stokes.size, cfg.stokes_path_transmission, rng)]
    d1 = cfg.detectors.d1
    kept = kept[rng.random(kept.size) < d1.efficiency]
    if d1.jitter_sigma > 0:
        kept = kept + rng.normal(0.0, d1.jitter_sigma, kept.size)
    return np.sort(kept)


def _shard_stops(cfg: SimConfig, seed: int, shard: int,
                 bounds: tuple[float, float],
                 schedule: DriveSchedule | None):
    """Jittered D2/D3 detections of one shard plus loss/phase bookkeeping."""
    stream = _shard_events(cfg, seed, shard, bounds)
    as_times = stream.emit_time[stream.channel == int(Channel.ANTI_STOKES)]
    rng_prop = np.random.default_rng([seed, shard, _STAGE_PROPAGATE])
    result: PropagationResult = propagate_times(as_times, cfg.chain, schedule, rng_prop)

    rng_det = np.random.default_rng([seed, shard, _STAGE_STOPS])
    per_port = []
    for port, det in ((0, cfg.detectors.d2), (1, cfg.detectors.d3)):
        arrivals = result.arrival_time[result.port == port]
        kept = arrivals[rng_det.random(arrivals.size) < det.efficiency]
        if det.jitter_sigma > 0:
            kept = kept + rng_det.normal(0.0, det.jitter_sigma, kept.size)
        per_port.append(np.sort(kept))

    n_stokes = int((stream.channel == int(Channel.STOKES)).sum())
    phase_sum = 0.0
    phase_n = 0
    if result.modulator_phase is not None and result.modulator_phase.size:
        phase_sum = float(result.modulator_phase.sum())
        phase_n = int(result.modulator_phase.size)
    return per_port[0], per_port[1], result.lost_at, n_stokes, as_times.size, phase_sum, phase_n


def _mean_drive_transmission(cfg: SimConfig, schedule: DriveSchedule,
                             duration_ns: float) -> float:
    """Time-averaged modulator power transmission under the schedule."""
    mod = cfg.chain.modulator
    if mod is None:
        return 1.0
    span = min(duration_ns, 1e6)
    ts = np.arange(0.0, span, 0.5)
    v = schedule.voltage_at(ts)
    return float(np.mean(survival_probability(modulator_transfer(v, mod.params))))


def expected_modulation_ratio(cfg: SimConfig, n_sub: int = 16) -> np.ndarray | None:
    """Per-bin expectation of |m|^2 on the histogram delay axis.

    Sub-samples each bin of the filtered drive at the modulation coordinate
    u = tau - (electronic_delay - fiber_delay_before_modulator)
         - (total_fiber_delay - window_offset).
    Returns None when no drive is configured or the trigger is not the herald.
    """
    if cfg.drive is None or cfg.trigger.mode != "herald":
        return None
    mod = cfg.chain.modulator
    if mod is None or mod.mode != "driven":
        return None
    filtered = resolve_drive(cfg)
    offset = (cfg.generator.electronic_delay - cfg.chain.delay_before_modulator_ns()
              + cfg.chain.total_delay_ns() - cfg.resolved_window_offset())
    n_bins = cfg.tdc.n_bins
    sub = (np.arange(n_sub) + 0.5) / n_sub * cfg.tdc.bin_width
    taus = cfg.tdc.bin_width * np.arange(n_bins)[:, None] + sub[None, :]
    u = taus - offset
    v = filtered.voltage_at(u)
    v = np.where(u < 0.0, filtered.bias_voltage, v)
    ratio = survival_probability(modulator_transfer(v, mod.params))
    return ratio.mean(axis=1)


def simulate(cfg: SimConfig, seed: int, workers: int = 1) -> SimResult:
    """Run the full pipeline; identical output for any worker count."""
    duration_s = cfg.source.run_duration
    duration_ns = duration_s * 1e9
    bounds = _shard_bounds(duration_s)
    shards = range(len(bounds))

    def ordered_map(fn, items):
        if workers > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                return list(pool.map(fn, items))
        return [fn(item) for item in items]

    herald_parts = ordered_map(
        lambda s: _shard_heralds(cfg, seed, s, bounds[s]), shards)
    d1 = np.sort(np.concatenate(herald_parts)) if herald_parts else np.empty(0)
    d1 = enforce_min_spacing(d1, cfg.detectors.d1.dead_time)

    schedule = None
    ignored = 0
    mean_drive = None
    mod = cfg.chain.modulator
    if cfg.drive is not None and mod is not None and mod.mode == "driven":
        filtered = resolve_drive(cfg)
        if cfg.trigger.mode == "herald":
            triggers = d1
        else:
            triggers = periodic_triggers(cfg.trigger.period_ns, duration_ns)
        schedule = build_schedule(triggers, cfg.generator, filtered)
        ignored = schedule.ignored_triggers
        if cfg.trigger.mode == "periodic":
            mean_drive = _mean_drive_transmission(cfg, schedule, duration_ns)

    stop_parts = ordered_map(
        lambda s: _shard_stops(cfg, seed, s, bounds[s], schedule), shards)

    def merged(idx: int) -> np.ndarray:
        arrays = [part[idx] for part in stop_parts]
        return np.sort(np.concatenate(arrays)) if arrays else np.empty(0)

    d2 = enforce_min_spacing(merged(0), cfg.detectors.d2.dead_time)
    d3 = enforce_min_spacing(merged(1), cfg.detectors.d3.dead_time)
    tags = TagStream(d1=d1, d2=d2, d3=d3)

    ledger: dict[str, int] = {}
    n_stokes = 0
    n_as = 0
    phase_sum, phase_n = 0.0, 0
    for part in stop_parts:
        for label, count in part[2].items():
            ledger[label] = ledger.get(label, 0) + count
        n_stokes += part[3]
        n_as += part[4]
        phase_sum += part[5]
        phase_n += part[6]

    offset = cfg.resolved_window_offset()
    starts = d1 + offset
    h2 = start_stop_histogram(starts, d2, cfg.tdc).with_live_time(duration_s)
    h3 = start_stop_histogram(starts, d3, cfg.tdc).with_live_time(duration_s)
    h_sum = Histogram(bin_width=cfg.tdc.bin_width, origin=0.0,
                      counts=h2.counts + h3.counts,
                      total_heralds=h2.total_heralds, live_time=duration_s)
    counts = coincidence_counts(tags, cfg.tdc.coincidence_window, start_offset=offset)

    return SimResult(
        tags=tags, hist_d2=h2, hist_d3=h3, hist_sum=h_sum, counts=counts,
        live_time_s=duration_s, window_offset_ns=offset,
        ignored_triggers=ignored, n_source_stokes=n_stokes,
        n_source_antistokes=n_as, loss_ledger=ledger,
        mean_modulator_phase=(phase_sum / phase_n if phase_n else None),
        mean_drive_transmission=mean_drive,
    )
