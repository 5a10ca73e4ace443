"""Single-photon counting modules and the start-stop time-to-digital converter.

The TDC is multi-stop and multi-start: every stop within the histogram range
of a start is counted, and a stop may pair with more than one start when
windows overlap.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from pathlib import Path
from typing import NamedTuple

import numpy as np

from ._timing import enforce_min_spacing
from .errors import ConfigMismatch, InvalidParams


@dataclass(frozen=True)
class DetectorParams:
    efficiency: float = 0.5
    jitter_sigma: float = 0.04  # ns; SPCM timing resolution ~40 ps
    dead_time: float = 50.0     # ns; typical SPCM value, assumed not measured

    def __post_init__(self):
        if not 0.0 <= self.efficiency <= 1.0:
            raise InvalidParams("efficiency must be in [0, 1]")
        if self.jitter_sigma < 0 or self.dead_time < 0:
            raise InvalidParams("jitter and dead time must be >= 0")


@dataclass(frozen=True)
class TdcConfig:
    bin_width: float = 1.0            # ns
    histogram_range: float = 585.0    # ns
    coincidence_window: float = 285.0  # ns, T_c

    def __post_init__(self):
        if self.bin_width <= 0:
            raise InvalidParams("bin_width must be > 0")
        if not self.histogram_range >= self.coincidence_window > 0:
            raise InvalidParams("need histogram_range >= coincidence_window > 0")
        self.n_bins  # validates commensurability

    @property
    def n_bins(self) -> int:
        n = round(self.histogram_range / self.bin_width)
        if abs(n * self.bin_width - self.histogram_range) > 1e-6:
            raise ConfigMismatch("histogram_range must be a multiple of bin_width")
        return int(n)


@dataclass(frozen=True)
class TagStream:
    """Sorted detection timestamps per channel (ns)."""

    d1: np.ndarray
    d2: np.ndarray
    d3: np.ndarray


@dataclass(frozen=True)
class Histogram:
    bin_width: float
    origin: float
    counts: np.ndarray      # int64 per bin
    total_heralds: int
    live_time: float = 0.0  # seconds

    def bin_lefts(self) -> np.ndarray:
        return self.origin + self.bin_width * np.arange(self.counts.size)

    def bin_centers(self) -> np.ndarray:
        return self.bin_lefts() + 0.5 * self.bin_width

    def with_live_time(self, live_time: float) -> Histogram:
        return replace(self, live_time=live_time)


class CoincidenceCounts(NamedTuple):
    n1: int
    n12: int
    n13: int
    n123: int


def detect(arrival_times: np.ndarray, params: DetectorParams,
           rng: np.random.Generator) -> np.ndarray:
    """Detection times of one channel: efficiency thinning, gaussian timing
    jitter, then dead-time veto on the jittered, re-sorted stream."""
    times = np.asarray(arrival_times, dtype=float)
    kept = times[rng.random(times.size) < params.efficiency]
    if params.jitter_sigma > 0:
        kept = kept + rng.normal(0.0, params.jitter_sigma, kept.size)
    kept = np.sort(kept)
    return enforce_min_spacing(kept, params.dead_time)


def start_stop_histogram(starts: np.ndarray, stops: np.ndarray,
                         cfg: TdcConfig) -> Histogram:
    """Multi-stop histogram of stop-minus-start delays in [0, histogram_range).

    Every (start, stop) pair with a delay in range increments one bin; a stop
    is counted once per start whose window contains it.
    """
    n_bins = cfg.n_bins
    starts = np.asarray(starts, dtype=float)
    stops = np.asarray(stops, dtype=float)
    counts = np.zeros(n_bins, dtype=np.int64)
    if starts.size and stops.size:
        lo = np.searchsorted(stops, starts, side="left")
        hi = np.searchsorted(stops, starts + cfg.histogram_range, side="left")
        per_start = hi - lo
        total = int(per_start.sum())
        if total:
            start_idx = np.repeat(np.arange(starts.size), per_start)
            before = np.concatenate([[0], np.cumsum(per_start)[:-1]])
            stop_idx = np.arange(total) - np.repeat(before, per_start) + np.repeat(lo, per_start)
            delays = stops[stop_idx] - starts[start_idx]
            bins = np.floor(delays / cfg.bin_width).astype(np.int64)
            np.clip(bins, 0, n_bins - 1, out=bins)
            counts = np.bincount(bins, minlength=n_bins).astype(np.int64)
    return Histogram(bin_width=cfg.bin_width, origin=0.0, counts=counts,
                     total_heralds=int(starts.size))


def _window_occupied(starts: np.ndarray, stops: np.ndarray,
                     window: float) -> np.ndarray:
    lo = np.searchsorted(stops, starts, side="left")
    hi = np.searchsorted(stops, starts + window, side="left")
    return hi > lo


def coincidence_counts(tags: TagStream, t_c: float,
                       start_offset: float = 0.0) -> CoincidenceCounts:
    """Herald-windowed coincidence counters.

    Each D1 tag opens one window [t1 + start_offset, t1 + start_offset + t_c)
    and contributes at most one count to each of N12, N13 and N123. The offset
    aligns the window with the optically delayed anti-Stokes arrivals.
    """
    if t_c <= 0:
        raise InvalidParams("coincidence window must be > 0")
    starts = np.asarray(tags.d1, dtype=float) + start_offset
    has2 = _window_occupied(starts, np.asarray(tags.d2, dtype=float), t_c)
    has3 = _window_occupied(starts, np.asarray(tags.d3, dtype=float), t_c)
    return CoincidenceCounts(
        n1=int(starts.size),
        n12=int(has2.sum()),
        n13=int(has3.sum()),
        n123=int((has2 & has3).sum()),
    )


def write_histogram_csv(h: Histogram, path: str | Path,
                        seed: int | None = None,
                        config_digest: str | None = None) -> None:
    """Write `tau_ns,counts` rows with `#` metadata header lines."""
    with open(path, "w", newline="\n") as fh:
        fh.write(f"# bin_width_ns={h.bin_width:.9g}\n")
        fh.write(f"# total_heralds={h.total_heralds}\n")
        fh.write(f"# live_time_s={h.live_time:.9g}\n")
        if seed is not None:
            fh.write(f"# seed={seed}\n")
        if config_digest is not None:
            fh.write(f"# config_digest={config_digest}\n")
        fh.write("tau_ns,counts\n")
        for left, c in zip(h.bin_lefts(), h.counts):
            fh.write(f"{left:.9g},{int(c)}\n")
