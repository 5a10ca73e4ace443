"""Shared timing helpers for dead-time and trigger hold-off enforcement."""

from __future__ import annotations

import numpy as np


def enforce_min_spacing(times: np.ndarray, spacing: float) -> np.ndarray:
    """Greedy left-to-right veto: keep an event only if it is at least
    `spacing` after the previously kept event.

    `times` must be sorted ascending. Matches a paralyzable-free (non-extending)
    dead-time model and the hold-off of a non-retriggerable generator.
    """
    if spacing <= 0.0 or times.size == 0:
        return times
    keep = np.ones(times.size, dtype=bool)
    while True:
        kept = np.flatnonzero(keep)
        gaps = np.diff(times[kept])
        bad = gaps < spacing
        if not bad.any():
            return times[kept]
        # Drop an event only when its predecessor survives this pass; events
        # after a dropped one are re-evaluated against the earlier survivor.
        drop = bad & np.concatenate(([True], ~bad[:-1]))
        keep[kept[1:][drop]] = False
