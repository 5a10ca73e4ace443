"""Scenario orchestration: run a parsed scenario end to end, derive the two
control experiments, sweep the multi-pair floor curve, and write outputs."""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .analysis import (CANONICAL_ETA_FACTORS, G2Cond, back_out_losses,
                       estimate_floor, eta_ledger, g2_cond, multi_pair_floor,
                       retrieval_efficiency)
from .chain import Beamsplitter, ChainConfig, FiberDelay, Loss, Modulator
from .detection import Histogram, write_histogram_csv
from .pipeline import SimResult, TriggerSpec, expected_modulation_ratio, simulate
from .scenario import Scenario
from .source import dump_events_csv
from .waveform import write_waveform_csv

REPORT_SCHEMA = "heraldmod-report/1"


@dataclass
class RunReport:
    scenario_name: str
    seed: int
    config_digest: str
    live_time_s: float
    window_offset_ns: float
    counts: dict
    rates: dict
    histograms: dict
    efficiency: dict
    g2: G2Cond | None
    eta: dict
    loss_ledger: list
    modulation: dict
    result: SimResult  # in-memory only; not serialized

    def to_dict(self) -> dict:
        g2_section: dict = {"value": None, "stderr": None, "upper_bound": None}
        if self.g2 is not None:
            g2_section = {"value": self.g2.value, "stderr": self.g2.stderr,
                          "upper_bound": self.g2.upper_bound}
        return {
            "schema": REPORT_SCHEMA,
            "scenario_name": self.scenario_name,
            "seed": int(self.seed),
            "config_digest": self.config_digest,
            "live_time_s": float(self.live_time_s),
            "window_offset_ns": float(self.window_offset_ns),
            "counts": self.counts,
            "rates": self.rates,
            "histograms": self.histograms,
            "efficiency": self.efficiency,
            "g2_cond": g2_section,
            "eta_ledger": self.eta,
            "loss_ledger": self.loss_ledger,
            "modulation": self.modulation,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=1) + "\n"


def _histogram_dict(h: Histogram) -> dict:
    return {
        "bin_width_ns": float(h.bin_width),
        "origin_ns": float(h.origin),
        "total_heralds": int(h.total_heralds),
        "live_time_s": float(h.live_time),
        "counts": [int(c) for c in h.counts],
    }


def _backout_factors(scenario: Scenario) -> list[tuple[str, float]]:
    """Anti-Stokes-path transmissions divided out of the measured retrieval
    efficiency. The 50/50 split is routing, not loss, and is excluded; both
    stop detectors are summed so one detector efficiency enters."""
    sim = scenario.sim
    factors: list[tuple[str, float]] = []
    for element in sim.chain.elements:
        if isinstance(element, Loss):
            factors.append((element.label, element.transmission))
        elif isinstance(element, Modulator):
            factors.append(("modulator_insertion",
                            element.params.insertion_transmission))
        elif isinstance(element, Beamsplitter):
            factors.append(("beamsplitter_excess", element.excess_transmission))
    stop_eff = 0.5 * (sim.detectors.d2.efficiency + sim.detectors.d3.efficiency)
    factors.append(("stop_detector", stop_eff))
    return factors


def run(scenario: Scenario, seed_override: int | None = None,
        time_scale: float | None = None, workers: int = 1,
        out_dir: str | Path | None = None) -> RunReport:
    """Execute a scenario and assemble its report; deterministic for a fixed
    seed and independent of the worker count."""
    sc = scenario.with_overrides(seed=seed_override, time_scale=time_scale)
    sim = sc.sim
    result = simulate(sim, seed=sc.seed, workers=workers)

    c = result.counts
    live = result.live_time_s
    floor = estimate_floor(result.hist_sum, sim.floor_tail_ns)
    backout = _backout_factors(sc)
    e_r = retrieval_efficiency(result.hist_sum, c.n1, floor,
                               window_ns=sim.tdc.coincidence_window,
                               support_ns=sim.shape.support_ns())
    nonzero = [(label, f) for label, f in backout if f > 0]
    e_r_intrinsic = back_out_losses(e_r, nonzero) if nonzero else e_r

    try:
        g2 = g2_cond(c.n1, c.n12, c.n13, c.n123)
    except ZeroDivisionError:
        g2 = None

    ratio = expected_modulation_ratio(sim)
    loss_ledger = []
    for label, count in result.loss_ledger.items():
        loss_ledger.append({"label": label, "absorbed": int(count)})

    report = RunReport(
        scenario_name=sc.name,
        seed=sc.seed,
        config_digest=sc.digest(),
        live_time_s=live,
        window_offset_ns=result.window_offset_ns,
        counts={"n1": c.n1, "n12": c.n12, "n13": c.n13, "n123": c.n123},
        rates={
            "stokes_measured_per_s": c.n1 / live if live > 0 else 0.0,
            "d2_stops_per_s": result.tags.d2.size / live if live > 0 else 0.0,
            "d3_stops_per_s": result.tags.d3.size / live if live > 0 else 0.0,
            "source_stokes_emitted": int(result.n_source_stokes),
            "source_antistokes_emitted": int(result.n_source_antistokes),
        },
        histograms={
            "d2": _histogram_dict(result.hist_d2),
            "d3": _histogram_dict(result.hist_d3),
            "summed": _histogram_dict(result.hist_sum),
        },
        efficiency={
            "e_r_measured": float(e_r),
            "e_r_backed_out": float(e_r_intrinsic),
            "backout_factors": [[label, float(f)] for label, f in backout],
            "floor_per_herald_per_ns": float(floor),
            "window_ns": float(sim.tdc.coincidence_window),
        },
        g2=g2,
        eta={
            "factors": [[label, float(f)] for label, f in CANONICAL_ETA_FACTORS],
            "product": float(eta_ledger(CANONICAL_ETA_FACTORS)),
        },
        loss_ledger=loss_ledger,
        modulation={
            "ignored_triggers": int(result.ignored_triggers),
            "mean_drive_transmission": result.mean_drive_transmission,
            "mean_modulator_phase_rad": result.mean_modulator_phase,
            "expected_ratio": None if ratio is None else [float(r) for r in ratio],
        },
        result=result,
    )
    if out_dir is not None:
        write_outputs(report, sc, Path(out_dir))
    return report


def control_no_fiber(scenario: Scenario) -> Scenario:
    """Control A: remove the optical delay so the scheduled drive misses the
    pair envelope and only chops uncorrelated light, keeping the analysis
    window where the delayed envelope used to sit."""
    sim = scenario.sim
    pinned_offset = sim.resolved_window_offset()
    elements = tuple(FiberDelay(0.0) if isinstance(e, FiberDelay) else e
                     for e in sim.chain.elements)
    new_sim = replace(sim, chain=ChainConfig(elements),
                      window_offset_ns=pinned_offset)
    resolved = json.loads(json.dumps(scenario.resolved))
    for element in resolved["chain"]["elements"]:
        if element["type"] == "fiber_delay":
            element["delay_ns"] = 0.0
    resolved["analysis"]["window_offset_ns"] = pinned_offset
    resolved["name"] = scenario.name + "_control_no_fiber"
    return Scenario(resolved["name"], new_sim, scenario.outputs, resolved)


def control_random_trigger(scenario: Scenario,
                           period_ns: float = 100.0) -> Scenario:
    """Control B: fire the drive from an external periodic clock instead of
    the herald, leaving everything else untouched."""
    new_sim = replace(scenario.sim,
                      trigger=TriggerSpec(mode="periodic", period_ns=period_ns))
    resolved = json.loads(json.dumps(scenario.resolved))
    if resolved.get("drive") is not None:
        resolved["drive"]["trigger"] = {"mode": "periodic", "period_ns": period_ns}
    resolved["name"] = scenario.name + "_control_random_trigger"
    return Scenario(resolved["name"], new_sim, scenario.outputs, resolved)


def run_controls(scenario: Scenario, seed_override: int | None = None,
                 time_scale: float | None = None, workers: int = 1,
                 out_dir: str | Path | None = None
                 ) -> tuple[RunReport, RunReport]:
    """Run both control experiments derived from a base scenario."""
    report_a = run(control_no_fiber(scenario), seed_override=seed_override,
                   time_scale=time_scale, workers=workers, out_dir=out_dir)
    report_b = run(control_random_trigger(scenario), seed_override=seed_override,
                   time_scale=time_scale, workers=workers, out_dir=out_dir)
    return report_a, report_b


def floor_curve(scenario: Scenario, rates, heralds_target: int = 300_000,
                workers: int = 1) -> list[dict]:
    """Multi-pair floor versus Stokes rate, with a with-background companion
    value at every grid point."""
    sim = scenario.sim
    floor_points = multi_pair_floor(sim, rates, heralds_target=heralds_target,
                                    seed=scenario.seed, workers=workers)
    out = []
    for i, (rate, floor_g2) in enumerate(floor_points):
        herald_rate = (rate * sim.source.duty_cycle
                       * sim.stokes_path_transmission
                       * sim.detectors.d1.efficiency)
        duration = heralds_target / max(herald_rate, 1e-12)
        full_sim = replace(sim, source=replace(
            sim.source, stokes_rate=float(rate), run_duration=duration))
        full = simulate(full_sim, seed=scenario.seed + 1000 + i, workers=workers)
        fc = full.counts
        try:
            full_g2: G2Cond | None = g2_cond(fc.n1, fc.n12, fc.n13, fc.n123)
        except ZeroDivisionError:
            full_g2 = None
        out.append({"stokes_rate_per_s": float(rate),
                    "floor": floor_g2, "full": full_g2})
    return out


def _write_floor_csv(points: list[dict], path: Path) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write("stokes_rate_per_s,g2_floor,g2_floor_err,g2_full,g2_full_err\n")
        for p in points:
            floor, full = p["floor"], p["full"]
            fh.write(f"{p['stokes_rate_per_s']:.9g},"
                     f"{floor.value:.9g},{floor.stderr or 0.0:.9g},"
                     f"{'' if full is None else format(full.value, '.9g')},"
                     f"{'' if full is None or full.stderr is None else format(full.stderr, '.9g')}\n")


_GNUPLOT_TEMPLATE = """set datafile separator ','
set xlabel 'delay (ns)'
set ylabel 'coincidence counts per bin'
plot '{name}_hist_summed.csv' using 1:2 with steps title '{name}'
"""


def write_outputs(report: RunReport, scenario: Scenario, out_dir: Path) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    name = report.scenario_name
    formats = scenario.outputs
    if "report" in formats:
        (out_dir / f"{name}_report.json").write_text(report.to_json())
    if "histograms" in formats:
        for key, hist in (("d2", report.result.hist_d2),
                          ("d3", report.result.hist_d3),
                          ("summed", report.result.hist_sum)):
            write_histogram_csv(hist, out_dir / f"{name}_hist_{key}.csv",
                                seed=report.seed,
                                config_digest=report.config_digest)
    if "events" in formats:
        from .pipeline import _shard_bounds, _shard_events
        from .source import EventStream
        parts = [_shard_events(scenario.sim, report.seed, s, b)
                 for s, b in enumerate(_shard_bounds(scenario.sim.source.run_duration))]
        if parts:
            stream = EventStream(
                np.concatenate([p.emit_time for p in parts]),
                np.concatenate([p.channel for p in parts]),
                np.concatenate([p.pair_id for p in parts]))
        else:
            stream = EventStream(np.empty(0), np.empty(0, np.int8),
                                 np.empty(0, np.int64))
        dump_events_csv(stream, out_dir / f"{name}_events.csv")
    if "waveform" in formats and scenario.sim.drive is not None:
        from .pipeline import resolve_drive
        write_waveform_csv(resolve_drive(scenario.sim),
                           out_dir / f"{name}_drive.csv")
    if "gnuplot" in formats:
        (out_dir / f"{name}.gp").write_text(_GNUPLOT_TEMPLATE.format(name=name))
