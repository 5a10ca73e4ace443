"""Discrete-event simulator of heralded single-photon electro-optic
modulation experiments: biphoton generation, drive synthesis with arcsin
predistortion, chain propagation, start-stop coincidence counting, and the
derived correlation/efficiency observables."""

from .analysis import (CANONICAL_BACKOUT_FACTORS, CANONICAL_ETA_FACTORS, G2Cond,
                       back_out_losses, background_floor, estimate_floor,
                       eta_ledger, g2_cond, g2_of_tau, multi_pair_floor,
                       retrieval_efficiency, theory_overlay)
from .chain import (Arrived, Beamsplitter, ChainConfig, FiberDelay, Loss, Lost,
                    Modulator, ModulatorParams, modulator_transfer, propagate,
                    stokes_path_survival, survival_probability)
from .detection import (CoincidenceCounts, DetectorParams, Histogram, TagStream,
                        TdcConfig, coincidence_counts, detect,
                        start_stop_histogram)
from .pipeline import DetectorBank, SimConfig, TriggerSpec, simulate
from .runner import (RunReport, control_no_fiber, control_random_trigger,
                     floor_curve, run, run_controls)
from .scenario import Scenario, parse_scenario, scenario_from_dict
from .source import (BiphotonShape, Channel, EventStream, FlatTopPrecursor,
                     PhotonEvent, SourceParams, TabulatedShape,
                     generate_stream, group_delay_from_velocity,
                     normalize_shape, sample_delay)
from .waveform import (DriveWaveform, GaussianPulse, GeneratorParams,
                       RectPulses, RisingExponential, TabulatedWaveform,
                       bandwidth_limit, predistort, trigger_schedule,
                       voltage_at)

__version__ = "0.1.0"
