"""
Multi-channel IQ capture files, snapshot segmentation and the per-window
estimation pipeline used on recordings.

File layout (little-endian)::

    offset  size  field
    0       8     magic  b"AOAIQCAP"
    8       2     version (u16, currently 1)
    10      2     n_channels (u16)
    12      2     layout (u16, 0 = channel-major)
    14      2     reserved
    16      8     sample_rate_hz (f64)
    24      8     center_freq_hz (f64)
    32      8     timestamp (f64, seconds)
    40      8     n_samples per channel (u64)
    48      ...   payload: complex64 (I then Q as float32), channel 0 first

"""

import math
import struct
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .array import calibration_matrix, coupling_matrix, propagate, sample_perturbation
from .errors import ConfigurationError, DimensionError, FormatError
from .experiments import estimate_slot, trial_rng
from .sync import multichannel_correlation
from .waveform import active_power, ofdm_demodulate, reference_slot

MAGIC = b"AOAIQCAP"
VERSION = 1
LAYOUT_CHANNEL_MAJOR = 0
_HEADER = struct.Struct("<8sHHHHdddQ")
HEADER_SIZE = _HEADER.size
SAMPLE_DTYPE = np.dtype("<c8")

# Windows whose correlation peak is below this multiple of the median
# correlation magnitude are treated as containing no slot.
DETECTION_RATIO = 10.0


@dataclass(frozen=True)
class CaptureHeader:
    n_channels: int
    sample_rate_hz: float
    center_freq_hz: float = 0.0
    timestamp: float = 0.0
    n_samples: int = 0
    version: int = VERSION
    layout: int = LAYOUT_CHANNEL_MAJOR


def write_capture(path, samples, sample_rate_hz, center_freq_hz=0.0, timestamp=0.0):
    samples = np.asarray(samples)
    if samples.ndim != 2:
        raise DimensionError("capture samples must be (channels, samples)")
    n_ch, n = samples.shape
    if not 0 < n_ch < 2 ** 16:
        raise DimensionError("channel count out of range")
    data = np.ascontiguousarray(samples, dtype=SAMPLE_DTYPE)
    head = _HEADER.pack(MAGIC, VERSION, n_ch, LAYOUT_CHANNEL_MAJOR, 0, float(sample_rate_hz),
                        float(center_freq_hz), float(timestamp), n)
    with open(path, "wb") as fh:
        fh.write(head)
        fh.write(data.tobytes())
    return CaptureHeader(n_ch, float(sample_rate_hz), float(center_freq_hz), float(timestamp), n)


def read_capture(path):
    """Returns ``(header, samples)`` with samples shaped (channels, n) complex64."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < HEADER_SIZE:
        raise FormatError(f"file is {len(raw)} bytes, header needs {HEADER_SIZE}", offset=len(raw))
    magic, version, n_ch, layout, _, fs, fc, ts, n = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}", offset=0)
    if version != VERSION:
        raise FormatError(f"unsupported version {version}", offset=8)
    if n_ch == 0:
        raise FormatError("zero channels", offset=10)
    if layout != LAYOUT_CHANNEL_MAJOR:
        raise FormatError(f"unsupported layout {layout}", offset=12)
    expected = n_ch * n * SAMPLE_DTYPE.itemsize
    actual = len(raw) - HEADER_SIZE
    if actual != expected:
        raise FormatError(f"payload is {actual} bytes, expected {expected} "
                          f"({n_ch} channels x {n} samples)", offset=HEADER_SIZE + min(actual, expected))
    samples = np.frombuffer(raw, dtype=SAMPLE_DTYPE, offset=HEADER_SIZE).reshape(n_ch, n)
    return CaptureHeader(n_ch, fs, fc, ts, n, version, layout), samples.astype(np.complex64)


@dataclass(frozen=True)
class SnapshotPlan:
    window_s: float = 6e-3
    period_s: float = 1.0

    def __post_init__(self):
        if not 0 < self.window_s <= self.period_s:
            raise ConfigurationError("snapshot plan needs 0 < window_s <= period_s")


def segment_snapshots(samples, plan, sample_rate_hz):
    """Windows of ``window_s`` starting every ``period_s``; a trailing
    partial window is dropped. Returns views into ``samples``."""
    samples = np.asarray(samples)
    win = int(round(plan.window_s * sample_rate_hz))
    hop = int(round(plan.period_s * sample_rate_hz))
    n = samples.shape[-1]
    if win < 1:
        return []
    return [samples[..., s:s + win] for s in range(0, n - win + 1, hop)]


@dataclass
class SlotResult:
    start: int
    k: int
    estimates: dict


@dataclass
class WindowResult:
    index: int
    flagged: bool
    peak_ratio: float
    slots: list = field(default_factory=list)
    estimates: dict = field(default_factory=dict)    # estimator -> mean LOS angle


def _window_samples(spec):
    return int(round(spec.capture.window_s * spec.waveform.sample_rate_hz))


def synthesize_capture(spec, seed=None):
    """Synthetic recording: ``n_windows`` back-to-back windows, each holding
    repeated SRS slots that start at a random offset. Per window the
    generator draws the calibration (when the scenario sets one case), then
    the offset, then noise. Returns (samples complex64, true offsets)."""
    seed = spec.seed if seed is None else seed
    cfg = spec.waveform
    _, wave = reference_slot(cfg)
    win = _window_samples(spec)
    n_rep = win // cfg.slot_length + 1
    tiled = np.tile(wave.samples, n_rep)
    power = abs(spec.paths[0].gain) ** 2 * active_power(wave.samples)
    cases = [c for c in spec.calibration.cases if c != "none"]
    out = np.empty((spec.geometry.m_elements, win * spec.capture.n_windows), dtype=np.complex64)
    offsets = []
    for w in range(spec.capture.n_windows):
        rng = trial_rng(seed, 1, 0, w)
        calib = None
        if cases:
            cal = spec.calibration
            p = sample_perturbation(cal.p_gain_db, cal.p_phase_deg, spec.geometry.m_elements, rng)
            c = coupling_matrix(spec.geometry, rng, math.sqrt(cal.coupling_phase_var), cal.friis_phase)
            case = cases[0]
            calib = calibration_matrix(spec.geometry.m_elements,
                                       p if case != "C_only" else None,
                                       c if case != "P_only" else None)
        offset = int(rng.integers(0, cfg.slot_length))
        rx = propagate(wave.__class__(tiled, wave.sample_rate_hz), spec.path_set, spec.geometry,
                       calib, spec.capture.snr_db, offset, rng, length=win, signal_power=power)
        out[:, w * win:(w + 1) * win] = rx.samples
        offsets.append(offset)
    return out, offsets


def _process_window(args):
    index, window, spec, estimators, order_source = args
    cfg = spec.waveform
    seq, wave = reference_slot(cfg)
    window = np.asarray(window, dtype=complex)
    replica = wave.samples[:cfg.srs_length]
    if window.shape[-1] < cfg.slot_length:
        return WindowResult(index, True, 0.0)
    corr = multichannel_correlation(window, replica)
    peak = int(np.argmax(corr))
    med = float(np.median(corr))
    ratio = float(corr[peak] / med) if med > 0 else math.inf
    if not ratio >= DETECTION_RATIO:
        return WindowResult(index, True, ratio)
    first = peak % cfg.slot_length
    n_slots = (window.shape[-1] - first) // cfg.slot_length
    res = WindowResult(index, False, ratio)
    for s in range(n_slots):
        start = first + s * cfg.slot_length
        grids = ofdm_demodulate(window[:, start:start + cfg.slot_length], cfg)
        obs = np.swapaxes(grids[:, cfg.pilot_rows(), :cfg.n_srs_symbols], 1, 2)
        est, _, k = estimate_slot(obs, seq, spec, estimators, len(spec.paths), order_source)
        res.slots.append(SlotResult(start, k, est))
    if not res.slots:
        res.flagged = True
        return res
    for name in estimators:
        vals = np.array([sl.estimates[name] for sl in res.slots])
        vals = vals[np.isfinite(vals)]
        res.estimates[name] = float(vals.mean()) if vals.size else math.nan
    return res


def process_samples(samples, sample_rate_hz, spec, estimators=None, order_source=None,
                    plan=None, workers=1):
    """Per-window pipeline: sync, demodulate every slot, order estimate, AoA
    per slot, mean over the slots of the window."""
    cfg = spec.waveform
    samples = np.asarray(samples)
    if samples.ndim != 2 or samples.shape[0] != spec.geometry.m_elements:
        raise DimensionError(f"capture has {samples.shape[0] if samples.ndim == 2 else 0} "
                             f"channels, scenario expects {spec.geometry.m_elements}")
    if abs(sample_rate_hz - cfg.sample_rate_hz) > 1e-6 * cfg.sample_rate_hz:
        raise ConfigurationError(f"capture rate {sample_rate_hz} Hz does not match the "
                                 f"configured {cfg.sample_rate_hz} Hz")
    estimators = tuple(estimators or spec.estimators)
    order_source = order_source or spec.order_source
    if plan is None:
        plan = SnapshotPlan(spec.capture.window_s, spec.capture.window_s)
    windows = segment_snapshots(samples, plan, sample_rate_hz)
    tasks = [(i, w, spec, estimators, order_source) for i, w in enumerate(windows)]
    if workers and workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_process_window, tasks))
    return [_process_window(t) for t in tasks]


def process_capture(path, spec, estimators=None, order_source=None, plan=None, workers=1):
    header, samples = read_capture(path)
    return process_samples(samples, header.sample_rate_hz, spec, estimators, order_source,
                           plan, workers)


def simulate_single_trial(spec, seed=None, estimators=None, order_source=None):
    """In-memory counterpart of ``synthesize`` followed by ``process``."""
    samples, _ = synthesize_capture(spec, seed)
    return process_samples(samples, spec.waveform.sample_rate_hz, spec, estimators, order_source)
