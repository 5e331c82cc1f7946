"""
Scenario descriptions for the Monte-Carlo studies and for synthetic captures.

Scenario files are YAML mappings. Every section is optional::

    name: los_mpc
    study: rmse                 # order | rmse | calibration
    seed: 7
    n_trials: 1000
    snr_grid_db: [-10, -5, 0, 5, 10, 15, 20, 25, 30]
    domain: grid                # grid | time
    geometry: {m_elements: 3, carrier_hz: 2.4e9}
    waveform: {numerology_mu: 1, bandwidth_hz: 50.0e6, comb_ktc: 2, zc_root: 26}
    paths:
      - {theta_deg: 0.0}
      - {theta_deg: 15.0, power: 0.7, delay_s: 100.0e-9}
    estimators: [music, esprit, esprit2d]
    esprit2d: {m1: 5, m2: 1}
    order: {criteria: [aic, mdl], separations_deg: [2, 4, 6, 8, 10], source: true}
    calibration:
      cases: [P_only, C_only, P_and_C]
      p_gain_db: 0.7
      p_phase_deg: 15.0
      coupling_phase_var: 0.15708
      resample: per_trial       # per_trial | fixed
    capture: {snr_db: 20, n_windows: 10, window_s: 6.0e-3, period_s: 1.0}
"""

from dataclasses import dataclass, field, replace
import numpy as np
import yaml

from .array import Path, PathSet, UlaGeometry, COUPLING_PHASE_VARIANCE
from .errors import ConfigurationError
from .waveform import SrsConfig

STUDIES = ("order", "rmse", "calibration")
ESTIMATORS = ("music", "esprit", "esprit2d")
CRITERIA = ("aic", "mdl", "ecod")
CALIBRATION_CASES = ("none", "P_only", "C_only", "P_and_C")
DEFAULT_SNR_GRID = tuple(float(s) for s in range(-10, 31, 5))


@dataclass(frozen=True)
class CalibrationSpec:
    cases: tuple = ()
    p_gain_db: float = 0.7
    p_phase_deg: float = 15.0
    coupling_phase_var: float = COUPLING_PHASE_VARIANCE
    friis_phase: bool = False
    resample: str = "per_trial"

    def __post_init__(self):
        for c in self.cases:
            if c not in CALIBRATION_CASES:
                raise ConfigurationError(f"unknown calibration case {c!r}")
        if self.resample not in ("per_trial", "fixed"):
            raise ConfigurationError("calibration.resample must be per_trial or fixed")
        if self.p_gain_db < 0 or self.p_phase_deg < 0 or self.coupling_phase_var < 0:
            raise ConfigurationError("calibration ranges must be non-negative")


@dataclass(frozen=True)
class CaptureSpec:
    """Synthetic capture layout: ``n_windows`` snapshot windows of
    ``window_s`` each; ``period_s`` is the window spacing used when the
    capture is segmented. Files written by ``synthesize`` hold the windows
    back to back, so they are read with ``period_s == window_s``."""

    snr_db: float = 20.0
    n_windows: int = 10
    window_s: float = 6e-3
    period_s: float = 1.0

    def __post_init__(self):
        if self.n_windows < 1:
            raise ConfigurationError("capture.n_windows must be >= 1")
        if not 0 < self.window_s <= self.period_s:
            raise ConfigurationError("capture needs 0 < window_s <= period_s")


@dataclass(frozen=True)
class ScenarioSpec:
    name: str = "scenario"
    study: str = "rmse"
    geometry: UlaGeometry = field(default_factory=UlaGeometry)
    waveform: SrsConfig = field(default_factory=SrsConfig)
    paths: tuple = (Path(0.0),)
    snr_grid_db: tuple = DEFAULT_SNR_GRID
    n_trials: int = 1000
    estimators: tuple = ESTIMATORS
    criteria: tuple = ("aic", "mdl")
    separations_deg: tuple = ()
    order_source: str = "true"     # order fed to the estimators: true | aic | mdl | ecod
    calibration: CalibrationSpec = field(default_factory=CalibrationSpec)
    capture: CaptureSpec = field(default_factory=CaptureSpec)
    m1: int = 5
    m2: int = 1
    domain: str = "grid"
    seed: int = 0

    def __post_init__(self):
        if self.study not in STUDIES:
            raise ConfigurationError(f"study must be one of {STUDIES}")
        if self.n_trials < 1:
            raise ConfigurationError("n_trials must be >= 1")
        if len(self.snr_grid_db) == 0:
            raise ConfigurationError("snr grid is empty")
        if self.domain not in ("grid", "time"):
            raise ConfigurationError("domain must be grid or time")
        for e in self.estimators:
            if e not in ESTIMATORS:
                raise ConfigurationError(f"unknown estimator {e!r}")
        for c in self.criteria:
            if c not in CRITERIA:
                raise ConfigurationError(f"unknown order criterion {c!r}")
        if self.order_source not in ("true",) + CRITERIA:
            raise ConfigurationError(f"unknown order source {self.order_source!r}")
        if self.study == "order" and not self.criteria:
            raise ConfigurationError("order study needs at least one criterion")
        if self.study == "calibration" and not [c for c in self.calibration.cases if c != "none"]:
            raise ConfigurationError("calibration study needs a calibration case other than none")
        if self.study != "order" and not self.paths:
            raise ConfigurationError("rmse and calibration studies need at least one path")
        if self.paths:
            PathSet(self.paths)  # validates angles and delays

    @property
    def path_set(self):
        return PathSet(self.paths)

    def with_overrides(self, **kw):
        return replace(self, **{k: v for k, v in kw.items() if v is not None})


def _float(x, key):
    try:
        return float(x)
    except (TypeError, ValueError):
        raise ConfigurationError(f"{key}: expected a number, got {x!r}") from None


def _path(item, i):
    if not isinstance(item, dict):
        raise ConfigurationError(f"paths[{i}] must be a mapping")
    unknown = set(item) - {"theta_deg", "power", "gain", "phase_deg", "delay_s"}
    if unknown:
        raise ConfigurationError(f"paths[{i}]: unknown keys {sorted(unknown)}")
    if "theta_deg" not in item:
        raise ConfigurationError(f"paths[{i}] needs theta_deg")
    if "power" in item and "gain" in item:
        raise ConfigurationError(f"paths[{i}]: give power or gain, not both")
    amp = np.sqrt(_float(item["power"], "power")) if "power" in item else _float(item.get("gain", 1.0), "gain")
    phase = np.deg2rad(_float(item.get("phase_deg", 0.0), "phase_deg"))
    gain = complex(amp * np.exp(1j * phase)) if phase else complex(amp)
    return Path(_float(item["theta_deg"], "theta_deg"), gain, _float(item.get("delay_s", 0.0), "delay_s"))


def _section(raw, key, allowed):
    sec = raw.get(key) or {}
    if not isinstance(sec, dict):
        raise ConfigurationError(f"{key} must be a mapping")
    unknown = set(sec) - set(allowed)
    if unknown:
        raise ConfigurationError(f"{key}: unknown keys {sorted(unknown)}")
    return sec


_TOP_KEYS = {"name", "study", "seed", "n_trials", "snr_grid_db", "domain", "geometry", "waveform",
             "paths", "estimators", "esprit2d", "order", "calibration", "capture"}


def scenario_from_dict(raw):
    if not isinstance(raw, dict):
        raise ConfigurationError("scenario must be a mapping")
    unknown = set(raw) - _TOP_KEYS
    if unknown:
        raise ConfigurationError(f"unknown scenario keys {sorted(unknown)}")

    geo = _section(raw, "geometry", ("m_elements", "spacing_m", "carrier_hz"))
    geometry = UlaGeometry(
        m_elements=int(geo.get("m_elements", 3)),
        spacing_m=None if geo.get("spacing_m") is None else _float(geo["spacing_m"], "spacing_m"),
        carrier_hz=_float(geo.get("carrier_hz", 2.4e9), "carrier_hz"))

    wf = _section(raw, "waveform", ("numerology_mu", "bandwidth_hz", "comb_ktc", "n_srs_symbols",
                                    "n_slot_symbols", "fft_size", "n_active_subcarriers",
                                    "cp_lengths", "zc_root"))
    wf_kw = {}
    for k, v in wf.items():
        if v is None:
            continue
        if k == "bandwidth_hz":
            wf_kw[k] = _float(v, k)
        elif k == "cp_lengths":
            wf_kw[k] = tuple(int(c) for c in v)
        else:
            wf_kw[k] = int(v)
    waveform = SrsConfig(**wf_kw)

    paths = raw.get("paths", [{"theta_deg": 0.0}])
    if paths is None:
        paths = []
    paths = tuple(_path(p, i) for i, p in enumerate(paths))

    e2d = _section(raw, "esprit2d", ("m1", "m2"))
    order = _section(raw, "order", ("criteria", "separations_deg", "source"))
    cal = _section(raw, "calibration", ("cases", "p_gain_db", "p_phase_deg", "coupling_phase_var",
                                        "friis_phase", "resample"))
    cap = _section(raw, "capture", ("snr_db", "n_windows", "window_s", "period_s"))

    calibration = CalibrationSpec(
        cases=tuple(cal.get("cases", ())),
        p_gain_db=_float(cal.get("p_gain_db", 0.7), "p_gain_db"),
        p_phase_deg=_float(cal.get("p_phase_deg", 15.0), "p_phase_deg"),
        coupling_phase_var=_float(cal.get("coupling_phase_var", COUPLING_PHASE_VARIANCE),
                                  "coupling_phase_var"),
        friis_phase=bool(cal.get("friis_phase", False)),
        resample=str(cal.get("resample", "per_trial")))
    capture = CaptureSpec(
        snr_db=_float(cap.get("snr_db", 20.0), "snr_db"),
        n_windows=int(cap.get("n_windows", 10)),
        window_s=_float(cap.get("window_s", 6e-3), "window_s"),
        period_s=_float(cap.get("period_s", 1.0), "period_s"))

    snr_grid = tuple(_float(s, "snr_grid_db") for s in raw.get("snr_grid_db", DEFAULT_SNR_GRID))
    estimators = raw.get("estimators", list(ESTIMATORS))
    if isinstance(estimators, str):
        estimators = list(ESTIMATORS) if estimators == "all" else [estimators]

    return ScenarioSpec(
        name=str(raw.get("name", "scenario")),
        study=str(raw.get("study", "rmse")),
        geometry=geometry,
        waveform=waveform,
        paths=paths,
        snr_grid_db=snr_grid,
        n_trials=int(raw.get("n_trials", 1000)),
        estimators=tuple(estimators),
        criteria=tuple(order.get("criteria", ("aic", "mdl"))),
        separations_deg=tuple(_float(s, "separations_deg") for s in order.get("separations_deg", ())),
        order_source=str(order.get("source", "true")).lower(),
        calibration=calibration,
        capture=capture,
        m1=int(e2d.get("m1", 5)),
        m2=int(e2d.get("m2", 1)),
        domain=str(raw.get("domain", "grid")),
        seed=int(raw.get("seed", 0)))


def load_scenario(path):
    try:
        with open(path) as fh:
            raw = yaml.safe_load(fh)
    except yaml.YAMLError as exc:
        raise ConfigurationError(f"{path}: {exc}") from None
    return scenario_from_dict(raw or {})
