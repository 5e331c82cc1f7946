"""
Monte-Carlo studies: channel-order hit rates, RMSE versus SNR against the
CRB, and the effect of array calibration errors.

Every trial owns a generator seeded from ``(seed, group, snr index, trial
index)``, so results do not depend on execution order or worker count.
Within a trial the draws always happen in the same order (P, then the
coupling phases, then noise) whatever calibration case is being simulated,
which gives all cases common random numbers.
"""

import csv
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, asdict
from typing import Optional

import numpy as np

from .array import (PathSet, awgn, calibration_matrix, coupling_matrix, propagate,
                    sample_perturbation, steering_vector)
from .doa import crb_single_source, esprit, esprit2d, music, select_los
from .errors import AoaError, ConfigurationError
from .subspace import covariance, eigen_sorted, estimate_order
from .sync import detect_offset_multichannel
from .waveform import active_power, csi_from_pilots, ofdm_demodulate, reference_slot

CSV_HEADER = ("snr_db", "estimator", "metric", "value", "n_trials", "seed", "case")
FIXED_CALIBRATION_KEY = 0xCA1B


@dataclass
class TrialRecord:
    case: str
    snr_db: float
    trial: int
    true_theta_deg: Optional[float]
    estimates: dict = field(default_factory=dict)    # estimator -> selected LOS angle (nan on failure)
    orders: dict = field(default_factory=dict)       # criterion -> k*
    failures: dict = field(default_factory=dict)     # estimator -> reason
    calibration_draw: int = -1


@dataclass
class CurveTable:
    rows: list = field(default_factory=list)

    def add(self, case, snr_db, estimator, metric, value, n_trials, seed):
        self.rows.append((float(snr_db), estimator, metric, float(value), int(n_trials),
                          int(seed), case))

    def __len__(self):
        return len(self.rows)

    def select(self, case=None, estimator=None, metric=None):
        """Rows matching the given fields, as (snr_db, value) sorted by SNR."""
        out = [(r[0], r[3]) for r in self.rows
               if (case is None or r[6] == case)
               and (estimator is None or r[1] == estimator)
               and (metric is None or r[2] == metric)]
        return sorted(out, key=lambda x: x[0])

    def curve(self, case=None, estimator=None, metric=None):
        pts = self.select(case, estimator, metric)
        return np.array([p[0] for p in pts]), np.array([p[1] for p in pts])

    @property
    def cases(self):
        return list(dict.fromkeys(r[6] for r in self.rows))

    @property
    def estimators(self):
        return list(dict.fromkeys(r[1] for r in self.rows))


def snapshot_snr_db(config, snr_db):
    """Per pilot-cell SNR for a given time-domain LOS SNR.

    The SRS energy of a symbol sits on ``n_pilots`` of ``fft_size`` bins, and
    with a unitary DFT the noise variance per cell equals the per-sample one.
    """
    return snr_db + 10 * np.log10(config.fft_size / config.n_pilots)


def trial_rng(seed, group, snr_idx, trial):
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(group), int(snr_idx),
                                                         int(trial)]))


def _case_matrix(case, perturbation, coupling, m):
    if case == "none":
        return None
    if case == "P_only":
        return calibration_matrix(m, perturbation, None)
    if case == "C_only":
        return calibration_matrix(m, None, coupling)
    return calibration_matrix(m, perturbation, coupling)


class _Synth:
    """Noiseless pilot-cell fields per path, reused across trials.

    ``fields[p]`` is the ``(S, K)`` block of pilot cells path ``p`` would
    produce on a single isotropic element; a trial mixes them through
    ``calib @ A`` and adds noise.
    """

    def __init__(self, spec, paths):
        cfg = spec.waveform
        self.spec = spec
        self.paths = paths
        self.seq, wave = reference_slot(cfg)
        self.wave = wave
        self.power = active_power(wave.samples)
        self.m = spec.geometry.m_elements
        self.shape = (self.m, cfg.n_srs_symbols, cfg.n_pilots)
        if paths is None:
            self.fields = None
            self.signal_power = self.power
            return
        freqs = cfg.pilot_frequencies_hz()
        ramps = np.exp(-2j * np.pi * np.outer(paths.delays_s, freqs))      # (P, K)
        self.fields = (ramps * self.seq[None, :])[:, None, :] * np.ones((1, cfg.n_srs_symbols, 1))
        self.fields = self.fields.reshape(len(paths), -1)                    # (P, S*K)
        self.response = steering_vector(spec.geometry, paths.angles_deg) * paths.gains[None, :]
        self.signal_power = abs(paths.los.gain) ** 2 * self.power
        self._clean = self.response @ self.fields

    def pilot_obs(self, calib, snr_db, rng):
        """(M, S, K) received pilot cells."""
        if self.fields is None:
            clean = np.zeros((self.m, self.fields_len()), dtype=complex)
        elif calib is None:
            clean = self._clean
        else:
            clean = (calib @ self.response) @ self.fields
        return awgn(clean, snr_db, self.signal_power, rng).reshape(self.shape)

    def fields_len(self):
        return self.shape[1] * self.shape[2]

    def pilot_obs_time(self, calib, snr_db, rng):
        """Same observation through the time-domain route: random offset,
        correlation sync, OFDM demodulation."""
        cfg = self.spec.waveform
        offset = int(rng.integers(0, cfg.slot_length))
        if self.paths is None:
            from .array import Path
            rx = propagate(self.wave, PathSet((Path(0.0, 0.0),)), self.spec.geometry,
                           None, snr_db, offset, rng, length=2 * cfg.slot_length,
                           signal_power=self.power)
        else:
            rx = propagate(self.wave, self.paths, self.spec.geometry, calib, snr_db, offset, rng,
                           length=2 * cfg.slot_length, signal_power=self.signal_power)
        found = detect_offset_multichannel(rx.samples[:, :cfg.slot_length + cfg.srs_length],
                                           self.wave.samples[:cfg.srs_length])
        grids = ofdm_demodulate(rx.samples[:, found:found + cfg.slot_length], cfg)
        cells = grids[:, cfg.pilot_rows(), :cfg.n_srs_symbols]               # (M, K, S)
        return np.swapaxes(cells, 1, 2)


def _draw_calibration(spec, rng, fixed):
    cal = spec.calibration
    if fixed is not None:
        return fixed
    p = sample_perturbation(cal.p_gain_db, cal.p_phase_deg, spec.geometry.m_elements, rng)
    c = coupling_matrix(spec.geometry, rng, np.sqrt(cal.coupling_phase_var), cal.friis_phase)
    return p, c


def _fixed_calibration(spec):
    if spec.calibration.resample != "fixed":
        return None
    rng = np.random.default_rng(np.random.SeedSequence([int(spec.seed), FIXED_CALIBRATION_KEY]))
    cal = spec.calibration
    p = sample_perturbation(cal.p_gain_db, cal.p_phase_deg, spec.geometry.m_elements, rng)
    c = coupling_matrix(spec.geometry, rng, np.sqrt(cal.coupling_phase_var), cal.friis_phase)
    return p, c


def estimate_slot(pilot_obs, seq, spec, estimators, k_true, order_source="true"):
    """Run the estimators on one slot of ``(M, S, K)`` pilot cells.

    Returns ``(estimates, failures, k_used)``; estimates map estimator name to
    the selected line-of-sight angle, nan where the estimator failed.
    """
    cfg = spec.waveform
    geom = spec.geometry
    y = pilot_obs.reshape(pilot_obs.shape[0], -1)
    r = covariance(y)
    eig = eigen_sorted(r)
    if order_source == "true":
        k = k_true
    else:
        k = estimate_order(eig.values, y.shape[1], order_source)
    k = int(min(max(k, 1), geom.m_elements - 1))
    csi = None
    estimates, failures = {}, {}
    for name in estimators:
        try:
            if name == "music":
                _, est = music(eig, geom, k)
                if len(est) == 0:
                    raise AoaError("no MUSIC peak")
                estimates[name] = select_los(est, geom, r)
            elif name == "esprit":
                estimates[name] = select_los(esprit(eig, geom, k), geom, r)
            else:
                if csi is None:
                    csi = csi_from_pilots(pilot_obs, seq)
                est = esprit2d(csi, geom, k, cfg.pilot_spacing_hz, spec.m1, spec.m2)
                estimates[name] = select_los(est, geom, csi=csi,
                                             pilot_spacing_hz=cfg.pilot_spacing_hz)
        except (AoaError, np.linalg.LinAlgError) as exc:
            estimates[name] = math.nan
            failures[name] = f"{type(exc).__name__}: {exc}"
    return estimates, failures, k


def _order_block(spec, group, case, paths, snr_idx):
    synth = _Synth(spec, paths)
    k_true = 0 if paths is None else len(paths)
    snr = spec.snr_grid_db[snr_idx]
    n = spec.waveform.n_snapshots
    records = []
    for t in range(spec.n_trials):
        rng = trial_rng(spec.seed, group, snr_idx, t)
        if spec.domain == "time":
            obs = synth.pilot_obs_time(None, snr, rng)
        else:
            obs = synth.pilot_obs(None, snr, rng)
        y = obs.reshape(obs.shape[0], -1)
        values = np.linalg.eigvalsh(y @ y.conj().T / y.shape[1])[::-1]
        orders = {c: estimate_order(values, n, c) for c in spec.criteria}
        records.append(TrialRecord(case, snr, t, None if paths is None else paths.los.theta_deg,
                                   orders=orders))
    return k_true, records


def _rmse_block(spec, case, snr_idx):
    paths = spec.path_set
    synth = _Synth(spec, paths)
    fixed = _fixed_calibration(spec)
    snr = spec.snr_grid_db[snr_idx]
    records = []
    for t in range(spec.n_trials):
        rng = trial_rng(spec.seed, 0, snr_idx, t)
        p, c = _draw_calibration(spec, rng, fixed)
        calib = _case_matrix(case, p, c, spec.geometry.m_elements)
        if spec.domain == "time":
            obs = synth.pilot_obs_time(calib, snr, rng)
        else:
            obs = synth.pilot_obs(calib, snr, rng)
        est, fail, k = estimate_slot(obs, synth.seq, spec, spec.estimators, len(paths),
                                     spec.order_source)
        records.append(TrialRecord(case, snr, t, paths.los.theta_deg, est, {"used": k}, fail,
                                   -1 if case == "none" else (0 if fixed is not None else t)))
    return records


def _run_block(args):
    kind, spec, payload, snr_idx = args
    if kind == "order":
        group, case, paths = payload
        return _order_block(spec, group, case, paths, snr_idx)
    return _rmse_block(spec, payload, snr_idx)


def _map_blocks(tasks, workers):
    """Ordered map over blocks; the merge order never depends on ``workers``."""
    if workers is None or workers <= 1 or len(tasks) <= 1:
        return [_run_block(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_block, tasks))


def _order_cases(spec):
    if not spec.paths:
        return [("noise_only", None)]
    if not spec.separations_deg:
        return [("nominal", spec.path_set)]
    los = spec.paths[0]
    if len(spec.paths) < 2:
        raise ConfigurationError("a separation sweep needs a second path to move")
    out = []
    for sep in spec.separations_deg:
        moved = spec.paths[1].__class__(los.theta_deg + sep, spec.paths[1].gain,
                                        spec.paths[1].delay_s)
        out.append((f"sep_{sep:g}", PathSet((los, moved) + tuple(spec.paths[2:]))))
    return out


def run_order_study(spec, workers=1, records=None):
    """Hit and miss rates of every order criterion per case and SNR."""
    if not spec.criteria:
        raise ConfigurationError("order study needs at least one criterion")
    cases = _order_cases(spec)
    tasks = [("order", spec, (g, name, paths), i)
             for g, (name, paths) in enumerate(cases) for i in range(len(spec.snr_grid_db))]
    table = CurveTable()
    for (_, _, (_, name, _), i), (k_true, recs) in zip(tasks, _map_blocks(tasks, workers)):
        if records is not None:
            records.extend(recs)
        snr = spec.snr_grid_db[i]
        for c in spec.criteria:
            hits = sum(r.orders[c] == k_true for r in recs)
            n = len(recs)
            table.add(name, snr, c, "hit_rate", hits / n, n, spec.seed)
            table.add(name, snr, c, "miss_rate", (n - hits) / n, n, spec.seed)
    return table


def _rmse_rows(table, spec, case, snr, recs):
    n = len(recs)
    truth = recs[0].true_theta_deg
    for name in spec.estimators:
        vals = np.array([r.estimates[name] for r in recs])
        ok = np.isfinite(vals)
        rmse = float(np.sqrt(np.mean((vals[ok] - truth) ** 2))) if ok.any() else math.nan
        table.add(case, snr, name, "rmse_deg", rmse, n, spec.seed)
        if not ok.all():
            table.add(case, snr, name, "failure_rate", float(np.mean(~ok)), n, spec.seed)


def _run_angle_study(spec, cases, workers, records, with_crb):
    tasks = [("rmse", spec, case, i) for case in cases for i in range(len(spec.snr_grid_db))]
    table = CurveTable()
    for (_, _, case, i), recs in zip(tasks, _map_blocks(tasks, workers)):
        if records is not None:
            records.extend(recs)
        snr = spec.snr_grid_db[i]
        _rmse_rows(table, spec, case, snr, recs)
        if with_crb and case == "none" and np.isfinite(snr):
            crb = crb_single_source(spec.geometry, snapshot_snr_db(spec.waveform, snr),
                                    spec.waveform.n_snapshots, spec.paths[0].theta_deg)
            table.add(case, snr, "crb", "crb_deg", math.sqrt(crb), len(recs), spec.seed)
    return table


def run_rmse_study(spec, workers=1, records=None):
    """RMSE of the selected LOS angle per estimator and SNR, with a CRB row
    for single-path scenarios."""
    cases = tuple(spec.calibration.cases) or ("none",)
    return _run_angle_study(spec, cases, workers, records, with_crb=len(spec.paths) == 1)


def run_calibration_study(spec, workers=1, records=None):
    cases = tuple(c for c in spec.calibration.cases if c != "none")
    if not cases:
        raise ConfigurationError("calibration study needs P_only, C_only or P_and_C")
    return _run_angle_study(spec, cases, workers, records, with_crb=False)


STUDIES = {
    "order": run_order_study,
    "rmse": run_rmse_study,
    "calibration": run_calibration_study,
}


def run_study(spec, workers=1, records=None):
    return STUDIES[spec.study](spec, workers=workers, records=records)


def threshold_snr(snr_db, rate, level=0.9):
    """First SNR at which ``rate`` reaches ``level``, linearly interpolated
    between grid points; nan when it never does."""
    snr_db = np.asarray(snr_db, dtype=float)
    rate = np.asarray(rate, dtype=float)
    for i in range(len(rate)):
        if rate[i] >= level:
            if i == 0:
                return float(snr_db[0])
            r0, r1 = rate[i - 1], rate[i]
            return float(snr_db[i - 1] + (level - r0) / (r1 - r0) * (snr_db[i] - snr_db[i - 1]))
    return math.nan


def compute_cdf(errors):
    """Empirical CDF of |errors| as (sorted values, cumulative probabilities)."""
    x = np.sort(np.abs(np.asarray(errors, dtype=float)).ravel())
    if x.size == 0:
        raise ValueError("empty error list")
    return x, np.arange(1, x.size + 1) / x.size


def percentile(errors, p):
    """Nearest-rank percentile of |errors|."""
    x, _ = compute_cdf(errors)
    if not 0 < p <= 100:
        raise ValueError("percentile must be in (0, 100]")
    return float(x[max(int(math.ceil(p / 100 * x.size)), 1) - 1])


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return str(v)


def emit_results(table, path):
    """Write the table as CSV; floats use repr so reruns are byte-identical."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for row in table.rows:
            w.writerow([_fmt(v) for v in row])


def read_results(path):
    table = CurveTable()
    with open(path, newline="") as fh:
        rd = csv.DictReader(fh)
        for r in rd:
            table.add(r["case"], float(r["snr_db"]), r["estimator"], r["metric"],
                      float(r["value"]), int(r["n_trials"]), int(r["seed"]))
    return table


def dump_records(records, path):
    """One JSON object per trial, for debugging."""
    with open(path, "w") as fh:
        for r in records:
            d = asdict(r)
            d["estimates"] = {k: (None if math.isnan(v) else v) for k, v in d["estimates"].items()}
            d["snr_db"] = repr(d["snr_db"]) if not math.isfinite(d["snr_db"]) else d["snr_db"]
            fh.write(json.dumps(d, sort_keys=True) + "\n")
