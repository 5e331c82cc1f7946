"""
Uniform linear array, multipath propagation and calibration-error models.

Steering convention: element ``m`` (0-based) of the response to a plane wave
from azimuth ``theta`` is ``exp(-j*2*pi*f_c*d*m*sin(theta)/c)``.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ScenarioError, ConfigurationError

SPEED_OF_LIGHT = 299_792_458.0

# Variance of the coupling phase law (radians^2).
COUPLING_PHASE_VARIANCE = np.pi / 20


@dataclass(frozen=True)
class UlaGeometry:
    m_elements: int = 3
    spacing_m: Optional[float] = None
    carrier_hz: float = 2.4e9

    def __post_init__(self):
        if self.spacing_m is None:
            object.__setattr__(self, "spacing_m", self.wavelength / 2)
        if self.m_elements < 2:
            raise ConfigurationError("a ULA needs at least two elements")
        if not self.spacing_m > 0:
            raise ConfigurationError("element spacing must be positive")

    @property
    def wavelength(self):
        return SPEED_OF_LIGHT / self.carrier_hz

    @property
    def positions(self):
        return np.arange(self.m_elements) * self.spacing_m


@dataclass(frozen=True)
class Path:
    theta_deg: float
    gain: complex = 1.0
    delay_s: float = 0.0


@dataclass(frozen=True)
class PathSet:
    """Propagation paths; index 0 is the line of sight."""

    paths: tuple

    def __post_init__(self):
        paths = tuple(self.paths)
        object.__setattr__(self, "paths", paths)
        if not paths:
            raise ScenarioError("a scenario needs at least one path")
        for p in paths:
            if not abs(p.theta_deg) < 90:
                raise ScenarioError(f"path angle {p.theta_deg} outside (-90, 90)")
            if p.delay_s < 0:
                raise ScenarioError("negative path delay")

    @classmethod
    def from_tuples(cls, *items):
        return cls(tuple(Path(*it) for it in items))

    def __len__(self):
        return len(self.paths)

    def __iter__(self):
        return iter(self.paths)

    @property
    def angles_deg(self):
        return np.array([p.theta_deg for p in self.paths], dtype=float)

    @property
    def gains(self):
        return np.array([p.gain for p in self.paths], dtype=complex)

    @property
    def delays_s(self):
        return np.array([p.delay_s for p in self.paths], dtype=float)

    @property
    def los(self):
        return self.paths[0]


def steering_vector(geom, theta_deg):
    """Array response; a scalar angle gives an M-vector, an array of angles
    gives an ``(M, n_angles)`` steering matrix."""
    theta = np.deg2rad(np.asarray(theta_deg, dtype=float))
    m = np.arange(geom.m_elements)
    phase = -2j * np.pi * geom.spacing_m / geom.wavelength * np.multiply.outer(m, np.sin(theta))
    return np.exp(phase)


def steering_derivative(geom, theta_deg):
    """d a / d theta with theta in radians."""
    theta = np.deg2rad(np.asarray(theta_deg, dtype=float))
    m = np.arange(geom.m_elements)
    k = -2j * np.pi * geom.spacing_m / geom.wavelength
    return k * np.multiply.outer(m, np.cos(theta)) * steering_vector(geom, theta_deg)


@dataclass(frozen=True)
class PerturbationModel:
    """Per-element gain/phase error, i.e. the diagonal of P."""

    p_gain_db: float
    p_phase_deg: float
    sampled: np.ndarray

    @property
    def matrix(self):
        return np.diag(self.sampled)


@dataclass(frozen=True)
class CouplingModel:
    c: np.ndarray

    @property
    def matrix(self):
        return self.c


def sample_perturbation(p_gain_db, p_phase_deg, m_elements, rng):
    """Draw P: gain factor uniform on [10^(-g/20), 10^(g/20)], phase uniform
    on [-p, p] degrees, independently per element."""
    if p_gain_db < 0 or p_phase_deg < 0:
        raise ConfigurationError("perturbation bounds must be non-negative")
    lo, hi = 10 ** (-p_gain_db / 20), 10 ** (p_gain_db / 20)
    gain = rng.uniform(lo, hi, m_elements)
    phase = np.deg2rad(rng.uniform(-p_phase_deg, p_phase_deg, m_elements))
    if p_gain_db == 0:
        gain = np.ones(m_elements)
    if p_phase_deg == 0:
        phase = np.zeros(m_elements)
    return PerturbationModel(p_gain_db, p_phase_deg, gain * np.exp(1j * phase))


def identity_perturbation(m_elements):
    return PerturbationModel(0.0, 0.0, np.ones(m_elements, dtype=complex))


def friis_coupling_magnitude(distance_m, wavelength, gain_q=1.0, gain_m=1.0):
    return np.sqrt(gain_q * gain_m * wavelength ** 2 / (4 * np.pi * distance_m) ** 2)


def coupling_matrix(geom, rng=None, phase_sigma=np.sqrt(COUPLING_PHASE_VARIANCE),
                    friis_phase=False):
    """Mutual-coupling matrix with unit diagonal.

    Off-diagonal magnitudes follow the Friis approximation with unit
    (omnidirectional) element gains. Phases are zero-mean Gaussian with
    standard deviation ``phase_sigma``, one draw per inter-element distance,
    so ``C`` is symmetric Toeplitz like the distance-only Friis phase it
    replaces. ``friis_phase=True`` uses ``-2*pi*d/lambda`` instead.
    """
    m = geom.m_elements
    lags = np.arange(1, m)
    dist = lags * geom.spacing_m
    mag = friis_coupling_magnitude(dist, geom.wavelength)
    if friis_phase:
        phase = -2 * np.pi * dist / geom.wavelength
    else:
        if rng is None:
            raise ConfigurationError("random coupling phase needs an rng")
        phase = rng.normal(0.0, phase_sigma, m - 1)
    coeff = np.concatenate(([1.0 + 0j], mag * np.exp(1j * phase)))
    idx = np.abs(np.subtract.outer(np.arange(m), np.arange(m)))
    return CouplingModel(coeff[idx])


def calibration_matrix(m_elements, perturbation=None, coupling=None):
    """C @ P, with missing factors treated as identity."""
    out = np.eye(m_elements, dtype=complex)
    if perturbation is not None:
        out = out * perturbation.sampled[None, :]
    if coupling is not None:
        out = coupling.c @ out
    return out


def _calib_from_arg(calib, m):
    if calib is None:
        return None
    if isinstance(calib, np.ndarray):
        return calib
    perturbation, coupling = calib
    return calibration_matrix(m, perturbation, coupling)


@dataclass(frozen=True)
class RxCapture:
    samples: np.ndarray            # (M, L)
    sample_rate_hz: float
    true_offset: int = 0
    delay_residuals_s: Optional[np.ndarray] = None

    @property
    def n_channels(self):
        return self.samples.shape[0]


def awgn(samples, snr_db, signal_power, rng):
    """Add circular complex Gaussian noise of variance signal_power / snr."""
    samples = np.asarray(samples)
    if np.isinf(snr_db) and snr_db > 0:
        return samples.copy()
    if not signal_power > 0:
        raise ConfigurationError("signal power must be positive")
    var = signal_power / 10 ** (snr_db / 10)
    noise = rng.standard_normal((2,) + samples.shape)
    return samples + np.sqrt(var / 2) * (noise[0] + 1j * noise[1])


def propagate(wave, paths, geom, calib=None, snr_db=np.inf, offset=0, rng=None,
              length=None, signal_power=None):
    """Time-domain multipath reception.

    Each path contributes ``(C P a(theta_p)) * g_p * s(t - tau_p)`` with
    ``tau_p`` rounded to whole samples; the whole response is delayed by
    ``offset`` samples. Noise is scaled so the line-of-sight component has the
    requested per-antenna SNR, its power being ``|g_0|^2`` times the mean
    power of ``s`` over its nonzero support unless ``signal_power`` is given.
    """
    if not isinstance(paths, PathSet):
        paths = PathSet(tuple(paths))
    if offset < 0:
        raise ScenarioError("offset must be non-negative")
    samples = getattr(wave, "samples", wave)
    fs = getattr(wave, "sample_rate_hz", None)
    if fs is None:
        raise ConfigurationError("propagate needs a TimeWaveform with a sample rate")
    samples = np.asarray(samples, dtype=complex)
    m = geom.m_elements

    delays = paths.delays_s * fs
    shifts = np.rint(delays).astype(int)
    residuals = (delays - shifts) / fs
    total = offset + len(samples) + int(shifts.max())
    if length is None:
        length = total
    out = np.zeros((m, length), dtype=complex)

    response = steering_vector(geom, paths.angles_deg) * paths.gains[None, :]
    cal = _calib_from_arg(calib, m)
    if cal is not None:
        response = cal @ response
    for p, shift in enumerate(shifts):
        start = offset + shift
        if start >= length:
            continue
        n = min(len(samples), length - start)
        out[:, start:start + n] += np.outer(response[:, p], samples[:n])

    if not (np.isinf(snr_db) and snr_db > 0):
        if rng is None:
            raise ConfigurationError("noisy propagation needs an rng")
        if signal_power is None:
            from .waveform import active_power
            signal_power = abs(paths.los.gain) ** 2 * active_power(samples)
        out = awgn(out, snr_db, signal_power, rng)
    return RxCapture(out, fs, int(offset), residuals)


def propagate_cells(cells, freqs_hz, paths, geom, calib=None, snr_db=np.inf,
                    signal_power=None, rng=None):
    """Frequency-domain counterpart of :func:`propagate` followed by OFDM
    demodulation.

    ``cells`` is a ``(K, S)`` block of transmitted resource elements sitting
    at baseband offsets ``freqs_hz``; delays become per-subcarrier phase ramps
    (fractional delays are exact here). Returns ``(M, K, S)``.
    ``signal_power`` must be the time-domain line-of-sight power that
    :func:`propagate` would use: with a unitary DFT the per-cell noise
    variance equals the per-sample one, so both routes see the same noise.
    """
    if not isinstance(paths, PathSet):
        paths = PathSet(tuple(paths))
    cells = np.asarray(cells)
    m = geom.m_elements
    response = steering_vector(geom, paths.angles_deg) * paths.gains[None, :]
    cal = _calib_from_arg(calib, m)
    if cal is not None:
        response = cal @ response
    ramps = np.exp(-2j * np.pi * np.outer(paths.delays_s, freqs_hz))        # (P, K)
    out = np.einsum("mp,pk,ks->mks", response, ramps, cells)
    if not (np.isinf(snr_db) and snr_db > 0):
        if rng is None or signal_power is None:
            raise ConfigurationError("noisy propagation needs rng and signal_power")
        out = awgn(out, snr_db, signal_power, rng)
    return out
