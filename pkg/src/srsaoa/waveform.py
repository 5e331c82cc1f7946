"""
SRS-style uplink slot: Zadoff-Chu comb pilots, OFDM (de)modulation and
least-squares CSI estimation.

Grids are plain ``(n_active_subcarriers, n_slot_symbols)`` complex arrays and
time waveforms are 1-D complex arrays; :class:`TimeWaveform` only bundles the
sample rate where that is useful.
"""

from dataclasses import dataclass
from functools import lru_cache
from math import gcd

import numpy as np

from .errors import ConfigurationError, DimensionError, NumericError

# 38.101 transmission bandwidth configurations (N_RB) for the bandwidths used here.
_NRB_TABLE = {
    (15e3, 20e6): 106,
    (15e3, 50e6): 270,
    (30e3, 20e6): 51,
    (30e3, 50e6): 133,
    (60e3, 20e6): 24,
    (60e3, 50e6): 65,
}


def _largest_prime_le(n):
    for p in range(n, 1, -1):
        if all(p % q for q in range(2, int(p ** 0.5) + 1)):
            return p
    raise ConfigurationError(f"no prime <= {n}")


@dataclass(frozen=True)
class SrsConfig:
    """OFDM numerology and SRS placement.

    Fields left as ``None`` are derived: the active subcarrier count from the
    resource-block table, ``fft_size`` as the smallest power of two holding the
    active band at <= 80% occupancy, and normal cyclic prefixes scaled from the
    144/2048 pattern, with 16*2^mu extra samples on the first symbol of each
    half-subframe.
    """

    numerology_mu: int = 1
    bandwidth_hz: float = 50e6
    comb_ktc: int = 2
    n_srs_symbols: int = 4
    n_slot_symbols: int = 14
    fft_size: int = None
    n_active_subcarriers: int = None
    cp_lengths: tuple = None
    zc_root: int = 26

    def __post_init__(self):
        scs = self.subcarrier_spacing_hz
        n_active = self.n_active_subcarriers
        if n_active is None:
            key = (scs, float(self.bandwidth_hz))
            if key not in _NRB_TABLE:
                raise ConfigurationError(
                    f"no RB table entry for {scs / 1e3:g} kHz / {self.bandwidth_hz / 1e6:g} MHz; "
                    "set n_active_subcarriers explicitly")
            n_active = 12 * _NRB_TABLE[key]
            object.__setattr__(self, "n_active_subcarriers", n_active)
        fft_size = self.fft_size
        if fft_size is None:
            fft_size = 1 << int(np.ceil(np.log2(n_active / 0.8)))
            object.__setattr__(self, "fft_size", fft_size)
        if self.cp_lengths is None:
            normal = int(round(144 * fft_size / 2048))
            extra = int(round(16 * 2 ** self.numerology_mu * fft_size / 2048))
            long_symbols = {0, 7} if self.numerology_mu == 0 else {0}
            cps = tuple(normal + (extra if s in long_symbols else 0)
                        for s in range(self.n_slot_symbols))
            object.__setattr__(self, "cp_lengths", cps)
        else:
            object.__setattr__(self, "cp_lengths", tuple(int(c) for c in self.cp_lengths))
        self._validate()

    def _validate(self):
        if self.n_active_subcarriers <= 0:
            raise ConfigurationError("zero active subcarriers")
        if self.comb_ktc < 1 or self.n_active_subcarriers % self.comb_ktc:
            raise ConfigurationError(
                f"comb {self.comb_ktc} does not divide {self.n_active_subcarriers} subcarriers")
        if not 1 <= self.n_srs_symbols <= self.n_slot_symbols:
            raise ConfigurationError("need 1 <= n_srs_symbols <= n_slot_symbols")
        if self.fft_size < self.n_active_subcarriers:
            raise ConfigurationError("fft_size smaller than the active band")
        if len(self.cp_lengths) != self.n_slot_symbols:
            raise ConfigurationError("one cyclic prefix length per slot symbol required")
        if any(c < 0 or c > self.fft_size for c in self.cp_lengths):
            raise ConfigurationError("cyclic prefix length out of range")
        if self.n_pilots < 2:
            raise ConfigurationError("fewer than two comb positions")

    @property
    def subcarrier_spacing_hz(self):
        return 15e3 * 2 ** self.numerology_mu

    @property
    def sample_rate_hz(self):
        return self.fft_size * self.subcarrier_spacing_hz

    @property
    def n_pilots(self):
        """Comb-occupied subcarriers per SRS symbol."""
        return self.n_active_subcarriers // self.comb_ktc

    @property
    def pilot_spacing_hz(self):
        return self.comb_ktc * self.subcarrier_spacing_hz

    @property
    def n_snapshots(self):
        return self.n_pilots * self.n_srs_symbols

    @property
    def slot_length(self):
        return sum(self.fft_size + cp for cp in self.cp_lengths)

    @property
    def srs_length(self):
        """Samples spanned by the SRS-bearing symbols, prefixes included."""
        return sum(self.fft_size + cp for cp in self.cp_lengths[:self.n_srs_symbols])

    @property
    def slot_duration_s(self):
        return self.slot_length / self.sample_rate_hz

    def subcarrier_indices(self):
        """Signed FFT bin of every active subcarrier (band centred on DC)."""
        return np.arange(self.n_active_subcarriers) - self.n_active_subcarriers // 2

    def pilot_rows(self):
        return np.arange(0, self.n_active_subcarriers, self.comb_ktc)

    def pilot_frequencies_hz(self):
        """Baseband frequency offset of each pilot subcarrier."""
        return self.subcarrier_indices()[self.pilot_rows()] * self.subcarrier_spacing_hz


@dataclass(frozen=True)
class TimeWaveform:
    samples: np.ndarray
    sample_rate_hz: float

    def __len__(self):
        return len(self.samples)


def zadoff_chu(root, length):
    """Zadoff-Chu sequence of odd ``length``: exp(-j*pi*u*k*(k+1)/L)."""
    if gcd(root, length) != 1:
        raise ConfigurationError(f"root {root} is not coprime with length {length}")
    k = np.arange(length)
    return np.exp(-1j * np.pi * root * k * (k + 1) / length)


def generate_srs_sequence(config):
    """Unit-modulus pilot sequence for one SRS symbol.

    The base Zadoff-Chu sequence uses the largest prime not exceeding the
    number of comb positions and is cyclically extended to fill them.
    """
    n = config.n_pilots
    if n < 2:
        raise ConfigurationError("no comb positions")
    base_len = _largest_prime_le(n)
    root = config.zc_root % base_len
    if root == 0:
        raise ConfigurationError(f"zc_root {config.zc_root} is a multiple of {base_len}")
    base = zadoff_chu(root, base_len)
    return base[np.arange(n) % base_len]


def map_to_grid(seq, config):
    seq = np.asarray(seq)
    if seq.shape != (config.n_pilots,):
        raise DimensionError(f"sequence length {seq.shape} != {config.n_pilots} comb positions")
    grid = np.zeros((config.n_active_subcarriers, config.n_slot_symbols), dtype=complex)
    grid[config.pilot_rows(), :config.n_srs_symbols] = seq[:, None]
    return grid


def _check_grid(grid, config):
    if grid.shape[-2:] != (config.n_active_subcarriers, config.n_slot_symbols):
        raise DimensionError(
            f"grid shape {grid.shape} does not match "
            f"({config.n_active_subcarriers}, {config.n_slot_symbols})")


def ofdm_modulate(grid, config):
    """Centered subcarrier mapping, unitary inverse DFT per symbol, CP prepended."""
    grid = np.asarray(grid)
    _check_grid(grid, config)
    bins = config.subcarrier_indices() % config.fft_size
    spectrum = np.zeros((config.fft_size, config.n_slot_symbols), dtype=complex)
    spectrum[bins] = grid
    bodies = np.fft.ifft(spectrum, axis=0, norm="ortho")
    parts = []
    for s, cp in enumerate(config.cp_lengths):
        body = bodies[:, s]
        parts.append(body[config.fft_size - cp:])
        parts.append(body)
    return TimeWaveform(np.concatenate(parts), config.sample_rate_hz)


def _symbol_starts(config):
    starts = []
    pos = 0
    for cp in config.cp_lengths:
        starts.append(pos + cp)
        pos += cp + config.fft_size
    return np.array(starts)


def ofdm_demodulate(wave, config):
    """Strip prefixes, forward DFT per symbol, keep the active band.

    ``wave`` may be a 1-D waveform or an ``(n_channels, slot_length)`` array;
    the result then carries the channel axis first.
    """
    samples = wave.samples if isinstance(wave, TimeWaveform) else np.asarray(wave)
    if samples.shape[-1] != config.slot_length:
        raise DimensionError(
            f"waveform length {samples.shape[-1]} != slot length {config.slot_length}")
    idx = _symbol_starts(config)[:, None] + np.arange(config.fft_size)[None, :]
    bodies = samples[..., idx]                      # (..., n_sym, fft)
    spectra = np.fft.fft(bodies, axis=-1, norm="ortho")
    bins = config.subcarrier_indices() % config.fft_size
    return np.swapaxes(spectra[..., bins], -1, -2)  # (..., n_active, n_sym)


@lru_cache(maxsize=16)
def _reference_slot(config):
    seq = generate_srs_sequence(config)
    wave = ofdm_modulate(map_to_grid(seq, config), config)
    return seq, wave


def reference_slot(config):
    """(pilot sequence, one transmitted slot) for ``config``; cached."""
    return _reference_slot(config)


def active_power(samples):
    """Mean power over the nonzero support of a transmitted waveform."""
    samples = np.asarray(samples)
    mag = np.abs(samples) ** 2
    support = mag > 0
    if not support.any():
        return 0.0
    return float(mag[support].mean())


def estimate_csi(rx_grids, ref_seq, config):
    """Per-pilot least-squares channel estimate, coherently averaged over the
    SRS symbols. Returns an ``(n_pilots, n_antennas)`` matrix."""
    rx_grids = np.asarray(rx_grids)
    if rx_grids.ndim == 2:
        rx_grids = rx_grids[None]
    _check_grid(rx_grids, config)
    ref_seq = np.asarray(ref_seq)
    if ref_seq.shape != (config.n_pilots,):
        raise DimensionError("reference sequence does not match the comb")
    if np.any(ref_seq == 0):
        raise NumericError("reference sequence has zero cells")
    cells = rx_grids[:, config.pilot_rows(), :config.n_srs_symbols]
    return (cells / ref_seq[None, :, None]).mean(axis=2).T


def csi_from_pilots(pilot_obs, ref_seq):
    """Same estimate from pilot-cell observations shaped (M, n_srs, n_pilots)."""
    return (pilot_obs / ref_seq).mean(axis=1).T
