"""
MUSIC, least-squares ESPRIT and joint angle-delay (2D) ESPRIT, line-of-sight
selection among multiple estimates, and the single-source Cramer-Rao bound.
"""

from dataclasses import dataclass
from functools import lru_cache
from typing import Optional

import numpy as np

from .array import steering_vector, steering_derivative
from .errors import OrderError

DEFAULT_GRID_STEP_DEG = 0.01


@dataclass
class AngleEstimate:
    angles_deg: np.ndarray
    paired_delays_s: Optional[np.ndarray] = None
    selected_los_deg: Optional[float] = None
    resolved: bool = True          # False when MUSIC found fewer than k peaks
    out_of_range: bool = False     # an arcsin argument had to be clamped

    def __len__(self):
        return len(self.angles_deg)


@dataclass
class MusicSpectrum:
    grid_deg: np.ndarray
    pseudo_spectrum: np.ndarray


@lru_cache(maxsize=8)
def _grid(step):
    n = int(round(90 / step))
    return np.arange(-n + 1, n) * step


@lru_cache(maxsize=8)
def _grid_steering(geom, step):
    return steering_vector(geom, _grid(step))


def _check_order(k, m):
    if not 1 <= k <= m - 1:
        raise OrderError(f"order {k} not in [1, {m - 1}] for {m} elements")


def _null_spectrum(us, a):
    """||U_n^H a||^2 computed as M - ||U_s^H a||^2 (orthonormal eigenvectors)."""
    proj = us.conj().T @ a
    val = np.sum(np.abs(a) ** 2, axis=0) - np.sum(np.abs(proj) ** 2, axis=0)
    return np.maximum(val, 1e-300)


def music(eig, geom, k, grid_step_deg=DEFAULT_GRID_STEP_DEG):
    """Grid search of 1 / (a^H U_n U_n^H a) over (-90, 90) degrees.

    The k largest local maxima are refined by fitting a parabola through the
    three grid values of the denominator around each peak.
    """
    m = eig.m
    _check_order(k, m)
    grid = _grid(grid_step_deg)
    us = eig.signal_subspace(k)
    null = _null_spectrum(us, _grid_steering(geom, grid_step_deg))
    spectrum = 1.0 / null

    inner = np.flatnonzero((null[1:-1] < null[:-2]) & (null[1:-1] <= null[2:])) + 1
    order = inner[np.argsort(null[inner], kind="stable")][:k]
    angles = []
    for i in order:
        f0, f1, f2 = null[i - 1], null[i], null[i + 1]
        denom = f0 - 2 * f1 + f2
        shift = 0.5 * (f0 - f2) / denom if denom > 0 else 0.0
        angles.append(grid[i] + np.clip(shift, -0.5, 0.5) * grid_step_deg)
    angles = np.sort(np.array(angles, dtype=float))
    est = AngleEstimate(angles, resolved=len(angles) == k)
    return MusicSpectrum(grid, spectrum), est


def _phase_to_angle(phase, geom):
    arg = -phase * geom.wavelength / (2 * np.pi * geom.spacing_m)
    clipped = np.clip(arg, -1.0, 1.0)
    return np.rad2deg(np.arcsin(clipped)), bool(np.any(np.abs(arg) > 1.0))


def esprit(eig, geom, k):
    """Least-squares ESPRIT on the two maximally overlapping subarrays."""
    _check_order(k, eig.m)
    s = eig.signal_subspace(k)
    rot, *_ = np.linalg.lstsq(s[:-1], s[1:], rcond=None)
    phases = np.angle(np.linalg.eigvals(rot))
    angles, clipped = _phase_to_angle(phases, geom)
    return AngleEstimate(np.sort(angles), out_of_range=clipped)


def hankel_stack(csi, m1, m2=1):
    """Stack m1 subcarrier-shifted and m2 antenna-shifted copies of the CSI.

    Rows are indexed (subcarrier shift j, antenna m) with m fastest, columns
    (antenna shift, subcarrier start). Shape ``(m1 * (M - m2 + 1),
    m2 * (K - m1 + 1))``.
    """
    csi = np.asarray(csi)
    n_sc, m = csi.shape
    ms = m - m2 + 1
    cols = n_sc - m1 + 1
    if m1 < 1 or m2 < 1 or ms < 1 or cols < 1:
        raise OrderError(f"cannot stack m1={m1}, m2={m2} on a {n_sc}x{m} CSI matrix")
    blocks = []
    for a in range(m2):
        rows = [csi[j:j + cols, a:a + ms].T for j in range(m1)]   # each (ms, cols)
        blocks.append(np.concatenate(rows, axis=0))
    return np.concatenate(blocks, axis=1)


def esprit2d(csi, geom, k, pilot_spacing_hz, m1=5, m2=1, rank_tol=1e-9):
    """Joint angle-delay ESPRIT on a ``(n_pilots, M)`` CSI matrix.

    The signal subspace of the Hankel-stacked data gives two shift
    invariances, across antennas (eigenvalues exp(-j 2 pi d sin(theta)/lambda))
    and across pilot subcarriers (eigenvalues exp(-j 2 pi tau df)). Both
    rotation operators share eigenvectors; diagonalising a fixed combination
    of them pairs each angle with its delay.
    """
    if k < 1:
        raise OrderError("order must be at least 1")
    x = hankel_stack(csi, m1, m2)
    ms = geom.m_elements - m2 + 1
    if x.shape[0] <= k:
        raise OrderError(f"stacked row count {x.shape[0]} must exceed order {k}")
    if ms < 2 or m1 < 2:
        raise OrderError("need at least two antennas and two subcarrier shifts after stacking")

    v, sv, _ = np.linalg.svd(x, full_matrices=False)
    rank = int(np.sum(sv > rank_tol * sv[0])) if sv[0] > 0 else 0
    if k > rank:
        raise OrderError(f"order {k} exceeds numerical rank {rank}", rank=rank)
    u = v[:, :k]

    idx = np.arange(m1 * ms).reshape(m1, ms)
    ant1, ant2 = idx[:, :-1].ravel(), idx[:, 1:].ravel()
    dly1, dly2 = idx[:-1, :].ravel(), idx[1:, :].ravel()
    phi_ant, *_ = np.linalg.lstsq(u[ant1], u[ant2], rcond=None)
    phi_dly, *_ = np.linalg.lstsq(u[dly1], u[dly2], rcond=None)

    _, t = np.linalg.eig(phi_dly + 0.5 * phi_ant)
    t_inv = np.linalg.inv(t)
    xi = np.diag(t_inv @ phi_ant @ t)
    psi = np.diag(t_inv @ phi_dly @ t)

    angles, clipped = _phase_to_angle(np.angle(xi), geom)
    delays = -np.angle(psi) / (2 * np.pi * pilot_spacing_hz)
    order = np.argsort(delays, kind="stable")
    return AngleEstimate(angles[order], paired_delays_s=delays[order], out_of_range=clipped)


def beamformer_power(r, geom, theta_deg):
    a = steering_vector(geom, np.atleast_1d(theta_deg))
    return np.real(np.einsum("mi,mn,ni->i", a.conj(), r, a))


def pair_correlation(csi, geom, theta_deg, delay_s, pilot_spacing_hz):
    """Matched-filter power of the CSI against one angle-delay pair."""
    n_sc = csi.shape[0]
    ramp = np.exp(-2j * np.pi * np.arange(n_sc) * pilot_spacing_hz * delay_s)
    a = steering_vector(geom, theta_deg)
    return float(np.abs(ramp.conj() @ csi @ a.conj()) ** 2)


def select_los(estimate, geom=None, covariance=None, csi=None, pilot_spacing_hz=None,
               delay_tol_s=1e-9):
    """Pick the line-of-sight angle among the candidates.

    Angle-only estimates: the candidate with the largest conventional
    beamformer output a^H R a. Angle-delay pairs: the smallest delay, with
    pairs within ``delay_tol_s`` of it decided by CSI correlation power.
    """
    angles = np.asarray(estimate.angles_deg, dtype=float)
    if len(angles) == 0:
        raise OrderError("no candidate angles")
    if len(angles) == 1:
        chosen = float(angles[0])
    elif estimate.paired_delays_s is not None:
        delays = np.asarray(estimate.paired_delays_s)
        tied = np.flatnonzero(delays <= delays.min() + delay_tol_s)
        if len(tied) > 1 and csi is not None:
            powers = [pair_correlation(csi, geom, angles[i], delays[i], pilot_spacing_hz)
                      for i in tied]
            chosen = float(angles[tied[int(np.argmax(powers))]])
        else:
            chosen = float(angles[tied[0]])
    else:
        if covariance is None or geom is None:
            raise ValueError("beamformer selection needs geometry and covariance")
        chosen = float(angles[int(np.argmax(beamformer_power(covariance, geom, angles)))])
    estimate.selected_los_deg = chosen
    return chosen


def crb_single_source(geom, snr_db, n_snapshots, theta_deg):
    """Deterministic CRB (degrees^2) for one source with unknown complex
    amplitude per snapshot: 1 / (2 N snr ||P_a^perp da/dtheta||^2).

    ``snr_db`` is the per-element, per-snapshot SNR.
    """
    snr = 10 ** (snr_db / 10)
    a = steering_vector(geom, theta_deg)
    da = steering_derivative(geom, theta_deg)
    proj = da - a * (a.conj() @ da) / (a.conj() @ a)
    info = 2 * n_snapshots * snr * np.real(proj.conj() @ proj)
    return float(np.rad2deg(1.0) ** 2 / info)
