"""
Frequency-domain snapshots, sample covariance, eigendecomposition and
channel-order selection (AIC, MDL, ECOD).
"""

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, NumericError

EIGEN_FLOOR = 1e-30


@dataclass(frozen=True)
class EigenDecomposition:
    values: np.ndarray    # descending
    vectors: np.ndarray   # columns aligned with values

    @property
    def m(self):
        return len(self.values)

    def signal_subspace(self, k):
        return self.vectors[:, :k]

    def noise_subspace(self, k):
        return self.vectors[:, k:]


def snapshots_from_grid(rx_grids, config):
    """One column per (SRS symbol, comb subcarrier), symbol-major."""
    rx_grids = np.asarray(rx_grids)
    if rx_grids.ndim != 3:
        raise DimensionError("expected (antennas, subcarriers, symbols) grids")
    if rx_grids.shape[1:] != (config.n_active_subcarriers, config.n_slot_symbols):
        raise DimensionError(f"grid shape {rx_grids.shape[1:]} does not match the configuration")
    cells = rx_grids[:, config.pilot_rows(), :config.n_srs_symbols]    # (M, K, S)
    return np.swapaxes(cells, 1, 2).reshape(rx_grids.shape[0], -1)


def snapshots_from_pilots(pilot_obs):
    """(M, S, K) pilot-cell observations -> (M, S*K) snapshot matrix."""
    pilot_obs = np.asarray(pilot_obs)
    return pilot_obs.reshape(pilot_obs.shape[0], -1)


def covariance(y):
    """Sample covariance (1/N) Y Y^H, made exactly Hermitian."""
    y = np.asarray(y)
    if y.ndim == 1:
        y = y[:, None]
    n = y.shape[1]
    if n < 1:
        raise DimensionError("covariance needs at least one snapshot")
    if n < y.shape[0]:
        warnings.warn(f"{n} snapshots for {y.shape[0]} antennas: rank-deficient covariance",
                      RuntimeWarning, stacklevel=2)
    r = y @ y.conj().T / n
    return 0.5 * (r + r.conj().T)


def eigen_sorted(r, tol=1e-10):
    r = np.asarray(r)
    scale = max(1.0, float(np.abs(r).max(initial=0.0)))
    if r.ndim != 2 or r.shape[0] != r.shape[1]:
        raise DimensionError("covariance must be square")
    if np.abs(r - r.conj().T).max(initial=0.0) > tol * scale:
        raise NumericError("matrix is not Hermitian")
    values, vectors = np.linalg.eigh(r)
    return EigenDecomposition(values[::-1].copy(), vectors[:, ::-1].copy())


def likelihood_l(values, k, normalizer="standard"):
    """Ratio of geometric to arithmetic mean of the M-k smallest eigenvalues.

    ``normalizer="printed"`` divides the sum by M-1 instead of M-k, which is
    kept only for comparing curves against that variant.
    """
    z = np.asarray(values, dtype=float)
    m = len(z)
    if not 0 <= k < m:
        raise ValueError(f"k={k} outside [0, {m})")
    tail = z[k:]
    if np.any(tail <= 0):
        warnings.warn("non-positive eigenvalue clamped", RuntimeWarning, stacklevel=2)
        tail = np.maximum(tail, EIGEN_FLOOR)
    arith = tail.mean()
    if normalizer == "standard":
        if tail.max() == tail.min():
            return 1.0
        # ratio taken inside the log so equal eigenvalues give exactly 1;
        # the clip removes rounding excess above the AM-GM bound
        return float(min(np.exp(np.mean(np.log(tail / arith))), 1.0))
    geo = np.exp(np.mean(np.log(tail)))
    return float(geo / (tail.sum() / (m - 1)))


def _criterion(values, n_snapshots, penalty, normalizer):
    z = np.sort(np.asarray(values, dtype=float))[::-1]
    m = len(z)
    costs = np.empty(m)
    for k in range(m):
        costs[k] = -2 * n_snapshots * (m - k) * np.log(likelihood_l(z, k, normalizer)) + penalty(k, m)
    return costs


def aic_costs(values, n_snapshots, normalizer="standard"):
    return _criterion(values, n_snapshots, lambda k, m: 2 * k * (2 * m - k), normalizer)


def mdl_costs(values, n_snapshots, normalizer="standard"):
    log_n = np.log(n_snapshots)
    return _criterion(values, n_snapshots, lambda k, m: 0.5 * k * (2 * m - k) * log_n, normalizer)


def aic_order(values, n_snapshots, normalizer="standard"):
    if n_snapshots < 1:
        raise ValueError("n_snapshots must be >= 1")
    # argmin returns the first minimum, i.e. ties go to the smaller order
    return int(np.argmin(aic_costs(values, n_snapshots, normalizer)))


def mdl_order(values, n_snapshots, normalizer="standard"):
    if n_snapshots < 1:
        raise ValueError("n_snapshots must be >= 1")
    return int(np.argmin(mdl_costs(values, n_snapshots, normalizer)))


def ecod_values(values):
    z = np.sort(np.asarray(values, dtype=float))[::-1]
    out = np.ones(len(z))
    for l in range(1, len(z)):
        if z[l] <= z[l - 1] / 3:
            out[l] = z[l] / (z[l - 1] - 2 * z[l])
    return out


def ecod_order(values):
    """Eigenvalue-ratio criterion; returns the first index of the minimum."""
    return int(np.argmin(ecod_values(values)))


ORDER_CRITERIA = {
    "aic": lambda values, n: aic_order(values, n),
    "mdl": lambda values, n: mdl_order(values, n),
    "ecod": lambda values, n: ecod_order(values),
}


def estimate_order(values, n_snapshots, criterion):
    try:
        fn = ORDER_CRITERIA[criterion]
    except KeyError:
        raise ValueError(f"unknown order criterion {criterion!r}") from None
    return fn(values, n_snapshots)


def diagonal_load(r, factor=1e-12):
    """R + factor * trace(R)/M * I, for exactly singular constructed covariances."""
    r = np.asarray(r)
    m = r.shape[0]
    return r + factor * np.real(np.trace(r)) / m * np.eye(m)
