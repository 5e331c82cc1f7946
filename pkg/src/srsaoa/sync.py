"""Slot timing by cross-correlation against the stored replica."""

import numpy as np
from scipy import signal

from .errors import DimensionError

# Above this capture length the correlation goes through the FFT.
DIRECT_LIMIT = 4096


def correlation(rx, replica, method="auto"):
    """|sum_i conj(replica[i]) * rx[k + i]| for every valid lag k."""
    rx = np.asarray(rx)
    replica = np.asarray(replica)
    if replica.ndim != 1 or rx.ndim != 1:
        raise DimensionError("correlation expects 1-D inputs")
    if len(replica) < 1 or len(rx) < len(replica):
        raise DimensionError(
            f"replica ({len(replica)} samples) longer than capture ({len(rx)})")
    if method == "auto":
        method = "fft" if len(rx) > DIRECT_LIMIT else "direct"
    # scipy.signal.correlate(in1, in2)[k] = sum_i in1[k+i] * conj(in2[i]) in 'valid' mode
    return np.abs(signal.correlate(rx, replica, mode="valid", method=method))


def detect_offset(rx, replica, method="auto"):
    """Index of the largest correlation peak; ties go to the smallest lag."""
    return int(np.argmax(correlation(rx, replica, method)))


def multichannel_correlation(rx, replica, method="auto"):
    samples = getattr(rx, "samples", rx)
    samples = np.asarray(samples)
    if samples.ndim != 2 or samples.shape[0] == 0:
        raise DimensionError("capture has no channels")
    return sum(correlation(ch, replica, method) for ch in samples)


def detect_offset_multichannel(rx, replica, method="auto"):
    """Per-channel correlation magnitudes are summed before the argmax."""
    return int(np.argmax(multichannel_correlation(rx, replica, method)))
