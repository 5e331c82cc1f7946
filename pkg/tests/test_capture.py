import struct

import numpy as np
import pytest

from srsaoa.capture import (HEADER_SIZE, MAGIC, SnapshotPlan, process_capture, process_samples,
                            read_capture, segment_snapshots, simulate_single_trial,
                            synthesize_capture, write_capture)
from srsaoa.doa import esprit2d
from srsaoa.errors import ConfigurationError, DimensionError, FormatError
from srsaoa.scenario import scenario_from_dict
from srsaoa.waveform import estimate_csi, ofdm_demodulate, reference_slot


def test_round_trip_bit_exact(tmp_path, rng):
    x = (rng.standard_normal((3, 1000)) + 1j * rng.standard_normal((3, 1000))).astype(np.complex64)
    p = tmp_path / "c.iq"
    write_capture(p, x, 61.44e6, 2.4e9, 12.5)
    h, y = read_capture(p)
    assert (h.n_channels, h.n_samples) == (3, 1000)
    assert h.sample_rate_hz == 61.44e6 and h.center_freq_hz == 2.4e9 and h.timestamp == 12.5
    assert y.tobytes() == x.tobytes()


def test_layout_little_endian(tmp_path):
    x = np.array([[1 + 2j, 3 + 4j], [5 + 6j, 7 + 8j]], dtype=np.complex64)
    p = tmp_path / "c.iq"
    write_capture(p, x, 1.0)
    raw = p.read_bytes()
    assert raw[:8] == MAGIC
    assert len(raw) == HEADER_SIZE + 2 * 2 * 8
    # channel-major, I then Q, float32 little-endian
    vals = struct.unpack("<8f", raw[HEADER_SIZE:])
    assert vals == (1, 2, 3, 4, 5, 6, 7, 8)


def test_truncated(tmp_path, rng):
    p = tmp_path / "c.iq"
    write_capture(p, np.ones((2, 10), dtype=np.complex64), 1.0)
    p.write_bytes(p.read_bytes()[:-3])
    with pytest.raises(FormatError) as exc:
        read_capture(p)
    assert "expected 160" in str(exc.value) and "157" in str(exc.value)
    assert exc.value.offset is not None


def test_bad_magic(tmp_path):
    p = tmp_path / "c.iq"
    write_capture(p, np.ones((1, 4), dtype=np.complex64), 1.0)
    raw = bytearray(p.read_bytes())
    raw[0] = ord("X")
    p.write_bytes(bytes(raw))
    with pytest.raises(FormatError) as exc:
        read_capture(p)
    assert exc.value.offset == 0


def test_short_header(tmp_path):
    p = tmp_path / "c.iq"
    p.write_bytes(MAGIC)
    with pytest.raises(FormatError):
        read_capture(p)


def test_header_only(tmp_path):
    p = tmp_path / "c.iq"
    write_capture(p, np.zeros((3, 0), dtype=np.complex64), 1.0)
    h, y = read_capture(p)
    assert y.shape == (3, 0) and h.n_samples == 0


def test_segment_counts():
    fs = 1000.0
    assert len(segment_snapshots(np.zeros((1, 80_000)), SnapshotPlan(), fs)) == 80
    assert len(segment_snapshots(np.zeros((1, 500)), SnapshotPlan(), fs)) == 1
    x = np.arange(30)
    w = segment_snapshots(x, SnapshotPlan(0.01, 0.01), fs)
    assert len(w) == 3 and np.array_equal(np.concatenate(w), x)
    # final partial window dropped
    assert len(segment_snapshots(np.zeros(1005), SnapshotPlan(0.006, 1.0), fs)) == 1
    assert len(segment_snapshots(np.zeros(1010), SnapshotPlan(0.006, 1.0), fs)) == 2
    with pytest.raises(ConfigurationError):
        SnapshotPlan(2.0, 1.0)


def _spec(**kw):
    base = {"paths": [{"theta_deg": 0.0}], "capture": {"snr_db": 25, "n_windows": 10},
            "estimators": ["music", "esprit", "esprit2d"]}
    base.update(kw)
    return scenario_from_dict(base)


@pytest.fixture(scope="module")
def los_capture():
    s = _spec()
    x, offsets = synthesize_capture(s)
    return s, x, offsets


def test_end_to_end_los(los_capture):
    s, x, offsets = los_capture
    res = process_samples(x, s.waveform.sample_rate_hz, s)
    assert [r.index for r in res] == list(range(10))
    for r, off in zip(res, offsets):
        assert not r.flagged
        assert r.slots[0].start == off
        assert len(r.slots) == 11
        for v in r.estimates.values():
            assert abs(v) < 0.5


def test_noise_window_flagged(los_capture):
    s, x, _ = los_capture
    y = x.copy()
    win = x.shape[1] // 10
    rng = np.random.default_rng(0)
    y[:, 3 * win:4 * win] = (0.05 * (rng.standard_normal((3, win))
                                     + 1j * rng.standard_normal((3, win)))).astype(np.complex64)
    a = process_samples(x, s.waveform.sample_rate_hz, s, estimators=["esprit"])
    b = process_samples(y, s.waveform.sample_rate_hz, s, estimators=["esprit"])
    assert b[3].flagged and not b[3].estimates
    for i in range(10):
        if i != 3:
            assert b[i].estimates == a[i].estimates


def test_2d_plumbing_equivalence():
    s = _spec(paths=[{"theta_deg": 5.0}, {"theta_deg": 30.0, "power": 0.5, "delay_s": 1.5e-7}],
              capture={"snr_db": 20, "n_windows": 1})
    x, _ = synthesize_capture(s)
    res = process_samples(x, s.waveform.sample_rate_hz, s, estimators=["esprit2d"])[0]
    cfg = s.waveform
    seq, _ = reference_slot(cfg)
    for slot in res.slots[:3]:
        grids = ofdm_demodulate(np.asarray(x[:, slot.start:slot.start + cfg.slot_length],
                                           dtype=complex), cfg)
        csi = estimate_csi(grids, seq, cfg)
        est = esprit2d(csi, s.geometry, 2, cfg.pilot_spacing_hz)
        assert slot.estimates["esprit2d"] == pytest.approx(est.angles_deg[0], abs=1e-9)


def test_file_equals_single_trial(tmp_path):
    s = _spec(capture={"snr_db": 10, "n_windows": 2})
    x, _ = synthesize_capture(s)
    p = tmp_path / "c.iq"
    write_capture(p, x, s.waveform.sample_rate_hz)
    a = process_capture(p, s)
    b = simulate_single_trial(s)
    for ra, rb in zip(a, b):
        for k in ra.estimates:
            assert abs(ra.estimates[k] - rb.estimates[k]) <= 1e-9


def test_channel_mismatch(los_capture):
    s, x, _ = los_capture
    with pytest.raises(DimensionError):
        process_samples(x[:2], s.waveform.sample_rate_hz, s)
    with pytest.raises(ConfigurationError):
        process_samples(x, 30.72e6, s)


def test_process_workers_ordered(los_capture):
    s, x, _ = los_capture
    a = process_samples(x[:, : x.shape[1] // 2], s.waveform.sample_rate_hz, s, ["esprit"])
    b = process_samples(x[:, : x.shape[1] // 2], s.waveform.sample_rate_hz, s, ["esprit"], workers=2)
    assert [r.index for r in b] == [r.index for r in a]
    assert [r.estimates for r in b] == [r.estimates for r in a]
