import numpy as np
import pytest

from pnft.channel import Waveform
from pnft.rx_dsp import (DecisionReport, RxError, ber, cfo_compensate, decide,
                         dispersion_compensate, evm, match_points, receive_frame,
                         schmidl_cox_sync, slice_and_normalize, spectral_distance)
from pnft.signal_design import assemble_frame, labels_to_bits, schmidl_cox_preamble


def _embedded(rng, n=4096, at=1000, half=32, rate=64e9):
    x = 0.3 * (rng.normal(size=n) + 1j * rng.normal(size=n))
    pre = schmidl_cox_preamble(2 * half, seed=5)
    x[at:at + 2 * half] = pre
    return Waveform(x, rate), pre


def test_sync_exact_offset(rng):
    w, pre = _embedded(rng)
    off, cfo = schmidl_cox_sync(w, 32, reference=pre)
    assert off == 1000
    assert abs(cfo) < 2e8
    # carried timing: restricted search still finds it, a wrong window does not
    assert schmidl_cox_sync(w, 32, reference=pre, expected=1010, search_radius=20)[0] == 1000
    with pytest.raises(RxError):
        schmidl_cox_sync(w, 32, reference=pre, expected=3000, search_radius=20)


def test_sync_plateau_without_reference(rng):
    w, _ = _embedded(rng)
    off, _ = schmidl_cox_sync(w, 32, plateau_tol=0.05)
    assert abs(off - 1000) <= 4


def test_sync_cfo_estimate(rng):
    w, pre = _embedded(rng)
    t = np.arange(len(w)) * w.dt
    shifted = w.with_samples(w.samples * np.exp(2j * np.pi * 100e6 * t))
    off, cfo = schmidl_cox_sync(shifted, 32, reference=pre)
    assert off == 1000
    assert abs(cfo / 100e6 - 1) < 0.01


def test_sync_rejects_noise(rng):
    x = rng.normal(size=4096) + 1j * rng.normal(size=4096)
    w = Waveform(x, 64e9)
    with pytest.raises(RxError):
        schmidl_cox_sync(w, 32, reference=schmidl_cox_preamble(64, seed=5))
    with pytest.raises(RxError):
        schmidl_cox_sync(w, 4000)


def test_cfo_compensate_roundtrip(rng):
    x = rng.normal(size=256) + 1j * rng.normal(size=256)
    w = Waveform(x, 10e9)
    y = cfo_compensate(cfo_compensate(w, 1.3e8), -1.3e8)
    assert np.allclose(y.samples, x, atol=1e-13)
    tone = cfo_compensate(Waveform(np.ones(256, complex), 10e9), -1e9)
    assert np.argmax(np.abs(np.fft.fft(tone.samples))) == round(1e9 / 10e9 * 256)


def test_dispersion_compensate_inverts_linear_fiber(rng):
    x = rng.normal(size=512) + 1j * rng.normal(size=512)
    w = Waveform(x, 64e9)
    om = 2 * np.pi * np.fft.fftfreq(512, d=w.dt)
    b = -21.7e-27 * 5e5
    y = w.with_samples(np.fft.ifft(np.fft.fft(x) * np.exp(0.5j * b * om ** 2)))
    assert np.allclose(dispersion_compensate(y, b).samples, x, atol=1e-12)


def test_slice_loopback(table):
    labels = ["00", "11", "10", "01", "10"]
    w = assemble_frame(table, labels_to_bits(labels), preamble=False)
    cp = table.cp_len
    segs = slice_and_normalize(w, table, 5, oversample_to=table.body_len, window_offset=cp)
    for seg, lab in zip(segs, labels):
        s = table.by_label(lab)
        ref = np.roll(s.body_samples, -s.join_index)
        # equal up to the constant phase added at assembly
        ph = np.vdot(ref, seg) / abs(np.vdot(ref, seg))
        assert np.max(np.abs(seg - ref * ph)) < 1e-10


def test_slice_errors(table):
    w = assemble_frame(table, labels_to_bits(["00"] * 3), preamble=False)
    with pytest.raises(RxError):
        slice_and_normalize(w, table, 4)
    with pytest.raises(RxError):
        slice_and_normalize(w, table, 1, window_offset=64)
    odd = Waveform(w.samples, w.sample_rate * 1.5)
    with pytest.raises(RxError):
        slice_and_normalize(odd, table, 1)


def test_match_points():
    a = np.array([1 + 1j, 2j, -1 + 0.5j])
    d, p = match_points(a, a[[2, 0, 1]])
    assert d == 0.0 and p == (1, 2, 0)
    assert spectral_distance(a, a + 0.1) == pytest.approx(3 * 0.01)


def test_decide(table, rng):
    for s in table.symbols:
        pts = np.array(s.spectrum.points)
        lab, d, ok = decide(pts, table)
        assert lab == s.bits and d == 0.0 and ok
        lab, _, _ = decide(pts[rng.permutation(3)], table)
        assert lab == s.bits
        noisy = pts + 0.01 * (rng.normal(size=3) + 1j * rng.normal(size=3))
        assert decide(noisy, table)[0] == s.bits
    lab, d, ok = decide(np.array(table.symbols[2].spectrum.points[:2]), table)
    assert not ok and np.isfinite(d)
    assert decide(np.array([]), table)[1] == np.inf


def test_evm():
    tx = [np.array([1 + 1j, 2j, -1 + 0.5j])] * 4
    assert evm(tx, tx) == 0.0
    rx = [t + 0.1 for t in tx]
    e1 = evm(tx, rx)
    e2 = evm(tx, [t + 0.2 for t in tx])
    assert e2 == pytest.approx(2 * e1)
    rms = np.sqrt(np.mean(np.abs(tx[0]) ** 2))
    assert e1 == pytest.approx(0.1 / rms)
    with pytest.raises(RxError):
        evm([], [])


def test_ber():
    assert ber([0, 1, 1, 0], [0, 1, 1, 0]) == 0.0
    assert ber([0, 1, 1, 0], [1, 1, 1, 0]) == 0.25
    assert ber([0, 0], [1, 1]) == 1.0
    with pytest.raises(RxError):
        ber([0, 1], [0])
    with pytest.raises(RxError):
        ber([], [])
    with pytest.raises(RxError):
        DecisionReport(np.zeros(2), np.zeros(2), [], 1.5, 0.0)


def test_back_to_back_repeated_symbols(table):
    labels = ["00", "01", "10", "11"] * 25
    bits = labels_to_bits(labels)
    w = assemble_frame(table, bits)
    # the frame is circular, so a rotation must not matter
    w = w.with_samples(np.roll(w.samples, 777))
    rep = receive_frame(w, table, bits)
    assert rep.meta["offset"] == 777
    assert rep.ber == 0.0 and rep.symbol_errors == 0
    assert rep.evm < 1e-3
    assert rep.meta["unreliable"] == 0
