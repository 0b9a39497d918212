import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from sfpro import dsp
from sfpro.dsp import StftConfig
from sfpro.errors import ShapeError

CFG = StftConfig()


def _dft_frame(frame):
    m = frame.shape[0]
    k = np.arange(m // 2 + 1)[:, None]
    n = np.arange(m)[None, :]
    return (np.exp(-2j * np.pi * k * n / m) * frame).sum(axis=1)


def test_defaults_give_129_bins():
    assert CFG.bins == 129
    assert CFG.fft_size % CFG.hop == 0


def test_zero_input():
    assert not dsp.stft(np.zeros(1000)).any()


def test_frame_count():
    spec = dsp.stft(np.random.default_rng(0).standard_normal(8000))
    assert spec.shape == (61, 129)


def test_short_signal_rejected():
    with pytest.raises(ShapeError):
        dsp.stft(np.zeros(100))


def test_tone_at_bin_16():
    n = np.arange(2048)
    x = np.cos(2 * np.pi * 16 * n / 256)
    spec = dsp.stft(x)
    mag = dsp.magnitude(spec)
    assert (mag.argmax(axis=1) == 16).all()
    np.testing.assert_allclose(mag[:, 15], mag[:, 16] / 2, rtol=1e-9)
    np.testing.assert_allclose(mag[:, 17], mag[:, 16] / 2, rtol=1e-9)
    oracle = _dft_frame(x[:256] * dsp.hann(256))
    np.testing.assert_allclose(spec[0], oracle, atol=1e-9)


def test_matches_direct_dft(rng):
    x = rng.standard_normal(256 + 3 * 128)
    spec = dsp.stft(x)
    for f in range(spec.shape[0]):
        frame = x[f * 128: f * 128 + 256] * dsp.hann(256)
        np.testing.assert_allclose(spec[f], _dft_frame(frame), atol=1e-9)


def test_round_trip_interior(rng):
    x = rng.standard_normal(8000)
    y = dsp.istft(dsp.stft(x), out_length=8000)
    edge = CFG.fft_size - CFG.hop
    # 8000 is not frame aligned: compare only samples covered by full overlap
    covered = CFG.signal_length(CFG.num_frames(8000)) - edge
    body = slice(edge, covered)
    err = np.abs(y[body] - x[body]).max() / np.abs(x[body]).max()
    assert err < 1e-6


def test_zero_spectrogram_inverse():
    assert not dsp.istft(np.zeros((10, 129), complex)).any()


def test_identity_filter_round_trip(rng):
    x = rng.standard_normal(2048)
    s = dsp.stft(x)
    np.testing.assert_array_equal(dsp.istft(s * (1 + 0j)), dsp.istft(s))


def test_istft_bin_mismatch():
    with pytest.raises(ShapeError):
        dsp.istft(np.zeros((3, 100), complex))


def test_magnitude():
    assert dsp.magnitude(np.array([3 + 4j])).tolist() == [5.0]
    assert not dsp.magnitude(np.zeros((2, 3), complex)).any()


def test_magnitude_oracle(rng):
    s = rng.standard_normal((5, 7)) + 1j * rng.standard_normal((5, 7))
    np.testing.assert_allclose(dsp.magnitude(s), np.abs(s), rtol=0, atol=1e-12)


@given(st.integers(0, 2 ** 32 - 1))
def test_parseval_single_frame(seed):
    x = np.random.default_rng(seed).standard_normal(256)
    xw = x * dsp.hann(256)
    X = dsp.stft(x)[0]
    energy = (np.abs(X[0]) ** 2 + 2 * (np.abs(X[1:-1]) ** 2).sum() + np.abs(X[-1]) ** 2) / 256
    assert abs(energy - (xw ** 2).sum()) <= 1e-9 * (xw ** 2).sum()


@given(st.integers(0, 2 ** 32 - 1), st.floats(-3, 3), st.floats(-3, 3))
def test_linearity(seed, a, b):
    r = np.random.default_rng(seed)
    x, y = r.standard_normal(700), r.standard_normal(700)
    lhs = dsp.stft(a * x + b * y)
    rhs = a * dsp.stft(x) + b * dsp.stft(y)
    assert np.abs(lhs - rhs).max() <= 1e-9 * max(np.abs(rhs).max(), 1e-300) + 1e-12


def test_spectrogram_dump_round_trip(tmp_path, rng):
    s = rng.standard_normal((4, 129)) + 1j * rng.standard_normal((4, 129))
    p = tmp_path / "d.sfspec"
    dsp.write_spectrogram_dump(p, s)
    blob = p.read_bytes()
    assert blob[:7] == b"SFSPEC1"
    assert int.from_bytes(blob[7:11], "little") == 4
    assert int.from_bytes(blob[11:15], "little") == 129
    assert len(blob) == 15 + 4 * 129 * 16
    np.testing.assert_array_equal(dsp.read_spectrogram_dump(p), s)
