import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from sfpro.deep_filter import apply_deep_filter, deep_filter
from sfpro.errors import ShapeError
from sfpro.gcrn import Gcrn, GcrnConfig, fuse_anchor, gcrn_forward
from sfpro.nn import ops
from sfpro.nn.autograd import Tape, Tensor
from sfpro.nn.gradcheck import directional_check, grad_check
from sfpro.nn.recurrent import gru_cell
from sfpro.speaker import ANCHOR_DIM, SpeakerEncoder, encode_anchor
from sfpro.waveunet import DSBlock, USBlock, WaveUNet, WaveUNetConfig, waveunet_forward


def brute_force_filter(H, X, L, I):  # noqa: E741
    N, K = X.shape
    Y = np.zeros((N, K), complex)
    for n in range(N):
        for k in range(K):
            acc = 0j
            for i in range(-I, I + 1):
                for l in range(-L, L + 1):  # noqa: E741
                    nn, kk = n - l, k - i
                    x = X[nn, kk] if 0 <= nn < N and 0 <= kk < K else 0j
                    acc += np.conj(H[n, k, l + L, i + I]) * x
            Y[n, k] = acc
    return Y


def _zero_params(module):
    for _, p in module.named_parameters():
        p.data = np.zeros_like(p.data)


# --------------------------------------------------------------------------- speaker encoder

def test_anchor_length(rng):
    enc = SpeakerEncoder(rng)
    assert encode_anchor(rng.random((7, 129)), enc).shape == (ANCHOR_DIM,)


def test_single_frame_equals_two_cell_steps(rng):
    enc = SpeakerEncoder(rng)
    frame = rng.random((1, 129))
    out = encode_anchor(frame, enc)
    zero = Tensor(np.zeros((1, 129)))
    f, b = enc.bgru.fwd, enc.bgru.bwd
    hf = gru_cell(Tensor(frame), zero, f.w_ih, f.w_hh, f.b_ih, f.b_hh).data
    hb = gru_cell(Tensor(frame), zero, b.w_ih, b.w_hh, b.b_ih, b.b_hh).data
    np.testing.assert_allclose(out, (hf + hb)[0], atol=1e-12)


def test_anchor_is_mean_of_frame_outputs(rng):
    enc = SpeakerEncoder(rng)
    mag = rng.random((6, 129))
    per_frame = enc.frame_outputs(mag[None]).data[0]
    np.testing.assert_allclose(encode_anchor(mag, enc), per_frame.sum(axis=0) / 6, atol=1e-12)


def test_anchor_wrong_bins(rng):
    with pytest.raises(ShapeError):
        encode_anchor(rng.random((4, 100)), SpeakerEncoder(rng))


def test_anchor_pure_function(rng):
    enc = SpeakerEncoder(rng)
    mag = rng.random((5, 129))
    extended = np.concatenate([mag, rng.random((3, 129))])[:5]
    assert encode_anchor(mag, enc).tobytes() == encode_anchor(extended, enc).tobytes()


# --------------------------------------------------------------------------- waveunet

def test_ds_block_decimation(rng):
    block = DSBlock(1, 4, 15, rng)
    x = Tensor(rng.standard_normal((2, 1, 1024)))
    features, dec = block(x)
    assert dec.shape == (2, 4, 512)
    np.testing.assert_array_equal(dec.data, features.data[:, :, ::2])


def test_ds_block_zero_weights(rng):
    block = DSBlock(1, 4, 15, rng)
    _zero_params(block)
    features, _ = block(Tensor(rng.standard_normal((1, 1, 64))))
    assert not features.data.any()


def test_ds_block_odd_length(rng):
    with pytest.raises(ShapeError):
        DSBlock(1, 2, 15, rng)(Tensor(np.zeros((1, 1, 33))))


def test_upsample_midpoints():
    up = ops.upsample_linear2(Tensor(np.array([[[1.0, 3.0]]])))
    assert up.data.ravel().tolist() == [1.0, 2.0, 3.0, 3.0]


def test_us_block_shapes_and_mismatch(rng):
    block = USBlock(4, 3, 5, 5, rng)
    out = block(Tensor(rng.standard_normal((1, 4, 64))), Tensor(rng.standard_normal((1, 3, 128))))
    assert out.shape == (1, 5, 128)
    with pytest.raises(ShapeError):
        block(Tensor(np.zeros((1, 4, 64))), Tensor(np.zeros((1, 3, 100))))


def test_us_block_gradient(rng):
    block = USBlock(2, 2, 3, 5, rng)
    coarse, skip = Tensor(rng.standard_normal((1, 2, 8))), Tensor(rng.standard_normal((1, 2, 16)))
    w = rng.standard_normal((1, 3, 16))
    params = [p for _, p in block.named_parameters()]
    err = grad_check(lambda c, s, *_: ops.sum_all(block(c, s) * Tensor(w)), [coarse, skip, *params])
    assert err < 1e-5


def test_waveunet_shapes_and_trace(rng):
    net = WaveUNet(WaveUNetConfig(num_layers=4, base_filters=4, filter_growth=4), rng)
    out = waveunet_forward(rng.standard_normal((1, 1, 1024)), net)
    assert out.shape == (1, 1, 1024)
    bottleneck = [t for t in net.trace if t[0] == "bottleneck"][0]
    assert bottleneck[2][-1] == 64
    ds = {t[1]: t[2] for t in net.trace if t[0] == "ds"}
    us = {t[1]: t[2] for t in net.trace if t[0] == "us"}
    assert ds == us  # each decoder level concatenates the matching encoder features


def test_waveunet_zero_output_layer(rng):
    net = WaveUNet(WaveUNetConfig(num_layers=2, base_filters=4, filter_growth=4), rng)
    _zero_params(net.out)
    assert not net(Tensor(rng.standard_normal((1, 1, 64)))).data.any()


def test_waveunet_indivisible_length(rng):
    net = WaveUNet(WaveUNetConfig(), rng)
    with pytest.raises(ShapeError, match="length 1000 not divisible by 16"):
        net(Tensor(np.zeros((1, 1, 1000))))


def test_waveunet_gradient(rng):
    net = WaveUNet(WaveUNetConfig(num_layers=2, base_filters=3, filter_growth=2), rng)
    x = Tensor(rng.standard_normal((1, 1, 32)))
    w = rng.standard_normal((1, 1, 32))
    params = [p for _, p in net.named_parameters()]
    err = directional_check(lambda x, *_: ops.sum_all(net(x) * Tensor(w)), [x, *params],
                            eps=1e-6, rng=rng)
    assert err < 1e-5


# --------------------------------------------------------------------------- gcrn

def test_fuse_anchor_zero_projection(rng):
    x = rng.standard_normal((2, 3, 4, 5))
    out = fuse_anchor(Tensor(x), Tensor(rng.standard_normal((2, 129))), Tensor(np.zeros((3, 129))),
                      Tensor(np.zeros(3)))
    np.testing.assert_array_equal(out.data, x)


def test_fuse_anchor_distinct_anchors(rng):
    x = Tensor(rng.standard_normal((1, 3, 4, 5)))
    w, b = Tensor(rng.standard_normal((3, 129))), Tensor(np.zeros(3))
    a1 = fuse_anchor(x, Tensor(rng.standard_normal((1, 129))), w, b).data
    a2 = fuse_anchor(x, Tensor(rng.standard_normal((1, 129))), w, b).data
    assert not np.allclose(a1, a2)


def test_fuse_anchor_dimension_mismatch(rng):
    with pytest.raises(ShapeError):
        fuse_anchor(Tensor(np.zeros((1, 3, 2, 2))), Tensor(np.zeros((1, 100))),
                    Tensor(np.zeros((3, 129))))


def test_anchor_projection_receives_gradient(rng):
    net = Gcrn(GcrnConfig(encoder_channels=(4, 8), lstm_layers=1, lstm_hidden=8), rng)
    spec = rng.standard_normal((1, 2, 5, 129))
    with Tape() as tape:
        hr, hi = net(spec, rng.standard_normal((1, 129)))
        loss = ops.sum_all(ops.square(hr)) + ops.sum_all(ops.square(hi))
    tape.backward(loss)
    for fuse in list(net.enc_fuse) + list(net.dec_fuse):
        assert np.abs(fuse.weight.grad).sum() > 0


def test_gcrn_output_shape_default_config(rng):
    net = Gcrn(GcrnConfig(), rng)
    h = gcrn_forward(rng.standard_normal((1, 2, 61, 129)), rng.standard_normal((1, 129)), net)
    assert h.shape == (1, 61, 129, 5, 3)
    assert np.iscomplexobj(h)


@pytest.mark.parametrize("frames", [1, 2, 7])
def test_gcrn_any_frame_count_and_skips(rng, frames):
    net = Gcrn(GcrnConfig(encoder_channels=(4, 8, 8), lstm_hidden=8), rng)
    hr, _ = net(rng.standard_normal((1, 2, frames, 129)), rng.standard_normal((1, 129)))
    assert hr.shape == (1, frames, 129, 5, 3)
    assert [level for level, _ in net.skip_shapes] == [2, 1, 0]


def test_gcrn_zero_weights(rng):
    net = Gcrn(GcrnConfig(encoder_channels=(4, 8), lstm_hidden=8), rng)
    _zero_params(net)
    h = gcrn_forward(rng.standard_normal((1, 2, 3, 129)), rng.standard_normal((1, 129)), net)
    assert not np.abs(h).any()


def test_gcrn_input_errors(rng):
    net = Gcrn(GcrnConfig(encoder_channels=(4, 8), lstm_hidden=8), rng)
    with pytest.raises(ShapeError):
        net(np.zeros((1, 2, 3, 128)), np.zeros((1, 129)))
    with pytest.raises(ShapeError):
        net(np.zeros((1, 2, 3, 129)), np.zeros((1, 64)))


def test_gcrn_plus_filter_gradient(rng):
    net = Gcrn(GcrnConfig(encoder_channels=(4, 8), lstm_layers=1, lstm_hidden=8), rng)
    spec = Tensor(rng.standard_normal((1, 2, 4, 129)))
    anchor = rng.standard_normal((1, 129))
    params = [p for _, p in net.named_parameters()]

    def f(s, *_):
        hr, hi = net(s, anchor)
        xr = ops.reshape(ops.strided_slice(s, 1, 0, 1, 1), (1, 4, 129))
        xi = ops.reshape(ops.strided_slice(s, 1, 1, 1, 2), (1, 4, 129))
        yr, yi = deep_filter(hr, hi, xr, xi)
        return ops.sum_all(ops.square(yr)) + ops.sum_all(ops.square(yi))
    assert directional_check(f, [spec, *params], eps=1e-6, rng=rng) < 1e-4


def test_magnitude_input_mode(rng):
    net = Gcrn(GcrnConfig(encoder_channels=(4, 8), lstm_hidden=8, input_mode="magnitude"), rng)
    hr, _ = net(rng.random((1, 1, 3, 129)), rng.standard_normal((1, 129)))
    assert hr.shape == (1, 3, 129, 5, 3)


# --------------------------------------------------------------------------- deep filter

def _rand_complex(rng, shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def test_identity_filter(rng):
    X = _rand_complex(rng, (5, 6))
    H = np.zeros((5, 6, 5, 3), complex)
    H[:, :, 2, 1] = 1.0
    np.testing.assert_array_equal(apply_deep_filter(H, X), X)


def test_conjugated_center_tap(rng):
    X = _rand_complex(rng, (4, 4))
    H = np.zeros((4, 4, 5, 3), complex)
    H[:, :, 2, 1] = 1j
    np.testing.assert_allclose(apply_deep_filter(H, X), -1j * X, atol=1e-15)


def test_brute_force_oracle(rng):
    X = _rand_complex(rng, (4, 4))
    H = _rand_complex(rng, (4, 4, 5, 3))
    assert np.abs(apply_deep_filter(H, X) - brute_force_filter(H, X, 2, 1)).max() < 1e-12


@given(st.integers(0, 2 ** 32 - 1), st.integers(1, 3), st.integers(0, 2))
def test_other_filter_orders(seed, L, I):  # noqa: E741
    r = np.random.default_rng(seed)
    X = _rand_complex(r, (4, 5))
    H = _rand_complex(r, (4, 5, 2 * L + 1, 2 * I + 1))
    assert np.abs(apply_deep_filter(H, X, L, I) - brute_force_filter(H, X, L, I)).max() < 1e-12


@given(st.integers(0, 2 ** 32 - 1))
def test_linearity_in_x(seed):
    r = np.random.default_rng(seed)
    X1, X2 = _rand_complex(r, (4, 5)), _rand_complex(r, (4, 5))
    H = _rand_complex(r, (4, 5, 5, 3))
    a, b = complex(*r.standard_normal(2)), complex(*r.standard_normal(2))
    lhs = apply_deep_filter(H, a * X1 + b * X2)
    rhs = a * apply_deep_filter(H, X1) + b * apply_deep_filter(H, X2)
    assert np.abs(lhs - rhs).max() < 1e-12


@given(st.integers(0, 2 ** 32 - 1))
def test_conjugate_linearity_in_h(seed):
    r = np.random.default_rng(seed)
    X = _rand_complex(r, (4, 5))
    H = _rand_complex(r, (4, 5, 5, 3))
    a = complex(*r.standard_normal(2))
    assert np.abs(apply_deep_filter(a * H, X) - np.conj(a) * apply_deep_filter(H, X)).max() < 1e-12


def test_filter_gradient(rng):
    shape_h = (1, 4, 5, 5, 3)
    ins = [Tensor(rng.standard_normal(s)) for s in (shape_h, shape_h, (1, 4, 5), (1, 4, 5))]
    wr, wi = rng.standard_normal((2, 1, 4, 5))

    def f(hr, hi, xr, xi):
        yr, yi = deep_filter(hr, hi, xr, xi)
        return ops.sum_all(yr * Tensor(wr)) + ops.sum_all(yi * Tensor(wi))
    assert grad_check(f, ins) < 1e-6


def test_filter_shape_mismatch(rng):
    with pytest.raises(ShapeError):
        apply_deep_filter(np.zeros((4, 4, 3, 3)), np.zeros((4, 4)))
