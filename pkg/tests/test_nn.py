import math

import numpy as np
import pytest

from ewer2 import nn


def conv1d_oracle(x, w, b, stride):
    """Nested-loop cross-correlation with "same" padding.

    Deliberately naive: independent of the im2col implementation
    under test.
    """
    n_batch, c_in, t_in = x.shape
    c_out, _, kernel = w.shape
    t_out = math.ceil(t_in / stride)
    pad_total = max((t_out - 1) * stride + kernel - t_in, 0)
    pad_left = pad_total // 2
    xp = np.zeros((n_batch, c_in, t_in + pad_total))
    xp[:, :, pad_left : pad_left + t_in] = x
    y = np.zeros((n_batch, c_out, t_out))
    for bi in range(n_batch):
        for co in range(c_out):
            for t in range(t_out):
                acc = b[co]
                for ci in range(c_in):
                    for k in range(kernel):
                        acc += xp[bi, ci, t * stride + k] * w[co, ci, k]
                y[bi, co, t] = acc
    return y


@pytest.mark.parametrize("kernel,stride,t_in", [
    (5, 1, 20),
    (7, 2, 20),
    (1, 2, 20),
    (1, 1, 20),
    (3, 2, 7),    # odd length, stride > 1
    (4, 3, 10),   # even kernel: left pad gets the smaller share
    (5, 1, 3),    # input shorter than the kernel
    (3, 1, 1),
])
def test_conv1d_matches_nested_loop_oracle(kernel, stride, t_in):
    rng = np.random.default_rng(11)
    layer = nn.Conv1d(3, 4, kernel, stride, rng=rng, dtype=np.float64)
    x = rng.normal(size=(2, 3, t_in))
    got = layer.forward(x)
    want = conv1d_oracle(x, layer.W.data, layer.b.data, stride)
    assert got.shape == want.shape
    np.testing.assert_allclose(got, want, atol=1e-6)


def test_conv1d_output_length_is_ceil():
    rng = np.random.default_rng(0)
    layer = nn.Conv1d(1, 1, 7, 2, rng=rng)
    y = layer.forward(np.zeros((1, 1, 21), dtype=np.float32))
    assert y.shape == (1, 1, 11)


def test_conv1d_rejects_wrong_channel_count():
    layer = nn.Conv1d(3, 4, 5, rng=np.random.default_rng(0))
    with pytest.raises(ValueError):
        layer.forward(np.zeros((1, 2, 10), dtype=np.float32))


def test_dense_identity_weights():
    layer = nn.Dense(2, 2, rng=np.random.default_rng(0), dtype=np.float64)
    layer.W.data[...] = np.eye(2)
    layer.b.data[...] = 0.0
    out = layer.forward(np.array([[3.0, 4.0]]))
    np.testing.assert_array_equal(out, [[3.0, 4.0]])


def test_dense_affine_example():
    layer = nn.Dense(2, 1, rng=np.random.default_rng(0), dtype=np.float64)
    layer.W.data[...] = [[1.0], [1.0]]
    layer.b.data[...] = 0.5
    assert layer.forward(np.array([[1.0, 2.0]]))[0, 0] == pytest.approx(3.5)


def test_dense_relu_blocks_gradient_when_inactive():
    layer = nn.Dense(1, 1, "relu", rng=np.random.default_rng(0), dtype=np.float64)
    layer.W.data[...] = 1.0
    layer.b.data[...] = -5.0
    y = layer.forward(np.array([[1.0]]))
    assert y[0, 0] == 0.0
    layer.backward(np.array([[1.0]]))
    assert layer.W.grad[0, 0] == 0.0


def test_dense_rejects_wrong_width():
    layer = nn.Dense(3, 2, rng=np.random.default_rng(0))
    with pytest.raises(ValueError):
        layer.forward(np.zeros((1, 4), dtype=np.float32))


def test_sigmoid_output_range_and_value():
    layer = nn.Dense(1, 1, "sigmoid", rng=np.random.default_rng(0), dtype=np.float64)
    layer.W.data[...] = 0.0
    layer.b.data[...] = 0.0
    assert layer.forward(np.array([[123.0]]))[0, 0] == pytest.approx(0.5)


def test_embedding_lookup_rows():
    emb = nn.Embedding(4, 3, rng=np.random.default_rng(0), dtype=np.float64)
    emb.table.data[...] = np.arange(12).reshape(4, 3)
    out = emb.forward(np.array([[2, 0]]))
    np.testing.assert_array_equal(out[0, 0], [6.0, 7.0, 8.0])
    np.testing.assert_array_equal(out[0, 1], [0.0, 1.0, 2.0])


def test_embedding_gradient_scatters_and_accumulates():
    emb = nn.Embedding(4, 2, rng=np.random.default_rng(0), dtype=np.float64)
    ids = np.array([[1, 2, 1]])
    emb.forward(ids)
    emb.backward(np.ones((1, 3, 2)))
    np.testing.assert_array_equal(emb.table.grad[1], [2.0, 2.0])  # used twice
    np.testing.assert_array_equal(emb.table.grad[2], [1.0, 1.0])
    np.testing.assert_array_equal(emb.table.grad[0], [0.0, 0.0])  # untouched row
    np.testing.assert_array_equal(emb.table.grad[3], [0.0, 0.0])


def test_embedding_rejects_out_of_range_ids():
    emb = nn.Embedding(4, 2, rng=np.random.default_rng(0))
    with pytest.raises(ValueError):
        emb.forward(np.array([[4]]))
    with pytest.raises(ValueError):
        emb.forward(np.array([[-1]]))


def test_global_max_pool_examples():
    pool = nn.GlobalMaxPool()
    x = np.array([[[3.0, -1.0, 7.0]]])
    assert pool.forward(x)[0, 0] == 7.0
    # length-1 time axis is the identity
    x1 = np.array([[[2.5], [-4.0]]])
    np.testing.assert_array_equal(nn.GlobalMaxPool().forward(x1), [[2.5, -4.0]])


def test_global_max_pool_tie_routes_to_first():
    pool = nn.GlobalMaxPool()
    pool.forward(np.array([[[5.0, 5.0, 1.0]]]))
    dx = pool.backward(np.array([[1.0]]))
    np.testing.assert_array_equal(dx, [[[1.0, 0.0, 0.0]]])


def test_global_max_pool_gradient_hits_argmax_only():
    pool = nn.GlobalMaxPool()
    x = np.array([[[3.0, -1.0, 7.0], [0.0, 9.0, 1.0]]])
    pool.forward(x)
    dx = pool.backward(np.array([[2.0, 5.0]]))
    np.testing.assert_array_equal(dx, [[[0.0, 0.0, 2.0], [0.0, 5.0, 0.0]]])


def test_dropout_eval_is_identity():
    drop = nn.Dropout(0.5, rng=np.random.default_rng(3))
    x = np.random.default_rng(0).normal(size=(4, 6))
    np.testing.assert_array_equal(drop.forward(x, train=False), x)
    np.testing.assert_array_equal(drop.backward(x), x)


def test_dropout_rate_zero_is_identity_even_in_train():
    drop = nn.Dropout(0.0, rng=np.random.default_rng(3))
    x = np.ones((2, 2))
    np.testing.assert_array_equal(drop.forward(x, train=True), x)


def test_dropout_keep_fraction_and_scaling():
    drop = nn.Dropout(0.2, rng=np.random.default_rng(7))
    x = np.ones((100, 1000))
    y = drop.forward(x, train=True)
    kept = np.count_nonzero(y) / y.size
    assert abs(kept - 0.8) < 0.01
    # survivors are scaled by 1 / keep so the expectation is preserved
    np.testing.assert_allclose(y[y != 0], 1.0 / 0.8)
    assert abs(y.mean() - 1.0) < 0.01


def test_dropout_backward_reuses_forward_mask():
    drop = nn.Dropout(0.5, rng=np.random.default_rng(5))
    x = np.ones((8, 8))
    y = drop.forward(x, train=True)
    dx = drop.backward(np.ones_like(x))
    np.testing.assert_array_equal(dx, y)


def test_dropout_rejects_bad_rate():
    with pytest.raises(ValueError):
        nn.Dropout(1.0, rng=np.random.default_rng(0))
    with pytest.raises(ValueError):
        nn.Dropout(-0.1, rng=np.random.default_rng(0))


def test_mse_loss_example():
    loss, grad = nn.mse_loss(np.array([0.0, 1.0]), np.array([0.0, 0.0]))
    assert loss == pytest.approx(0.5)
    np.testing.assert_allclose(grad, [0.0, 1.0])


def test_mse_gradient_matches_finite_differences():
    rng = np.random.default_rng(13)
    pred = rng.normal(size=6)
    target = rng.normal(size=6)
    _, grad = nn.mse_loss(pred, target)
    eps = 1e-6
    for i in range(pred.size):
        bumped = pred.copy()
        bumped[i] += eps
        up, _ = nn.mse_loss(bumped, target)
        bumped[i] -= 2 * eps
        down, _ = nn.mse_loss(bumped, target)
        assert grad[i] == pytest.approx((up - down) / (2 * eps), abs=1e-6)


def test_mse_shape_mismatch_rejected():
    with pytest.raises(ValueError):
        nn.mse_loss(np.zeros(3), np.zeros(4))


def test_adam_zero_gradient_is_noop():
    p = nn.Tensor(np.array([1.0, -2.0]))
    opt = nn.Adam([p], lr=0.1)
    opt.step()
    np.testing.assert_array_equal(p.data, [1.0, -2.0])


def test_adam_first_step_magnitude_is_lr():
    p = nn.Tensor(np.array([1.0]))
    opt = nn.Adam([p], lr=0.01)
    p.grad[...] = 3.0
    opt.step()
    # bias correction makes the first update lr * sign(g) up to eps
    assert p.data[0] == pytest.approx(0.99, abs=1e-6)


def test_adam_is_deterministic():
    def run():
        rng = np.random.default_rng(17)
        p = nn.Tensor(rng.normal(size=8))
        opt = nn.Adam([p], lr=0.05)
        for t in range(20):
            p.grad[...] = np.sin(p.data + t)
            opt.step()
            opt.zero_grad()
        return p.data.copy()

    np.testing.assert_array_equal(run(), run())


def test_tensor_gradients_accumulate_until_cleared():
    layer = nn.Dense(2, 1, rng=np.random.default_rng(0), dtype=np.float64)
    x = np.array([[1.0, 2.0]])
    dy = np.array([[1.0]])
    layer.forward(x)
    layer.backward(dy)
    once = layer.W.grad.copy()
    layer.forward(x)
    layer.backward(dy)
    np.testing.assert_allclose(layer.W.grad, 2 * once)
    layer.W.zero_grad()
    np.testing.assert_array_equal(layer.W.grad, 0.0)


def test_chain_params_are_index_prefixed():
    rng = np.random.default_rng(0)
    chain = nn.Chain([nn.Dense(2, 3, "relu", rng=rng), nn.Dense(3, 1, rng=rng)])
    names = [name for name, _ in chain.params()]
    assert names == ["0.W", "0.b", "1.W", "1.b"]


def test_he_uniform_bounds():
    rng = np.random.default_rng(23)
    layer = nn.Dense(50, 200, "relu", rng=rng)
    limit = math.sqrt(6.0 / 50)
    assert np.abs(layer.W.data).max() <= limit
    assert np.abs(layer.W.data).max() > 0.5 * limit


def test_init_is_seed_deterministic():
    a = nn.Dense(4, 4, rng=np.random.default_rng(99))
    b = nn.Dense(4, 4, rng=np.random.default_rng(99))
    np.testing.assert_array_equal(a.W.data, b.W.data)


# ---------------------------------------------------------------------------
# gradient checking
# ---------------------------------------------------------------------------


def test_grad_check_requires_float64():
    layer = nn.Dense(2, 2, rng=np.random.default_rng(0), dtype=np.float32)
    with pytest.raises(ValueError, match="float64"):
        nn.grad_check(layer, np.zeros((1, 2)), np.zeros((1, 2)))


def test_grad_check_dense_relu():
    rng = np.random.default_rng(31)
    layer = nn.Dense(5, 3, "relu", rng=rng, dtype=np.float64)
    x = rng.normal(size=(4, 5))
    target = rng.normal(size=(4, 3))
    assert nn.grad_check(layer, x, target) < 1e-4


def test_grad_check_dense_sigmoid():
    rng = np.random.default_rng(37)
    layer = nn.Dense(4, 2, "sigmoid", rng=rng, dtype=np.float64)
    x = rng.normal(size=(3, 4))
    target = rng.uniform(size=(3, 2))
    assert nn.grad_check(layer, x, target) < 1e-4


def test_grad_check_conv_pool_dense_stack():
    rng = np.random.default_rng(41)
    chain = nn.Chain([
        nn.Conv1d(2, 3, 3, 2, "relu", rng=rng, dtype=np.float64),
        nn.Conv1d(3, 4, 1, 1, "relu", rng=rng, dtype=np.float64),
        nn.GlobalMaxPool(),
        nn.Dense(4, 1, "sigmoid", rng=rng, dtype=np.float64),
    ])
    x = rng.normal(size=(3, 2, 9))
    target = rng.uniform(size=(3, 1))
    assert nn.grad_check(chain, x, target) < 1e-4


class _EmbedConvNet:
    """Embedding -> conv -> pool -> dense, small enough to finite-difference."""

    def __init__(self, rng):
        self.embed = nn.Embedding(7, 3, rng=rng, dtype=np.float64)
        self.conv = nn.Conv1d(3, 4, 3, 2, "relu", rng=rng, dtype=np.float64)
        self.pool = nn.GlobalMaxPool()
        self.head = nn.Dense(4, 1, "sigmoid", rng=rng, dtype=np.float64)

    def params(self):
        out = [("embed." + n, t) for n, t in self.embed.params()]
        out += [("conv." + n, t) for n, t in self.conv.params()]
        out += [("head." + n, t) for n, t in self.head.params()]
        return out

    def forward(self, ids, train=False):
        e = self.embed.forward(ids, train=train)
        h = self.conv.forward(e.transpose(0, 2, 1), train=train)
        return self.head.forward(self.pool.forward(h), train=train)

    def backward(self, dy):
        dh = self.pool.backward(self.head.backward(dy))
        de = self.conv.backward(dh).transpose(0, 2, 1)
        self.embed.backward(de)
        return None


def test_grad_check_embedding_composite():
    rng = np.random.default_rng(43)
    net = _EmbedConvNet(rng)
    ids = rng.integers(0, 7, size=(2, 5))
    target = rng.uniform(size=(2, 1))
    assert nn.grad_check(net, ids, target) < 1e-3


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------


def test_checkpoint_round_trip_bit_exact(tmp_path):
    rng = np.random.default_rng(53)
    params = [
        ("fusion.0.W", rng.normal(size=(6, 4)).astype(np.float32)),
        ("fusion.0.b", np.array([0.0, -0.0, 1e-38, 3.25], dtype=np.float32)),
        ("acoustic.conv0.W", rng.normal(size=(2, 3, 5)).astype(np.float32)),
    ]
    path = tmp_path / "m.ckpt"
    nn.save_checkpoint(path, params)
    back = nn.load_checkpoint(path)
    assert [n for n, _ in back] == [n for n, _ in params]
    for (_, want), (_, got) in zip(params, back):
        assert got.dtype == np.float32
        assert got.shape == want.shape
        assert np.array_equal(want.view(np.uint32), got.view(np.uint32))


def test_checkpoint_rejects_bad_magic(tmp_path):
    path = tmp_path / "bad.ckpt"
    path.write_bytes(b"NOTACKPT" + b"\x00" * 32)
    with pytest.raises(ValueError, match="magic"):
        nn.load_checkpoint(path)


def test_checkpoint_rejects_truncation(tmp_path):
    path = tmp_path / "m.ckpt"
    nn.save_checkpoint(path, [("w", np.ones((4, 4), dtype=np.float32))])
    blob = path.read_bytes()
    path.write_bytes(blob[:-9])
    with pytest.raises(ValueError):
        nn.load_checkpoint(path)


def test_checkpoint_rejects_unknown_version(tmp_path):
    path = tmp_path / "m.ckpt"
    nn.save_checkpoint(path, [("w", np.ones(2, dtype=np.float32))])
    blob = bytearray(path.read_bytes())
    blob[len(nn.CHECKPOINT_MAGIC)] = 99
    path.write_bytes(bytes(blob))
    with pytest.raises(ValueError, match="version"):
        nn.load_checkpoint(path)
