import numpy as np
import pytest

from artval import net as nn


def _flat_params(net):
    return [(name, p) for name, p in net.named_params()]


def _loss_at(net, X, y, E=None, loss="mse_logprice"):
    pred = net.forward(X, E, train=True, rng=np.random.default_rng(0))
    fn = nn.bce_loss if loss == "bce" else nn.mse_loss
    value, _ = fn(pred, y)
    return value


def _grad_check(net, X, y, E=None, loss="mse_logprice", eps=1e-4):
    """Central finite differences against analytic gradients; dropout off."""
    net.zero_grad()
    pred = net.forward(X, E, train=True, rng=np.random.default_rng(0))
    fn = nn.bce_loss if loss == "bce" else nn.mse_loss
    _, grad = fn(pred, y)
    net.backward(grad)
    worst = 0.0
    for name, p in _flat_params(net):
        flat = p.value.ravel()
        gflat = p.grad.ravel()
        for k in range(flat.size):
            orig = flat[k]
            flat[k] = orig + eps
            up = _loss_at(net, X, y, E, loss)
            flat[k] = orig - eps
            down = _loss_at(net, X, y, E, loss)
            flat[k] = orig
            fd = (up - down) / (2 * eps)
            rel = abs(fd - gflat[k]) / max(1e-6, abs(fd), abs(gflat[k]))
            worst = max(worst, rel)
    return worst


class TestForward:
    def test_zero_weights_zero_output(self):
        net = nn.MultiModalNet(n_feature=3, d_tabular=4, seed=0)
        for _, p in net.named_params():
            p.value[:] = 0.0
        assert np.allclose(net.forward(np.ones((2, 3))), 0.0)

    def test_layernorm_constant_vector(self):
        ln = nn.LayerNorm(4)
        out = ln.forward(np.full((1, 4), 7.0), train=False, rng=None)
        assert np.allclose(out, 0.0, atol=1e-3)  # (x - mean) = 0 before gain/shift

    def test_hand_computed_tiny_net(self):
        # 2 -> 2 (ReLU) -> head collapsed: check the tabular branch by hand
        net = nn.MultiModalNet(n_feature=2, d_tabular=2, seed=0)
        net.tab_affine.W.value = np.array([[1.0, -1.0], [0.5, 2.0]])
        net.tab_affine.b.value = np.array([0.0, 1.0])
        x = np.array([[2.0, 4.0]])
        pre = x @ net.tab_affine.W.value + net.tab_affine.b.value  # [4, 7]
        assert np.allclose(pre, [[4.0, 7.0]])
        t = net.tab_relu.forward(net.tab_affine.forward(x, False, None), False, None)
        assert np.allclose(t, [[4.0, 7.0]])

    def test_dim_mismatch_named(self):
        net = nn.MultiModalNet(n_feature=3)
        with pytest.raises(nn.NetError, match="tabular branch expects 3"):
            net.forward(np.ones((1, 5)))

    def test_eval_mode_deterministic(self):
        net = nn.MultiModalNet(n_feature=4, d_backbone=6, d_image=3, dropout_p=0.5, seed=1)
        x, e = np.ones((3, 4)), np.ones((3, 6))
        assert np.array_equal(net.forward(x, e), net.forward(x, e))

    def test_batchnorm_eval_uses_running_stats(self):
        bn = nn.BatchNorm(2)
        rng = np.random.default_rng(0)
        for _ in range(20):
            bn.forward(rng.normal(2.0, 3.0, size=(32, 2)), train=True, rng=None)
        a = bn.forward(np.zeros((1, 2)), train=False, rng=None)
        b = bn.forward(np.zeros((5, 2)), train=False, rng=None)  # different batch
        assert np.allclose(a, b[0])


class TestBackward:
    def test_gradients_match_finite_differences(self):
        net = nn.MultiModalNet(
            n_feature=3, d_backbone=4, d_image=2, d_tabular=3, dropout_p=0.0, seed=0
        )
        rng = np.random.default_rng(1)
        X, E, y = rng.normal(size=(5, 3)), rng.normal(size=(5, 4)), rng.normal(size=5)
        assert _grad_check(net, X, y, E) < 1e-4

    def test_classifier_gradients(self):
        net = nn.MultiModalNet(n_feature=3, d_tabular=3, classifier=True, seed=0)
        rng = np.random.default_rng(2)
        X = rng.normal(size=(5, 3))
        y = (rng.random(5) > 0.5).astype(float)
        assert _grad_check(net, X, y, loss="bce") < 1e-4

    def test_zero_gradient_when_prediction_equals_target(self):
        pred = np.array([3.0])
        _, grad = nn.mse_loss(pred, np.array([3.0]))
        assert np.allclose(grad, 0.0)

    def test_adam_no_op_on_zero_gradient(self):
        net = nn.MultiModalNet(n_feature=2, seed=0)
        before = [p.value.copy() for _, p in net.named_params()]
        opt = nn.Adam(net.named_params())
        net.zero_grad()
        opt.step()
        for (_, p), b in zip(net.named_params(), before):
            assert np.array_equal(p.value, b)

    def test_nonfinite_loss_aborts(self):
        net = nn.MultiModalNet(n_feature=2, seed=0)
        net.tab_affine.W.value[:] = 1e300
        opt = nn.Adam(net.named_params())
        with pytest.raises(nn.NetError, match="non-finite"):
            nn.backward_and_step(net, opt, np.full((4, 2), 1e10), np.zeros(4))


class TestTrain:
    def test_learns_linear_function(self):
        rng = np.random.default_rng(0)
        X = rng.normal(size=(400, 3))
        y = X @ np.array([1.0, -2.0, 0.5]) + 5.0
        net = nn.MultiModalNet(n_feature=3, dropout_p=0.0, seed=0)
        cfg = nn.TrainConfig(epochs=200, batch_size=64, dropout_p=0.0, seed=0)
        nn.train(net, X, y, cfg)
        pred = net.forward(X[:360], train=False)
        ss = 1 - np.sum((y[:360] - pred) ** 2) / np.sum((y[:360] - y[:360].mean()) ** 2)
        assert ss > 0.99

    def test_shuffled_labels_no_signal(self):
        rng = np.random.default_rng(1)
        X = rng.normal(size=(300, 3))
        y = rng.permutation(X @ np.array([1.0, -1.0, 2.0]))
        net = nn.MultiModalNet(n_feature=3, dropout_p=0.0, seed=0)
        nn.train(net, X, y, nn.TrainConfig(epochs=30, seed=0))
        val = slice(270, 300)
        pred = net.forward(X[val], train=False)
        r2 = 1 - np.sum((y[val] - pred) ** 2) / np.sum((y[val] - y[val].mean()) ** 2)
        assert abs(r2) < 0.25  # no predictive signal beyond noise

    def test_seeded_loss_curve_reproducible(self):
        rng = np.random.default_rng(2)
        X, y = rng.normal(size=(100, 3)), rng.normal(size=100)
        curves = []
        for _ in range(2):
            net = nn.MultiModalNet(n_feature=3, seed=3)
            res = nn.train(net, X, y, nn.TrainConfig(epochs=5, seed=3))
            curves.append(res.train_curve)
        assert curves[0] == curves[1]

    def test_dropout_expectation(self):
        # inverted scaling: E[train-mode output] matches the eval-mode output
        layer = nn.Dropout(0.5)
        affine = nn.Affine(4, 1, np.random.default_rng(0))
        x = np.ones((1, 4))
        eval_out = affine.forward(layer.forward(x, False, None), False, None)[0, 0]
        rng = np.random.default_rng(1)
        outs = [
            affine.forward(layer.forward(x, True, rng), True, rng)[0, 0] for _ in range(4000)
        ]
        assert np.mean(outs) == pytest.approx(eval_out, abs=0.02 * max(1.0, abs(eval_out)))


class TestFusedEmbedding:
    def test_image_branch_disabled(self):
        net = nn.MultiModalNet(n_feature=3, d_tabular=5, seed=0)
        fused, img = net.extract_fused_embedding(np.ones((2, 3)))
        assert img is None and fused.shape == (2, 5)

    def test_image_part_length(self):
        net = nn.MultiModalNet(n_feature=3, d_backbone=6, d_image=4, seed=0)
        fused, img = net.extract_fused_embedding(np.ones((2, 3)), np.ones((2, 6)))
        assert img.shape == (2, 4) and fused.shape == (2, 100 + 4)

    def test_deterministic_in_eval(self):
        net = nn.MultiModalNet(n_feature=3, d_backbone=6, d_image=4, seed=0)
        a, _ = net.extract_fused_embedding(np.ones((2, 3)), np.ones((2, 6)))
        b, _ = net.extract_fused_embedding(np.ones((2, 3)), np.ones((2, 6)))
        assert np.array_equal(a, b)


class TestCheckpoint:
    def test_round_trip_predictions(self, tmp_path):
        rng = np.random.default_rng(0)
        net = nn.MultiModalNet(n_feature=4, d_backbone=5, d_image=3, seed=0)
        X, E = rng.normal(size=(6, 4)), rng.normal(size=(6, 5))
        nn.train(net, X, rng.normal(size=6), nn.TrainConfig(epochs=2, batch_size=3), image_e=E)
        path = tmp_path / "net.mmnet"
        net.save(path)
        loaded = nn.MultiModalNet.load(path)
        assert np.allclose(net.forward(X, E), loaded.forward(X, E), atol=1e-6)

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad.mmnet"
        path.write_bytes(b"XXXXX" + b"\x00" * 20)
        with pytest.raises(nn.NetError, match="magic"):
            nn.MultiModalNet.load(path)

    def test_truncated(self, tmp_path):
        net = nn.MultiModalNet(n_feature=3, seed=0)
        path = tmp_path / "net.mmnet"
        net.save(path)
        data = path.read_bytes()
        path.write_bytes(data[: len(data) - 10])
        with pytest.raises(nn.NetError, match="truncated"):
            nn.MultiModalNet.load(path)

    def test_tabular_only_structure(self):
        # without the image branch the head input width equals d_tabular
        net = nn.MultiModalNet(n_feature=3, d_tabular=7, seed=0)
        assert net.img_affine is None
        assert net.head[0].W.value.shape[0] == 7
