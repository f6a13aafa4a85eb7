"""Network math: convolution gradients, masked softmax, Adam, checkpoints."""

from __future__ import annotations

import numpy as np
import pytest

from blastlab import nn
from blastlab.errors import NonFiniteValue, ShapeError


def finite_diff_grad(f, x: np.ndarray, eps: float = 1e-6) -> np.ndarray:
    """Central-difference gradient of scalar f wrt every entry of x."""
    g = np.zeros_like(x, dtype=np.float64)
    flat = x.reshape(-1)
    out = g.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        up = f()
        flat[i] = orig - eps
        down = f()
        flat[i] = orig
        out[i] = (up - down) / (2 * eps)
    return g


class TestConv2d:
    def test_delta_kernel_is_identity(self):
        rng = np.random.default_rng(0)
        x = rng.standard_normal((3, 4, 2))
        k = np.zeros((2, 2, 2, 2))
        k[0, 0, 0, 0] = 1.0
        k[0, 0, 1, 1] = 1.0
        y = nn.conv2d_forward(x, k)
        assert np.allclose(y, x)

    def test_ones_kernel_sums_window(self):
        x = np.arange(4.0).reshape(2, 2, 1)
        k = np.ones((2, 2, 1, 1))
        y = nn.conv2d_forward(x, k)
        assert y[0, 0, 0] == x.sum()      # full window inside the input
        assert y[1, 1, 0] == x[1, 1, 0]   # bottom-right sees only itself

    def test_shape_checks(self):
        x = np.zeros((3, 3, 2))
        with pytest.raises(ShapeError):
            nn.conv2d_forward(x, np.zeros((3, 3, 2, 4)))
        with pytest.raises(ShapeError):
            nn.conv2d_forward(x, np.zeros((2, 2, 5, 4)))

    def test_backward_matches_finite_differences(self):
        rng = np.random.default_rng(42)
        x = rng.standard_normal((2, 4, 3, 2))
        k = rng.standard_normal((2, 2, 2, 3)) * 0.5
        b = rng.standard_normal(3) * 0.1
        w_out = rng.standard_normal((2, 4, 3, 3))  # fixed contraction weights

        def loss():
            return float((nn.conv2d_forward(x, k, b) * w_out).sum())

        dx, dk, db = nn.conv2d_backward(x, k, w_out)
        for got, arr in ((dx, x), (dk, k)):
            want = finite_diff_grad(loss, arr)
            denom = np.maximum(np.abs(want), 1e-8)
            assert (np.abs(got - want) / denom).max() < 1e-4
        want_db = finite_diff_grad(loss, b)
        assert np.allclose(db, want_db, atol=1e-6)


class TestForward:
    def test_zero_params_give_flat_logits_and_zero_value(self):
        params = nn.init_params(3, 3, 2, seed=1)
        for name in params.arrays:
            params.arrays[name] = np.zeros_like(params.arrays[name])
        logits, value = nn.forward(params, np.random.default_rng(0)
                                   .standard_normal((3, 3, 2)).astype(np.float32))
        assert np.allclose(logits, logits[0])
        assert value == 0.0

    def test_masked_softmax_normalizes_over_unmasked(self):
        params = nn.init_params(4, 4, 3, seed=2)
        x = np.random.default_rng(3).standard_normal((4, 4, 3)).astype(np.float32)
        logits, value = nn.forward(params, x)
        assert np.isfinite(value)
        mask = np.zeros(16, bool)
        mask[[1, 5, 6, 10]] = True
        p = nn.masked_softmax(logits, mask)
        assert abs(p.sum() - 1.0) <= 1e-9
        assert (p[~mask] == 0.0).all()

    def test_shape_error_on_wrong_dims(self):
        params = nn.init_params(4, 4, 3, seed=0)
        with pytest.raises(ShapeError):
            nn.forward_batch(params, np.zeros((1, 4, 5, 3), np.float32))

    def test_non_finite_input_caught(self):
        params = nn.init_params(3, 3, 2, seed=0)
        x = np.full((1, 3, 3, 2), np.nan, np.float32)
        with pytest.raises(NonFiniteValue):
            nn.forward_batch(params, x)

    def test_full_network_gradients_match_finite_differences(self):
        # float64 end to end; contracts logits and value with fixed weights
        params = nn.init_params(4, 4, 3, seed=7, dtype=np.float64)
        rng = np.random.default_rng(11)
        x = rng.standard_normal((2, 4, 4, 3))
        wl = rng.standard_normal((2, 16))
        wv = rng.standard_normal(2)

        def loss():
            logits, values, _ = nn.forward_batch(params, x)
            return float((logits * wl).sum() + (values * wv).sum())

        logits, values, cache = nn.forward_batch(params, x, need_cache=True)
        grads = nn.backward_batch(params, cache, wl, wv)
        rng_pick = np.random.default_rng(5)
        for name, arr in params.arrays.items():
            flat = arr.reshape(-1)
            idx = rng_pick.choice(flat.size, size=min(12, flat.size), replace=False)
            for i in idx:
                orig = flat[i]
                eps = 1e-6
                flat[i] = orig + eps
                up = loss()
                flat[i] = orig - eps
                down = loss()
                flat[i] = orig
                want = (up - down) / (2 * eps)
                got = grads[name].reshape(-1)[i]
                denom = max(abs(want), 1e-6)
                assert abs(got - want) / denom < 1e-3, f"{name}[{i}]"


class TestEntropy:
    def test_uniform_entropy(self):
        p = np.full(8, 1 / 8)
        assert abs(nn.masked_entropy(p) - np.log(8)) < 1e-12

    def test_zero_prob_contributes_nothing(self):
        p = np.array([0.5, 0.5, 0.0, 0.0])
        assert abs(nn.masked_entropy(p) - np.log(2)) < 1e-12


class TestAdam:
    def test_zero_grads_leave_params(self):
        params = nn.init_params(3, 3, 2, seed=4)
        state = nn.AdamState.for_params(params)
        grads = {k: np.zeros_like(v) for k, v in params.arrays.items()}
        new_arrays, new_state = nn.adam_step(params.arrays, grads, state, lr=1e-3)
        for name in params.arrays:
            assert (new_arrays[name] == params.arrays[name]).all()
        assert new_state.step == 1

    def test_first_step_closed_form(self):
        p = {"w": np.array([1.0, -2.0, 0.5])}
        g = {"w": np.array([0.3, -0.7, 2.0])}
        state = nn.AdamState(0, {"w": np.zeros(3)}, {"w": np.zeros(3)})
        lr, eps = 1e-2, 1e-8
        new, _ = nn.adam_step(p, g, state, lr=lr, eps=eps)
        # after bias correction the first step is -lr * g / (|g| + eps)
        want = p["w"] - lr * g["w"] / (np.abs(g["w"]) + eps)
        assert np.allclose(new["w"], want, atol=1e-12)

    def test_two_steps_match_hand_recursion(self):
        b1, b2, lr, eps = 0.9, 0.999, 0.05, 1e-8
        g1, g2 = 0.4, -0.2
        p = 1.0
        m = v = 0.0
        for t, g in ((1, g1), (2, g2)):
            m = b1 * m + (1 - b1) * g
            v = b2 * v + (1 - b2) * g * g
            p -= lr * (m / (1 - b1 ** t)) / (np.sqrt(v / (1 - b2 ** t)) + eps)
        arrays = {"w": np.array([1.0])}
        state = nn.AdamState(0, {"w": np.zeros(1)}, {"w": np.zeros(1)})
        arrays, state = nn.adam_step(arrays, {"w": np.array([g1])}, state, lr=lr, eps=eps)
        arrays, state = nn.adam_step(arrays, {"w": np.array([g2])}, state, lr=lr, eps=eps)
        assert abs(arrays["w"][0] - p) < 1e-12

    def test_shape_mismatch_rejected(self):
        state = nn.AdamState(0, {"w": np.zeros(2)}, {"w": np.zeros(2)})
        with pytest.raises(ShapeError):
            nn.adam_step({"w": np.zeros(2)}, {"w": np.zeros(3)}, state, lr=1e-3)


class TestInitAndCheckpoint:
    def test_init_deterministic(self):
        a = nn.init_params(5, 4, 6, seed=9)
        b = nn.init_params(5, 4, 6, seed=9)
        for name in a.arrays:
            assert (a.arrays[name] == b.arrays[name]).all()

    def test_init_seed_changes_params(self):
        a = nn.init_params(5, 4, 6, seed=9)
        b = nn.init_params(5, 4, 6, seed=10)
        assert any((a.arrays[n] != b.arrays[n]).any() for n in a.arrays)

    def test_param_count_matches_architecture(self):
        params = nn.init_params(4, 4, 3, seed=0)
        feat = 16 * 64
        want = (4 * 3 * 32 + 32) + (4 * 32 * 64 + 64) + (4 * 64 * 64 + 64) \
            + (feat * 16 + 16) + (feat * 1 + 1)
        assert params.param_count == want

    def test_checkpoint_round_trip_bit_exact(self, tmp_path):
        legend = ("color0", "color1", "blocker_hp", "goal_value", "teleporter", "container")
        params = nn.init_params(6, 6, 6, channel_legend=legend, seed=3)
        path = tmp_path / "net.ckpt"
        nn.save_checkpoint(params, path)
        loaded = nn.load_checkpoint(path)
        assert loaded.channel_legend == legend
        assert (loaded.height, loaded.width, loaded.in_channels) == (6, 6, 6)
        for name in params.arrays:
            assert loaded.arrays[name].dtype == params.arrays[name].dtype
            assert loaded.arrays[name].tobytes() == params.arrays[name].tobytes()

    def test_checkpoint_rejects_other_files(self, tmp_path):
        path = tmp_path / "junk.ckpt"
        path.write_bytes(b"something else\n")
        with pytest.raises(ShapeError):
            nn.load_checkpoint(path)
