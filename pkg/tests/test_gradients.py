"""Finite-difference verification of every backward rule (64-bit mode).

Each primitive is wrapped into a scalar loss and checked along random
directions with central differences at step 1e-4, plus coordinate spot
checks. Inputs are sampled away from kinks (lrelu at 0, clamp boundaries).
"""

import numpy as np
import pytest

from lumidec.autodiff import (
    Tape,
    Tensor,
    absolute,
    add,
    add_scalar,
    arccos,
    avgpool2,
    clamp,
    concat_channels,
    conv2d,
    div,
    forward_diff_x,
    forward_diff_y,
    layer_norm,
    lrelu,
    mean,
    mul,
    pow_elementwise,
    resize_nearest2x,
    scale,
    sigmoid,
    sqrt,
    sub,
    sum_channels,
    sum_sq_norm,
)

from oracles import coordinate_fd, directional_fd, rel_err

REL_TOL = 1e-5
FD_STEP = 1e-4
SEEDS = range(5)


def check_gradients(make_inputs, forward, seeds=SEEDS, n_dirs=3, n_coords=4):
    """Verify tape gradients of scalar-valued ``forward`` against central FD."""
    for seed in seeds:
        rng = np.random.default_rng(seed)
        raw = make_inputs(rng)
        tensors = [Tensor(a, requires_grad=True, dtype=np.float64) for a in raw]
        with Tape() as tape:
            loss = forward(*tensors)
        grads = tape.backward(loss)
        analytic = [grads[t].data for t in tensors]

        def f(*arrays):
            ts = [Tensor(a, dtype=np.float64) for a in arrays]
            return forward(*ts).item()

        for _ in range(n_dirs):
            dirs = [rng.normal(size=a.shape) for a in raw]
            dirs = [d / (np.linalg.norm(d.ravel()) + 1e-12) for d in dirs]
            fd = directional_fd(f, raw, dirs, h=FD_STEP)
            an = sum(float((g * d).sum()) for g, d in zip(analytic, dirs))
            assert rel_err(an, fd) <= REL_TOL, f"seed {seed}: directional {an} vs fd {fd}"
        for _ in range(n_coords):
            ai = int(rng.integers(len(raw)))
            ci = int(rng.integers(raw[ai].size))
            fd = coordinate_fd(f, raw, ai, ci, h=FD_STEP)
            an = float(analytic[ai].flat[ci])
            assert rel_err(an, fd) <= REL_TOL, f"seed {seed}: coord ({ai},{ci}) {an} vs fd {fd}"


def img(rng, shape=(2, 3, 6, 6), lo=0.1, hi=0.9):
    return lo + (hi - lo) * rng.random(shape)


class TestElementwiseGradients:
    def test_add(self):
        check_gradients(lambda r: [img(r), img(r)], lambda a, b: mean(add(a, b)))

    def test_sub(self):
        check_gradients(lambda r: [img(r), img(r)], lambda a, b: sum_sq_norm(sub(a, b)))

    def test_mul(self):
        check_gradients(lambda r: [img(r), img(r)], lambda a, b: mean(mul(a, b)))

    def test_mul_broadcast_bias_shape(self):
        check_gradients(
            lambda r: [img(r), img(r, (1, 3, 1, 1))],
            lambda a, b: mean(mul(a, b)),
        )

    def test_div(self):
        check_gradients(
            lambda r: [img(r), img(r, lo=0.5, hi=1.5)],
            lambda a, b: mean(div(a, b)),
        )

    def test_scale_and_add_scalar(self):
        check_gradients(lambda r: [img(r)], lambda a: mean(add_scalar(scale(a, 2.5), -0.3)))

    def test_pow_elementwise(self):
        check_gradients(
            lambda r: [img(r, lo=0.2, hi=0.95), img(r, lo=0.1, hi=0.9)],
            lambda b, e: mean(pow_elementwise(b, e)),
        )

    def test_absolute(self):
        check_gradients(
            lambda r: [np.where(r.random((2, 3, 6, 6)) > 0.5, 1.0, -1.0) * img(r)],
            lambda a: mean(absolute(a)),
        )

    def test_sqrt(self):
        check_gradients(lambda r: [img(r, lo=0.3, hi=1.2)], lambda a: mean(sqrt(a)))

    def test_clamp_interior_and_exterior(self):
        check_gradients(
            lambda r: [r.uniform(-1.0, 2.0, size=(2, 3, 6, 6))],
            lambda a: mean(clamp(a, 0.1, 0.9)),
        )

    def test_arccos(self):
        check_gradients(
            lambda r: [r.uniform(-0.8, 0.8, size=(1, 3, 5, 5))],
            lambda a: mean(arccos(a)),
        )


class TestActivationGradients:
    def test_sigmoid(self):
        check_gradients(lambda r: [r.normal(size=(2, 3, 6, 6))], lambda a: mean(sigmoid(a)))

    def test_lrelu(self):
        def inputs(r):
            a = r.normal(size=(2, 3, 6, 6))
            return [np.where(np.abs(a) < 0.01, 0.5, a)]  # keep clear of the kink

        check_gradients(inputs, lambda a: mean(lrelu(a, slope=0.2)))


class TestStructuralGradients:
    def test_concat_channels(self):
        check_gradients(
            lambda r: [img(r, (1, 2, 5, 5)), img(r, (1, 3, 5, 5))],
            lambda a, b: sum_sq_norm(concat_channels(a, b)),
        )

    def test_avgpool2(self):
        check_gradients(lambda r: [img(r, (2, 2, 6, 6))], lambda a: sum_sq_norm(avgpool2(a)))

    def test_resize_nearest2x(self):
        check_gradients(lambda r: [img(r, (2, 2, 3, 4))], lambda a: sum_sq_norm(resize_nearest2x(a)))

    def test_forward_diff_x(self):
        check_gradients(lambda r: [img(r, (1, 3, 5, 6))], lambda a: sum_sq_norm(forward_diff_x(a)))

    def test_forward_diff_y(self):
        check_gradients(lambda r: [img(r, (1, 3, 6, 5))], lambda a: sum_sq_norm(forward_diff_y(a)))

    def test_sum_channels(self):
        check_gradients(lambda r: [img(r, (2, 4, 3, 3))], lambda a: sum_sq_norm(sum_channels(a)))

    def test_layer_norm(self):
        check_gradients(
            lambda r: [r.normal(1.0, 2.0, size=(2, 3, 5, 5)), img(r, (1, 3, 1, 1)), img(r, (1, 3, 1, 1))],
            lambda x, s, b: sum_sq_norm(layer_norm(x, s, b)),
        )


class TestConvGradients:
    def test_conv2d_all_arguments(self):
        check_gradients(
            lambda r: [img(r, (2, 3, 6, 6)), r.normal(size=(4, 3, 3, 3)) * 0.5, r.normal(size=(1, 4, 1, 1))],
            lambda x, w, b: mean(conv2d(x, w, b, stride=1, padding=1)),
            n_dirs=2,
            n_coords=3,
        )

    def test_conv2d_strided_unpadded(self):
        check_gradients(
            lambda r: [img(r, (1, 2, 8, 8)), r.normal(size=(3, 2, 3, 3)) * 0.5, r.normal(size=(1, 3, 1, 1))],
            lambda x, w, b: mean(conv2d(x, w, b, stride=2, padding=0)),
            n_dirs=2,
            n_coords=3,
        )


class TestBackwardAlgebra:
    def test_linearity_of_backward(self, rng):
        x64 = rng.random((1, 3, 4, 4))
        a, b = 0.7, -1.3

        def grad_of(fn):
            x = Tensor(x64, requires_grad=True, dtype=np.float64)
            with Tape() as tape:
                loss = fn(x)
            return tape.backward(loss)[x].data

        g1 = grad_of(lambda x: mean(sigmoid(x)))
        g2 = grad_of(lambda x: sum_sq_norm(x))
        g_combo = grad_of(lambda x: add(scale(mean(sigmoid(x)), a), scale(sum_sq_norm(x), b)))
        np.testing.assert_allclose(g_combo, a * g1 + b * g2, atol=1e-6)

    def test_forward_and_gradients_deterministic(self, rng):
        x64 = rng.random((1, 3, 8, 8))
        w64 = rng.normal(size=(4, 3, 3, 3))

        def run():
            x = Tensor(x64, requires_grad=True)
            w = Tensor(w64, requires_grad=True)
            b = Tensor(np.zeros((1, 4, 1, 1)), requires_grad=True)
            with Tape() as tape:
                loss = mean(sigmoid(conv2d(x, w, b)))
            g = tape.backward(loss)
            return loss.item(), g[w].data.copy(), g[x].data.copy()

        l1, gw1, gx1 = run()
        l2, gw2, gx2 = run()
        assert l1 == l2
        np.testing.assert_array_equal(gw1, gw2)
        np.testing.assert_array_equal(gx1, gx2)

    def test_reused_tensor_accumulates(self):
        x = Tensor(np.full((1, 1, 1, 1), 3.0), requires_grad=True, dtype=np.float64)
        with Tape() as tape:
            loss = mul(x, x)  # x^2
        g = tape.backward(loss)[x]
        assert g.item() == pytest.approx(6.0)
