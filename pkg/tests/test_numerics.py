import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from scwave.numerics import AdamState, ParamSet, adam_step, autodiff as ad
from scwave.numerics import convolve, correlate_valid, dft, downsample, idft, upsample
from scwave.numerics.autodiff import CTensor, Tensor

from conftest import central_diff


def naive_convolve(x, h):
    out = np.zeros(len(x) + len(h) - 1, dtype=np.result_type(x, h))
    for i, xi in enumerate(x):
        for j, hj in enumerate(h):
            out[i + j] += xi * hj
    return out


def naive_dft(x):
    n = len(x)
    k = np.arange(n)
    return np.exp(-2j * np.pi * np.outer(k, k) / n) @ x / np.sqrt(n)


# ==========================================================================
# Buffers
# ==========================================================================


class TestConvolve:
    def test_identity_kernel(self):
        np.testing.assert_array_equal(convolve(np.array([1 + 0j, 2 + 0j]), [1.0]), [1, 2])

    def test_hand_expansion(self):
        np.testing.assert_array_equal(convolve([1.0, 2.0], [1.0, 1.0]), [1, 3, 2])

    def test_matches_double_loop(self, rng):
        x = rng.normal(size=17) + 1j * rng.normal(size=17)
        h = rng.normal(size=5)
        np.testing.assert_allclose(convolve(x, h), naive_convolve(x, h), atol=1e-12)

    def test_batched_rows_independent(self, rng):
        x = rng.normal(size=(3, 10))
        h = rng.normal(size=4)
        out = convolve(x, h)
        for row, ref in zip(out, x):
            np.testing.assert_allclose(row, naive_convolve(ref, h), atol=1e-12)

    @pytest.mark.parametrize("x,h", [([], [1.0]), ([1.0], [])])
    def test_empty_rejected(self, x, h):
        with pytest.raises(ValueError):
            convolve(np.array(x), np.array(h))

    def test_correlate_is_adjoint(self, rng):
        x = rng.normal(size=20)
        h = rng.normal(size=6)
        y = rng.normal(size=25)
        assert np.dot(convolve(x, h), y) == pytest.approx(np.dot(x, correlate_valid(y, h)), rel=1e-12)

    @settings(max_examples=40, deadline=None)
    @given(arrays(np.float64, st.integers(1, 30), elements=st.floats(-10, 10)),
           arrays(np.float64, st.integers(1, 8), elements=st.floats(-10, 10)))
    def test_commutes_with_double_loop(self, x, h):
        np.testing.assert_allclose(convolve(x, h), naive_convolve(x, h), atol=1e-9)


class TestResampling:
    def test_upsample_by_one(self):
        np.testing.assert_array_equal(upsample([3.0, 4.0], 1), [3, 4])

    def test_upsample_zero_stuffs(self):
        np.testing.assert_array_equal(upsample([3.0, 4.0], 2), [3, 0, 4, 0])

    def test_upsample_complex(self):
        np.testing.assert_array_equal(upsample(np.array([1 + 1j]), 4), [1 + 1j, 0, 0, 0])

    @pytest.mark.parametrize("m", [0, -1, 1.5])
    def test_bad_factor(self, m):
        with pytest.raises(ValueError):
            upsample([1.0], m)

    def test_downsample_offsets(self):
        x = np.array([1.0, 2.0, 3.0, 4.0])
        np.testing.assert_array_equal(downsample(x, 2, 0), [1, 3])
        np.testing.assert_array_equal(downsample(x, 2, 1), [2, 4])

    @pytest.mark.parametrize("offset", [-1, 4])
    def test_offset_out_of_range(self, offset):
        with pytest.raises(ValueError):
            downsample(np.zeros(4), 2, offset)

    def test_count_too_large(self):
        with pytest.raises(ValueError):
            downsample(np.zeros(4), 2, 0, count=3)

    @settings(max_examples=30, deadline=None)
    @given(arrays(np.float64, st.integers(1, 20), elements=st.floats(-1e3, 1e3)), st.integers(1, 6))
    def test_roundtrip(self, x, m):
        np.testing.assert_array_equal(downsample(upsample(x, m), m, 0), x)


class TestDft:
    def test_delta(self):
        np.testing.assert_allclose(dft(np.array([1.0, 0, 0, 0])), [0.5] * 4, atol=1e-15)

    def test_matches_direct_sum(self, rng):
        x = rng.normal(size=64) + 1j * rng.normal(size=64)
        np.testing.assert_allclose(dft(x), naive_dft(x), atol=1e-9)

    def test_unitary(self, rng):
        x = rng.normal(size=50) + 1j * rng.normal(size=50)
        assert np.linalg.norm(dft(x)) == pytest.approx(np.linalg.norm(x), rel=1e-12)
        np.testing.assert_allclose(idft(dft(x)), x, atol=1e-12)

    def test_empty(self):
        with pytest.raises(ValueError):
            dft(np.array([]))


# ==========================================================================
# Autodiff
# ==========================================================================


def check_grad(build, *shapes, rng, positive=False, tol=1e-6):
    """Compare the tape gradient of ``sum(w * build(*inputs))`` with central differences."""
    xs = [rng.uniform(0.5, 2.0, s) if positive else rng.normal(size=s) for s in shapes]
    out_shape = np.shape(build(*[Tensor(x) for x in xs]).data)
    w = rng.normal(size=out_shape)

    def value():
        return float(np.sum(w * build(*[Tensor(x) for x in xs]).data))

    ts = [Tensor(x, requires_grad=True) for x in xs]
    loss = ad.tsum(build(*ts) * w)
    loss.backward()
    for x, t in zip(xs, ts):
        for i in range(x.size):
            fd = central_diff(value, x, i)
            assert t.grad.flat[i] == pytest.approx(fd, rel=tol, abs=1e-8)


class TestAutodiffExamples:
    def test_square(self):
        x = Tensor(3.0, requires_grad=True)
        (x * x).backward()
        assert x.grad == 6.0

    def test_abs2_of_pair(self):
        z = CTensor(Tensor(1.0, requires_grad=True), Tensor(2.0, requires_grad=True))
        z.abs2().backward()
        assert (z.re.grad, z.im.grad) == (2.0, 4.0)

    def test_backward_needs_scalar(self):
        x = Tensor(np.ones(3), requires_grad=True)
        with pytest.raises(ValueError):
            (x * 2.0).backward()

    def test_shared_node_accumulates(self):
        x = Tensor(2.0, requires_grad=True)
        y = x * x
        (y + y).backward()
        assert x.grad == 8.0

    def test_ndarray_on_the_left(self):
        x = Tensor(np.array([1.0, 2.0]), requires_grad=True)
        out = np.array([3.0, 4.0]) * x
        assert isinstance(out, Tensor)
        ad.tsum(np.ones(2) - out).backward()
        np.testing.assert_array_equal(x.grad, [-3, -4])

    def test_atan2_origin_counted(self):
        before = ad.arg_origin_hits
        y, x = Tensor(0.0, requires_grad=True), Tensor(0.0, requires_grad=True)
        ad.atan2(y, x).backward()
        assert (y.grad, x.grad) == (0.0, 0.0)
        assert ad.arg_origin_hits == before + 1

    def test_atan2_branch_cut(self):
        assert ad.atan2(Tensor(0.0), Tensor(-1.0)).item() == pytest.approx(np.pi)

    def test_logsumexp_large_inputs(self):
        a = Tensor(np.array([1000.0, 1000.0]))
        assert ad.logsumexp(a).item() == pytest.approx(1000 + np.log(2))


class TestAutodiffFiniteDifferences:
    @pytest.mark.parametrize("fn", [
        lambda a, b: a + b, lambda a, b: a - b, lambda a, b: a * b,
        lambda a, b: ad.atan2(a, b),
    ], ids=["add", "sub", "mul", "atan2"])
    def test_binary(self, fn, rng):
        check_grad(fn, (3, 4), (3, 4), rng=rng)

    def test_division(self, rng):
        check_grad(lambda a, b: a / b, (5,), (5,), rng=rng, positive=True)

    def test_broadcasting(self, rng):
        check_grad(lambda a, b: a * b + a, (3, 4), (4,), rng=rng)

    @pytest.mark.parametrize("fn", [
        ad.exp, ad.cos, ad.sin, ad.sigmoid, ad.softplus, ad.square, ad.tabs,
        lambda a: ad.logsumexp(a, axis=-1), lambda a: ad.mean(a, axis=0),
        lambda a: ad.transpose(a), lambda a: a[:, 1:3], lambda a: a[[0, 0, 1]],
    ], ids=["exp", "cos", "sin", "sigmoid", "softplus", "square", "abs", "lse", "mean",
            "transpose", "slice", "repeat-index"])
    def test_unary(self, fn, rng):
        check_grad(fn, (3, 4), rng=rng)

    @pytest.mark.parametrize("fn", [ad.log, ad.sqrt], ids=["log", "sqrt"])
    def test_positive_domain(self, fn, rng):
        check_grad(fn, (6,), rng=rng, positive=True)

    def test_matmul(self, rng):
        check_grad(lambda a, b: a @ b, (3, 4), (4, 2), rng=rng)

    def test_concatenate(self, rng):
        check_grad(lambda a, b: ad.concatenate([a, b], axis=1), (2, 3), (2, 2), rng=rng)

    def test_convolve(self, rng):
        check_grad(lambda x, h: ad.convolve(x, h), (2, 9), (4,), rng=rng)

    def test_resampling(self, rng):
        check_grad(lambda x: ad.downsample(ad.upsample(x, 3) * 2.0, 2, 1, 5), (2, 6), rng=rng)

    def test_complex_product_magnitude(self, rng):
        def fn(a, b, c, d):
            z = CTensor(a, b) * CTensor(c, d)
            return z.abs() + z.angle()
        check_grad(fn, (5,), (5,), (5,), (5,), rng=rng)


# ==========================================================================
# Adam
# ==========================================================================


class TestAdam:
    def test_first_step_is_signed_lr(self):
        p = ParamSet({"w": np.array([1.0, -2.0, 0.5])})
        p["w"].grad = np.array([0.3, -7.0, 1e-3])
        adam_step(p, AdamState(lr=0.01))
        np.testing.assert_allclose(p["w"].data, [0.99, -1.99, 0.49], atol=1e-7)

    def test_zero_gradient_keeps_params(self):
        p = ParamSet({"w": np.array([1.0, 2.0])})
        adam_step(p, AdamState())
        np.testing.assert_array_equal(p["w"].data, [1.0, 2.0])

    def test_constant_gradient_monotone(self):
        p = ParamSet({"w": np.zeros(2)})
        st_ = AdamState(lr=0.1)
        trace = [p["w"].data.copy()]
        for _ in range(2):
            p["w"].grad = np.array([1.0, -1.0])
            adam_step(p, st_)
            trace.append(p["w"].data.copy())
        assert trace[0][0] > trace[1][0] > trace[2][0]
        assert trace[0][1] < trace[1][1] < trace[2][1]

    def test_mismatched_state(self):
        st_ = AdamState()
        adam_step(ParamSet({"w": np.zeros(2)}), st_)
        with pytest.raises(ValueError):
            adam_step(ParamSet({"w": np.zeros(3)}), st_)

    def test_state_round_trip(self):
        p = ParamSet({"w": np.zeros(2)})
        st_ = AdamState()
        p["w"].grad = np.array([1.0, 2.0])
        adam_step(p, st_)
        back = AdamState.from_dict(st_.to_dict())
        assert back.step == 1
        np.testing.assert_array_equal(back.v["w"], st_.v["w"])

    def test_flat_round_trip(self):
        p = ParamSet({"a": np.zeros((2, 2)), "b": np.zeros(3)})
        vec = np.arange(7.0)
        p.set_flat(vec)
        np.testing.assert_array_equal(p.flat(), vec)
        assert p.slices()["b"] == slice(4, 7)
        with pytest.raises(ValueError):
            p.set_flat(np.zeros(6))
