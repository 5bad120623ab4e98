"""Tests for the real 2D DFT, its inverse and adjoints, and strength curves."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mew_unet.errors import ShapeError
from mew_unet.spectral import (
    CH,
    CW,
    HW,
    MEW_AXES,
    AxisPair,
    SpectrumLayout,
    curve_intersections,
    curve_margin,
    fft,
    hermitian_weights,
    irdft2,
    irdft2_backward,
    naive_dft,
    naive_dft2,
    rdft2,
    rdft2_backward,
    signal_strength_curve,
    spectral_mul,
    spectral_mul_backward,
)

AXES = st.sampled_from(MEW_AXES)
SHAPES = st.tuples(st.integers(1, 4), st.integers(1, 7), st.integers(1, 7))


def half_of_full(x, axes):
    a, b = axes.resolve(x.ndim)
    full = naive_dft2(x, axes)
    return np.take(full, np.arange(x.shape[b] // 2 + 1), axis=b)


class TestFft:
    @pytest.mark.parametrize("n", [1, 2, 3, 4, 5, 6, 7, 8, 9, 12, 13, 15, 16, 17, 30, 49, 64])
    def test_matches_direct_sum(self, n):
        x = np.random.default_rng(n).normal(size=(2, n)) + 1j
        np.testing.assert_allclose(fft(x), naive_dft(x), atol=1e-9)
        np.testing.assert_allclose(fft(x, inverse=True), naive_dft(x, inverse=True), atol=1e-9)

    def test_matches_numpy(self):
        x = np.random.default_rng(0).normal(size=(3, 5, 12))
        np.testing.assert_allclose(fft(x, axis=1), np.fft.fft(x, axis=1), atol=1e-9)

    def test_inverse_is_unnormalized(self):
        x = np.random.default_rng(1).normal(size=10)
        np.testing.assert_allclose(fft(fft(x), inverse=True).real / 10, x, atol=1e-12)


class TestRdft2:
    @given(shape=SHAPES, axes=AXES, seed=st.integers(0, 1000))
    @settings(max_examples=60, deadline=None)
    def test_matches_naive_half(self, shape, axes, seed):
        x = np.random.default_rng(seed).normal(size=shape)
        np.testing.assert_allclose(rdft2(x, axes), half_of_full(x, axes), atol=1e-9)

    @pytest.mark.parametrize("axes", MEW_AXES)
    def test_matches_numpy_rfftn(self, axes):
        x = np.random.default_rng(2).normal(size=(4, 6, 5))
        expected = np.fft.rfftn(x, axes=(axes.first, axes.second))
        np.testing.assert_allclose(rdft2(x, axes), expected, atol=1e-9)

    @given(shape=SHAPES, axes=AXES, seed=st.integers(0, 1000))
    @settings(max_examples=60, deadline=None)
    def test_roundtrip(self, shape, axes, seed):
        x = np.random.default_rng(seed).normal(size=shape)
        layout = SpectrumLayout.for_shape(x.shape, axes)
        s = rdft2(x, axes)
        assert s.shape == layout.shape
        np.testing.assert_allclose(irdft2(s, axes, layout.full_dims), x, atol=1e-10)

    def test_batch_dimension_carried(self):
        x = np.random.default_rng(3).normal(size=(3, 4, 6, 5))
        for axes in MEW_AXES:
            batched = rdft2(x, axes)
            for i in range(3):
                np.testing.assert_allclose(batched[i], rdft2(x[i], axes), atol=1e-12)

    def test_linearity(self):
        rng = np.random.default_rng(4)
        x, y = rng.normal(size=(2, 2, 5, 6))
        np.testing.assert_allclose(rdft2(2.0 * x - 3.0 * y, CW),
                                   2.0 * rdft2(x, CW) - 3.0 * rdft2(y, CW), atol=1e-10)

    @pytest.mark.parametrize("shape", [(2, 4, 6), (3, 5, 7), (1, 1, 1)])
    def test_parseval(self, shape):
        x = np.random.default_rng(5).normal(size=shape)
        s = rdft2(x, HW)
        weighted = (np.abs(s) ** 2 * hermitian_weights(shape[2])).sum()
        assert weighted / (shape[1] * shape[2]) == pytest.approx((x ** 2).sum())

    def test_dc_bin_is_sum(self):
        x = np.random.default_rng(6).normal(size=(2, 3, 4))
        assert rdft2(x, CH)[0, 0, 0] == pytest.approx(x[:, :, 0].sum())

    def test_rejects_complex(self):
        with pytest.raises(TypeError):
            rdft2(np.ones((2, 2, 2), dtype=complex))

    def test_rejects_low_rank(self):
        with pytest.raises(ShapeError):
            rdft2(np.ones((4, 4)))

    def test_irdft2_inconsistent_dims(self):
        s = rdft2(np.ones((2, 4, 6)), HW)
        with pytest.raises(ShapeError):
            irdft2(s, HW, (4, 8))

    def test_odd_even_disambiguation(self):
        rng = np.random.default_rng(7)
        for n2 in (6, 7):
            x = rng.normal(size=(1, 3, n2))
            np.testing.assert_allclose(irdft2(rdft2(x), HW, (3, n2)), x, atol=1e-12)


class TestAdjoints:
    @given(shape=SHAPES, axes=AXES, seed=st.integers(0, 1000))
    @settings(max_examples=40, deadline=None)
    def test_rdft2_backward_is_adjoint(self, shape, axes, seed):
        rng = np.random.default_rng(seed)
        x = rng.normal(size=shape)
        layout = SpectrumLayout.for_shape(shape, axes)
        g = rng.normal(size=layout.shape) + 1j * rng.normal(size=layout.shape)
        lhs = np.real(np.conj(g) * rdft2(x, axes)).sum()
        rhs = (x * rdft2_backward(g, axes, layout.full_dims)).sum()
        assert lhs == pytest.approx(rhs, rel=1e-9, abs=1e-9)

    @given(shape=SHAPES, axes=AXES, seed=st.integers(0, 1000))
    @settings(max_examples=40, deadline=None)
    def test_irdft2_backward_is_adjoint(self, shape, axes, seed):
        rng = np.random.default_rng(seed)
        layout = SpectrumLayout.for_shape(shape, axes)
        s = rng.normal(size=layout.shape) + 1j * rng.normal(size=layout.shape)
        g = rng.normal(size=shape)
        lhs = (g * irdft2(s, axes, layout.full_dims)).sum()
        rhs = np.real(np.conj(irdft2_backward(g, axes)) * s).sum()
        assert lhs == pytest.approx(rhs, rel=1e-9, abs=1e-9)

    def test_roundtrip_gradient_is_identity(self):
        g = np.random.default_rng(8).normal(size=(3, 4, 5))
        back = rdft2_backward(irdft2_backward(g, CW), CW, (3, 5))
        np.testing.assert_allclose(back, g, atol=1e-10)

    def test_spectral_mul_hand_case(self):
        s = np.array([2.0 + 3.0j])
        w = np.array([5.0 - 1.0j])
        # L = Re(s * w): dL/dRe w = Re s, dL/dIm w = -Im s
        gs, gw = spectral_mul_backward(np.ones(1, dtype=complex), s, w)
        assert gw[0] == pytest.approx(2.0 - 3.0j)
        assert gs[0] == pytest.approx(5.0 + 1.0j)
        assert spectral_mul(s, w)[0] == pytest.approx(13.0 + 13.0j)

    @pytest.mark.parametrize("seed", range(5))
    def test_spectral_mul_gradients(self, seed):
        rng = np.random.default_rng(seed)
        s, w, g = (rng.normal(size=(2, 3, 4)) + 1j * rng.normal(size=(2, 3, 4))
                   for _ in range(3))
        gs, gw = spectral_mul_backward(g, s, w)

        def loss(a, b):
            return np.real(np.conj(g) * spectral_mul(a, b)).sum()

        h = 1e-6
        for idx in np.ndindex(s.shape):
            step = np.zeros_like(s)
            for unit in (1.0, 1j):
                step[idx] = h * unit
                ds = (loss(s + step, w) - loss(s - step, w)) / (2 * h)
                dw = (loss(s, w + step) - loss(s, w - step)) / (2 * h)
                part = np.real if unit == 1.0 else np.imag
                assert ds == pytest.approx(part(gs[idx]), abs=1e-7)
                assert dw == pytest.approx(part(gw[idx]), abs=1e-7)

    def test_spectral_mul_shape_mismatch(self):
        with pytest.raises(ShapeError):
            spectral_mul(np.ones(3, complex), np.ones(4, complex))


class TestLayout:
    def test_axis_pair_validation(self):
        with pytest.raises(ShapeError):
            AxisPair(1, 1)
        with pytest.raises(ShapeError):
            AxisPair(0, 3)

    def test_names_and_untransformed(self):
        assert [a.name for a in MEW_AXES] == ["hw", "cw", "ch"]
        assert [a.untransformed for a in MEW_AXES] == [0, 1, 2]

    def test_layout_shapes(self):
        assert SpectrumLayout.for_shape((4, 8, 8), HW).shape == (4, 8, 5)
        assert SpectrumLayout.for_shape((4, 8, 8), CW).shape == (4, 8, 5)
        assert SpectrumLayout.for_shape((4, 8, 8), CH).shape == (4, 3, 8)
        assert SpectrumLayout.for_shape((2, 4, 6, 7), CH).stored_dims == (4, 4)

    def test_hermitian_weights(self):
        np.testing.assert_array_equal(hermitian_weights(6), [1, 2, 2, 1])
        np.testing.assert_array_equal(hermitian_weights(7), [1, 2, 2, 2])
        np.testing.assert_array_equal(hermitian_weights(1), [1])


class TestStrengthCurves:
    def test_identical_patches_give_identical_curves(self):
        patch = np.random.default_rng(9).normal(size=(3, 10, 10))
        for mode in ("single", "multi"):
            a = signal_strength_curve(patch, mode)
            b = signal_strength_curve(patch.copy(), mode)
            np.testing.assert_array_equal(a, b)
            assert np.all(np.diff(a) <= 0)

    def test_curve_lengths(self):
        patch = np.zeros((3, 10, 10))
        assert signal_strength_curve(patch, "single").size == 10 * 6
        assert signal_strength_curve(patch, "multi").size == 10 * 6 + 3 * 6 + 3 * 6

    def test_constant_patch(self):
        curve = signal_strength_curve(np.full((3, 10, 10), 0.5), "single")
        assert curve[0] == pytest.approx(50.0)
        assert np.all(np.abs(curve[1:]) < 1e-9)

    def test_bad_mode(self):
        with pytest.raises(ValueError):
            signal_strength_curve(np.zeros((1, 2, 2)), "both")

    @pytest.mark.parametrize("a, b, expected", [
        ([5, 3, 1], [4, 2, 0.5], 0),
        ([5, 3, 1], [6, 2, 0.5], 1),
        ([5, 3, 1], [5, 2, 0.5], 1),
        ([5, 1, 4], [4, 2, 3], 2),
        ([5, 3, 2, 1], [4, 2], 0),
        ([5, 3], [4, 2, 1, 0.5], 1),
        ([5, 0, 0], [4, 0, 0], 0),
    ])
    def test_intersections(self, a, b, expected):
        assert curve_intersections(np.array(a, float), np.array(b, float)) == expected

    def test_margin(self):
        assert curve_margin(np.array([5.0, 3.0]), np.array([4.0, 2.5])) == pytest.approx(0.5)
        assert curve_margin(np.array([5.0, 1.0]), np.array([4.0, 2.0])) == 0.0
