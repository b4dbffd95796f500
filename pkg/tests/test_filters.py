import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from derainnet.filters import GuidedFilterConfig, decompose, guided_filter
from derainnet.numerics import ShapeError, box_mean
from derainnet.rainsynth import RainParams, composite, render_rain_layer
from oracles import guided_filter_direct


def total_variation(img):
    return np.abs(np.diff(img, axis=0)).sum() + np.abs(np.diff(img, axis=1)).sum()


def textured(rng, h=48, w=48):
    yy, xx = np.mgrid[0:h, 0:w] / max(h, w)
    smooth = 0.5 + 0.3 * np.sin(4 * xx + 2 * yy)[:, :, None] * np.array([1.0, 0.8, 0.6])
    return np.clip(smooth + 0.05 * rng.random((h, w, 3)), 0, 1)


class TestConfig:
    def test_defaults(self):
        cfg = GuidedFilterConfig()
        assert (cfg.radius, cfg.epsilon) == (15, 0.01)

    @pytest.mark.parametrize("kw", [dict(radius=0), dict(epsilon=0.0), dict(epsilon=-1.0)])
    def test_rejects_invalid(self, kw):
        with pytest.raises(ValueError):
            GuidedFilterConfig(**kw)


class TestGuidedFilter:
    def test_constant_input(self, backend):
        img = np.full((20, 20, 3), 0.42)
        np.testing.assert_allclose(guided_filter(img, img, GuidedFilterConfig(3, 0.01)), img, atol=1e-12)

    def test_huge_epsilon_gives_mean_of_means(self, backend, rng):
        img = rng.random((16, 16, 1))
        out = guided_filter(img, img, GuidedFilterConfig(2, 1e6))
        np.testing.assert_allclose(out, box_mean(box_mean(img, 2), 2), atol=1e-6)

    def test_matches_direct_window_oracle(self, backend, rng):
        img = rng.random((16, 16, 1))
        out = guided_filter(img, img, GuidedFilterConfig(2, 0.01))
        np.testing.assert_allclose(out[:, :, 0], guided_filter_direct(img[:, :, 0], img[:, :, 0], 2, 0.01),
                                   rtol=0, atol=1e-5)

    def test_distinct_guide_matches_oracle(self, backend, rng):
        p, g = rng.random((12, 14)), rng.random((12, 14))
        np.testing.assert_allclose(guided_filter(p, g, GuidedFilterConfig(3, 0.05)),
                                   guided_filter_direct(p, g, 3, 0.05), atol=1e-5)

    def test_channels_are_independent(self, backend, rng):
        img = rng.random((14, 14, 3))
        cfg = GuidedFilterConfig(2, 0.02)
        out = guided_filter(img, img, cfg)
        for c in range(3):
            single = guided_filter(img[:, :, c], img[:, :, c], cfg)
            np.testing.assert_allclose(out[:, :, c], single, atol=1e-12)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            guided_filter(np.zeros((4, 4, 3)), np.zeros((4, 5, 3)), GuidedFilterConfig())

    @settings(max_examples=25, deadline=None)
    @given(seed=st.integers(0, 2**31 - 1), r=st.integers(1, 6),
           eps=st.sampled_from([1e-3, 1e-2, 1e-1]))
    def test_self_guided_reduces_total_variation(self, seed, r, eps):
        img = np.random.default_rng(seed).random((18, 18, 1))
        out = guided_filter(img, img, GuidedFilterConfig(r, eps))
        assert total_variation(out) <= total_variation(img) + 1e-9


class TestDecompose:
    def test_constant_has_no_detail(self):
        d = decompose(np.full((24, 24, 3), 0.7))
        assert np.abs(d.detail).max() < 1e-12

    def test_shapes(self, rng):
        img = rng.random((30, 20, 3))
        d = decompose(img, GuidedFilterConfig(4, 0.01))
        assert d.base.shape == d.detail.shape == img.shape

    @settings(max_examples=25, deadline=None)
    @given(seed=st.integers(0, 2**31 - 1), h=st.integers(2, 40), w=st.integers(2, 40),
           r=st.integers(1, 15))
    def test_reconstruction_exact(self, seed, h, w, r):
        img = np.random.default_rng(seed).random((h, w, 3))
        d = decompose(img, GuidedFilterConfig(r, 0.01))
        assert np.abs(d.recompose() - img).max() <= 1e-6
        assert np.abs(d.detail).max() <= 1.0

    def _pair(self, rng, seed):
        clean = textured(rng, 96, 96)
        rain = render_rain_layer(96, 96, RainParams(10, 15, 0.05, 0.8, seed=seed))
        return clean, composite(clean, rain)

    def test_rain_energy_concentrates_in_detail(self, rng):
        clean, rainy = self._pair(rng, 7)
        cfg = GuidedFilterConfig()
        base_gap = decompose(rainy, cfg).base - decompose(clean, cfg).base
        gap = rainy - clean
        detail_gap = decompose(rainy, cfg).detail - decompose(clean, cfg).detail
        # streak structure (everything but the mean brightening) lives in the detail layer
        assert np.sum(base_gap ** 2) < np.sum(gap ** 2)
        assert np.abs(base_gap - base_gap.mean()).mean() < np.abs(gap - gap.mean()).mean()
        assert np.sum(detail_gap ** 2) > np.sum((base_gap - base_gap.mean()) ** 2)

    def test_rain_mean_gap_is_carried_by_base(self, rng):
        # non-negative rain smoothed by a mean-preserving filter keeps its L1 mass,
        # so the mean absolute base gap matches the image gap up to border effects
        clean, rainy = self._pair(rng, 7)
        base_gap = np.abs(decompose(rainy).base - decompose(clean).base).mean()
        assert base_gap == pytest.approx(np.abs(rainy - clean).mean(), rel=0.05)

    @pytest.mark.parametrize("seed", range(4))
    def test_detail_sparser_than_image(self, rng, seed):
        _, rainy = self._pair(rng, seed)
        detail = decompose(rainy).detail
        centred = rainy - rainy.mean()
        assert np.mean(np.abs(detail) < 0.05) > np.mean(np.abs(centred) < 0.05)
