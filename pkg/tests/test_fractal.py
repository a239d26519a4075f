import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from fractalis.errors import ConfigError, DataError, ShapeError
from fractalis.fractal import (AnalysisConfig, DetrendedBox, box_covariance, box_statistics, box_variance,
                               detrend_box, fluctuation_surfaces, mfcca, mfdfa, profile)
from fractalis.scaling import fit_exponents
from fractalis.surrogates import SurrogateSpec, binomial_cascade, cascade_spectrum, generate

DYADIC = AnalysisConfig(scales=tuple(2 ** k for k in range(4, 15)))


def running_sum(x):
    out, acc = [], 0.0
    for v in x:
        acc += v
        out.append(acc)
    return np.array(out)


def dcca_oracle(x, y, scales, m=2):
    """Plain DCCA: per-box polyfit residual covariances, averaged, signed square root."""
    L = len(x)
    X, Y = np.cumsum(x - x.mean()), np.cumsum(y - y.mean())
    out = []
    for s in scales:
        n = L // s
        t = np.arange(1, s + 1, dtype=float)
        covs = []
        for start in [v * s for v in range(n)] + [L - (v + 1) * s for v in range(n)]:
            a, b = X[start:start + s], Y[start:start + s]
            ra = a - np.polyval(np.polyfit(t, a, m), t)
            rb = b - np.polyval(np.polyfit(t, b, m), t)
            covs.append(np.mean(ra * rb))
        f2 = np.mean(covs)
        out.append(np.sign(f2) * np.sqrt(abs(f2)))
    return np.array(out)


def qi(surface, q):
    return int(np.flatnonzero(np.isclose(surface.q, q))[0])


class TestProfile:
    def test_zeros(self):
        np.testing.assert_array_equal(profile([0, 0, 0], demean=False), [0, 0, 0])

    def test_ones(self):
        np.testing.assert_array_equal(profile([1, 1, 1, 1], demean=False), [1, 2, 3, 4])

    def test_random_matches_running_sum(self, rng):
        x = rng.normal(size=16)
        np.testing.assert_allclose(profile(x, demean=False), running_sum(x), rtol=0, atol=1e-12)
        np.testing.assert_allclose(profile(x), running_sum(x - x.mean()), rtol=0, atol=1e-12)

    def test_non_finite(self):
        with pytest.raises(DataError):
            profile([1.0, np.nan])


class TestDetrendBox:
    @pytest.mark.parametrize("m", [0, 1, 2, 3])
    def test_exact_polynomial(self, m, rng):
        t = np.arange(1, 41, dtype=float)
        seg = np.polyval(rng.normal(size=m + 1), t)
        box = detrend_box(seg, m)
        assert np.max(np.abs(box.residuals)) < 1e-10 * max(1.0, np.max(np.abs(seg)))

    def test_constant_signal_linear_profile(self):
        seg = profile(np.full(32, 3.5), demean=False)
        assert np.max(np.abs(detrend_box(seg, 2).residuals)) < 1e-10

    def test_normal_equations_oracle(self):
        seg = np.array([1.0, 3.0, 2.0, 5.0, 4.0])
        t = np.arange(1, 6, dtype=float)
        # [[n, sum t], [sum t, sum t^2]] [a, b] = [sum y, sum t y]
        A = np.array([[5.0, t.sum()], [t.sum(), (t * t).sum()]])
        a, b = np.linalg.solve(A, [seg.sum(), (t * seg).sum()])
        expected = seg - (a + b * t)
        np.testing.assert_allclose(detrend_box(seg, 1).residuals, expected, atol=1e-10)

    def test_too_short(self):
        with pytest.raises(ShapeError):
            detrend_box([1.0, 2.0, 3.0], 2)


class TestBoxStatistics:
    def test_zero_residuals(self):
        assert box_variance(DetrendedBox(0, np.zeros(8))) == 0.0

    def test_plus_minus_one(self):
        assert box_variance(DetrendedBox(0, np.array([1.0, -1.0]))) == 1.0

    def test_random_variance(self, rng):
        r = rng.normal(size=50)
        assert box_variance(DetrendedBox(0, r)) == pytest.approx(sum(v * v for v in r) / 50, rel=1e-13)

    def test_covariance_reductions(self, rng):
        bx = detrend_box(np.cumsum(rng.normal(size=64)), 2)
        neg = DetrendedBox(0, -bx.residuals)
        assert box_covariance(bx, bx) == box_variance(bx)
        assert box_covariance(bx, neg) == -box_variance(bx)

    def test_random_covariance(self, rng):
        a, b = rng.normal(size=30), rng.normal(size=30)
        got = box_covariance(DetrendedBox(0, a), DetrendedBox(0, b))
        assert got == pytest.approx(sum(u * v for u, v in zip(a, b)) / 30, rel=1e-12)

    def test_covariance_length_mismatch(self):
        with pytest.raises(ShapeError):
            box_covariance(DetrendedBox(0, np.zeros(4)), DetrendedBox(0, np.zeros(5)))

    def test_vectorized_matches_single_boxes(self, rng):
        x = rng.normal(size=1000)
        p = profile(x)
        s = 64
        f2 = box_statistics([p], [(0, 0)], s, 2)[0]
        n = 1000 // s
        assert f2.size == 2 * n
        for v in range(n):
            assert f2[v] == pytest.approx(box_variance(detrend_box(p[v * s:(v + 1) * s])), rel=1e-12)
            end = 1000 - v * s
            assert f2[n + v] == pytest.approx(box_variance(detrend_box(p[end - s:end])), rel=1e-12)


class TestConfig:
    def test_default_grid(self):
        s = AnalysisConfig().scale_grid(1 << 16)
        assert s[0] == 16 and s[-1] == (1 << 16) // 4
        assert 25 <= s.size <= 30
        assert np.all(np.diff(s) > 0)

    def test_smin_below_degree(self):
        with pytest.raises(ConfigError):
            AnalysisConfig(m=3, scales=(4, 8, 16)).scale_grid(1000)

    def test_smax_above_quarter(self):
        with pytest.raises(ConfigError):
            AnalysisConfig(scales=(16, 300)).scale_grid(1000)

    def test_q_grid(self):
        q = AnalysisConfig().q
        assert len(q) == 17 and q[0] == -4.0 and q[-1] == 4.0 and 0.0 in q


class TestMFDFA:
    def test_white_noise_hurst(self):
        for seed in range(10):
            x = generate(SurrogateSpec("white", 1 << 16, seed))
            h2 = fit_exponents(mfdfa(x)).at(2.0)
            assert abs(h2 - 0.5) < 0.04, (seed, h2)

    def test_fgn_hurst(self):
        for seed in range(3):
            x = generate(SurrogateSpec("fgn", 1 << 16, seed, hurst=0.7))
            assert abs(fit_exponents(mfdfa(x)).at(2.0) - 0.7) < 0.05

    def test_cascade_spectrum(self):
        x = binomial_cascade(16, 0.75)
        spec = fit_exponents(mfdfa(x, DYADIC), fit_range=(128, 8192))
        h = cascade_spectrum(0.75)
        for q in (-4, -2, 2, 4):
            assert abs(spec.at(q) - h(q)) < 0.05

    def test_partition_counts(self, rng):
        x = rng.normal(size=1003)
        surf = mfdfa(x, AnalysisConfig(scales=(16, 17, 50, 250)))
        np.testing.assert_array_equal(surf.total_boxes, [2 * (1003 // s) for s in (16, 17, 50, 250)])
        assert np.all(surf.boxes_excluded == 0)

    def test_monotone_in_q_and_positive(self, rng):
        surf = mfdfa(rng.standard_t(3, size=4096))
        assert np.all(surf.values > 0)
        assert np.all(np.diff(surf.values, axis=0) >= -1e-12 * surf.values[1:])

    def test_zero_variance_boxes_excluded_at_negative_q(self, rng):
        x = np.concatenate([np.ones(2048), rng.normal(size=2048)])
        surf = mfdfa(x, AnalysisConfig(demean=False))
        neg = surf.q < 0
        assert np.all(surf.boxes_excluded[neg] > 0)
        assert np.all(surf.boxes_excluded[surf.q > 0] == 0)
        assert np.all(np.isfinite(surf.values))

    def test_deterministic(self, rng):
        x = rng.normal(size=5000)
        a, b = mfdfa(x), mfdfa(x.copy())
        np.testing.assert_array_equal(a.values, b.values)

    def test_no_demean_same_after_detrending(self, rng):
        x = rng.normal(size=4096) + 7.0
        a = mfdfa(x)
        b = mfdfa(x, AnalysisConfig(demean=False))
        np.testing.assert_allclose(a.values, b.values, rtol=1e-8)


class TestMFCCA:
    def test_identity_reduces_to_mfdfa(self, rng):
        x = rng.normal(size=1 << 12)
        np.testing.assert_array_equal(mfcca(x, x).values, mfdfa(x).values)

    def test_q2_equals_dcca(self):
        x, y = generate(SurrogateSpec("coupled", 1 << 12, 7, base="fgn", hurst=0.6, coupling=0.4))
        surf = mfcca(x, y)
        expected = dcca_oracle(x, y, surf.scales)
        np.testing.assert_allclose(surf.values[qi(surf, 2.0)], expected, rtol=1e-12)

    def test_symmetry(self, rng):
        x, y = rng.normal(size=(2, 4096))
        np.testing.assert_array_equal(mfcca(x, y).values, mfcca(y, x).values)

    def test_antisymmetry(self, rng):
        x, y = rng.normal(size=(2, 4096))
        a, b = mfcca(x, y), mfcca(x, -y)
        nonzero_q = a.q != 0
        np.testing.assert_array_equal(a.values[nonzero_q], -b.values[nonzero_q])

    def test_sign_of_moment_preserved(self, rng):
        x, y = rng.normal(size=(2, 4096))
        surf = mfcca(x, y)
        assert np.any(surf.values < 0)

    def test_independent_fgn_sign_changes(self):
        changed = 0
        for seed in range(10):
            x, y = generate(SurrogateSpec("coupled", 1 << 16, seed, base="fgn", hurst=0.8, coupling=0.0))
            surf = mfcca(x, y)
            row = np.sign(surf.values[qi(surf, 2.0)])
            changed += int(np.count_nonzero(np.diff(row)) >= 1)
        assert changed > 5

    def test_length_mismatch(self):
        with pytest.raises(ShapeError):
            mfcca(np.zeros(100), np.zeros(101))

    def test_shared_pass_matches_separate_calls(self, rng):
        x, y, z = rng.normal(size=(3, 3000))
        out = fluctuation_surfaces({"x": x, "y": y, "z": z}, AnalysisConfig(), autos=["x"], pairs=[("y", "z")])
        np.testing.assert_array_equal(out["x"].values, mfdfa(x).values)
        np.testing.assert_array_equal(out[("y", "z")].values, mfcca(y, z).values)


finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)


@settings(max_examples=25, deadline=None)
@given(arrays(np.float64, st.integers(200, 600), elements=finite), arrays(np.float64, 600, elements=finite))
def test_reduction_and_symmetry_properties(x, y):
    y = y[: x.size]
    cfg = AnalysisConfig(scales=(16, 25, 40))
    a = mfdfa(x, cfg)
    np.testing.assert_array_equal(mfcca(x, x, cfg).values, a.values)
    np.testing.assert_array_equal(mfcca(x, y, cfg).values, mfcca(y, x, cfg).values)
    finite_vals = a.values[np.isfinite(a.values)]
    assert np.all(finite_vals >= 0)


@settings(max_examples=25, deadline=None)
@given(arrays(np.float64, st.integers(200, 600), elements=st.floats(-50, 50)))
def test_generalized_mean_monotone(x):
    surf = mfdfa(x, AnalysisConfig(scales=(16, 30, 50)))
    for j in range(surf.scales.size):
        col = surf.values[:, j]
        used = surf.boxes_excluded[:, j] == 0
        col = col[used & np.isfinite(col)]
        assert np.all(np.diff(col) >= -1e-9 * np.abs(col[1:]))
