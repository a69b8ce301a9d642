import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from sklearn.covariance import ledoit_wolf

from graph_wpt_hos.scoring import (
    MIN_THRESHOLD,
    CusumState,
    NominalModel,
    crossfit_scores,
    cusum_path,
    cusum_step,
    fit_nominal,
    ledoit_wolf_shrinkage,
    load_model,
    mahalanobis_score,
    run_detector,
    save_model,
    tune_threshold,
)

seeds = st.integers(0, 2**32 - 1)


def lw_loop_oracle(x: np.ndarray) -> tuple[np.ndarray, float]:
    """Textbook shrinkage intensity with an explicit per-sample sum."""
    n, d = x.shape
    xc = x - x.mean(axis=0)
    s = xc.T @ xc / n
    mu = np.trace(s) / d
    d2 = np.sum((s - mu * np.eye(d)) ** 2)
    b_bar2 = sum(np.sum((np.outer(r, r) - s) ** 2) for r in xc) / n**2
    rho = 1.0 if d2 == 0 else min(b_bar2, d2) / d2
    return rho * mu * np.eye(d) + (1 - rho) * s, rho


class TestLedoitWolf:
    @settings(max_examples=30, deadline=None)
    @given(seed=seeds, n=st.integers(3, 40), d=st.integers(1, 12))
    def test_matches_loop_oracle(self, seed, n, d):
        x = np.random.default_rng(seed).standard_normal((n, d)) @ np.diag(np.arange(1, d + 1.0))
        cov, rho = ledoit_wolf_shrinkage(x)
        ref_cov, ref_rho = lw_loop_oracle(x)
        assert rho == pytest.approx(ref_rho, rel=1e-9, abs=1e-12)
        np.testing.assert_allclose(cov, ref_cov, rtol=1e-9, atol=1e-12)

    @pytest.mark.parametrize("n,d", [(50, 10), (200, 264), (30, 5)])
    def test_matches_sklearn(self, n, d):
        x = np.random.default_rng(n + d).standard_normal((n, d)) * np.linspace(0.5, 3, d)
        cov, rho = ledoit_wolf_shrinkage(x)
        ref_cov, ref_rho = ledoit_wolf(x, block_size=10_000)
        assert rho == pytest.approx(ref_rho, rel=1e-9)
        np.testing.assert_allclose(cov, ref_cov, rtol=1e-9, atol=1e-12)

    def test_spd_with_two_samples_in_264_dims(self):
        x = np.random.default_rng(0).standard_normal((2, 264))
        cov, rho = ledoit_wolf_shrinkage(x)
        # two centred rows are x and -x, so the closed-form intensity is zero
        assert rho == 1.0
        assert np.linalg.eigvalsh(cov).min() > 0
        np.linalg.cholesky(cov)
        model = fit_nominal(x, calibration_scoring="insample")
        assert np.isfinite(model.score(x)).all()

    def test_rank_deficient_with_positive_intensity_is_spd(self):
        x = np.random.default_rng(1).standard_normal((20, 264))
        cov, rho = ledoit_wolf_shrinkage(x)
        assert 0.0 < rho < 1.0
        np.linalg.cholesky(cov)

    def test_small_case_matches_transcription(self):
        x = np.random.default_rng(50).standard_normal((50, 5))
        assert ledoit_wolf_shrinkage(x)[1] == pytest.approx(lw_loop_oracle(x)[1], abs=1e-12)

    def test_identity_like_data_shrinks_fully(self):
        x = np.array([[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]])
        cov, rho = ledoit_wolf_shrinkage(x)
        assert rho == 1.0
        np.testing.assert_allclose(cov, 0.5 * np.eye(2))

    def test_input_validation(self):
        with pytest.raises(ValueError):
            ledoit_wolf_shrinkage(np.zeros((1, 3)))
        with pytest.raises(ValueError):
            ledoit_wolf_shrinkage(np.array([[np.nan, 1.0], [1.0, 2.0]]))


def _model(mean, cov, scale=None) -> NominalModel:
    d = len(mean)
    return NominalModel(
        mean=np.asarray(mean, float),
        scale=np.ones(d) if scale is None else scale,
        shrunk_covariance=np.asarray(cov, float),
        shrinkage_rho=0.0,
        cusum_drift_nu=0.0,
        cusum_threshold_h=1.0,
        calibration_count=0,
        calibration_scores=np.zeros(0),
    )


class TestMahalanobis:
    def test_zero_at_mean(self):
        f = np.random.default_rng(1).standard_normal((100, 20))
        model = fit_nominal(f)
        assert model.score(model.mean) == 0.0

    def test_explicit_inverse_oracle(self):
        rng = np.random.default_rng(2)
        f = rng.standard_normal((60, 4)) @ rng.standard_normal((4, 4))
        model = fit_nominal(f)
        x = rng.standard_normal((10, 4))
        z = (x - model.mean) / model.scale
        inv = np.linalg.inv(model.shrunk_covariance)
        expected = np.einsum("ij,jk,ik->i", z, inv, z)
        np.testing.assert_allclose(model.score(x), expected, rtol=1e-9)
        assert mahalanobis_score(model, x[0]) == pytest.approx(expected[0], rel=1e-9)

    @settings(max_examples=30, deadline=None)
    @given(seed=seeds, d=st.integers(2, 8))
    def test_unshrunk_invariant_under_linear_maps(self, seed, d):
        rng = np.random.default_rng(seed)
        x = rng.standard_normal((5 * d, d))
        a = rng.standard_normal((d, d)) + 3 * np.eye(d)
        mu = x.mean(axis=0)
        s = np.cov(x, rowvar=False, bias=True)
        probe = rng.standard_normal((6, d))
        base = _model(mu, s).score(probe)
        mapped = _model(a @ mu, a @ s @ a.T).score(probe @ a.T)
        np.testing.assert_allclose(mapped, base, rtol=1e-6)

    @settings(max_examples=20, deadline=None)
    @given(seed=seeds)
    def test_fitted_score_invariant_under_coordinate_scaling(self, seed):
        rng = np.random.default_rng(seed)
        f = rng.standard_normal((50, 6))
        scale = rng.uniform(0.1, 10, 6)
        shift = rng.standard_normal(6)
        probe = rng.standard_normal((5, 6))
        a = fit_nominal(f, calibration_scoring="insample").score(probe)
        b = fit_nominal(f * scale + shift, calibration_scoring="insample").score(probe * scale + shift)
        np.testing.assert_allclose(b, a, rtol=1e-9)

    def test_batch_and_single_agree(self):
        f = np.random.default_rng(3).standard_normal((40, 5))
        model = fit_nominal(f)
        batch = model.score(f[:3])
        assert [model.score(r) for r in f[:3]] == pytest.approx(list(batch))

    def test_dimension_and_finiteness_checks(self):
        model = fit_nominal(np.random.default_rng(4).standard_normal((20, 3)))
        with pytest.raises(ValueError, match="dimension"):
            model.score(np.zeros(4))
        with pytest.raises(ValueError, match="non-finite"):
            model.score(np.array([0.0, np.inf, 0.0]))

    def test_constant_feature_uses_scale_floor(self):
        f = np.random.default_rng(5).standard_normal((30, 3))
        f[:, 1] = 2.0
        model = fit_nominal(f)
        assert model.scale[1] == 1e-9
        assert np.all(np.isfinite(model.score(f)))


def brute_cusum(a, nu):
    g, out = 0.0, []
    for v in a:
        g = max(0.0, g + v - nu)
        out.append(g)
    return np.array(out)


class TestCusum:
    @settings(max_examples=50, deadline=None)
    @given(seed=seeds, n=st.integers(1, 60), nu=st.floats(-2, 2))
    def test_matches_brute_force_and_nonnegative(self, seed, n, nu):
        a = np.random.default_rng(seed).standard_normal(n)
        g = cusum_path(a, nu)
        np.testing.assert_allclose(g, brute_cusum(a, nu), atol=1e-12)
        assert np.all(g >= 0)

    def test_step_matches_path(self):
        a = np.array([1.0, 3.0, -2.0, 4.0])
        state = CusumState()
        for v, expected in zip(a, cusum_path(a, 1.0)):
            state = cusum_step(state, v, 1.0)
            assert state.g == expected
        assert state.frames_since_reset == 4

    def test_hand_case(self):
        np.testing.assert_array_equal(cusum_path([2.0, 0.0, 3.0, 0.0], 1.0), [1.0, 0.0, 2.0, 1.0])

    def test_independent_rows(self):
        a = np.random.default_rng(6).standard_normal((3, 20))
        g = cusum_path(a, 0.1)
        for i in range(3):
            np.testing.assert_array_equal(g[i], cusum_path(a[i], 0.1))

    @settings(max_examples=40, deadline=None)
    @given(seed=seeds, fpr=st.floats(0.01, 0.5))
    def test_threshold_respects_target(self, seed, fpr):
        a = np.random.default_rng(seed).standard_normal(200) + 0.05
        h = tune_threshold(a, 0.0, fpr)
        g = cusum_path(a, 0.0)
        assert np.mean(g > h) <= fpr + 1e-12
        assert h in set(g.tolist()) | {MIN_THRESHOLD}

    @settings(max_examples=30, deadline=None)
    @given(seed=seeds)
    def test_threshold_monotone_in_fpr(self, seed):
        a = np.random.default_rng(seed).standard_normal(150)
        hs = [tune_threshold(a, 0.0, f) for f in (0.01, 0.02, 0.05, 0.1, 0.2, 0.5)]
        assert all(x >= y for x, y in zip(hs, hs[1:]))

    def test_threshold_edge_cases(self):
        assert tune_threshold(np.zeros(10), 1.0, 0.05) == MIN_THRESHOLD
        assert tune_threshold(np.ones(10), 0.0, 1.0) == 0.0
        with pytest.raises(ValueError):
            tune_threshold(np.ones(10), 0.0, 0.0)
        with pytest.raises(ValueError):
            tune_threshold(np.zeros(0), 0.0, 0.05)

    def test_sequence_scope_restarts(self):
        a = np.ones(20)
        # one 20-frame sequence climbs to 20; two 10-frame sequences stop at 10
        assert tune_threshold(a, 0.0, 0.05) > tune_threshold(a, 0.0, 0.05, frames_per_sequence=10)


class TestFit:
    def test_drift_is_calibration_mean(self):
        f = np.random.default_rng(7).standard_normal((80, 6))
        for mode in ("crossfit", "insample"):
            model = fit_nominal(f, calibration_scoring=mode)
            assert model.cusum_drift_nu == pytest.approx(model.calibration_scores.mean())
        insample = fit_nominal(f, calibration_scoring="insample")
        assert insample.score(f).mean() == pytest.approx(insample.cusum_drift_nu, rel=1e-12)

    def test_crossfit_scores_are_out_of_fold(self):
        f = np.random.default_rng(8).standard_normal((40, 30))
        cf = crossfit_scores(f, 10)
        ins = fit_nominal(f, calibration_scoring="insample").calibration_scores
        # held-out vectors look farther away than the ones the model was fitted on
        assert cf.mean() > ins.mean()

    def test_requires_two_vectors(self):
        with pytest.raises(ValueError):
            fit_nominal(np.zeros((1, 4)))

    def test_unknown_scoring_mode(self):
        with pytest.raises(ValueError):
            fit_nominal(np.random.default_rng(0).standard_normal((10, 2)), calibration_scoring="bogus")


class TestDetector:
    def test_run_detector(self):
        f = np.random.default_rng(9).standard_normal((100, 4))
        model = fit_nominal(f)
        stream = np.vstack([f[:10], f[:10] + 6.0])
        series = run_detector(model, stream)
        np.testing.assert_allclose(series.cusum, cusum_path(series.scores, model.cusum_drift_nu))
        assert series.first_alarm is not None and series.first_alarm >= 10

    def test_empty_stream(self):
        model = fit_nominal(np.random.default_rng(10).standard_normal((20, 3)))
        series = run_detector(model, [])
        assert series.scores.size == 0 and series.first_alarm is None


class TestPersistence:
    def test_save_load_save_is_byte_identical(self, tmp_path):
        f = np.random.default_rng(11).standard_normal((60, 12))
        model = fit_nominal(f, metadata={"variant": "GraphWptHos", "node_count": 4})
        p1, p2 = tmp_path / "a.json", tmp_path / "b.json"
        save_model(model, p1)
        loaded = load_model(p1)
        save_model(loaded, p2)
        assert p1.read_bytes() == p2.read_bytes()
        np.testing.assert_array_equal(loaded.shrunk_covariance, model.shrunk_covariance)
        np.testing.assert_array_equal(loaded.score(f), model.score(f))
        assert loaded.metadata == model.metadata

    def test_rejects_foreign_file(self, tmp_path):
        p = tmp_path / "x.json"
        p.write_text('{"format": "other"}')
        with pytest.raises(ValueError):
            load_model(p)
