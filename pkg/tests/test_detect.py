import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from twophase.detect import (
    FirstPhaseDetector,
    SecondPhaseDetector,
    _knn_self_excluded,
    calibrate_threshold,
    detect,
    fit_second_phase,
    lloyd,
    _kmeans_pp_init,
    parse_second_phase,
    reconstruction_scores,
    second_phase_score,
)
from twophase.errors import ConfigError, ParameterError, ShapeError
from twophase.numeric import Rng
from twophase.pca import PcaModel, fit_pca


def centered(seed, n=200, m=4):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(n, m)) @ rng.normal(size=(m, m))
    return x - x.mean(0)


class TestScores:
    def test_full_basis(self):
        x = centered(0)
        assert reconstruction_scores(fit_pca(x, 4), x).max() < 1e-12

    def test_distance_geometry(self):
        model = PcaModel(np.array([[0.0, 1.0, 0.0]]), [1.0])
        x = np.array([[0.0, 2.0, 0.0], [1.0, 2.0, 0.0], [3.0, -1.0, 4.0]])
        np.testing.assert_allclose(reconstruction_scores(model, x), [0.0, 1 / 3, 25 / 3])

    def test_shape(self):
        with pytest.raises(ShapeError):
            reconstruction_scores(fit_pca(centered(1), 2), np.ones((3, 5)))


class TestCalibrate:
    def test_thousand(self):
        assert calibrate_threshold(np.arange(1, 1001, dtype=float), 0.999) == 999.0

    def test_top_element(self):
        assert calibrate_threshold([3.0, 1.0, 2.0], 0.99) == 3.0

    def test_median(self):
        assert calibrate_threshold([5.0, 1.0, 3.0, 2.0], 0.5) == 2.0

    def test_empty(self):
        with pytest.raises(ParameterError):
            calibrate_threshold([], 0.9)

    def test_bad_q(self):
        with pytest.raises(ParameterError):
            calibrate_threshold([1.0], 1.0)

    @given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=300), st.floats(0.01, 0.999))
    @settings(max_examples=100, deadline=None)
    def test_exceedance_at_most_one_minus_q(self, scores, q):
        s = np.array(scores)
        th = calibrate_threshold(s, q)
        assert th in s
        assert np.mean(s > th) <= 1 - q + 1e-12
        assert np.mean(s <= th) >= q - 1e-12


class TestSecondPhase:
    def test_knn_duplicate_scores_zero(self):
        z = np.array([[0.0, 0.0], [0.0, 0.0], [1.0, 1.0], [3.0, 0.0]])
        scores = _knn_self_excluded(z, 1)
        assert scores[0] == 0.0 and scores[1] == 0.0
        assert scores[2] == pytest.approx(np.sqrt(2))

    def test_knn_self_excluded_calibration(self):
        z = np.arange(10.0).reshape(-1, 1)
        det = fit_second_phase("knn", {"k": 1}, z, q=0.9)
        assert det.score_threshold == 1.0

    def test_knn_stored_point_scores_zero(self):
        z = np.random.default_rng(0).normal(size=(50, 2))
        det = fit_second_phase("knn", None, z)
        assert np.all(det.score(z[:5]) == 0.0)
        assert det.params == {"k": 1}

    def test_knn_matches_brute_force(self):
        rng = np.random.default_rng(1)
        z, q = rng.normal(size=(40, 3)), rng.normal(size=(15, 3))
        det = fit_second_phase("knn", {"k": 1}, z)
        brute = np.sqrt(((q[:, None, :] - z[None]) ** 2).sum(-1)).min(1)
        np.testing.assert_allclose(det.score(q), brute, rtol=1e-12)

    def test_kmeans_blobs(self):
        rng = np.random.default_rng(2)
        a = rng.normal(size=(300, 2)) * 0.3 + [5.0, 5.0]
        b = rng.normal(size=(300, 2)) * 0.3 + [-5.0, 0.0]
        det = fit_second_phase("kmeans", {"k": 2}, np.vstack([a, b]))
        centers = det.state[np.argsort(det.state[:, 0])]
        assert np.abs(centers[0] - b.mean(0)).max() < 0.1
        assert np.abs(centers[1] - a.mean(0)).max() < 0.1

    def test_kmeans_centroid_scores_zero(self):
        z = np.random.default_rng(3).normal(size=(100, 2))
        det = fit_second_phase("kmeans", {"k": 4}, z)
        assert np.all(det.score(det.state) == 0.0)

    def test_kmeans_default_k(self):
        det = fit_second_phase("kmeans", None, np.random.default_rng(4).normal(size=(50, 1)))
        assert det.state.shape == (9, 1)

    @given(st.integers(0, 10_000), st.integers(1, 6))
    @settings(max_examples=30, deadline=None)
    def test_lloyd_objective_non_increasing(self, seed, k):
        x = np.random.default_rng(seed).normal(size=(60, 2))
        _, hist = lloyd(x, _kmeans_pp_init(x, k, Rng(seed)))
        assert all(b <= a * (1 + 1e-12) for a, b in zip(hist, hist[1:]))

    def test_hypercube_uniform_bounds(self):
        z = np.random.default_rng(5).uniform(size=(100_000, 2))
        det = fit_second_phase("hypercube", None, z, q=0.99)
        np.testing.assert_allclose(det.state[0], 0.005, atol=0.01)
        np.testing.assert_allclose(det.state[1], 0.995, atol=0.01)

    def test_hypercube_inside_is_normal(self):
        z = np.random.default_rng(6).uniform(size=(1000, 2))
        det = fit_second_phase("hypercube", None, z, q=0.99)
        inside = np.array([[0.5, 0.5], [0.2, 0.9]])
        s = det.score(inside)
        assert np.all(s <= 0) and np.all(s <= det.score_threshold)
        assert det.score(np.array([[2.0, 0.5]]))[0] == pytest.approx(2.0 - det.state[1, 0])

    def test_k_too_large(self):
        z = np.ones((3, 1))
        with pytest.raises(ParameterError):
            fit_second_phase("kmeans", {"k": 4}, z)
        with pytest.raises(ParameterError):
            fit_second_phase("knn", {"k": 3}, z)

    def test_unknown_kind(self):
        with pytest.raises(ParameterError):
            fit_second_phase("svm", None, np.ones((3, 1)))

    def test_shape(self):
        det = fit_second_phase("hypercube", None, np.random.default_rng(7).normal(size=(20, 2)))
        with pytest.raises(ShapeError):
            second_phase_score(det, np.ones((2, 3)))

    @pytest.mark.parametrize("kind", ["knn", "kmeans", "hypercube"])
    def test_round_trip_dict(self, kind):
        det = fit_second_phase(kind, None, np.random.default_rng(8).normal(size=(30, 2)))
        back = SecondPhaseDetector.from_dict(json.loads(json.dumps(det.to_dict())))
        assert back.state.tobytes() == det.state.tobytes()
        assert back.score_threshold == det.score_threshold


class TestDetect:
    def setup_method(self):
        x = centered(9, n=300, m=3)
        self.model = fit_pca(x, 2)
        self.first = FirstPhaseDetector.fit(self.model, x, 0.95)
        self.second = fit_second_phase("hypercube", None, self.model.encode(x), 0.95)
        self.test = centered(10, n=100, m=3) * 1.5

    def test_first_phase_only(self):
        res = detect(self.first, None, self.test)
        assert res.anomaly2 is None
        assert np.array_equal(res.anomaly, res.anomaly1)
        assert all("anomaly2" not in r for r in res.records())

    def test_union_of_separate_runs(self):
        res = detect(self.first, self.second, self.test)
        a1 = reconstruction_scores(self.model, self.test) > self.first.mse_threshold
        a2 = self.second.score(self.model.encode(self.test)) > self.second.score_threshold
        assert np.array_equal(res.anomaly, a1 | a2)
        assert np.array_equal(res.anomaly, res.combined_score > 0)

    def test_training_flag_rate(self):
        x = centered(9, n=300, m=3)
        res = detect(self.first, None, x)
        assert res.anomaly1.mean() <= 1 - 0.95

    @given(st.floats(0, 10), st.floats(0, 10))
    @settings(max_examples=30, deadline=None)
    def test_raising_threshold_never_adds(self, t1, t2):
        lo, hi = sorted((t1, t2))
        a_lo = detect(self.first.with_threshold(lo), None, self.test).anomaly1
        a_hi = detect(self.first.with_threshold(hi), None, self.test).anomaly1
        assert not np.any(a_hi & ~a_lo)

    def test_p_mismatch(self):
        other = fit_second_phase("knn", None, np.ones((5, 1)) * np.arange(5)[:, None])
        with pytest.raises(ConfigError):
            detect(self.first, other, self.test)

    def test_jsonl(self, tmp_path):
        res = detect(self.first, self.second, self.test[:3])
        res.write_jsonl(tmp_path / "r.jsonl")
        lines = [json.loads(line) for line in (tmp_path / "r.jsonl").read_text().splitlines()]
        assert [r["index"] for r in lines] == [0, 1, 2]
        assert {"recon_error", "latent", "anomaly1", "anomaly2", "anomaly"} <= set(lines[0])
        assert float(lines[1]["recon_error"]) == res.reconstruction_error[1]


class TestParse:
    def test_forms(self):
        assert parse_second_phase("knn:k=1") == ("knn", {"k": 1})
        assert parse_second_phase("kmeans:k=9") == ("kmeans", {"k": 9})
        assert parse_second_phase("hypercube") == ("hypercube", {})

    @pytest.mark.parametrize("spec", ["svm", "knn:k", "knn:k=a", "hypercube:k=2", "knn:j=1"])
    def test_malformed(self, spec):
        with pytest.raises(ConfigError):
            parse_second_phase(spec)
