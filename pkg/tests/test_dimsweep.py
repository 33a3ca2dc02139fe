import csv
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from twophase.autoenc import AeArchitecture, TrainConfig
from twophase.dimsweep import SweepConfig, SweepResult, estimate_dim, sweep
from twophase.errors import EstimationError, ParameterError
from twophase.synth import NonlinPoolParams, gen_nonlin_pool


def rank_r(r, m=6, n=120, seed=0):
    rng = np.random.default_rng(seed)
    return rng.normal(size=(n, r)) @ rng.normal(size=(r, m))


def curve(values, p0=1):
    v = np.asarray(values, dtype=float)
    return SweepResult("pca", np.arange(p0, p0 + v.size), np.column_stack([v, v * 1.5]))


class TestPcaSweep:
    def test_exact_rank(self):
        res = sweep(rank_r(3), "pca", range(1, 7), folds=4)
        assert np.all(res.mse_min[:2] > 1e-3)
        assert np.all(res.mse_min[2:] < 1e-20)
        assert res.estimated_dim == 3 and not res.used_fallback

    def test_non_increasing(self):
        x = np.random.default_rng(1).normal(size=(100, 5)) @ np.random.default_rng(2).normal(size=(5, 5))
        res = sweep(x, "pca", range(1, 6), folds=5)
        assert np.all(np.diff(res.mse_mean) <= 1e-12)
        assert np.all(res.mse_min <= res.mse_mean)

    @pytest.mark.parametrize("r", [1, 2, 4])
    def test_linear_rank_recovered(self, r):
        res = sweep(rank_r(r, seed=r), "pca", range(1, 7), folds=3)
        for fraction in (1e-6, 1e-9, 1e-12):
            assert estimate_dim(res, fraction).dim == r

    def test_deterministic(self):
        x = rank_r(2) + np.random.default_rng(3).normal(size=(120, 6)) * 0.1
        a = sweep(x, "pca", range(1, 4), cfg=SweepConfig(seed=4))
        b = sweep(x, "pca", range(1, 4), cfg=SweepConfig(seed=4))
        assert a.fold_mse.tobytes() == b.fold_mse.tobytes()

    def test_outputs(self, tmp_path):
        res = sweep(rank_r(2), "pca", range(1, 4), folds=3)
        res.write_json(tmp_path / "s.json")
        res.write_csv(tmp_path / "s.csv")
        d = json.loads((tmp_path / "s.json").read_text())
        assert d["estimated_dim"] == 2 and d["p_values"] == [1, 2, 3]
        rows = list(csv.reader((tmp_path / "s.csv").open()))
        assert rows[0] == ["p", "mse_min", "mse_mean", "mse_std", "method"]
        assert len(rows) == 4 and rows[1][-1] == "pca"

    @pytest.mark.parametrize(
        "kw", [dict(p_range=[0, 1]), dict(p_range=[2, 1]), dict(p_range=[7]), dict(p_range=[1], folds=1)]
    )
    def test_parameter_errors(self, kw):
        with pytest.raises(ParameterError):
            sweep(rank_r(2), "pca", **kw)

    def test_unknown_method(self):
        with pytest.raises(ParameterError):
            sweep(rank_r(2), "ica", [1])


class TestAeSweep:
    cfg = SweepConfig(
        train=TrainConfig(learning_rate=3e-3, batch_size=32, max_epochs=20, patience=5),
        arch_rule=lambda m, p: AeArchitecture.symmetric(m, p, (8,)),
        seed=1,
    )

    def test_parallel_matches_serial(self):
        ds, _ = gen_nonlin_pool(NonlinPoolParams(latent_dim=1, obs_dim=3, ops=("cube",), n=200))
        serial = sweep(ds, "ae", [1, 2], folds=2, cfg=self.cfg)
        par = sweep(ds, "ae", [1, 2], folds=2,
                    cfg=SweepConfig(self.cfg.train, self.cfg.arch_rule, 1, n_jobs=2))
        assert serial.fold_mse.tobytes() == par.fold_mse.tobytes()

    def test_errors_annotated(self):
        ds, _ = gen_nonlin_pool(NonlinPoolParams(latent_dim=1, obs_dim=3, ops=("cube",), n=200))
        # hidden width equal to p leaves no unique bottleneck
        bad = SweepConfig(self.cfg.train, lambda m, p: AeArchitecture.symmetric(m, p, (1,)))
        with pytest.raises(ParameterError, match=r"p=1, fold=0"):
            sweep(ds, "ae", [1], folds=2, cfg=bad)


class TestEstimate:
    def test_first_below_fraction(self):
        assert estimate_dim(curve([1.0, 0.5, 0.005, 0.004])) == (3, False)

    def test_elbow_fallback(self):
        # log-linear decline that flattens after p = 6
        values = [0.8 * 0.6 ** (p - 1) if p <= 6 else 0.8 * 0.6**5 * 0.97 ** (p - 6) for p in range(1, 11)]
        assert min(values) > 0.01
        est = estimate_dim(curve(values))
        assert est.dim == 6 and est.used_fallback

    def test_too_short(self):
        with pytest.raises(EstimationError):
            estimate_dim(curve([0.5, 0.4]))

    def test_baseline(self):
        assert estimate_dim(curve([4.0, 0.3, 0.01]), baseline=4.0).dim == 3

    @given(
        st.lists(st.floats(1e-6, 1.0), min_size=3, max_size=10).map(lambda v: sorted(v, reverse=True)),
        st.floats(1e-6, 1.0),
        st.floats(1e-6, 1.0),
    )
    @settings(max_examples=200, deadline=None)
    def test_monotone_in_fraction(self, values, f1, f2):
        lo, hi = sorted((f1, f2))
        a, b = estimate_dim(curve(values), lo), estimate_dim(curve(values), hi)
        if not a.used_fallback and not b.used_fallback:
            assert a.dim >= b.dim
