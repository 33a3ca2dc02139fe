import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from twophase.errors import ParameterError
from twophase.pca import fit_pca
from twophase.synth import (
    NonlinPoolParams,
    WaterTankParams,
    evaluate_column,
    gen_nonlin_pool,
    gen_watertank,
    gen_watertank_anomalies,
    watertank_residual,
)


class TestWaterTank:
    def test_degenerate_fixed_level(self):
        ds = gen_watertank(WaterTankParams(a=2.0, h_min=4.0, h_max=4.0, noise_std=0.0, n=5))
        assert ds.x.tolist() == [[4.0, 4.0]] * 5

    def test_noise_free_on_curve(self):
        ds = gen_watertank(WaterTankParams(noise_std=0.0, n=500, seed=3))
        assert np.all(watertank_residual(ds.x, 1.0) == 0.0)

    def test_residual_distribution(self):
        ds = gen_watertank(WaterTankParams(n=10_000, seed=4))
        r = np.abs(watertank_residual(ds.x, 1.0))
        assert np.mean(r < 3 * np.sqrt(2) * 0.02) >= 0.99

    def test_labels_and_range(self):
        ds = gen_watertank(WaterTankParams(noise_std=0.0, n=200))
        assert ds.labels.sum() == 0
        assert ds.x[:, 0].min() >= 1.0 and ds.x[:, 0].max() < 10.0
        assert ds.column_names == ("H", "q_o")

    def test_deterministic(self):
        p = WaterTankParams(n=300, seed=9)
        assert gen_watertank(p).x.tobytes() == gen_watertank(p).x.tobytes()
        assert gen_watertank(p).x.tobytes() != gen_watertank(WaterTankParams(n=300, seed=10)).x.tobytes()

    @pytest.mark.parametrize(
        "kw",
        [dict(a=0.0), dict(h_min=0.0), dict(h_min=5.0, h_max=4.0), dict(noise_std=-1.0), dict(n=0)],
    )
    def test_parameter_errors(self, kw):
        with pytest.raises(ParameterError):
            gen_watertank(WaterTankParams(**kw))


class TestAnomalies:
    def test_off_manifold_margin(self):
        ds = gen_watertank_anomalies(WaterTankParams(), ["off_manifold"], 500)
        assert np.all(np.abs(watertank_residual(ds.x, 1.0)) >= 0.12)

    def test_off_manifold_normal_distance(self):
        # the displacement is perpendicular, so the Euclidean distance to the
        # curve is at least 6 sigma as well
        p = WaterTankParams(seed=2)
        ds = gen_watertank_anomalies(p, "off_manifold", 200)
        grid = np.linspace(0.5, 11.0, 200_001)
        curve = np.column_stack([grid, np.sqrt(grid)])
        from scipy.spatial import cKDTree

        dist, _ = cKDTree(curve).query(ds.x)
        assert dist.min() >= 6 * 0.02 - 1e-4

    def test_out_of_range(self):
        p = WaterTankParams()
        ds = gen_watertank_anomalies(p, ["out_of_range"], 300)
        h = ds.x[:, 0]
        assert np.all((h < p.h_min) | (h > p.h_max))
        assert np.max(np.abs(watertank_residual(ds.x, p.a))) < 1e-12

    def test_mixed_batch_bookkeeping(self):
        ds = gen_watertank_anomalies(WaterTankParams(), ["off_manifold", "out_of_range"], 50)
        assert ds.n == 100 and ds.labels.sum() == 100

    def test_unknown_kind(self):
        with pytest.raises(ParameterError):
            gen_watertank_anomalies(WaterTankParams(), ["sideways"], 5)


class TestNonlinPool:
    def test_cube(self):
        ds, man = gen_nonlin_pool(NonlinPoolParams(latent_dim=1, obs_dim=2, ops=("cube",), noise_std=0.0))
        assert np.array_equal(ds.x[:, 1], ds.x[:, 0] ** 3)
        assert man.columns[1]["op"] == "cube"

    def test_product(self):
        ds, _ = gen_nonlin_pool(NonlinPoolParams(latent_dim=2, obs_dim=3, ops=("product",), noise_std=0.01))
        resid = ds.x[:, 2] - ds.x[:, 0] * ds.x[:, 1]
        assert np.abs(resid).max() < 0.1
        assert 0.005 < resid.std() < 0.03

    def test_manifest_lists_every_column(self):
        _, man = gen_nonlin_pool(NonlinPoolParams(latent_dim=2, obs_dim=5, ops=("cube", "product")))
        d = man.to_dict()
        assert d["obs_dim"] == 5 and len(d["columns"]) == 5
        assert all("formula" in c for c in d["columns"])

    @given(
        st.integers(1, 3),
        st.integers(0, 4),
        st.lists(st.sampled_from(["product", "cube", "time_pair", "linear_mix"]), min_size=1, max_size=4),
        st.integers(0, 1000),
    )
    @settings(max_examples=40, deadline=None)
    def test_noise_free_formulas_exact(self, d, extra, ops, seed):
        ds, man = gen_nonlin_pool(
            NonlinPoolParams(latent_dim=d, obs_dim=d + extra, ops=tuple(ops), noise_std=0.0, n=50, seed=seed)
        )
        z = ds.x[:, :d]
        assert np.all(np.abs(z) <= 1.0)
        for c, spec in enumerate(man.columns):
            assert np.array_equal(ds.x[:, c], evaluate_column(spec, z))

    def test_deterministic(self):
        p = NonlinPoolParams(ops=("time_pair", "linear_mix"), seed=5)
        a, ma = gen_nonlin_pool(p)
        b, mb = gen_nonlin_pool(p)
        assert a.x.tobytes() == b.x.tobytes() and ma.to_dict() == mb.to_dict()

    @pytest.mark.parametrize("d", [1, 2, 3])
    def test_nonlinear_embedding_needs_more_pca_components(self, d):
        ds, _ = gen_nonlin_pool(
            NonlinPoolParams(latent_dim=d, obs_dim=2 * d + 2, ops=("cube", "product"), noise_std=0.0, n=2000)
        )
        x = (ds.x - ds.x.mean(0)) / ds.x.std(0)
        explained = np.cumsum(fit_pca(x, x.shape[1]).explained)
        assert explained[d - 1] < 0.99

    def test_empty_ops(self):
        with pytest.raises(ParameterError):
            gen_nonlin_pool(NonlinPoolParams(ops=()))

    def test_unknown_op(self):
        with pytest.raises(ParameterError):
            gen_nonlin_pool(NonlinPoolParams(ops=("sqrt",)))

    def test_obs_dim_below_latent(self):
        with pytest.raises(ParameterError):
            gen_nonlin_pool(NonlinPoolParams(latent_dim=3, obs_dim=2))
