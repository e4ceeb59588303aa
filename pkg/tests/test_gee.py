"""Estimating-equation solver and sandwich covariance."""

import numpy as np
import pytest
from numpy.testing import assert_allclose

from dynrmst.basis import BasisLayout, SplineSpec
from dynrmst.errors import InvalidInput, SingularDesign
from dynrmst.gee import (IDENTITY, LOG, DynamicModelFit, LinkSpec, fit_arrays,
                         fit_landmark_model, fit_super_model, sandwich_arrays,
                         sandwich_cov)
from dynrmst.landmark import LandmarkRow, build_super_dataset
from dynrmst.surv import SurvivalRecord


def random_rows(rng, n=40, p=2, s=1.0):
    return [LandmarkRow(id=i, landmark=s, pseudo_value=float(rng.normal(3, 1)),
                        covariates=tuple(rng.normal(size=p)))
            for i in range(n)]


def random_super(rng, n=50):
    t = np.maximum(rng.exponential(6.0, n), 0.1)
    d = rng.integers(0, 2, n)
    surv = [SurvivalRecord(i, float(t[i]), int(d[i]),
                           covariates={"x": float(rng.normal())})
            for i in range(n)]
    grid = [0.0, 1.0, 2.0]
    return build_super_dataset(surv, [], grid, 3.0, covariate_names=["x"],
                               extend_tail=True)


class TestLinks:
    def test_identity(self):
        assert IDENTITY.g(2.5) == 2.5 and IDENTITY.ginv(2.5) == 2.5
        assert IDENTITY.dginv(7.0) == 1.0

    def test_log(self):
        assert_allclose(LOG.ginv(LOG.g(3.0)), 3.0)
        assert_allclose(LOG.dginv(1.2), np.exp(1.2))

    def test_unknown_kind(self):
        with pytest.raises(InvalidInput):
            LinkSpec("probit")


class TestIdentityFit:
    def test_matches_lstsq_oracle(self):
        rng = np.random.default_rng(1)
        for _ in range(30):
            rows = random_rows(rng, n=int(rng.integers(10, 60)),
                               p=int(rng.integers(1, 4)))
            fit = fit_landmark_model(rows)
            x = np.column_stack([np.ones(len(rows)),
                                 [r.covariates for r in rows]])
            y = np.array([r.pseudo_value for r in rows])
            want, *_ = np.linalg.lstsq(x, y, rcond=None)
            assert_allclose(fit.beta, want, atol=1e-10)

    def test_singular_design(self):
        rows = [LandmarkRow(i, 0.0, 1.0, (1.0, 2.0)) for i in range(10)]
        # second covariate is exactly twice the first
        rows = [LandmarkRow(i, 0.0, float(i), (float(i), 2.0 * i))
                for i in range(10)]
        with pytest.raises(SingularDesign):
            fit_landmark_model(rows)

    def test_needs_more_rows_than_params(self):
        with pytest.raises(InvalidInput):
            fit_landmark_model(random_rows(np.random.default_rng(0), n=3, p=3))


class TestLogFit:
    def test_exact_recovery_on_noiseless_data(self):
        rng = np.random.default_rng(2)
        beta = np.array([0.5, -0.3, 0.2])
        x = np.column_stack([np.ones(200), rng.normal(size=(200, 2))])
        y = np.exp(x @ beta)
        rows = [LandmarkRow(i, 0.0, float(y[i]), tuple(x[i, 1:]))
                for i in range(200)]
        fit = fit_landmark_model(rows, link=LOG)
        assert_allclose(fit.beta, beta, atol=1e-9)
        assert fit.score_norm <= 1e-8

    def test_noisy_convergence_flags(self):
        rng = np.random.default_rng(3)
        x = np.column_stack([np.ones(300), rng.normal(size=300)])
        y = np.exp(x @ np.array([1.0, 0.4])) * rng.lognormal(0, 0.2, 300)
        rows = [LandmarkRow(i, 0.0, float(y[i]), (float(x[i, 1]),))
                for i in range(300)]
        fit = fit_landmark_model(rows, link=LOG)
        assert fit.score_norm <= 1e-8
        assert fit.iterations >= 1


class TestSandwich:
    def brute_force(self, x, y, beta, starts):
        """Sum scores within clusters by explicit python loops."""
        resid = y - x @ beta
        q = x.shape[1]
        bread = np.zeros((q, q))
        meat = np.zeros((q, q))
        for k in range(len(starts) - 1):
            u = np.zeros(q)
            for i in range(starts[k], starts[k + 1]):
                u += resid[i] * x[i]
                bread += np.outer(x[i], x[i])
            meat += np.outer(u, u)
        binv = np.linalg.inv(bread)
        return binv @ meat @ binv

    def test_matches_brute_force_cluster_sums(self):
        rng = np.random.default_rng(4)
        for _ in range(20):
            n_sub = int(rng.integers(3, 12))
            sizes = rng.integers(1, 5, n_sub)
            starts = np.concatenate(([0], np.cumsum(sizes))).astype(np.int64)
            n = starts[-1]
            x = np.column_stack([np.ones(n), rng.normal(size=(n, 2))])
            y = rng.normal(size=n)
            beta, cov, _, _ = fit_arrays(x, y, starts)
            want = self.brute_force(x, y, beta, starts)
            assert_allclose(cov, want, atol=1e-12)

    def test_singleton_clusters_equal_rowwise(self):
        rng = np.random.default_rng(5)
        n = 40
        x = np.column_stack([np.ones(n), rng.normal(size=n)])
        y = rng.normal(size=n)
        starts = np.arange(n + 1, dtype=np.int64)
        beta, cov, _, _ = fit_arrays(x, y, starts)
        assert_allclose(cov, sandwich_arrays(x, y, starts, IDENTITY, beta),
                        atol=0)

    def test_modes_on_super_dataset(self):
        rng = np.random.default_rng(6)
        data = random_super(rng)
        layout = BasisLayout((None, None))
        fit = fit_super_model(data, layout)
        cl = sandwich_cov(data, layout, IDENTITY, fit.beta, mode="clustered")
        nv = sandwich_cov(data, layout, IDENTITY, fit.beta,
                          mode="naive_rowwise")
        assert_allclose(cl, fit.covariance, atol=0)
        assert not np.allclose(cl, nv)  # repeated subjects must matter
        with pytest.raises(InvalidInput):
            sandwich_cov(data, layout, IDENTITY, fit.beta, mode="bogus")

    def test_cluster_order_invariance(self):
        """Permuting whole clusters leaves beta and covariance unchanged."""
        rng = np.random.default_rng(7)
        sizes = [3, 1, 2, 4]
        starts = np.concatenate(([0], np.cumsum(sizes))).astype(np.int64)
        n = starts[-1]
        x = np.column_stack([np.ones(n), rng.normal(size=n)])
        y = rng.normal(size=n)
        beta, cov, _, _ = fit_arrays(x, y, starts)
        perm = [2, 0, 3, 1]
        idx = np.concatenate([np.arange(starts[k], starts[k + 1])
                              for k in perm])
        sizes2 = [sizes[k] for k in perm]
        starts2 = np.concatenate(([0], np.cumsum(sizes2))).astype(np.int64)
        beta2, cov2, _, _ = fit_arrays(x[idx], y[idx], starts2)
        assert_allclose(beta, beta2, atol=1e-12)
        assert_allclose(cov, cov2, atol=1e-12)


class TestSuperModel:
    def test_spline_fit_matches_design_lstsq(self):
        rng = np.random.default_rng(8)
        data = random_super(rng, n=80)
        sp = SplineSpec((1.0,), (0.0, 2.0))
        layout = BasisLayout((sp, None))
        fit = fit_super_model(data, layout)
        from dynrmst.gee import _super_design

        x, y, _ = _super_design(data, layout)
        want, *_ = np.linalg.lstsq(x, y, rcond=None)
        assert_allclose(fit.beta, want, atol=1e-10)
        assert fit.df == data.n_subjects - layout.q

    def test_layout_shape_mismatch(self):
        data = random_super(np.random.default_rng(9))
        with pytest.raises(InvalidInput):
            fit_super_model(data, BasisLayout((None, None, None)))

    def test_coefficient_path(self):
        rng = np.random.default_rng(10)
        data = random_super(rng, n=80)
        sp = SplineSpec((1.0,), (0.0, 2.0))
        layout = BasisLayout((sp, None))
        fit = fit_super_model(data, layout)
        from dynrmst.basis import h_matrix

        assert_allclose(fit.coefficient_path(1.3),
                        h_matrix(layout, 1.3) @ fit.beta)


class TestSerialization:
    def test_round_trip_bit_exact(self):
        rng = np.random.default_rng(11)
        data = random_super(rng, n=70)
        sp = SplineSpec((1.0,), (0.0, 2.0), standardization_scale=2.0)
        layout = BasisLayout((sp, None))
        fit = fit_super_model(data, layout)
        clone = DynamicModelFit.from_json(fit.to_json())
        assert np.array_equal(fit.beta, clone.beta)
        assert np.array_equal(fit.covariance, clone.covariance)
        assert clone.layout == fit.layout
        assert clone.grid == fit.grid and clone.w == fit.w
        assert clone.df == fit.df

    def test_version_check(self):
        with pytest.raises(InvalidInput):
            DynamicModelFit.from_json('{"format_version": 99}')
