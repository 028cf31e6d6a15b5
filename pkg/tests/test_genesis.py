from __future__ import annotations

import math

import numpy as np
import pytest

from datingsim.core import AttributeSchema, ConfigurationError, DomainError, SchemaError, is_simplex
from datingsim.genesis import (
    CovarianceSpec,
    NormInitParams,
    build_covariance,
    covariance_matrix,
    estimate_true_contingency,
    good_cells,
    init_on_platform_norm,
    init_out_platform_norm,
    init_preferences,
    init_stereotype,
    latent_factor,
    nearest_correlation,
    sample_attributes,
    sample_codes_bits,
    threshold_latent,
)
from datingsim.interventions import base_schema

SCHEMA5 = base_schema(1)
SCHEMA9 = base_schema(2)


def orthant(rho: float) -> float:
    return 0.25 + math.asin(rho) / (2 * math.pi)


class TestCovariance:
    def test_baseline_entries(self):
        cov = build_covariance(CovarianceSpec(5, 0.4, 0.2))
        assert np.all(np.diag(cov) == 1.0)
        assert np.all(cov[0, 1:] == 0.4) and np.all(cov[1:, 0] == 0.4)
        off = cov[1:, 1:][~np.eye(4, dtype=bool)]
        assert np.all(off == 0.2)

    def test_zero_correlation_is_identity(self):
        assert np.array_equal(build_covariance(CovarianceSpec(5, 0.0, 0.0)), np.eye(5))

    @pytest.mark.parametrize(
        "m,beta,gamma",
        [(9, 0.8, 0.6), (9, 0.8, 0.2), (9, 0.6, 0.2), (5, 0.8, 0.2), (5, 0.6, 0.2), (9, 0.4, 0.2)],
    )
    def test_psd_verdict_matches_power_iteration(self, m, beta, gamma):
        # smallest eigenvalue by power iteration on (c*I - cov), independent of eigh
        cov = covariance_matrix(CovarianceSpec(m, beta, gamma))
        shift = np.abs(cov).sum(axis=1).max()
        x = np.random.default_rng(0).standard_normal(m)
        for _ in range(5000):
            x = (shift * np.eye(m) - cov) @ x
            x /= np.linalg.norm(x)
        smallest = shift - x @ (shift * np.eye(m) - cov) @ x
        if smallest < -1e-9:
            with pytest.raises(ConfigurationError, match="eigenvalue"):
                build_covariance(CovarianceSpec(m, beta, gamma))
        else:
            build_covariance(CovarianceSpec(m, beta, gamma))

    def test_repair_gives_valid_correlation(self):
        cov = build_covariance(CovarianceSpec(9, 0.8, 0.2), repair=True)
        assert np.allclose(np.diag(cov), 1.0)
        assert np.linalg.eigvalsh(cov)[0] >= -1e-9
        assert np.allclose(cov, cov.T)

    def test_nearest_correlation_keeps_valid_matrix(self):
        cov = covariance_matrix(CovarianceSpec(5, 0.4, 0.2))
        assert np.allclose(nearest_correlation(cov), cov)

    def test_uncorrelated_index(self):
        cov = build_covariance(CovarianceSpec(6, 0.4, 0.2, frozenset({5})))
        assert np.all(cov[5, :5] == 0.0) and cov[5, 5] == 1.0

    def test_factor_reproduces_cov(self):
        cov = build_covariance(CovarianceSpec(9, 0.4, 0.6))
        f = latent_factor(cov)
        assert np.allclose(f @ f.T, cov, atol=1e-12)


class TestSampling:
    def test_threshold(self):
        assert threshold_latent(np.array([0.5, -1.0, 0.0, -0.1])).tolist() == [1, 0, 1, 0]

    def test_single_draw_shape(self):
        bits = sample_attributes(build_covariance(CovarianceSpec(5, 0.4, 0.2)), np.random.default_rng(0))
        assert bits.shape == (5,) and set(bits.tolist()) <= {0, 1}

    def test_marginals_and_orthant(self):
        cov = build_covariance(CovarianceSpec(5, 0.4, 0.2))
        bits = sample_codes_bits(latent_factor(cov), 100_000, np.random.default_rng(3))
        assert np.all(np.abs(bits.mean(axis=0) - 0.5) < 0.01)
        both = np.mean(bits[:, 0] & bits[:, 1])
        assert both == pytest.approx(orthant(0.4), abs=0.01)
        assert orthant(0.4) == pytest.approx(0.3155, abs=5e-5)

    def test_true_table_totals_and_uniformity(self):
        n = 1 << 20
        table = estimate_true_contingency(np.eye(5), n, np.random.default_rng(5))
        assert table.sum() == n
        p = 1 / 32
        sigma = math.sqrt(n * p * (1 - p))
        assert np.all(np.abs(table - n * p) < 4 * sigma)

    def test_true_table_pairwise_marginals(self):
        cov = build_covariance(CovarianceSpec(5, 0.6, 0.2))
        table = estimate_true_contingency(cov, 1 << 18, np.random.default_rng(9))
        codes = np.arange(32)
        both = table[(codes & 1 == 1) & ((codes >> 2) & 1 == 1)].sum() / table.sum()
        assert both == pytest.approx(orthant(0.6), abs=0.01)
        others = table[((codes >> 1) & 1 == 1) & ((codes >> 3) & 1 == 1)].sum() / table.sum()
        assert others == pytest.approx(orthant(0.2), abs=0.01)

    def test_true_table_needs_enough_samples(self):
        with pytest.raises(ConfigurationError):
            estimate_true_contingency(np.eye(5), 100, np.random.default_rng(0))

    def test_deterministic(self):
        cov = build_covariance(CovarianceSpec(5, 0.4, 0.2))
        a = estimate_true_contingency(cov, 4096, np.random.default_rng(1))
        b = estimate_true_contingency(cov, 4096, np.random.default_rng(1))
        assert np.array_equal(a, b)


@pytest.fixture(scope="module")
def table5():
    cov = build_covariance(CovarianceSpec(5, 0.4, 0.2))
    return estimate_true_contingency(cov, 1 << 16, np.random.default_rng(2))


class TestStereotype:
    def test_mass_and_race_split(self, table5):
        g = init_stereotype(0b10110, table5, 0.5, SCHEMA5, np.random.default_rng(0))
        codes = np.arange(32)
        assert g.sum() == 400
        assert g[codes & 1 == 0].sum() == 300

    def test_no_distortion(self, table5):
        # with e=0 the out-race counts equal an undistorted conditional draw
        g = init_stereotype(0b00001, table5, 0.0, SCHEMA5, np.random.default_rng(4), n_same=0, n_other=20_000)
        codes = np.arange(32)
        cond = table5 * (codes & 1 == 0)
        assert np.allclose(g / g.sum(), cond / cond.sum(), atol=0.012)

    def test_full_distortion_leaves_nothing_good(self, table5):
        own = 0b10101
        g = init_stereotype(own, table5, 1.0, SCHEMA5, np.random.default_rng(4), n_same=0, n_other=1000)
        good = good_cells(own, SCHEMA5)
        good[:, 0] = False
        assert g[good.any(axis=1)].sum() == 0

    def test_flip_frequency(self, table5):
        own = 0b00000  # race 0; competing attributes good at value 1
        n_other = 100_000
        rng = np.random.default_rng(8)
        undistorted = init_stereotype(own, table5, 0.0, SCHEMA5, rng, 0, n_other)
        distorted = init_stereotype(own, table5, 0.25, SCHEMA5, np.random.default_rng(8), 0, n_other)
        codes = np.arange(32)
        for k in range(1, 5):
            good_value = 0 if SCHEMA5.matching[k] else 1
            before = undistorted[((codes >> k) & 1) == good_value].sum()
            after = distorted[((codes >> k) & 1) == good_value].sum()
            assert 1 - after / before == pytest.approx(0.25, abs=0.005)

    def test_rejects_bad_ethnocentrism(self, table5):
        with pytest.raises(DomainError):
            init_stereotype(0, table5, 1.5, SCHEMA5, np.random.default_rng(0))


class TestNorms:
    def test_out_platform_split(self):
        rng = np.random.default_rng(0)
        n = init_out_platform_norm(NormInitParams(0.2, 0.25, 0.2), SCHEMA5, rng)
        assert n[0] == pytest.approx(0.2)
        assert n[[1, 3]].sum() == pytest.approx(0.2)
        assert n[[2, 4]].sum() == pytest.approx(0.6)

    def test_zero_race_norm(self):
        n = init_out_platform_norm(NormInitParams(0.0), SCHEMA9, np.random.default_rng(1))
        assert n[0] == 0.0

    def test_out_platform_always_simplex(self):
        rng = np.random.default_rng(2)
        for _ in range(10_000 // 100):
            for race in (0.0, 0.1, 0.3):
                assert is_simplex(init_out_platform_norm(NormInitParams(race), SCHEMA5, rng))

    def test_empty_group_with_share(self):
        schema = AttributeSchema(matching=(True, True), searchable=(True, True))
        with pytest.raises(SchemaError):
            init_out_platform_norm(NormInitParams(0.2), schema, np.random.default_rng(0))

    def test_preferences_lambda_one(self):
        n_off = np.array([0.2, 0.1, 0.3, 0.1, 0.3])
        assert np.allclose(init_preferences(n_off, 1.0, np.random.default_rng(0)), n_off)

    @pytest.mark.parametrize("lam", [0.0, 0.2])
    def test_preferences_mean(self, lam):
        n_off = np.array([0.2, 0.1, 0.3, 0.1, 0.3])
        prefs = init_preferences(n_off, lam, np.random.default_rng(1), size=100_000)
        assert np.allclose(prefs.mean(axis=0), lam * n_off + (1 - lam) / 5, atol=0.005)
        assert np.allclose(prefs.sum(axis=1), 1.0)

    def test_on_platform_mean(self):
        # searchable indices of the 5-layout are 0, 1, 3
        a = np.array([0.25, 0.25, 0.5, 0.0, 0.0])
        b = np.array([0.15, 0.35, 0.5, 0.0, 0.0])
        norm = init_on_platform_norm(np.stack([a, b]), SCHEMA5)
        assert norm == pytest.approx([0.4, 0.6, 0.0, 0.0, 0.0])

    def test_on_platform_intervention(self):
        a = np.array([0.2, 0.3, 0.5, 0.0, 0.0])
        norm = init_on_platform_norm(a, SCHEMA5, norm_intervention=True)
        assert norm.tolist() == [0.0, 1.0, 0.0, 0.0, 0.0]

    def test_on_platform_single_agent(self):
        prefs = np.array([0.1, 0.2, 0.3, 0.2, 0.2])
        norm = init_on_platform_norm(prefs, SCHEMA5)
        assert norm == pytest.approx([0.2, 0.4, 0.0, 0.4, 0.0])
