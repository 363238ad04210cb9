import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from causalmaps import (
    FactorConfig,
    ShapeMismatchError,
    count_causes_effects,
    damaged_factors,
    extract_factors,
)

from helpers import oracle_counts


def three_node_map():
    # directed wins: 0 -> 1, 0 -> 2, 2 -> 1
    m = np.zeros((3, 3))
    m[0, 1], m[1, 0] = 0.9, 0.1
    m[0, 2], m[2, 0] = 0.8, 0.2
    m[2, 1], m[1, 2] = 0.7, 0.3
    return m


class TestCountCausesEffects:
    def test_symmetric_map_has_no_edges(self):
        rng = np.random.default_rng(0)
        raw = rng.random((3, 3))
        sym = (raw + raw.T) / 2
        causes, effects = count_causes_effects(sym)
        assert np.array_equal(causes, [0, 0, 0])
        assert np.array_equal(effects, [0, 0, 0])

    def test_two_node_example(self):
        m = np.array([[1.0, 0.25], [0.5, 0.125]])
        causes, effects = count_causes_effects(m)
        assert np.array_equal(causes, [0, 1])
        assert np.array_equal(effects, [1, 0])

    def test_three_node_example(self):
        causes, effects = count_causes_effects(three_node_map())
        assert np.array_equal(causes, [2, 0, 1])
        assert np.array_equal(effects, [0, 2, 1])

    def test_diagonal_never_counts(self):
        m = np.eye(4) * 5.0
        causes, effects = count_causes_effects(m)
        assert causes.sum() == 0 and effects.sum() == 0

    def test_matches_ordered_pair_oracle(self):
        rng = np.random.default_rng(42)
        for _ in range(100):
            k = int(rng.integers(2, 12))
            m = rng.random((k, k))
            causes, effects = count_causes_effects(m)
            oc, oe = oracle_counts(m)
            assert np.array_equal(causes, oc)
            assert np.array_equal(effects, oe)

    def test_conservation(self):
        rng = np.random.default_rng(43)
        for _ in range(50):
            k = int(rng.integers(2, 12))
            m = rng.random((k, k))
            causes, effects = count_causes_effects(m)
            asym = sum(
                1
                for i in range(k)
                for j in range(i + 1, k)
                if m[i, j] != m[j, i]
            )
            assert causes.sum() == effects.sum() == asym

    def test_exact_ties_form_no_edge(self):
        m = np.array([[0.0, 0.5], [0.5, 0.0]])
        causes, effects = count_causes_effects(m)
        assert causes.sum() == 0 and effects.sum() == 0

    def test_too_small_rejected(self):
        with pytest.raises(ShapeMismatchError):
            count_causes_effects(np.ones((1, 1)))


class TestExtractFactors:
    def test_symmetric_map_gives_zero_factors(self):
        sym = np.full((4, 4), 0.3)
        for direction in ("causes", "effects"):
            for mode in ("full", "bool"):
                fv = extract_factors(sym, FactorConfig(direction, mode))
                assert np.array_equal(fv.weights, np.zeros(4))

    def test_causes_full_example(self):
        fv = extract_factors(three_node_map(), FactorConfig("causes", "full"))
        assert np.array_equal(fv.weights, [2.0, 0.0, 0.0])

    def test_effects_bool_example(self):
        fv = extract_factors(three_node_map(), FactorConfig("effects", "bool"))
        assert np.array_equal(fv.weights, [0.0, 1.0, 0.0])

    def test_exclusivity(self):
        rng = np.random.default_rng(44)
        for _ in range(50):
            k = int(rng.integers(2, 12))
            m = rng.random((k, k))
            causes = extract_factors(m, FactorConfig("causes", "full")).weights
            effects = extract_factors(m, FactorConfig("effects", "full")).weights
            assert np.all(causes * effects == 0)

    def test_bool_dominance(self):
        rng = np.random.default_rng(45)
        for _ in range(50):
            k = int(rng.integers(2, 12))
            m = rng.random((k, k))
            full = extract_factors(m, FactorConfig("causes", "full")).weights
            as_bool = extract_factors(m, FactorConfig("causes", "bool")).weights
            assert np.array_equal(as_bool, (full > 0).astype(float))

    def test_permutation_equivariance(self):
        rng = np.random.default_rng(46)
        for _ in range(50):
            k = int(rng.integers(2, 12))
            m = rng.random((k, k))
            perm = rng.permutation(k)
            base = extract_factors(m, FactorConfig("causes", "full")).weights
            permuted = extract_factors(m[perm][:, perm], FactorConfig("causes", "full")).weights
            assert np.array_equal(permuted, base[perm])

    def test_full_weights_within_range(self):
        rng = np.random.default_rng(47)
        for _ in range(20):
            k = int(rng.integers(2, 12))
            m = rng.random((k, k))
            fv = extract_factors(m, FactorConfig("causes", "full"))
            assert fv.weights.min() >= 0
            assert fv.weights.max() <= k - 1
            assert np.array_equal(fv.weights, np.round(fv.weights))

    def test_invalid_config_rejected(self):
        with pytest.raises(ValueError):
            FactorConfig(direction="sideways")
        with pytest.raises(ValueError):
            FactorConfig(mode="ternary")


class TestDamagedFactors:
    def test_deterministic_per_seed(self):
        a = damaged_factors(4, "bool", rng_seed=99)
        b = damaged_factors(4, "bool", rng_seed=99)
        assert np.array_equal(a.weights, b.weights)
        assert set(np.unique(a.weights)) <= {0.0, 1.0}

    def test_full_range(self):
        fv = damaged_factors(4, "full", rng_seed=1)
        assert np.all((fv.weights >= 0) & (fv.weights <= 3))

    def test_full_mean_matches_uniform_expectation(self):
        draws = np.concatenate(
            [damaged_factors(4, "full", rng_seed=s).weights for s in range(25000)]
        )
        # uniform over {0, 1, 2, 3} has mean 1.5
        assert draws.mean() == pytest.approx(1.5, abs=0.02)

    def test_small_k_rejected(self):
        with pytest.raises(ValueError):
            damaged_factors(1, "full", rng_seed=0)

    @given(st.integers(2, 32), st.sampled_from(["full", "bool"]), st.integers(0, 2**31))
    @settings(max_examples=50, deadline=None)
    def test_codomain(self, k, mode, seed):
        fv = damaged_factors(k, mode, seed)
        assert fv.weights.shape == (k,)
        if mode == "bool":
            assert set(np.unique(fv.weights)) <= {0.0, 1.0}
        else:
            assert np.all((fv.weights >= 0) & (fv.weights <= k - 1))
