import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError
from sklearn.linear_model import LogisticRegression
from sklearn.pipeline import Pipeline

from causalmaps import (
    CausalityFactorTransformer,
    CausalityMapTransformer,
    DeskNetClassifier,
    EstimatorConfig,
    FactorConfig,
    FeatureEnhancer,
    ShapeMismatchError,
    compute_causality_map,
    enhance_mulcat,
    extract_factors,
)
from causalmaps import desknet


@pytest.fixture(scope="module")
def stacks():
    rng = np.random.default_rng(0)
    return rng.random((6, 5, 4, 4))


class TestCausalityMapTransformer:
    def test_matches_functional_core(self, stacks):
        tf = CausalityMapTransformer(method="max")
        maps = tf.fit_transform(stacks)
        assert maps.shape == (6, 5, 5)
        for i, stack in enumerate(stacks):
            want = compute_causality_map(stack, EstimatorConfig(method="max")).entries
            assert np.array_equal(maps[i], want)

    def test_lehmer_params_respected(self, stacks):
        tf = CausalityMapTransformer(method="lehmer", lehmer_p=1.0)
        maps = tf.fit_transform(stacks)
        cfg = EstimatorConfig(method="lehmer", lehmer_p=1.0)
        want = compute_causality_map(stacks[0], cfg).entries
        assert np.array_equal(maps[0], want)

    def test_get_set_params_and_clone(self):
        tf = CausalityMapTransformer(method="lehmer", lehmer_p=-2.0)
        params = tf.get_params()
        assert params["method"] == "lehmer" and params["lehmer_p"] == -2.0
        cloned = clone(tf)
        assert cloned.get_params() == params
        tf.set_params(lehmer_p=0.5)
        assert tf.lehmer_p == 0.5

    def test_bad_input_shape(self):
        with pytest.raises(ShapeMismatchError):
            CausalityMapTransformer().fit(np.zeros((3, 4, 5)))


class TestCausalityFactorTransformer:
    def test_matches_functional_core(self, stacks):
        maps = CausalityMapTransformer().fit_transform(stacks)
        factors = CausalityFactorTransformer(direction="effects", mode="bool").fit_transform(maps)
        assert factors.shape == (6, 5)
        cfg = FactorConfig(direction="effects", mode="bool")
        for i in range(6):
            assert np.array_equal(factors[i], extract_factors(maps[i], cfg).weights)

    def test_composes_in_pipeline(self, stacks):
        pipe = Pipeline(
            [
                ("cmap", CausalityMapTransformer()),
                ("factors", CausalityFactorTransformer()),
            ]
        )
        out = pipe.fit_transform(stacks)
        assert out.shape == (6, 5)


class TestFeatureEnhancer:
    def test_mulcat_payloads(self, stacks):
        enhancer = FeatureEnhancer(variant="mulcat")
        payloads = enhancer.fit_transform(stacks)
        assert payloads.shape == (6, 2 * 5 * 16)
        cmap = compute_causality_map(stacks[0], EstimatorConfig())
        factors = extract_factors(cmap, FactorConfig())
        want = enhance_mulcat(stacks[0], factors.weights).payload
        assert np.array_equal(payloads[0], want)

    @pytest.mark.parametrize(
        "variant,width",
        [("baseline", 80), ("cat", 105), ("mulcat", 160), ("cab", 80),
         ("damaged_cat", 105), ("damaged_mulcat", 160)],
    )
    def test_widths(self, stacks, variant, width):
        payloads = FeatureEnhancer(variant=variant).fit_transform(stacks)
        assert payloads.shape == (6, width)

    def test_feeds_downstream_classifier(self):
        rng = np.random.default_rng(1)
        stacks = rng.random((40, 4, 3, 3))
        y = rng.integers(0, 2, size=40)
        pipe = Pipeline(
            [("enhance", FeatureEnhancer(variant="cab")), ("clf", LogisticRegression())]
        )
        pipe.fit(stacks, y)
        assert pipe.predict(stacks).shape == (40,)

    def test_unknown_variant(self, stacks):
        with pytest.raises(ValueError):
            FeatureEnhancer(variant="quadcat").fit(stacks)


class TestDeskNetClassifier:
    def test_fit_predict_roundtrip(self):
        samples = desknet.generate_dataset(240, seed=0)
        images, labels = desknet.samples_to_arrays(samples)
        clf = DeskNetClassifier(variant="baseline", epochs=10, learning_rate=0.05, random_state=0)
        clf.fit(images, labels)
        preds = clf.predict(images)
        assert preds.shape == (240,)
        assert set(np.unique(preds)) <= {0, 1}
        proba = clf.predict_proba(images)
        assert np.allclose(proba.sum(axis=1), 1.0, atol=1e-12)
        # training accuracy: 10 epochs is plenty to beat chance on 240 samples
        assert clf.score(images, labels) > 0.6

    def test_accepts_flat_and_2d_inputs(self):
        samples = desknet.generate_dataset(60, seed=1)
        images, labels = desknet.samples_to_arrays(samples)
        clf = DeskNetClassifier(epochs=1, random_state=0)
        clf.fit(images.reshape(60, -1), labels)
        a = clf.predict(images.reshape(60, -1))
        b = clf.predict(images[:, 0])
        assert np.array_equal(a, b)

    def test_arbitrary_class_labels(self):
        samples = desknet.generate_dataset(60, seed=2)
        images, labels = desknet.samples_to_arrays(samples)
        named = np.where(labels == 1, 7, -3)
        clf = DeskNetClassifier(epochs=1, random_state=0)
        clf.fit(images, named)
        assert set(np.unique(clf.predict(images))) <= {-3, 7}

    def test_not_fitted_error(self):
        with pytest.raises(NotFittedError):
            DeskNetClassifier().predict(np.zeros((1, 256)))

    def test_clone_and_params(self):
        clf = DeskNetClassifier(variant="mulcat", epochs=7, learning_rate=0.01)
        cloned = clone(clf)
        assert cloned.get_params()["variant"] == "mulcat"
        assert cloned.get_params()["epochs"] == 7

    def test_deterministic_given_random_state(self):
        samples = desknet.generate_dataset(80, seed=3)
        images, labels = desknet.samples_to_arrays(samples)
        a = DeskNetClassifier(epochs=2, random_state=11).fit(images, labels)
        b = DeskNetClassifier(epochs=2, random_state=11).fit(images, labels)
        assert np.array_equal(a.params_.wc, b.params_.wc)

    def test_rejects_more_than_two_classes(self):
        images = np.zeros((3, 1, 16, 16))
        with pytest.raises(ValueError):
            DeskNetClassifier(epochs=1).fit(images, np.array([0, 1, 2]))
