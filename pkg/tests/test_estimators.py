"""Estimator API: sklearn get_params/clone compatibility, fit/predict flows,
and bit-exact checkpoint round-trips through save()/load()."""

import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from channelorder.checkpoint import CheckpointError, load_checkpoint
from channelorder.data import SynthSpec, generate_synthetic
from channelorder.estimators import (
    ChannelOrderer,
    RgbBgrDetector,
    ShallowHistogramOrderer,
    SoftmaxOrderClassifier,
    load_estimator,
)
from channelorder.ranking import ORDERINGS

TEST_WIDTHS = (4, 6, 8, 10)
FAST = dict(epochs=1, batch_size=4, seed=3)


@pytest.fixture(scope="module")
def corpus():
    return generate_synthetic(SynthSpec(image_size=(16, 16), seed=41), 6)


@pytest.fixture(scope="module")
def fitted_orderer(corpus):
    return ChannelOrderer(widths=TEST_WIDTHS, **FAST).fit(corpus)


class TestSklearnProtocol:
    @pytest.mark.parametrize(
        "estimator",
        [
            ChannelOrderer(),
            RgbBgrDetector(),
            SoftmaxOrderClassifier(classes=2),
            ShallowHistogramOrderer(bins=32),
        ],
    )
    def test_get_params_and_clone(self, estimator):
        params = estimator.get_params()
        assert "seed" in params
        cloned = clone(estimator)
        assert cloned.get_params() == params

    def test_set_params(self):
        est = ChannelOrderer().set_params(epochs=2, tau=0.25)
        assert est.epochs == 2 and est.tau == 0.25

    def test_unfitted_raises(self, corpus):
        with pytest.raises(NotFittedError):
            ChannelOrderer().predict(corpus)
        with pytest.raises(NotFittedError):
            RgbBgrDetector().predict(corpus)
        with pytest.raises(NotFittedError):
            SoftmaxOrderClassifier().predict_proba(corpus)
        with pytest.raises(NotFittedError):
            ShallowHistogramOrderer().predict(corpus)


class TestChannelOrderer:
    def test_fit_predict(self, fitted_orderer, corpus):
        names = fitted_orderer.predict(corpus)
        assert len(names) == len(corpus)
        assert all(name in ORDERINGS for name in names)
        assert fitted_orderer.class_vocab_ == corpus[0].masks.class_vocab

    def test_decision_scores_shape(self, fitted_orderer, corpus):
        scores = fitted_orderer.decision_scores(corpus[:3])
        assert scores.shape == (3, 3)
        assert np.isfinite(scores).all()

    def test_correct_returns_three_plane_image(self, fitted_orderer, corpus):
        restored = fitted_orderer.correct(corpus[0])
        assert restored.shape == corpus[0].image.shape

    def test_gray_decision_on_identical_planes(self, fitted_orderer, corpus):
        from channelorder.data import grayscale_augment

        ps = grayscale_augment(corpus[0], np.random.default_rng(0), n_patches=0)
        decision = fitted_orderer.gray_decision(ps)
        assert decision.statistic == 0.0
        assert decision.is_near_gray

    def test_save_load_bit_exact(self, fitted_orderer, corpus, tmp_path):
        path = tmp_path / "orderer.npz"
        fitted_orderer.save(path)
        loaded = ChannelOrderer.load(path)
        assert loaded.get_params() == fitted_orderer.get_params()
        assert loaded.class_vocab_ == fitted_orderer.class_vocab_
        for sample in corpus:
            a = fitted_orderer.score_image(sample.image, sample.masks)
            b = loaded.score_image(sample.image, sample.masks)
            assert tuple(a) == tuple(b)

    def test_wrong_kind_rejected(self, corpus, tmp_path):
        path = tmp_path / "bgr.npz"
        RgbBgrDetector(widths=(4, 6, 8), **FAST).fit(corpus).save(path)
        with pytest.raises(CheckpointError, match="orderer"):
            ChannelOrderer.load(path)


class TestRgbBgrDetector:
    def test_fit_predict_and_roundtrip(self, corpus, tmp_path):
        det = RgbBgrDetector(widths=(4, 6, 8), **FAST).fit(corpus)
        labels = det.predict(corpus)
        assert set(labels) <= {"RGB", "BGR"}
        path = tmp_path / "bgr.npz"
        det.save(path)
        loaded = RgbBgrDetector.load(path)
        for sample in corpus:
            assert det.predict_one(sample) == loaded.predict_one(sample)


class TestSoftmaxOrderClassifier:
    def test_six_way_roundtrip(self, corpus, tmp_path):
        est = SoftmaxOrderClassifier(widths=TEST_WIDTHS, **FAST).fit(corpus)
        probs = est.predict_proba(corpus)
        assert probs.shape == (len(corpus), 6)
        np.testing.assert_allclose(probs.sum(axis=1), 1.0, atol=1e-6)
        path = tmp_path / "softmax6.npz"
        est.save(path)
        assert load_checkpoint(path).kind == "softmax6"
        loaded = SoftmaxOrderClassifier.load(path)
        np.testing.assert_array_equal(loaded.predict_proba(corpus), probs)

    def test_two_way_kind_tag(self, corpus, tmp_path):
        est = SoftmaxOrderClassifier(classes=2, widths=TEST_WIDTHS, **FAST).fit(corpus)
        path = tmp_path / "softmax2.npz"
        est.save(path)
        assert load_checkpoint(path).kind == "softmax2"
        assert set(SoftmaxOrderClassifier.load(path).predict(corpus)) <= {"RGB", "BGR"}

    def test_entropy_range(self, corpus):
        import math

        est = SoftmaxOrderClassifier(widths=TEST_WIDTHS, **FAST).fit(corpus)
        ent = est.entropy(corpus)
        assert ((0 <= ent) & (ent <= math.log(6) + 1e-9)).all()


class TestShallowHistogramOrderer:
    def test_fit_predict_and_roundtrip(self, corpus, tmp_path):
        est = ShallowHistogramOrderer(bins=32, **FAST).fit(corpus)
        names = est.predict(corpus)
        assert all(name in ORDERINGS for name in names)
        path = tmp_path / "shallow.npz"
        est.save(path)
        loaded = ShallowHistogramOrderer.load(path)
        assert loaded.bins == 32
        assert loaded.predict(corpus) == names


class TestLoadEstimatorDispatch:
    def test_dispatch_by_kind(self, corpus, fitted_orderer, tmp_path):
        fitted_orderer.save(tmp_path / "a.npz")
        ShallowHistogramOrderer(bins=32, **FAST).fit(corpus).save(tmp_path / "b.npz")
        assert isinstance(load_estimator(tmp_path / "a.npz"), ChannelOrderer)
        assert isinstance(load_estimator(tmp_path / "b.npz"), ShallowHistogramOrderer)

    def test_garbage_file_rejected(self, tmp_path):
        path = tmp_path / "junk.npz"
        path.write_bytes(b"not a checkpoint")
        with pytest.raises(CheckpointError):
            load_estimator(path)

    def test_checkpoint_self_description(self, fitted_orderer, tmp_path):
        path = tmp_path / "c.npz"
        fitted_orderer.save(path)
        ckpt = load_checkpoint(path)
        assert ckpt.kind == "orderer"
        assert ckpt.meta["class_vocab"] == list(fitted_orderer.class_vocab_)
        assert ckpt.meta["widths"] == list(TEST_WIDTHS)
        assert ckpt.meta["seed"] == FAST["seed"]
        assert ckpt.meta["train"]["epochs"] == FAST["epochs"]
        assert all(arr.dtype == np.float32 for arr in ckpt.arrays.values())
