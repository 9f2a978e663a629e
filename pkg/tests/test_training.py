"""Training loops: agreement between the tensor loss and the scalar reference,
first-epoch improvement for every trainer, seed determinism, the gray-corpus
loss floor, the learning-rate schedule, and the divergence guard."""

import math

import numpy as np
import pytest
import torch

import channelorder.training as training
from channelorder.data import MaskStack, Sample, SynthSpec, generate_synthetic
from channelorder.ranking import (
    PairTargets,
    RankingConfig,
    pair_ranking_loss,
    ranking_loss,
)
from channelorder.training import (
    TrainConfig,
    TrainingDiverged,
    _check_finite,
    pair_loss_torch,
    ranking_loss_torch,
    train_bgr,
    train_orderer,
    train_shallow,
    train_softmax,
)

TEST_WIDTHS = (4, 6, 8, 10)


@pytest.fixture(scope="module")
def tiny_corpus():
    return generate_synthetic(SynthSpec(image_size=(16, 16), seed=21), 8)


@pytest.fixture(scope="module")
def smoke_corpus():
    # The classifier baselines need more steps per epoch than tiny_corpus
    # provides before their loss moves measurably.
    return generate_synthetic(SynthSpec(image_size=(24, 24), seed=21), 24)


def tiny_config(**overrides):
    defaults = dict(batch_size=4, epochs=1, seed=3)
    defaults.update(overrides)
    return TrainConfig(**defaults)


class TestTrainConfig:
    def test_full_scale_defaults(self):
        cfg = TrainConfig()
        assert cfg.batch_size == 48
        assert cfg.epochs == 100
        assert cfg.learning_rate == 1e-3
        assert cfg.lr_decay == 0.98

    def test_desk_preset(self):
        cfg = TrainConfig.desk()
        assert cfg.batch_size == 16 and cfg.epochs == 20
        assert TrainConfig.desk(epochs=3).epochs == 3

    def test_lr_schedule_exact(self):
        cfg = TrainConfig(learning_rate=0.001, lr_decay=0.98)
        for epoch in (0, 1, 7, 100):
            assert cfg.learning_rate_at(epoch) == 0.001 * 0.98**epoch

    @pytest.mark.parametrize(
        "kwargs",
        [dict(batch_size=0), dict(epochs=0), dict(lr_decay=0.0), dict(lr_decay=1.5),
         dict(learning_rate=0.0), dict(gray_fraction=-0.1)],
    )
    def test_validation(self, kwargs):
        with pytest.raises(ValueError):
            TrainConfig(**kwargs)


class TestTorchLossAgreement:
    def test_matches_scalar_reference(self):
        rng = np.random.default_rng(0)
        cfg = RankingConfig()
        for _ in range(50):
            scores = rng.normal(0, 2, 3)
            ys = rng.choice([0.0, 0.5, 1.0], 3)
            expected = ranking_loss(tuple(scores), PairTargets(*ys), cfg)
            got = ranking_loss_torch(
                torch.from_numpy(scores[None]),
                torch.from_numpy(ys[None]),
                cfg,
            )
            assert float(got[0]) == pytest.approx(expected, rel=1e-9)

    def test_pair_loss_matches(self):
        cfg = RankingConfig()
        rng = np.random.default_rng(1)
        for _ in range(50):
            delta = float(rng.normal(0, 2))
            y = float(rng.choice([0.0, 1.0]))
            got = pair_loss_torch(
                torch.tensor([delta], dtype=torch.float64),
                torch.tensor([y], dtype=torch.float64),
                cfg,
            )
            assert float(got[0]) == pytest.approx(pair_ranking_loss(delta, y, cfg), rel=1e-9)

    def test_identity_link(self):
        cfg = RankingConfig(link="identity")
        got = pair_loss_torch(
            torch.tensor([2.0], dtype=torch.float64),
            torch.tensor([1.0], dtype=torch.float64),
            cfg,
        )
        assert float(got[0]) == pytest.approx(pair_ranking_loss(2.0, 1.0, cfg), rel=1e-9)


class TestTrainOrderer:
    def test_first_epoch_improves_loss(self, tiny_corpus):
        _, history = train_orderer(tiny_corpus, tiny_config(), widths=TEST_WIDTHS)
        assert history[1] < history[0]

    def test_same_seed_identical_checkpoints(self, tiny_corpus):
        m1, h1 = train_orderer(tiny_corpus, tiny_config(), widths=TEST_WIDTHS)
        m2, h2 = train_orderer(tiny_corpus, tiny_config(), widths=TEST_WIDTHS)
        assert h1 == h2
        for a, b in zip(m1.state_dict().values(), m2.state_dict().values()):
            assert torch.equal(a, b)

    def test_different_seed_differs(self, tiny_corpus):
        m1, _ = train_orderer(tiny_corpus, tiny_config(seed=3), widths=TEST_WIDTHS)
        m2, _ = train_orderer(tiny_corpus, tiny_config(seed=4), widths=TEST_WIDTHS)
        same = all(
            torch.equal(a, b)
            for a, b in zip(m1.state_dict().values(), m2.state_dict().values())
        )
        assert not same

    def test_gray_only_corpus_starts_at_three_ln_two(self):
        # Identical planes force every pairwise delta to zero, so the
        # pre-training loss is exactly 3 ln 2 per image (float32 arithmetic).
        rng = np.random.default_rng(5)
        gray_samples = []
        for i in range(4):
            plane = rng.random((16, 16)).astype(np.float32)
            image = np.repeat(plane[:, :, None], 3, axis=2)
            masks = MaskStack(np.ones((1, 16, 16), dtype=np.uint8), ("all",))
            gray_samples.append(Sample(id=f"g{i}", image=image, masks=masks))
        _, history = train_orderer(gray_samples, tiny_config(), widths=TEST_WIDTHS)
        assert history[0] == pytest.approx(3 * math.log(2), rel=1e-6)

    def test_gray_fraction_adds_items(self, tiny_corpus):
        cfg = tiny_config(gray_fraction=0.5)
        items = training.build_ranking_items(tiny_corpus, cfg)
        assert len(items) == 6 * len(tiny_corpus) + round(0.5 * len(tiny_corpus))
        gray = [it for it in items if it.true_perm.is_gray]
        assert len(gray) == round(0.5 * len(tiny_corpus))
        assert all(it.targets.as_tuple() == (0.5, 0.5, 0.5) for it in gray)

    def test_empty_corpus_rejected(self):
        with pytest.raises(ValueError):
            train_orderer([], tiny_config())

    def test_vocab_mismatch_rejected(self, tiny_corpus):
        rng = np.random.default_rng(0)
        odd = Sample(
            id="odd",
            image=rng.random((16, 16, 3)).astype(np.float32),
            masks=MaskStack(np.ones((1, 16, 16), dtype=np.uint8), ("other",)),
        )
        with pytest.raises(ValueError, match="vocabulary"):
            train_orderer(tiny_corpus + [odd], tiny_config())


class TestOtherTrainers:
    def test_bgr_first_epoch_improves(self, tiny_corpus):
        _, history = train_bgr(tiny_corpus, tiny_config(), widths=(4, 6, 8))
        assert history[1] < history[0]

    def test_softmax_improves_and_normalizes(self, smoke_corpus):
        from channelorder.baselines import softmax_classify

        model, history = train_softmax(
            smoke_corpus, tiny_config(batch_size=8, epochs=6), classes=6,
            widths=TEST_WIDTHS,
        )
        assert history[-1] < history[0]
        probs = softmax_classify(smoke_corpus[0].image, model)
        assert probs.sum() == pytest.approx(1.0, abs=1e-6)

    def test_softmax_two_class(self, smoke_corpus):
        model, history = train_softmax(
            smoke_corpus, tiny_config(batch_size=8, epochs=3), classes=2,
            widths=TEST_WIDTHS,
        )
        assert model.classes == ("RGB", "BGR")
        assert history[-1] < history[0]

    def test_shallow_first_epoch_improves(self, smoke_corpus):
        _, history = train_shallow(smoke_corpus, tiny_config(batch_size=8), bins=32)
        assert history[1] < history[0]

    def test_shallow_touches_pixels_only_through_histograms(self, smoke_corpus, monkeypatch):
        calls = []
        real = training.channel_histogram

        def counting(plane, bins):
            calls.append(plane.shape)
            return real(plane, bins)

        monkeypatch.setattr(training, "channel_histogram", counting)
        train_shallow(smoke_corpus, tiny_config(batch_size=8), bins=32)
        assert len(calls) == 3 * len(smoke_corpus)


class TestDivergenceGuard:
    def test_check_finite_names_epoch_and_batch(self):
        with pytest.raises(TrainingDiverged, match="epoch 7, batch 3"):
            _check_finite(torch.tensor(float("nan")), epoch=7, batch=3)
        with pytest.raises(TrainingDiverged):
            _check_finite(torch.tensor(float("inf")), epoch=1, batch=0)

    def test_finite_loss_passes(self):
        _check_finite(torch.tensor(1.5), epoch=0, batch=0)
