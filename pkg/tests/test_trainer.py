"""Contrastive training, Platt calibration, and the logistic head."""

import io
import json
import math

import numpy as np
import pytest

from conftest import make_corpus
from styledetect.corpus import build_episodes
from styledetect.embedder import BuiltinEmbedder, EmbeddingRecord, FeaturizerConfig, ProjectionHead
from styledetect.corpus import SourceLabel
from styledetect.errors import TrainError
from styledetect.rng import SplitMix64
from styledetect.trainer import (
    COMPOSITION_ALL_DOMAINS_PRESENT,
    COMPOSITION_HALF_HUMAN_HALF_MACHINE,
    ContrastiveConfig,
    LogisticHead,
    PlattCalibrator,
    apply_platt,
    fit_platt,
    info_nce_loss,
    load_head,
    logistic_loss_grad,
    sample_contrastive_batch,
    save_head,
    train_logistic_head,
    train_projection,
)


def fd_grad(fn, x, eps=1e-4):
    """Central finite differences of a scalar function over an array."""
    g = np.zeros_like(x, dtype=np.float64)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        xp = x.copy()
        xm = x.copy()
        xp[idx] += eps
        xm[idx] -= eps
        g[idx] = (fn(xp) - fn(xm)) / (2 * eps)
    return g


def rel_err(a, b):
    denom = max(np.linalg.norm(a), np.linalg.norm(b), 1e-12)
    return np.linalg.norm(a - b) / denom


class TestInfoNce:
    def test_uniform_similarities_m2(self):
        v = np.tile([[1.0, 0.0, 0.0]], (2, 1))
        loss, _, _ = info_nce_loss(v, v, 0.1)
        assert loss == pytest.approx(math.log(2), abs=1e-12)

    def test_uniform_similarities_m5(self):
        v = np.tile([[0.0, 1.0, 0.0]], (5, 1))
        loss, _, _ = info_nce_loss(v, v, 0.07)
        assert loss == pytest.approx(math.log(5), abs=1e-12)

    def test_loss_nonnegative(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            a = rng.standard_normal((4, 8))
            p = rng.standard_normal((4, 8))
            loss, _, _ = info_nce_loss(a, p, 0.2)
            assert loss >= 0.0

    def test_gradients_match_finite_differences(self):
        rng = np.random.default_rng(42)
        a = rng.standard_normal((4, 6))
        p = rng.standard_normal((4, 6))
        loss, grad_a, grad_p = info_nce_loss(a, p, 0.1)
        fd_a = fd_grad(lambda x: info_nce_loss(x, p, 0.1)[0], a)
        fd_p = fd_grad(lambda x: info_nce_loss(a, x, 0.1)[0], p)
        assert rel_err(grad_a, fd_a) < 1e-4
        assert rel_err(grad_p, fd_p) < 1e-4

    def test_bad_temperature(self):
        v = np.eye(2)
        with pytest.raises(TrainError):
            info_nce_loss(v, v, 0.0)

    def test_needs_two_pairs(self):
        v = np.ones((1, 3))
        with pytest.raises(TrainError):
            info_nce_loss(v, v, 0.1)


@pytest.fixture
def episode_pool():
    docs = make_corpus(n_machine=3, n_human=5, docs_per_author=8, seed=3)
    return build_episodes(docs, 2, seed=0)


class TestBatchSampling:
    def test_pairs_share_author_and_batch_authors_distinct(self, episode_pool):
        cfg = ContrastiveConfig(batch_pairs=4)
        batch = sample_contrastive_batch(episode_pool, cfg, SplitMix64(0))
        assert len(batch) == 4
        authors = []
        for anchor, positive in batch:
            assert anchor.author == positive.author
            assert anchor.id != positive.id
            authors.append(anchor.author)
        assert len(set(authors)) == 4

    def test_distinct_timestamps_when_present(self, episode_pool):
        cfg = ContrastiveConfig(batch_pairs=4)
        for anchor, positive in sample_contrastive_batch(episode_pool, cfg, SplitMix64(1)):
            assert anchor.timestamp() != positive.timestamp()

    def test_deterministic(self, episode_pool):
        cfg = ContrastiveConfig(batch_pairs=4)
        a = sample_contrastive_batch(episode_pool, cfg, SplitMix64(9))
        b = sample_contrastive_batch(episode_pool, cfg, SplitMix64(9))
        assert [(x.id, y.id) for x, y in a] == [(x.id, y.id) for x, y in b]

    def test_insufficient_authors(self, episode_pool):
        cfg = ContrastiveConfig(batch_pairs=64)
        with pytest.raises(TrainError) as err:
            sample_contrastive_batch(episode_pool, cfg, SplitMix64(0))
        assert err.value.code == "insufficient-authors"

    def test_half_half_composition(self, episode_pool):
        cfg = ContrastiveConfig(batch_pairs=6, batch_composition=COMPOSITION_HALF_HUMAN_HALF_MACHINE)
        batch = sample_contrastive_batch(episode_pool, cfg, SplitMix64(2))
        kinds = [anchor.source.kind for anchor, _ in batch]
        assert kinds.count("human") == 3 and kinds.count("machine") == 3

    def test_half_half_unsatisfiable(self):
        docs = make_corpus(n_machine=1, n_human=3, docs_per_author=8, seed=5)
        eps = build_episodes(docs, 2, seed=0)
        cfg = ContrastiveConfig(batch_pairs=4, batch_composition=COMPOSITION_HALF_HUMAN_HALF_MACHINE)
        with pytest.raises(TrainError) as err:
            sample_contrastive_batch(eps, cfg, SplitMix64(0))
        assert err.value.code == "composition-unsatisfiable"

    def test_all_domains_present(self):
        docs = make_corpus(n_machine=1, n_human=3, docs_per_author=8,
                           domains=("forum", "reviews", "wiki"), seed=6)
        eps = build_episodes(docs, 2, seed=0)
        cfg = ContrastiveConfig(batch_pairs=5, batch_composition=COMPOSITION_ALL_DOMAINS_PRESENT)
        batch = sample_contrastive_batch(eps, cfg, SplitMix64(3))
        domains = {anchor.domain for anchor, _ in batch}
        assert domains == {"forum", "reviews", "wiki"}


class TestTrainProjection:
    def test_loss_decreases_on_separable_corpus(self):
        docs = make_corpus(n_machine=4, n_human=4, docs_per_author=8, seed=13)
        episodes = build_episodes(docs, 2, seed=0)
        embedder = BuiltinEmbedder(FeaturizerConfig(buckets=256))
        cfg = ContrastiveConfig(batch_pairs=8, steps=80, learning_rate=1.0, seed=1)
        head, losses = train_projection(episodes, embedder, cfg, d_out=32)
        assert len(losses) == 80
        assert losses[-1] < losses[0]
        assert np.mean(losses[-5:]) < 0.1 < np.mean(losses[:5])
        assert head.weights.shape == (32, embedder.dim)

    def test_zero_steps_returns_initialization(self, episode_pool):
        embedder = BuiltinEmbedder(FeaturizerConfig(buckets=256))
        cfg = ContrastiveConfig(batch_pairs=4, steps=0, seed=4)
        head1, losses = train_projection(episode_pool, embedder, cfg, d_out=16)
        assert losses == []
        head2, _ = train_projection(episode_pool, embedder, cfg, d_out=16)
        assert np.array_equal(head1.weights, head2.weights)

    def test_same_seed_identical_weights(self, episode_pool):
        embedder = BuiltinEmbedder(FeaturizerConfig(buckets=256))
        cfg = ContrastiveConfig(batch_pairs=4, steps=10, seed=8)
        h1, l1 = train_projection(episode_pool, embedder, cfg, d_out=16)
        h2, l2 = train_projection(episode_pool, embedder, cfg, d_out=16)
        assert np.array_equal(h1.weights, h2.weights)
        assert l1 == l2

    def test_log_lines(self, episode_pool):
        embedder = BuiltinEmbedder(FeaturizerConfig(buckets=256))
        cfg = ContrastiveConfig(batch_pairs=4, steps=3, seed=8)
        buf = io.StringIO()
        train_projection(episode_pool, embedder, cfg, d_out=16, log_fh=buf)
        lines = [json.loads(line) for line in buf.getvalue().splitlines()]
        assert [l["step"] for l in lines] == [0, 1, 2]
        assert all(math.isfinite(l["loss"]) for l in lines)


class TestPlatt:
    def test_separated_scores_negative_slope(self):
        scores = [-1.0] * 50 + [1.0] * 50
        labels = [0] * 50 + [1] * 50
        cal = fit_platt(scores, labels)
        assert cal.a < 0
        assert cal.increasing
        probs = [apply_platt(cal, s) for s in np.linspace(-2, 2, 9)]
        assert all(p1 < p2 for p1, p2 in zip(probs, probs[1:]))

    def test_uninformative_scores_give_prior(self):
        for n_pos, n_neg in ((50, 50), (30, 70), (80, 20)):
            scores = [0.3] * (n_pos + n_neg)
            labels = [1] * n_pos + [0] * n_neg
            cal = fit_platt(scores, labels)
            prior = n_pos / (n_pos + n_neg)
            for s in (-1.0, 0.3, 2.0):
                assert apply_platt(cal, s) == pytest.approx(prior, abs=1e-3)

    def test_single_class_errors(self):
        with pytest.raises(TrainError) as err:
            fit_platt([0.1, 0.2], [1, 1])
        assert err.value.code == "single-class"

    def test_apply_identity_calibrator(self):
        cal = PlattCalibrator(a=0.0, b=0.0)
        for s in (-5.0, 0.0, 3.3):
            assert apply_platt(cal, s) == pytest.approx(0.5)

    def test_apply_analytic(self):
        cal = PlattCalibrator(a=-1.0, b=0.0)
        assert apply_platt(cal, math.log(3)) == pytest.approx(0.75, abs=1e-12)

    def test_apply_extreme_scores_stable(self):
        cal = PlattCalibrator(a=-2.0, b=1.0)
        assert 0.0 <= apply_platt(cal, 1e6) <= 1.0
        assert 0.0 <= apply_platt(cal, -1e6) <= 1.0

    def test_noisy_overlap_calibration_monotone(self):
        rng = np.random.default_rng(0)
        scores = np.concatenate([rng.normal(1, 1, 200), rng.normal(-1, 1, 200)])
        labels = [1] * 200 + [0] * 200
        cal = fit_platt(list(scores), labels)
        assert cal.a < 0


class TestLogisticHead:
    def _records(self, x):
        return [
            EmbeddingRecord(f"r{i}", "a", SourceLabel.human(), "d", row.astype(np.float32))
            for i, row in enumerate(x)
        ]

    def test_separable_reaches_full_accuracy(self):
        rng = np.random.default_rng(1)
        x_pos = rng.normal(2.0, 0.3, size=(30, 2))
        x_neg = rng.normal(-2.0, 0.3, size=(30, 2))
        x = np.vstack([x_pos, x_neg])
        y = [1] * 30 + [0] * 30
        head = train_logistic_head(self._records(x), y, l2_penalty=1e-6, seed=0)
        preds = (head.predict_proba(x) > 0.5).astype(int)
        assert (preds == np.array(y)).mean() == 1.0

    def test_zero_embeddings_predict_prior(self):
        x = np.zeros((40, 3))
        y = [1] * 10 + [0] * 30
        head = train_logistic_head(self._records(x), y, l2_penalty=1e-4, seed=0, steps=4000)
        assert head.predict_proba(np.zeros((1, 3)))[0] == pytest.approx(0.25, abs=1e-3)

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(7)
        x = rng.standard_normal((12, 5))
        y = rng.integers(0, 2, size=12).astype(np.float64)
        w = rng.standard_normal(5)
        b = 0.3
        _, grad_w, grad_b = logistic_loss_grad(w, b, x, y, l2_penalty=0.01)
        fd_w = fd_grad(lambda v: logistic_loss_grad(v, b, x, y, 0.01)[0], w)
        fd_b = (
            logistic_loss_grad(w, b + 1e-4, x, y, 0.01)[0]
            - logistic_loss_grad(w, b - 1e-4, x, y, 0.01)[0]
        ) / 2e-4
        assert rel_err(grad_w, fd_w) < 1e-4
        assert abs(grad_b - fd_b) / max(abs(fd_b), 1e-12) < 1e-4

    def test_single_class_errors(self):
        x = np.ones((4, 2))
        with pytest.raises(TrainError):
            train_logistic_head(self._records(x), [1, 1, 1, 1])


class TestHeadSerialization:
    def test_projection_roundtrip(self, tmp_path):
        head = ProjectionHead(np.random.default_rng(0).standard_normal((4, 9)))
        path = str(tmp_path / "p.head")
        save_head(head, path)
        loaded = load_head(path)
        assert isinstance(loaded, ProjectionHead)
        assert np.array_equal(loaded.weights, head.weights)

    def test_logistic_roundtrip(self, tmp_path):
        head = LogisticHead(w=np.array([0.1, -0.2, 0.3]), b=-1.5)
        path = str(tmp_path / "l.head")
        save_head(head, path)
        loaded = load_head(path)
        assert isinstance(loaded, LogisticHead)
        assert np.array_equal(loaded.w, head.w) and loaded.b == head.b

    def test_platt_roundtrip(self, tmp_path):
        cal = PlattCalibrator(a=-0.7, b=0.25)
        path = str(tmp_path / "c.head")
        save_head(cal, path)
        loaded = load_head(path)
        assert loaded == cal

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "x.head"
        path.write_bytes(b"XXXX" + b"\x00" * 20)
        from styledetect.errors import StoreError

        with pytest.raises(StoreError) as err:
            load_head(str(path))
        assert err.value.code == "bad-magic"
