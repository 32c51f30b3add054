import numpy as np
import pytest

from consnet.labels import HUMAN_LABEL
from consnet.synth import SynthConfig, generate_corpus


def test_full_density_covers_every_pair():
    corpus = generate_corpus(SynthConfig(n_actions=3, n_objects=4, combo_density=1.0, images=5, test_images=2))
    assert corpus.space.C == 12


def test_density_too_low_rejected():
    with pytest.raises(ValueError):
        generate_corpus(SynthConfig(n_actions=3, n_objects=4, combo_density=0.1))
    with pytest.raises(ValueError):
        SynthConfig(combo_density=0.0)


def test_same_seed_same_corpus():
    a = generate_corpus(SynthConfig(images=20, test_images=5, seed=3))
    b = generate_corpus(SynthConfig(images=20, test_images=5, seed=3))
    assert a.space == b.space
    for ra, rb in zip(a.train_detections + a.crops, b.train_detections + b.crops):
        assert ra.box == rb.box and ra.score == rb.score and np.array_equal(ra.feature, rb.feature)
    assert [g.hoi_ids for g in a.test_gt] == [g.hoi_ids for g in b.test_gt]
    c = generate_corpus(SynthConfig(images=20, test_images=5, seed=4))
    assert not np.array_equal(a.crops[0].feature, c.crops[0].feature)


def test_noise_free_features_are_linearly_separable():
    corpus = generate_corpus(SynthConfig(noise_sigma=0.0, images=200, test_images=1))
    crops = [r for r in corpus.crops if r.label != HUMAN_LABEL]
    labels = sorted({(r.kind, r.label) for r in crops})
    index = {lab: i for i, lab in enumerate(labels)}
    for kind in ("human", "object"):
        rows = [r for r in crops if r.kind == kind]
        X = np.column_stack([np.stack([r.feature for r in rows]), np.ones(len(rows))])
        y = np.array([index[(r.kind, r.label)] for r in rows])
        Y = np.eye(len(labels))[y]
        W, *_ = np.linalg.lstsq(X, Y, rcond=None)
        assert np.array_equal((X @ W).argmax(axis=1), y)


def test_corpus_has_positives_and_negatives():
    corpus = generate_corpus(SynthConfig(images=30, test_images=5))
    assert corpus.train_gt and corpus.test_gt
    humans = [r for r in corpus.crops if r.kind == "human"]
    assert any(r.label == HUMAN_LABEL for r in humans) and any(r.label != HUMAN_LABEL for r in humans)
