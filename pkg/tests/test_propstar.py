import numpy as np
import pytest
from hypothesis import given, strategies as st

from relprop import propstar
from relprop.propstar import EmbeddingModel, StarTrainConfig
from relprop.synthetic import indicator_dataset
from relprop.wordify import InstanceBag, ItemVocabulary


def _model(items, item_vectors, classes, label_vectors):
    return EmbeddingModel(tuple(items), np.array(item_vectors, float), tuple(classes), np.array(label_vectors, float))


def test_initialization_range_and_shapes():
    vocab = ItemVocabulary(tuple(f"i{k}" for k in range(50)), (1,) * 50)
    m = propstar.initialize(vocab, ("a", "b", "c"), StarTrainConfig(dim=16))
    assert m.item_vectors.shape == (50, 16) and m.label_vectors.shape == (3, 16)
    assert np.abs(m.item_vectors).max() <= 1 / 32 and np.abs(m.label_vectors).max() <= 1 / 32


def test_bag_embedding_uses_unique_items():
    m = _model(["a", "b", "c"], [[1, 0], [0, 1], [3, 3]], ["x", "y"], [[0, 0], [0, 0]])
    e = propstar.embed_bag(m, ["a", "b", "a", "zzz"])
    assert e.n_unique == 2
    assert np.allclose(e.vector, [1 / np.sqrt(2), 1 / np.sqrt(2)])
    empty = propstar.embed_bag(m, ["unknown"])
    assert empty.n_unique == 0 and not empty.vector.any()


def test_pair_loss_example():
    m = _model(["a"], [[1, 0]], ["p", "n"], [[0.5, 0], [0.7, 0]])
    assert propstar.pair_loss(m, ["a"], 0, [1], margin=0.05) == pytest.approx(0.25, abs=1e-15)
    assert propstar.pair_loss(m, ["a"], 1, [0], margin=0.05) == 0.0
    with pytest.raises(ValueError):
        propstar.pair_loss(m, ["a"], 0, [], margin=0.05)


def test_prediction_and_ties():
    m = _model(["a"], [[1, 0]], ["p", "n", "q"], [[0.2, 1], [0.9, 0], [0.9, 5]])
    label, scores = propstar.predict(m, ["a"])
    assert label == 1 and np.allclose(scores, [0.2, 0.9, 0.9])
    labels, s = propstar.predict_many(m, [["a"], []])
    assert labels.tolist() == [1, 0] and s.shape == (2, 3)


def test_margin_scores():
    s = np.array([[0.1, 0.5, 0.2], [0.9, 0.1, 0.3]])
    assert np.allclose(propstar.margin_scores(s, 0), [-0.4, 0.6])


@given(st.integers(2, 8), st.integers(1, 10), st.integers(0, 1000))
def test_negative_sampling(n_classes, k, seed):
    rng = np.random.default_rng(seed)
    pos = seed % n_classes
    negs = propstar._sample_negatives(rng, n_classes, pos, k)
    assert len(negs) == k and pos not in negs
    if k <= n_classes - 1:
        assert len(set(negs.tolist())) == k


def test_single_update_equals_numerical_gradient_step():
    """One epoch on one bag is one SGD step on the pair loss."""
    vocab = ItemVocabulary(("a", "b", "c"), (1, 1, 1))
    classes = ("p", "n")
    cfg = StarTrainConfig(dim=4, epochs=1, learning_rate=0.01, negatives=1, margin=1.0, seed=3)
    bag = InstanceBag(0, ("a", "c", "a"), 0)
    start = propstar.initialize(vocab, classes, cfg)
    neg_only = InstanceBag(1, (), 1)  # empty bags are skipped but keep two labels present
    trained = propstar.train([bag, neg_only], vocab, classes, cfg)

    def loss(flat):
        V = flat[: start.item_vectors.size].reshape(start.item_vectors.shape)
        L = flat[start.item_vectors.size :].reshape(start.label_vectors.shape)
        return propstar.pair_loss(EmbeddingModel(vocab.items, V, classes, L), bag, 0, [1], cfg.margin)

    x0 = np.concatenate([start.item_vectors.ravel(), start.label_vectors.ravel()])
    h = 1e-6
    grad = np.array([(loss(x0 + h * e) - loss(x0 - h * e)) / (2 * h) for e in np.eye(len(x0))])
    expected = x0 - cfg.learning_rate * grad
    got = np.concatenate([trained.item_vectors.ravel(), trained.label_vectors.ravel()])
    assert np.allclose(got, expected, atol=1e-9)
    assert trained.loss_history[0] == pytest.approx((loss(x0) + cfg.margin) / 2)


@pytest.mark.parametrize("seed", range(5))
def test_separable_data_is_learned(seed):
    bags, vocab, _, _ = indicator_dataset(100, seed=seed)
    model = propstar.train(bags, vocab, ("0", "1"), StarTrainConfig(dim=8, seed=seed))
    pred, _ = propstar.predict_many(model, bags)
    assert np.mean(pred == np.array([b.label for b in bags])) == 1.0
    assert model.loss_history[-1] < model.loss_history[0]
    assert all(np.isfinite(model.loss_history))


def test_training_is_deterministic():
    bags, vocab, _, _ = indicator_dataset(40, seed=1)
    a = propstar.train(bags, vocab, ("0", "1"), StarTrainConfig(dim=4, seed=9))
    b = propstar.train(bags, vocab, ("0", "1"), StarTrainConfig(dim=4, seed=9))
    c = propstar.train(bags, vocab, ("0", "1"), StarTrainConfig(dim=4, seed=10))
    assert np.array_equal(a.item_vectors, b.item_vectors) and a.loss_history == b.loss_history
    assert not np.array_equal(a.item_vectors, c.item_vectors)


@given(st.floats(0.01, 50.0), st.integers(0, 100))
def test_large_learning_rates_stay_finite(lr, seed):
    bags, vocab, _, _ = indicator_dataset(20, seed=seed)
    m = propstar.train(bags, vocab, ("0", "1"), StarTrainConfig(dim=4, epochs=2, learning_rate=lr, seed=seed))
    assert np.all(np.isfinite(m.item_vectors)) and np.all(np.isfinite(m.label_vectors))


def test_multiclass_training():
    bags = [InstanceBag(i, (f"x{i % 3}", f"n{i % 5}"), i % 3) for i in range(60)]
    vocab = ItemVocabulary(tuple(sorted({s for b in bags for s in b.items})), (1,) * 8)
    m = propstar.train(bags, vocab, ("a", "b", "c"), StarTrainConfig(dim=8, epochs=20, negatives=2))
    pred, _ = propstar.predict_many(m, bags)
    assert np.mean(pred == [b.label for b in bags]) == 1.0


def test_invalid_inputs():
    bags, vocab, _, _ = indicator_dataset(10)
    with pytest.raises(ValueError):
        propstar.train([b for b in bags if b.label == 0], vocab, ("0", "1"))
    with pytest.raises(ValueError):
        propstar.train(bags, ItemVocabulary((), ()), ("0", "1"))
    with pytest.raises(ValueError):
        StarTrainConfig(margin=0)


def test_checkpoint_round_trip(tmp_path):
    bags, vocab, _, _ = indicator_dataset(20)
    m = propstar.train(bags, vocab, ("0", "1"), StarTrainConfig(dim=3))
    m.write_tsv(tmp_path / "m.tsv")
    lines = (tmp_path / "m.tsv").read_text().splitlines()
    assert len(lines) == len(vocab) + 2
    assert lines[-1].startswith("__label__1\t") and len(lines[0].split("\t")) == 4
    back = EmbeddingModel.read_tsv(tmp_path / "m.tsv")
    assert back.items == m.items and back.classes == m.classes
    assert np.array_equal(back.item_vectors, m.item_vectors) and np.array_equal(back.label_vectors, m.label_vectors)
