import math

import numpy as np
import numpy.testing as npt
import pytest

from bnfakenews.config import ConfigError, TrainConfig, parse_config
from bnfakenews.models import ModelSpec, build_model
from bnfakenews.nnet import Tape, Tensor, bce_with_logits
from bnfakenews.textprep import CleanDocument
from bnfakenews.tokenizer import build_vocabulary
from bnfakenews.training import (
    Adam,
    EmptyTrainingSet,
    SingleClassCorpus,
    adam_step,
    balance_by_oversampling,
    bce_loss,
    classify,
    fit_arrays,
    train,
)


def toy(seed=0, N=32, L=10):
    rng = np.random.default_rng(seed)
    X = rng.integers(2, 30, size=(N, L))
    y = np.array([0, 1] * (N // 2))
    X[np.arange(N), rng.integers(0, L, size=N)] = 30 + y
    return X, y


def toy_model(L=10, seed=0):
    return build_model(ModelSpec("bigru", vocab_size=32, seq_len=L, embed_dim=8, hidden=6, dense_sizes=(8, 4)), seed=seed)


# loss ----------------------------------------------------------------------------


def test_bce_examples():
    assert bce_loss(1.0, 1) < 1e-6
    assert abs(bce_loss(0.5, 1) - math.log(2)) < 1e-12
    assert bce_loss(0.0, 1) == pytest.approx(-math.log(1e-7))
    assert bce_loss([0.5, 0.5], [0, 1]) == pytest.approx(math.log(2))


def test_bce_finite_and_positive_on_range():
    p = np.linspace(0, 1, 101)
    for y in (0, 1):
        losses = [bce_loss(v, y) for v in p]
        assert all(np.isfinite(losses)) and min(losses) >= 0


def test_logit_gradient_identity():
    rng = np.random.default_rng(1)
    z = rng.standard_normal(50) * 3
    y = rng.integers(0, 2, 50)
    logits = Tensor(z, requires_grad=True)
    with Tape() as tape:
        loss = bce_with_logits(logits, y)
    g = tape.gradient(loss, [logits])[0]
    npt.assert_allclose(g * 50, 1 / (1 + np.exp(-z)) - y, atol=1e-6)
    assert float(loss.data) == pytest.approx(bce_loss(1 / (1 + np.exp(-z)), y), rel=1e-6)


# balancing -------------------------------------------------------------------------


def docs(n_auth, n_fake):
    out = [CleanDocument(f"a{i}", ("ক",), 1) for i in range(n_auth)]
    return out + [CleanDocument(f"f{i}", ("খ",), 0) for i in range(n_fake)]


def test_balance_examples():
    out = balance_by_oversampling(docs(5, 2), seed=0)
    assert sum(d.label for d in out) == 5 and len(out) == 10
    original = docs(3, 3)
    same = balance_by_oversampling(original, seed=0)
    assert sorted(d.article_id for d in same) == sorted(d.article_id for d in original)
    with pytest.raises(SingleClassCorpus):
        balance_by_oversampling(docs(4, 0))


def test_balance_preserves_originals_and_copies():
    train_docs = docs(30, 4)
    out = balance_by_oversampling(train_docs, seed=11)
    ids = [d.article_id for d in out]
    assert set(ids) == {d.article_id for d in train_docs}
    assert all(any(d is o for o in train_docs) for d in out)
    assert balance_by_oversampling(train_docs, seed=11) == out


# adam --------------------------------------------------------------------------------


def test_adam_zero_gradient_no_change():
    p = np.array([1.0, -2.0])
    m, v = np.zeros(2), np.zeros(2)
    adam_step(p, np.zeros(2), m, v, 1, lr=0.1)
    npt.assert_array_equal(p, [1.0, -2.0])


def test_adam_first_step_magnitude():
    for g in (1e-3, 0.5, 40.0):
        p, m, v = np.array([0.0]), np.zeros(1), np.zeros(1)
        adam_step(p, np.array([g]), m, v, 1, lr=1e-3)
        assert p[0] == pytest.approx(-1e-3, rel=1e-4)


def test_adam_minimizes_quadratic():
    theta = Tensor(np.array([1.0]), requires_grad=True)
    opt = Adam([theta], lr=0.05)
    for _ in range(200):
        opt.step([2 * theta.data])
    assert abs(theta.data[0]) < 1e-3
    assert opt.t == 200


def test_adam_rejects_bad_shapes():
    with pytest.raises(ValueError):
        adam_step(np.zeros(2), np.zeros(3), np.zeros(2), np.zeros(2), 1, 0.1)


# training loop -----------------------------------------------------------------------


def test_one_epoch_full_batch_is_one_step():
    X, y = toy()
    _, hist = fit_arrays(toy_model(), X, y, TrainConfig(epochs=1, batch_size=len(X), seq_len=10))
    assert hist.steps == 1 and len(hist.epochs) == 1
    _, hist = fit_arrays(toy_model(), X, y, TrainConfig(epochs=2, batch_size=10, seq_len=10))
    assert hist.steps == 8


def test_training_deterministic():
    X, y = toy()
    cfg = TrainConfig(epochs=3, batch_size=8, seq_len=10, seed=4)
    a, ha = fit_arrays(toy_model(), X, y, cfg)
    b, hb = fit_arrays(toy_model(), X, y, cfg)
    assert ha.to_csv() == hb.to_csv()
    assert all(np.array_equal(p.data, q.data) for p, q in zip(a.parameters(), b.parameters()))


def test_loss_decreases():
    X, y = toy(N=32)
    cfg = TrainConfig(epochs=40, batch_size=8, seq_len=10, learning_rate=5e-3, dropout=0.0)
    _, hist = fit_arrays(toy_model(), X, y, cfg)
    losses = [e.loss for e in hist.epochs]
    assert np.mean(losses[-5:]) < np.mean(losses[:5])
    assert hist.to_csv().splitlines()[0] == "epoch,loss,accuracy"


def test_train_on_documents_with_balance_and_validation():
    words = ["ক", "খ", "গ", "ঘ", "ঙ"]
    rng = np.random.default_rng(2)
    train_docs = [CleanDocument(str(i), tuple(rng.choice(words, 6)) + (("সত্য",) if i % 4 else ("মিথ্যা",)), int(i % 4 != 0)) for i in range(20)]
    vocab = build_vocabulary(train_docs, 20, seq_len=8)
    model = build_model(ModelSpec("bigru", len(vocab), 8, embed_dim=6, hidden=4, dense_sizes=(5, 3)))
    cfg = TrainConfig(epochs=2, batch_size=8, seq_len=8, balance=True)
    _, hist = train(model, train_docs, vocab, cfg, validation_docs=train_docs[:4])
    assert hist.steps == 2 * math.ceil(30 / 8)
    assert set(hist.epochs[0].validation) == {"loss", "accuracy"}
    with pytest.raises(EmptyTrainingSet):
        train(model, [], vocab, cfg)


def test_classify():
    assert classify(0.5) == 1
    assert classify(0.4999) == 0
    assert classify(0.7, threshold=0.8) == 0
    npt.assert_array_equal(classify(np.array([0.0, 0.5, 1.0])), [0, 1, 1])


# config ---------------------------------------------------------------------------------


def test_parse_config():
    cfg = parse_config("epochs = 3  # short run\n\nbalance = true\nlearning_rate = 0.01\n")
    assert (cfg.epochs, cfg.balance, cfg.learning_rate) == (3, True, 0.01)
    assert parse_config(cfg.to_text()) == cfg
    with pytest.raises(ConfigError, match="unknown"):
        parse_config("epoch = 3\n")
    with pytest.raises(ConfigError):
        parse_config("threshold = 1.5\n")
    with pytest.raises(ConfigError):
        parse_config("balance = maybe\n")
    assert TrainConfig().digest() == TrainConfig().digest() != cfg.digest()
