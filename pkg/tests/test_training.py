import numpy as np
import pytest

from kws.config import TrainConfig
from kws.corpus import LabelMap, load_manifest, split_manifest, select_split
from kws.errors import ArgumentError, NumericError
from kws.model import build_dense_baseline, build_kws_cnn
from kws.training import (
    CONTINUE,
    EARLY_STOP,
    MAX_EPOCHS,
    STOP,
    Dataset,
    EarlyStopState,
    early_stop_update,
    evaluate,
    predict_labels,
    train,
)


def run_rule(losses, patience):
    state = EarlyStopState(patience=patience)
    for loss in losses:
        if early_stop_update(state, loss) == STOP:
            break
    return state


def test_early_stop_after_patience():
    losses = [5.0, 4.0, 3.0] + [3.5] * 10
    state = run_rule(losses, patience=10)
    assert state.best_epoch == 3
    assert state.epoch == 13


def test_stop_epoch_is_best_plus_patience():
    rng = np.random.default_rng(0)
    for _ in range(200):
        patience = int(rng.integers(1, 6))
        losses = rng.uniform(0, 1, 60).tolist()
        state = run_rule(losses, patience)
        if state.epoch < 60:
            assert state.epoch == state.best_epoch + patience


def test_thirty_epoch_run():
    # improves until epoch 20, then ten epochs without improvement
    losses = [1.0 - 0.01 * e for e in range(1, 21)] + [0.9] * 15
    state = run_rule(losses, patience=10)
    assert (state.best_epoch, state.epoch) == (20, 30)


def test_equal_loss_is_not_an_improvement():
    state = EarlyStopState(patience=2)
    assert early_stop_update(state, 1.0) == CONTINUE
    assert early_stop_update(state, 1.0) == CONTINUE
    assert early_stop_update(state, 1.0) == STOP
    assert state.best_epoch == 1


def test_nan_validation_loss():
    with pytest.raises(NumericError) as info:
        early_stop_update(EarlyStopState(), float("nan"))
    assert info.value.epoch == 1


def _toy_dataset(n_per_class, frame_len, seed):
    """Two linearly separable classes on short frames."""
    rng = np.random.default_rng(seed)
    x = rng.normal(0, 0.1, (2 * n_per_class, 1, frame_len))
    y = np.repeat([0, 1], n_per_class)
    x[y == 1, 0, : frame_len // 2] += 1.0
    x[y == 0, 0, frame_len // 2 :] += 1.0
    return Dataset(x, y)


def _toy_config(**kw):
    base = dict(batch_size=8, max_epochs=15, patience=5, learning_rate=0.01, precision="float64", seed=3)
    base.update(kw)
    return TrainConfig(**base)


def test_training_learns_toy_problem():
    lm = LabelMap(("a", "b"))
    model = build_dense_baseline(64, lm, seed=0)
    model, history = train(model, _toy_dataset(20, 64, 0), _toy_dataset(8, 64, 1), _toy_config())
    assert history.rows[-1].train_acc >= 0.95
    report = evaluate(model, _toy_dataset(10, 64, 2))
    assert report.accuracy >= 0.95
    assert model.metadata["best_epoch"] == history.best_epoch


def test_training_is_bitwise_deterministic(tmp_path):
    lm = LabelMap(("a", "b"))
    paths = []
    for run in range(2):
        model = build_dense_baseline(64, lm, seed=0)
        _, history = train(model, _toy_dataset(20, 64, 0), _toy_dataset(8, 64, 1), _toy_config(max_epochs=5))
        paths.append(tmp_path / f"h{run}.csv")
        history.to_csv(paths[-1])
    assert paths[0].read_bytes() == paths[1].read_bytes()
    assert paths[0].read_text().splitlines()[0] == "epoch,train_loss,train_acc,val_loss,val_acc"


def test_best_weights_are_restored():
    lm = LabelMap(("a", "b"))
    model = build_dense_baseline(64, lm, seed=0)
    # validation labels are flipped, so validation loss rises as training succeeds
    val = _toy_dataset(8, 64, 1)
    val.y = 1 - val.y
    model, history = train(model, _toy_dataset(20, 64, 0), val, _toy_config(max_epochs=30, patience=3))
    assert history.stop_reason == EARLY_STOP
    assert len(history.rows) == history.best_epoch + 3
    restored_loss = evaluate(model, val)
    best = history.rows[history.best_epoch - 1]
    assert restored_loss.accuracy == pytest.approx(best.val_acc)


def test_max_epochs_reason():
    lm = LabelMap(("a", "b"))
    model = build_dense_baseline(64, lm, seed=0)
    _, history = train(model, _toy_dataset(10, 64, 0), _toy_dataset(4, 64, 1), _toy_config(max_epochs=2, patience=50))
    assert history.stop_reason == MAX_EPOCHS
    assert len(history.rows) == 2


def test_diverging_training_reports_epoch():
    lm = LabelMap(("a", "b"))
    model = build_dense_baseline(64, lm, seed=0)
    data = _toy_dataset(10, 64, 0)
    data.x[0, 0, 0] = np.inf
    with pytest.raises(NumericError) as info:
        train(model, data, _toy_dataset(4, 64, 1), _toy_config())
    assert info.value.epoch == 1


def test_empty_sets_rejected():
    lm = LabelMap(("a", "b"))
    model = build_dense_baseline(64, lm)
    empty = Dataset(np.zeros((0, 1, 64)), np.zeros(0, dtype=np.int64))
    with pytest.raises(ArgumentError):
        train(model, empty, _toy_dataset(2, 64, 0), _toy_config())
    with pytest.raises(ArgumentError):
        evaluate(model, empty)


def test_evaluate_ignores_record_order():
    lm = LabelMap(("a", "b", "c"))
    model = build_dense_baseline(64, lm, seed=4)
    rng = np.random.default_rng(4)
    data = Dataset(rng.standard_normal((30, 1, 64)), rng.integers(0, 3, size=30))
    order = rng.permutation(30)
    a = evaluate(model, data)
    b = evaluate(model, Dataset(data.x[order], data.y[order]))
    np.testing.assert_array_equal(a.confusion, b.confusion)
    assert (a.accuracy, a.precision, a.recall, a.f1) == (b.accuracy, b.precision, b.recall, b.f1)


def test_fifty_random_samples_are_memorized():
    rng = np.random.default_rng(5)
    data = Dataset(rng.standard_normal((50, 1, 64)), rng.integers(0, 4, size=50))
    model = build_dense_baseline(64, LabelMap(("a", "b", "c", "d")), seed=5)
    config = _toy_config(batch_size=10, max_epochs=200, patience=200)
    model, history = train(model, data, data, config)
    assert history.best_val_loss < 0.05
    assert evaluate(model, data).accuracy == 1.0


@pytest.mark.parametrize(
    "field, value",
    [("learning_rate", 0.0), ("batch_size", 0), ("patience", 0), ("precision", "float16")],
)
def test_config_validation(field, value):
    with pytest.raises(ArgumentError):
        _toy_config(**{field: value}).validate()


def test_threaded_prediction_matches_serial(label_map10, rng):
    model = build_kws_cnn(8000, label_map10, seed=0)
    x = rng.uniform(-1, 1, (20, 1, 8000))
    serial = predict_labels(model, x, batch_size=4, jobs=1)
    threaded = predict_labels(model, x, batch_size=4, jobs=4)
    np.testing.assert_array_equal(serial, threaded)


def test_dataset_from_records(tiny_synth):
    root, records = tiny_synth
    lm = LabelMap(("tone300hz", "tone450hz", "tone600hz"))
    data = Dataset.from_records(records[:6], root, lm, 8000, jobs=2)
    assert data.x.shape == (6, 1, 8000)
    assert np.allclose(np.abs(data.x).max(axis=2), 1.0)
    assert data.y.tolist() == [lm.index(r.keyword) for r in records[:6]]


def test_dataset_unknown_label(tiny_synth):
    root, records = tiny_synth
    with pytest.raises(ArgumentError):
        Dataset.from_records(records, root, LabelMap(("tone300hz", "other")), 8000)


@pytest.mark.slow
def test_synthetic_cnn_beats_dense(tmp_path):
    from kws.corpus import synth_dataset

    synth_dataset(tmp_path, num_classes=10, per_class=100, snr_db=20.0, seed=7)
    records = split_manifest(load_manifest(tmp_path / "manifest.csv"), (0.64, 0.16, 0.20), "by_utterance", seed=7)
    lm = LabelMap(tuple(sorted({r.keyword for r in records})))
    sets = {s: Dataset.from_records(select_split(records, s), tmp_path, lm, 8000) for s in ("train", "val", "test")}
    assert (len(sets["train"]), len(sets["val"]), len(sets["test"])) == (640, 160, 200)

    config = TrainConfig(max_epochs=40, patience=10, seed=7)
    cnn, _ = train(build_kws_cnn(8000, lm, seed=7, dtype=np.float32), sets["train"], sets["val"], config)
    dense, _ = train(build_dense_baseline(8000, lm, seed=7, dtype=np.float32), sets["train"], sets["val"], config)
    cnn_acc = evaluate(cnn, sets["test"]).accuracy
    dense_acc = evaluate(dense, sets["test"]).accuracy
    assert cnn_acc >= 0.95
    assert cnn_acc - dense_acc >= 0.05
