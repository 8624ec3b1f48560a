import numpy as np
import pytest

from earmotion.classifier import (
    EarlyStopper,
    LstmConfig,
    ModelFormatError,
    backward,
    bce_loss,
    grid_search,
    init_params,
    load_model,
    lstm_forward,
    predict,
    save_model,
    table2_lattice,
    train,
)
from earmotion.synth import gaussian_sequence_arrays

from oracles import finite_difference_gradients


def small_config(layers=2, seed=0, **kw):
    return LstmConfig(input_dim=8, num_layers=layers, hidden_size=4, seed=seed, **kw)


def labelled(n_per_class, seed, dim=12, t_range=(2, 5), shift=1.0, sigma=0.3):
    return [
        (a, y)
        for a, y, _ in gaussian_sequence_arrays(n_per_class, t_range, dim, shift, sigma, seed)
    ]


# ---- forward ----

def test_zero_params_give_half():
    cfg = small_config()
    params = init_params(cfg, np.random.default_rng(0))
    for tensor in params.tensors():
        tensor[...] = 0.0
    assert lstm_forward(np.ones((3, 8)), params, cfg) == 0.5


def test_forward_probability_range_and_variable_length():
    cfg = small_config(layers=3)
    params = init_params(cfg, np.random.default_rng(1))
    rng = np.random.default_rng(2)
    for t_len in (1, 2, 7, 30):
        p = lstm_forward(rng.normal(0, 1, (t_len, 8)), params, cfg)
        assert 0.0 < p < 1.0


def test_forward_videomae_width():
    cfg = LstmConfig(input_dim=768, num_layers=2, hidden_size=16, seed=0)
    params = init_params(cfg, np.random.default_rng(3))
    p = lstm_forward(np.random.default_rng(4).normal(0, 1, (5, 768)), params, cfg)
    assert 0.0 < p < 1.0


def test_forward_dimension_mismatch():
    cfg = small_config()
    params = init_params(cfg, np.random.default_rng(0))
    with pytest.raises(ValueError):
        lstm_forward(np.zeros((3, 9)), params, cfg)


def test_forward_matches_hand_recurrence():
    # 1 layer, hidden 1, scalar input: replicate the recurrence by hand.
    cfg = LstmConfig(input_dim=1, num_layers=1, hidden_size=1, seed=0)
    params = init_params(cfg, np.random.default_rng(5))
    wx = params.w_x[0][:, 0]
    wh = params.w_h[0][:, 0]
    b = params.bias[0]
    xs = [0.7, -1.3]

    def sig(v):
        return 1.0 / (1.0 + np.exp(-v))

    h = c = 0.0
    for x in xs:
        zi, zf, zg, zo = (wx * x + wh * h + b)
        i, f, g, o = sig(zi), sig(zf), np.tanh(zg), sig(zo)
        c = f * c + i * g
        h = o * np.tanh(c)
    expected = sig(params.w_out[0] * h + float(params.b_out))
    got = lstm_forward(np.array(xs)[:, None], params, cfg)
    assert abs(got - expected) < 1e-12


def test_eval_mode_bit_identical():
    cfg = small_config(layers=3)
    params = init_params(cfg, np.random.default_rng(6))
    seq = np.random.default_rng(7).normal(0, 1, (4, 8))
    assert lstm_forward(seq, params, cfg) == lstm_forward(seq, params, cfg)


def test_train_mode_dropout_seeded():
    cfg = small_config(layers=2)
    params = init_params(cfg, np.random.default_rng(8))
    seq = np.random.default_rng(9).normal(0, 1, (4, 8))
    a = lstm_forward(seq, params, cfg, mode="train", dropout_seed=1)
    b = lstm_forward(seq, params, cfg, mode="train", dropout_seed=1)
    c = lstm_forward(seq, params, cfg, mode="train", dropout_seed=2)
    assert a == b
    assert a != c


# ---- loss ----

def test_bce_hand_values():
    assert bce_loss(0.5, 1) == pytest.approx(np.log(2.0), abs=1e-12)
    assert bce_loss(1.0, 1) == pytest.approx(0.0, abs=1e-6)
    assert bce_loss(0.9, 0) == pytest.approx(-np.log(0.1), abs=1e-12)
    assert bce_loss(0.0, 1) > 15.0  # clamped, finite


# ---- gradients ----

def test_backward_matches_finite_differences():
    rng = np.random.default_rng(0)
    for trial in range(4):
        layers = 2 + trial % 2
        t_len = 1 + trial
        cfg = small_config(layers=layers, seed=trial)
        params = init_params(cfg, np.random.default_rng(10 + trial))
        for tensor in params.tensors():
            tensor += rng.normal(0, 0.1, tensor.shape)
        seq = rng.normal(0, 1, (t_len, 8))
        y = trial % 2

        analytic = backward(seq, y, params, cfg, mode="train", dropout_seed=99).tensors()
        reference = finite_difference_gradients(
            lambda: bce_loss(lstm_forward(seq, params, cfg, "train", 99), float(y)),
            params.tensors(),
        )
        for a, r in zip(analytic, reference):
            rel = np.abs(a - r) / np.maximum(np.maximum(np.abs(a), np.abs(r)), 1e-6)
            assert rel.max() < 1e-4


def test_fc_bias_gradient_at_zero_params():
    # All-zero parameters: p = 0.5, so the output-bias gradient is p - y.
    cfg = small_config()
    params = init_params(cfg, np.random.default_rng(0))
    for tensor in params.tensors():
        tensor[...] = 0.0
    for y in (0, 1):
        grads = backward(np.ones((2, 8)), y, params, cfg)
        assert float(grads.b_out) == pytest.approx(0.5 - y, abs=1e-12)


def test_gradients_finite_for_t1():
    cfg = small_config(layers=3)
    params = init_params(cfg, np.random.default_rng(11))
    grads = backward(np.random.default_rng(12).normal(0, 1, (1, 8)), 1, params, cfg, mode="train")
    assert all(np.isfinite(g).all() for g in grads.tensors())


# ---- early stopping ----

def test_early_stopper_patience_arithmetic():
    stopper = EarlyStopper(patience=20)
    history = [0.6, 0.7] + [0.7] * 20
    stopped_at = None
    for epoch, acc in enumerate(history, start=1):
        if stopper.update(acc):
            stopped_at = epoch
            break
    assert stopped_at == 22
    assert stopper.best_epoch == 2


def test_early_stopper_runs_forever_on_improvement():
    stopper = EarlyStopper(patience=3)
    assert not any(stopper.update(0.1 * k) for k in range(50))
    assert stopper.best_epoch == 50


# ---- training ----

def test_train_separable_data_reaches_high_accuracy():
    cfg = small_config(seed=3, max_epochs=100, batch_size=8)
    model = train(labelled(20, 1, dim=8), labelled(10, 2, dim=8), cfg)
    best = model.history[model.best_epoch - 1]
    assert best.val_acc >= 0.95
    assert model.history[model.best_epoch - 1].train_loss < model.history[0].train_loss or model.best_epoch == 1


def test_train_deterministic():
    cfg = small_config(seed=5, max_epochs=30)
    a = train(labelled(8, 3, dim=8), labelled(4, 4, dim=8), cfg)
    b = train(labelled(8, 3, dim=8), labelled(4, 4, dim=8), cfg)
    assert a.best_epoch == b.best_epoch
    assert all(np.array_equal(x, y) for x, y in zip(a.params.tensors(), b.params.tensors()))
    assert a.history == b.history


def test_train_early_stopping_bound():
    cfg = small_config(seed=6, max_epochs=200)
    model = train(labelled(8, 5, dim=8), labelled(4, 6, dim=8), cfg)
    assert model.epochs_run <= model.best_epoch + cfg.patience
    assert model.history[-1].epoch == model.epochs_run


def test_train_rejects_single_class():
    items = [(np.zeros((3, 8)), 1), (np.ones((2, 8)), 1)]
    with pytest.raises(ValueError):
        train(items, items, small_config())


def test_train_rejects_empty_sets():
    with pytest.raises(ValueError):
        train([], [(np.zeros((2, 8)), 0)], small_config())


# ---- prediction ----

def test_predict_tie_goes_to_background():
    cfg = small_config()
    params = init_params(cfg, np.random.default_rng(0))
    for tensor in params.tensors():
        tensor[...] = 0.0
    from earmotion.classifier import TrainedModel

    model = TrainedModel(config=cfg, params=params, history=[], best_epoch=0)
    p, label = predict(model, np.ones((2, 8)))
    assert p == 0.5
    assert label == "background"


def test_predict_dimension_error():
    cfg = small_config()
    from earmotion.classifier import TrainedModel

    model = TrainedModel(config=cfg, params=init_params(cfg, np.random.default_rng(0)))
    with pytest.raises(ValueError):
        predict(model, np.zeros((2, 16)))


def test_trained_model_classifies_held_out_positive():
    cfg = small_config(seed=7, max_epochs=100)
    model = train(labelled(20, 7, dim=8), labelled(10, 8, dim=8), cfg)
    probe = labelled(5, 9, dim=8)
    positives = [a for a, y in probe if y == 1]
    correct = sum(1 for a in positives if predict(model, a)[1] == "movement")
    assert correct >= len(positives) - 1


# ---- grid search ----

def test_grid_lattice_size():
    lattice = table2_lattice(768)
    assert len(lattice) == 16
    assert {c.num_layers for c in lattice} == {2, 3}
    assert {c.hidden_size for c in lattice} == {256, 512}
    assert {c.learning_rate for c in lattice} == {0.0005, 0.001, 0.005, 0.01}


def test_grid_single_config():
    cfg = small_config(seed=8, max_epochs=25)
    best, results = grid_search(labelled(6, 10, dim=8), labelled(4, 11, dim=8), [cfg])
    assert len(results) == 1
    assert best.config == cfg


def test_grid_tie_breaks_to_smaller_architecture():
    # Two configs over trivially separable data both reach val accuracy 1.0.
    train_set = labelled(6, 12, dim=8, shift=3.0, sigma=0.05)
    val_set = labelled(4, 13, dim=8, shift=3.0, sigma=0.05)
    big = LstmConfig(input_dim=8, num_layers=3, hidden_size=8, seed=1, max_epochs=40)
    small = LstmConfig(input_dim=8, num_layers=2, hidden_size=4, seed=1, max_epochs=40)
    best, results = grid_search(train_set, val_set, [big, small])
    assert results[0].val_accuracy == results[1].val_accuracy == 1.0
    assert best.config == small


# ---- serialization ----

def test_model_round_trip(tmp_path):
    cfg = small_config(seed=9, max_epochs=15)
    model = train(labelled(6, 14, dim=8), labelled(4, 15, dim=8), cfg)
    path = tmp_path / "m.eflm"
    save_model(model, path)
    loaded = load_model(path)
    probe = np.random.default_rng(16).normal(0, 1, (4, 8))
    assert lstm_forward(probe, loaded.params, loaded.config) == lstm_forward(
        probe, load_model(path).params, loaded.config
    )
    assert loaded.config == model.config
    assert loaded.best_epoch == model.best_epoch
    assert len(loaded.history) == len(model.history)
    # a second save of the loaded model is byte-identical
    path2 = tmp_path / "m2.eflm"
    save_model(loaded, path2)
    assert path.read_bytes() == path2.read_bytes()


def test_model_truncated_file(tmp_path):
    cfg = small_config(seed=10, max_epochs=5)
    model = train(labelled(4, 17, dim=8), labelled(3, 18, dim=8), cfg)
    path = tmp_path / "m.eflm"
    save_model(model, path)
    path.write_bytes(path.read_bytes()[:-40])
    with pytest.raises(ModelFormatError):
        load_model(path)


def test_model_dimension_guard(tmp_path):
    cfg = LstmConfig(input_dim=768, num_layers=2, hidden_size=8, seed=0, max_epochs=5)
    model = train(labelled(4, 19, dim=768, t_range=(2, 3)), labelled(3, 20, dim=768, t_range=(2, 3)), cfg)
    path = tmp_path / "m.eflm"
    save_model(model, path)
    loaded = load_model(path)
    with pytest.raises(ValueError):
        predict(loaded, np.zeros((3, 1024)))
