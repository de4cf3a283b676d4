import numpy as np
import numpy.testing as npt
import pytest

from hybridrc.nnet import (
    DESIGN_GRIDS,
    NetSpec,
    Normalizer,
    TrainConfig,
    design_matrix_cells,
    fit_normalizer,
    forward,
    init_params,
    load_model,
    loss_and_grads,
    make_dropout_masks,
    param_count,
    save_model,
    train,
)


def toy_spec(arch, **kw):
    base = dict(
        mlp=dict(arch="mlp", n_input=7, n_output=3, n_layer=2, n_z=5),
        cnn=dict(arch="cnn", n_input=20, n_output=3, n_layer=2, n_z=6,
                 n_channel=4, n_filter=3, n_pool=2),
        rnn=dict(arch="rnn", n_input=3, n_output=4, n_steps_in=5, n_layer=2, n_z=6),
        lstm=dict(arch="lstm", n_input=3, n_output=4, n_steps_in=5, n_layer=2, n_z=6),
    )[arch]
    base.update(kw)
    return NetSpec(**base)


def batch_for(spec, rng, batch=4):
    if spec.arch in ("mlp", "cnn"):
        psi = rng.normal(size=(batch, spec.n_input))
    else:
        psi = rng.normal(size=(batch, spec.n_steps_total, spec.n_input))
    xi = rng.normal(size=(batch, spec.n_output))
    return psi, xi


def numeric_grads(spec, params, psi, xi, masks, name, h=1e-5):
    flat = params[name]
    g = np.zeros_like(flat)
    it = np.nditer(flat, flags=["multi_index"])
    while not it.finished:
        idx = it.multi_index
        orig = flat[idx]
        flat[idx] = orig + h
        lp, _ = loss_and_grads(spec, params, psi, xi, masks)
        flat[idx] = orig - h
        lm, _ = loss_and_grads(spec, params, psi, xi, masks)
        flat[idx] = orig
        g[idx] = (lp - lm) / (2 * h)
        it.iternext()
    return g


@pytest.mark.parametrize("arch", ["mlp", "cnn", "rnn", "lstm"])
@pytest.mark.parametrize("activation", ["relu", "selu", "gelu"])
def test_gradients_match_finite_differences(arch, activation):
    rng = np.random.default_rng(hash((arch, activation)) % 2**32)
    spec = toy_spec(arch, activation=activation, dropout=0.1)
    params = init_params(spec, seed=1)
    psi, xi = batch_for(spec, rng)
    masks = make_dropout_masks(spec, len(psi), np.random.default_rng(5))
    _, grads = loss_and_grads(spec, params, psi, xi, masks)
    assert set(grads) == set(params)
    for name in params:
        num = numeric_grads(spec, params, psi, xi, masks, name)
        denom = np.maximum(np.abs(num), 1e-6)
        rel = np.max(np.abs(grads[name] - num) / denom)
        assert rel < 1e-4, (name, rel)


def test_zero_residual_batch_zero_gradients(rng):
    spec = toy_spec("mlp", dropout=0.0)
    params = init_params(spec, seed=2)
    psi, _ = batch_for(spec, rng)
    target = forward(spec, params, psi)
    _, grads = loss_and_grads(spec, params, psi, target)
    for g in grads.values():
        npt.assert_allclose(g, 0.0, atol=1e-12)


def test_duplicated_batch_same_gradient(rng):
    spec = toy_spec("rnn", dropout=0.0)
    params = init_params(spec, seed=3)
    psi, xi = batch_for(spec, rng, batch=3)
    _, g1 = loss_and_grads(spec, params, psi, xi)
    psi2 = np.concatenate([psi, psi])
    xi2 = np.concatenate([xi, xi])
    _, g2 = loss_and_grads(spec, params, psi2, xi2)
    for k in g1:
        npt.assert_allclose(g1[k], g2[k], rtol=1e-10, atol=1e-12)


def test_mlp_zero_weights_output_bias(rng):
    spec = toy_spec("mlp")
    params = {k: np.zeros_like(v) for k, v in init_params(spec, 0).items()}
    params["b_out"] = np.array([1.5, -2.0, 0.25])
    psi, _ = batch_for(spec, rng)
    out = forward(spec, params, psi)
    npt.assert_allclose(out, np.tile(params["b_out"], (len(psi), 1)), atol=1e-14)


def test_lstm_zero_input_constant_output():
    spec = toy_spec("lstm", dropout=0.0)
    params = init_params(spec, seed=4)
    # zero input sequence and zero cell weights pin every hidden state at
    # the origin; the output reduces to the head applied to b_head and is
    # identical at every forecast step
    for l in range(spec.n_layer):
        for name in (f"W_ih{l}", f"W_hh{l}", f"b_ih{l}", f"b_hh{l}"):
            params[name][:] = 0.0
    psi = np.zeros((2, spec.n_steps_total, spec.n_input))
    out = forward(spec, params, psi)
    from hybridrc.nnet import _act

    head = _act(spec.activation, params["b_head"])
    expected = float(head @ params["W_out"][:, 0] + params["b_out"][0])
    npt.assert_allclose(out, expected, atol=1e-12)


def test_cnn_matches_hand_traced_toy():
    # one conv channel pair, filter 2, pool 2, relu, hand-traced
    spec = NetSpec(arch="cnn", n_input=6, n_output=1, n_layer=1, n_z=2,
                   n_channel=2, n_filter=2, n_pool=2, activation="relu",
                   dropout=0.0)
    params = init_params(spec, seed=0)
    params["K0"] = np.array([[[1.0, -1.0]], [[0.5, 0.5]]])
    params["kb0"] = np.array([0.0, 1.0])
    x = np.array([[1.0, 3.0, 2.0, 0.0, -1.0, 4.0]])
    conv0 = np.array([1 - 3, 3 - 2, 2 - 0, 0 + 1, -1 - 4])
    conv1 = np.array([2.0, 2.5, 1.0, -0.5, 1.5]) + 1.0
    pool0 = np.maximum(np.array([max(conv0[0], conv0[1]), max(conv0[2], conv0[3])]), 0)
    pool1 = np.maximum(np.array([max(conv1[0], conv1[1]), max(conv1[2], conv1[3])]), 0)
    flat = np.concatenate([pool0, pool1])
    hid = np.maximum(flat @ params["W_hid"] + params["b_hid"], 0)
    expected = hid @ params["W_out"] + params["b_out"]
    out = forward(spec, params, x)
    npt.assert_allclose(out, expected[None, :], rtol=1e-12)


def test_dropout_eval_identity_and_training_scale(rng):
    # single hidden layer: the mask feeds a purely linear head, so the
    # inverted-dropout expectation identity is exact and Monte Carlo
    # converges to the eval-mode output
    spec = toy_spec("mlp", n_layer=1, dropout=0.3)
    params = init_params(spec, seed=6)
    psi, _ = batch_for(spec, rng, batch=8)
    out_eval = forward(spec, params, psi)
    npt.assert_array_equal(out_eval, forward(spec, params, psi))
    acc = np.zeros_like(out_eval)
    n_mc = 20000
    mask_rng = np.random.default_rng(7)
    for _ in range(n_mc):
        masks = make_dropout_masks(spec, len(psi), mask_rng)
        acc += forward(spec, params, psi, masks)
    mc = acc / n_mc
    scale = np.maximum(np.abs(out_eval), 0.25)
    assert np.max(np.abs(mc - out_eval) / scale) < 0.02


def test_param_count_table():
    # regression table: parameter totals are a pure function of the spec
    expected = {
        ("mlp", 1, 10): 7 * 10 + 10 + 10 * 3 + 3,
        ("rnn", 1, 10): (3 * 10 + 10 * 10 + 20) + (10 * 10 + 10) + (10 + 1),
        ("lstm", 1, 10): (3 * 40 + 10 * 40 + 80) + (10 * 10 + 10) + (10 + 1),
    }
    for (arch, nl, nz), count in expected.items():
        spec = toy_spec(arch, n_layer=nl, n_z=nz)
        assert param_count(spec) == count, arch


def test_design_matrix_cells_cover_grids():
    assert len(design_matrix_cells("mlp")) == 3 * 4 * 3
    assert len(design_matrix_cells("cnn")) == 2 * 3 * 3 * 2 * 2 * 3
    assert len(design_matrix_cells("rnn")) == 3 * 4 * 3
    for cell in design_matrix_cells("lstm"):
        assert cell["n_z"] in DESIGN_GRIDS["lstm"]["n_z"]


def test_normalizer_conventions():
    norm = fit_normalizer(np.array([[1.0], [3.0]]))
    npt.assert_allclose(norm.mean, [2.0])
    npt.assert_allclose(norm.std, [1.0])  # population convention
    npt.assert_allclose(norm.apply(np.array([3.0])), [1.0])


def test_normalizer_roundtrip(rng):
    x = rng.normal(3.0, 2.5, (40, 6))
    norm = fit_normalizer(x)
    npt.assert_allclose(norm.invert(norm.apply(x)), x, atol=1e-12)


def test_normalizer_constant_feature_floored():
    x = np.ones((10, 2))
    x[:, 1] = np.arange(10)
    norm = fit_normalizer(x)
    assert norm.std[0] == 1e-8
    with pytest.raises(ValueError):
        fit_normalizer(np.empty((0, 2)))


def test_normalizer_no_leakage(rng):
    train_x = rng.normal(5.0, 2.0, (50, 3))
    test_x = rng.normal(9.0, 2.0, (50, 3))
    norm = fit_normalizer(train_x)
    z = norm.apply(test_x)
    assert abs(z.mean()) > 0.5  # test mean is not recentred to zero


def test_training_converges_on_linear_problem(rng):
    spec = NetSpec(arch="mlp", n_input=4, n_output=2, n_layer=1, n_z=32,
                   activation="relu", dropout=0.0)
    W = rng.normal(size=(4, 2))
    psi = rng.normal(size=(300, 4))
    xi = psi @ W
    psi_te = rng.normal(size=(60, 4))
    xi_te = psi_te @ W
    cfg = TrainConfig(max_epochs=200, patience=150, batch_size=32, learning_rate=5e-3, seed=1)
    params, hist = train(spec, (psi, xi), (psi_te, xi_te), cfg)
    assert min(hist.train_loss) < 1e-3


def test_early_stopping_contract(rng):
    # when the test loss only worsens, training halts patience+1 epochs
    # after the best epoch
    spec = toy_spec("mlp", dropout=0.0)
    psi, xi = batch_for(spec, rng, batch=64)
    psi_te = rng.normal(size=(16, spec.n_input))
    xi_te = np.full((16, spec.n_output), 1e3)  # unreachable targets
    cfg = TrainConfig(max_epochs=500, patience=5, batch_size=16, seed=3)
    params, hist = train(spec, (psi, xi), (psi_te, xi_te), cfg)
    assert hist.stopped_epoch - hist.best_epoch == cfg.patience


def test_training_deterministic(rng):
    spec = toy_spec("mlp")
    psi, xi = batch_for(spec, rng, batch=48)
    cfg = TrainConfig(max_epochs=12, patience=10, batch_size=16, seed=9)
    p1, h1 = train(spec, (psi, xi), (psi, xi), cfg)
    p2, h2 = train(spec, (psi, xi), (psi, xi), cfg)
    assert h1.train_loss == h2.train_loss
    for k in p1:
        npt.assert_array_equal(p1[k], p2[k])


def test_train_rejects_empty():
    spec = toy_spec("mlp")
    with pytest.raises(ValueError):
        train(spec, (np.empty((0, 7)), np.empty((0, 3))),
              (np.empty((0, 7)), np.empty((0, 3))), TrainConfig(max_epochs=2, patience=1))


def test_model_file_roundtrip(tmp_path, rng):
    spec = toy_spec("lstm")
    params = init_params(spec, seed=11)
    norm_psi = fit_normalizer(rng.normal(size=(30, spec.n_input)))
    norm_xi = fit_normalizer(rng.normal(size=(30, 1)))
    path = tmp_path / "model.json"
    save_model(path, spec, params, norm_psi, norm_xi, meta={"case": "case01"})
    spec2, params2, np_psi, np_xi, meta = load_model(path)
    assert spec2 == spec
    assert meta["case"] == "case01"
    for k in params:
        npt.assert_allclose(params2[k], params[k], rtol=1e-15)
    psi, _ = batch_for(spec, rng)
    npt.assert_allclose(forward(spec2, params2, psi), forward(spec, params, psi), rtol=1e-12)


def test_spec_validation():
    with pytest.raises(ValueError):
        NetSpec(arch="gru", n_input=4, n_output=2)
    with pytest.raises(ValueError):
        NetSpec(arch="rnn", n_input=4, n_output=2)  # missing n_steps_in
    with pytest.raises(ValueError):
        NetSpec(arch="cnn", n_input=4, n_output=2, n_filter=6)  # conv eats input
    with pytest.raises(ValueError):
        TrainConfig(max_epochs=10, patience=20)
