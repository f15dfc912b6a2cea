import numpy as np
import pytest

from gradcheck import central_diff, rel_close
from vladapt import errors
from vladapt.adaptors import Adaptor, AdaptorConfig, load_adaptor_set, make_adaptor_set, save_adaptor_set
from vladapt.rng import Stream


def dense(W, b):
    return Adaptor("dense", len(b), {"W": np.asarray(W, float), "b": np.asarray(b, float)})


def test_identity_dense_is_exact_identity():
    aset = make_adaptor_set(AdaptorConfig(kind="dense", placement="both", dim=4, init="identity"))
    assert np.array_equal(aset.image.params["W"], np.eye(4))
    assert np.array_equal(aset.image.params["b"], np.zeros(4))
    x = np.array([3.0, -1.0, 0.25, 7.5])
    y, _ = aset.image.forward(x)
    assert np.array_equal(y, x)


def test_identity_mlp_is_exact_identity():
    aset = make_adaptor_set(AdaptorConfig(kind="mlp", placement="image_only", dim=3,
                                          hidden_dim=8, init="identity"))
    X = Stream(0, "x").normal_array((10, 3))
    Y, _ = aset.image.forward(X)
    assert np.array_equal(Y, X)


def test_identity_mlp_infeasible_when_hidden_too_small():
    with pytest.raises(errors.IdentityInitInfeasible):
        make_adaptor_set(AdaptorConfig(kind="mlp", placement="both", dim=4,
                                       hidden_dim=7, init="identity"))


def test_same_seed_bitwise_identical():
    cfg = AdaptorConfig(kind="mlp", placement="both", dim=4, hidden_dim=4, seed=7)
    a = make_adaptor_set(cfg)
    b = make_adaptor_set(cfg)
    for (_, ad_a), (_, ad_b) in zip(a.trainable(), b.trainable()):
        for name in ad_a.param_names:
            assert np.array_equal(ad_a.params[name], ad_b.params[name])


def test_scaled_uniform_bound():
    # dense dim=4: every |W_ij| <= 1/sqrt(4) = 0.5, over many seeds
    for seed in range(20):
        aset = make_adaptor_set(AdaptorConfig(kind="dense", placement="image_only",
                                              dim=4, seed=seed))
        W = aset.image.params["W"]
        assert np.abs(W).max() <= 0.5
        assert np.array_equal(aset.image.params["b"], np.zeros(4))


def test_forward_dense_hand_case():
    a = dense([[0.0, 1.0], [1.0, 0.0]], [1.0, 0.0])
    y, _ = a.forward(np.array([2.0, 5.0]))
    assert np.array_equal(y, np.array([6.0, 2.0]))


def test_forward_mlp_relu_clips():
    a = Adaptor("mlp", 2, {
        "W1": np.eye(2), "b1": np.zeros(2),
        "W2": np.eye(2), "b2": np.zeros(2),
    }, hidden_dim=2)
    y, _ = a.forward(np.array([-2.0, 3.0]))
    assert np.array_equal(y, np.array([0.0, 3.0]))


def test_forward_width_check():
    a = dense(np.eye(3), np.zeros(3))
    with pytest.raises(errors.ShapeMismatch):
        a.forward(np.ones(4))


def test_backward_identity_dense():
    a = dense(np.eye(2), np.zeros(2))
    x = np.array([2.0, -3.0])
    _, cache = a.forward(x)
    g = np.array([0.5, 1.5])
    grads, grad_in = a.backward(cache, g)
    assert np.array_equal(grad_in, g)
    assert np.array_equal(grads["W"], np.outer(g, x))
    assert np.array_equal(grads["b"], g)


def test_backward_zero_grad_out():
    aset = make_adaptor_set(AdaptorConfig(kind="mlp", placement="image_only", dim=3, seed=2))
    X = Stream(1, "zg").uniform_range(-1, 1, (4, 3))
    _, cache = aset.image.forward(X)
    grads, grad_in = aset.image.backward(cache, np.zeros((4, 3)))
    assert not grad_in.any()
    assert all(not g.any() for g in grads.values())


def test_backward_stale_cache():
    a3 = make_adaptor_set(AdaptorConfig(kind="dense", placement="image_only", dim=3, seed=0)).image
    a4 = make_adaptor_set(AdaptorConfig(kind="dense", placement="image_only", dim=4, seed=0)).image
    _, cache = a4.forward(np.ones(4))
    with pytest.raises(errors.StaleCache):
        a3.backward(cache, np.ones(3))


@pytest.mark.parametrize("kind", ["dense", "mlp"])
def test_backward_matches_finite_differences(kind):
    # 100 random (adaptor, x, grad_out) triples per kind; dense layers are
    # kink-free so they get the tighter tolerance
    rel, floor = (1e-6, 1e-10) if kind == "dense" else (1e-4, 1e-8)
    stream = Stream(42, f"fd:{kind}")
    checked, attempt = 0, 0
    while checked < 100:
        attempt += 1
        dim = 3
        cfg = AdaptorConfig(kind=kind, placement="image_only", dim=dim, hidden_dim=5,
                            seed=attempt)
        adaptor = make_adaptor_set(cfg).image
        x = stream.uniform_range(-1, 1, (2, dim)) + 1.5
        w = stream.uniform_range(-1, 1, (2, dim))
        if kind == "mlp":
            h1 = x @ adaptor.params["W1"].T + adaptor.params["b1"]
            if (np.abs(h1) < 1e-3).any():  # relu kink breaks the FD oracle
                continue
        _, cache = adaptor.forward(x)
        grads, grad_in = adaptor.backward(cache, w)

        def loss():
            y, _ = adaptor.forward(x)
            return float((y * w).sum())

        for pname in adaptor.param_names:
            fd = central_diff(loss, adaptor.params[pname])
            assert rel_close(grads[pname], fd, rel=rel, floor=floor), (kind, attempt, pname)
        assert rel_close(grad_in, central_diff(loss, x), rel=rel, floor=floor)
        checked += 1


def test_shared_placement_single_store():
    aset = make_adaptor_set(AdaptorConfig(kind="dense", placement="shared", dim=3, seed=5))
    assert aset.image is aset.text
    aset.image.params["W"][0, 0] = 123.0
    assert aset.text.params["W"][0, 0] == 123.0
    assert len(aset.trainable()) == 1


def test_placement_identity_paths():
    x = np.array([[1.0, 2.0, 3.0]])
    img_only = make_adaptor_set(AdaptorConfig(kind="dense", placement="image_only", dim=3, seed=1))
    assert np.array_equal(img_only.apply_text(x), x)
    txt_only = make_adaptor_set(AdaptorConfig(kind="dense", placement="text_only", dim=3, seed=1))
    assert np.array_equal(txt_only.apply_image(x), x)


def test_checkpoint_round_trip(tmp_path):
    cfg = AdaptorConfig(kind="mlp", placement="both", dim=5, hidden_dim=7, seed=3)
    aset = make_adaptor_set(cfg)
    extra = {"adam.m.0": Stream(0, "m").normal_array((7, 5))}
    path = save_adaptor_set(aset, cfg, tmp_path / "ckpt", extra_tensors=extra,
                            extra_meta={"adam_t": 17})
    loaded, cfg2, tensors, meta = load_adaptor_set(path)
    assert cfg2.kind == "mlp" and cfg2.placement == "both" and cfg2.hidden_dim == 7
    for (_, a), (_, b) in zip(aset.trainable(), loaded.trainable()):
        for name in a.param_names:
            assert np.array_equal(a.params[name], b.params[name])
    assert np.array_equal(tensors["adam.m.0"], extra["adam.m.0"])
    assert meta["adam_t"] == 17
