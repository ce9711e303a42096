import numpy as np
import pytest

from fedlf.container import read_container, write_container
from fedlf.errors import FormatError, InputError
from fedlf.model import (ModelArch, ModelParams, backward_features, classifier_scores,
                         forward_features, init_params, load_params, predict, save_params)
from fedlf.numgrad import grad_check


def test_init_deterministic_and_seed_sensitive(tiny_arch):
    a, b = init_params(tiny_arch, 3), init_params(tiny_arch, 3)
    assert a.equal(b)
    assert not a.equal(init_params(tiny_arch, 4))


def test_param_names_and_shapes(tiny_arch, tiny_params):
    assert tiny_params["extractor.0.weight"].shape == (6, 5)
    assert tiny_params["extractor.0.bias"].shape == (1, 6)
    assert tiny_params["extractor.1.weight"].shape == (4, 6)
    assert tiny_params.classifier.shape == (3, 4)
    assert tiny_params.num_layers() == 2


def test_no_hidden_layer_is_single_linear_map(rng):
    arch = ModelArch(input_dim=7, feature_dim=3, num_classes=2, hidden_widths=())
    p = init_params(arch, 0)
    x = rng.normal(size=(5, 7))
    h = forward_features(p, x, arch)
    assert h.shape == (5, 3)
    assert np.allclose(h, x @ p["extractor.0.weight"].T + p["extractor.0.bias"])


def test_zero_weights_give_zero_features(tiny_params, rng):
    arch = ModelArch(input_dim=5, feature_dim=4, num_classes=3, hidden_widths=(6,), activation="relu")
    z = tiny_params.zeros_like()
    assert np.array_equal(forward_features(z, rng.normal(size=(4, 5)), arch), np.zeros((4, 4)))


def test_batch_independence(tiny_arch, tiny_params, rng):
    x = rng.normal(size=(3, 5))
    full = forward_features(tiny_params, x, tiny_arch)
    one = forward_features(tiny_params, x[1:2], tiny_arch)
    # BLAS may pick a different kernel for one row, so allow last-bit rounding
    assert np.allclose(one[0], full[1], rtol=1e-12, atol=1e-14)


def test_forward_rejects_wrong_width(tiny_arch, tiny_params):
    with pytest.raises(InputError):
        forward_features(tiny_params, np.ones((2, 4)), tiny_arch)


@pytest.mark.parametrize("activation,activate", [("tanh", False), ("relu", True), ("tanh", True)])
def test_backward_matches_finite_differences(rng, activation, activate):
    arch = ModelArch(input_dim=4, feature_dim=3, num_classes=2, hidden_widths=(5, 4),
                     activation=activation, activate_features=activate)
    params = init_params(arch, 11)
    params = ModelParams({k: v + 0.1 * rng.normal(size=v.shape) for k, v in params.items()})
    x = rng.normal(size=(6, 4))
    names = [k for k in params if k.startswith("extractor")]

    def f(p):
        full = ModelParams({**dict(params.items()), **p})
        h, cache = forward_features(full, x, arch, return_cache=True)
        g = backward_features(full, cache, 2 * h, arch)
        return float((h * h).sum()), g

    rep = grad_check(f, {k: params[k] for k in names}, 1e-6)
    assert rep.max_rel_error < 1e-4


def test_classifier_scores_examples():
    h = np.array([[1.0, 2.0]])
    assert classifier_scores(h, [[1, 0], [0, 1], [1, 1]]).tolist() == [[1.0, 2.0, 3.0]]
    assert np.array_equal(classifier_scores(h, np.eye(2)), h)
    assert np.array_equal(classifier_scores(np.zeros((2, 2)), np.ones((3, 2))), np.zeros((2, 3)))


def test_params_arithmetic(tiny_params):
    two = tiny_params + tiny_params
    assert (two - tiny_params).equal(tiny_params)
    assert (tiny_params * 2.0).equal(two)
    with pytest.raises(InputError):
        tiny_params + ModelParams({"x": np.zeros(1)})


def test_checkpoint_round_trip_bit_exact(tmp_path, tiny_arch, tiny_params, rng):
    path = tmp_path / "m.params"
    save_params(tiny_params, path, tiny_arch)
    back, arch = load_params(path)
    assert arch == tiny_arch
    assert list(back) == list(tiny_params)
    for k in tiny_params:
        assert back[k].tobytes() == tiny_params[k].tobytes()
    x = rng.normal(size=(4, 5))
    assert np.array_equal(predict(back, x, arch), predict(tiny_params, x, tiny_arch))


def test_container_rejects_truncation_and_wrong_format(tmp_path):
    path = tmp_path / "c.bin"
    write_container(path, {"a": np.arange(6.0).reshape(2, 3)}, "demo", {"k": 1})
    tensors, meta = read_container(path, "demo")
    assert tensors["a"].shape == (2, 3) and meta == {"k": 1}
    with pytest.raises(FormatError):
        read_container(path, "other")
    raw = path.read_bytes()
    path.write_bytes(raw[:-5])
    with pytest.raises(FormatError):
        read_container(path)
