import numpy as np
import pytest

from fedlf.baselines import BaselineConfig, baseline_loss
from fedlf.data import ClientShard, PartitionSpec, dirichlet_partition, synth_gaussians
from fedlf.errors import InputError
from fedlf.federation import (FLConfig, aggregate, client_rng, local_update, num_sampled,
                              run_training, sample_clients)
from fedlf.losses import (FedLFWeights, adjustment_vector, init_class_centers,
                          normalize_distribution, total_loss)
from fedlf.metrics import classify_groups
from fedlf.model import ModelArch, ModelParams, forward_features, init_params

ARCH = ModelArch(input_dim=4, feature_dim=3, num_classes=3, hidden_widths=(5,))


def _data(counts=(40, 20, 8), seed=0):
    return synth_gaussians(3, 4, list(counts), 3.0, seed)


def _shard(ds, idx=None, cid=0):
    idx = np.arange(len(ds)) if idx is None else np.asarray(idx)
    return ClientShard(cid, idx, np.bincount(ds.labels[idx], minlength=ds.num_classes))


def test_sampling():
    rng = np.random.default_rng(0)
    assert sample_clients(20, 1.0, rng).tolist() == list(range(20))
    ids = sample_clients(20, 0.4, rng)
    assert len(set(ids.tolist())) == 8 == num_sampled(20, 0.4)
    a = sample_clients(20, 0.4, np.random.default_rng(5))
    b = sample_clients(20, 0.4, np.random.default_rng(5))
    assert np.array_equal(a, b)
    assert num_sampled(3, 0.01) == 1


def test_zero_learning_rate_leaves_params(rng):
    ds = _data()
    p = init_params(ARCH, 0)
    for method in ("fedavg", "fedlf", "focal", "fedprox"):
        cfg = FLConfig(local_epochs=2, learning_rate=0.0, method=BaselineConfig(method))
        out, trail = local_update(p, _shard(ds), ds, cfg, ARCH, rng)
        assert out.equal(p) and len(trail) == 2


@pytest.mark.parametrize("method", ["fedavg", "fedlf"])
def test_one_step_matches_gradient(method):
    ds = _data((6, 5, 4))
    p = init_params(ARCH, 1)
    shard = _shard(ds)
    lr = 0.05
    cfg = FLConfig(local_epochs=1, batch_size=64, learning_rate=lr, method=BaselineConfig(method))
    out, _ = local_update(p, shard, ds, cfg, ARCH, np.random.default_rng(0))
    x, y = ds.samples, ds.labels
    if method == "fedlf":
        a = adjustment_vector(normalize_distribution(shard.dist), 0.25)
        c = init_class_centers(forward_features(p, x, ARCH), y, 3)
        _, grads, _ = total_loss(x, y, p, c, ARCH, a, cfg.weights)
    else:
        _, grads = baseline_loss(x, y, p, ARCH, cfg.method, p)
    for k in p:
        assert np.allclose(out[k], p[k] - lr * grads[k], rtol=0, atol=1e-13)


def test_single_class_shard_runs():
    ds = _data()
    idx = np.flatnonzero(ds.labels == 1)
    out, trail = local_update(init_params(ARCH, 0), _shard(ds, idx), ds, FLConfig(local_epochs=2),
                              ARCH, np.random.default_rng(0))
    assert all(np.isfinite(b.total) for b in trail)
    assert all(b.q_used == 0.0 for b in trail)


def test_local_update_does_not_modify_global(rng):
    ds = _data()
    p = init_params(ARCH, 0)
    before = p.copy()
    local_update(p, _shard(ds), ds, FLConfig(local_epochs=1), ARCH, rng)
    assert p.equal(before)


def test_aggregate_examples(rng):
    p = ModelParams({"w": rng.normal(size=(2, 3))})
    assert aggregate([(p, 5)]).equal(p)
    assert aggregate([(p, 1), (p.copy(), 7), (p.copy(), 3)]).equal(p)
    one = ModelParams({"w": np.array([[1.0]])})
    three = ModelParams({"w": np.array([[3.0]])})
    assert aggregate([(one, 1), (three, 3)])["w"][0, 0] == 2.5
    with pytest.raises(InputError):
        aggregate([])


def test_aggregate_permutation_invariant(rng):
    ups = [(ModelParams({"a": rng.normal(size=(3, 2)), "b": rng.normal(size=(1, 2))}), int(n))
           for n in rng.integers(1, 50, size=6)]
    ref = aggregate(ups)
    for _ in range(5):
        perm = rng.permutation(len(ups))
        assert aggregate([ups[i] for i in perm]).equal(ref)


def _setup(num_clients=4, seed=0):
    ds = _data((60, 30, 12), seed)
    shards = dirichlet_partition(ds, PartitionSpec(num_clients, 0.5, 1, seed))
    groups = classify_groups(ds.class_counts, 40, 15)
    return ds, shards, groups


def test_zero_rounds():
    ds, shards, groups = _setup()
    init = init_params(ARCH, 0)
    res = run_training(FLConfig(num_rounds=0, num_clients=4), ARCH, ds, shards, ds, groups, init)
    assert res.reports == [] and res.params.equal(init)


def test_training_deterministic_and_thread_independent():
    ds, shards, groups = _setup()
    init = init_params(ARCH, 0)
    cfg = FLConfig(num_rounds=3, num_clients=4, online_rate=0.5, local_epochs=2, batch_size=8)
    a = run_training(cfg, ARCH, ds, shards, ds, groups, init)
    b = run_training(cfg, ARCH, ds, shards, ds, groups, init)
    c = run_training(FLConfig(**{**cfg.__dict__, "max_workers": 3}), ARCH, ds, shards, ds, groups,
                     init)
    assert a.params.equal(b.params) and a.params.equal(c.params)
    assert [r.as_dict() for r in a.reports] == [r.as_dict() for r in b.reports]
    assert [r.round for r in a.reports] == [1, 2, 3]
    assert all(len(r.clients) == 2 for r in a.reports)


def test_single_client_full_rate_is_centralised_sgd():
    ds = _data()
    shard = _shard(ds)
    groups = classify_groups(ds.class_counts, 30, 10)
    init = init_params(ARCH, 3)
    cfg = FLConfig(num_rounds=2, num_clients=1, online_rate=1.0, local_epochs=2, batch_size=16,
                   method=BaselineConfig("fedavg"), seed=9)
    res = run_training(cfg, ARCH, ds, [shard], ds, groups, init)
    p = init.copy()
    for t in (1, 2):
        rng = client_rng(9, t, 0)
        for _ in range(2):
            order = rng.permutation(len(ds))
            for s in range(0, len(ds), 16):
                idx = order[s:s + 16]
                _, g = baseline_loss(ds.samples[idx], ds.labels[idx], p, ARCH, cfg.method, p)
                p = p - g * 0.1
    assert np.allclose(res.params.flat(), p.flat(), rtol=0, atol=1e-12)


def test_empty_shard_is_skipped():
    ds, shards, groups = _setup()
    shards[1] = ClientShard(1, np.zeros(0, dtype=np.int64), np.zeros(3, dtype=np.int64))
    cfg = FLConfig(num_rounds=2, num_clients=4, online_rate=1.0, local_epochs=1)
    res = run_training(cfg, ARCH, ds, shards, ds, groups, init_params(ARCH, 0))
    assert len(res.reports) == 2


def test_checkpoints_written(tmp_path):
    ds, shards, groups = _setup()
    cfg = FLConfig(num_rounds=4, num_clients=4, local_epochs=1, checkpoint_every=2)
    run_training(cfg, ARCH, ds, shards, ds, groups, init_params(ARCH, 0), checkpoint_dir=tmp_path)
    assert sorted(p.name for p in tmp_path.iterdir()) == ["round_0002.params", "round_0004.params"]


def test_config_validation():
    with pytest.raises(InputError):
        FLConfig(online_rate=0.0)
    with pytest.raises(InputError):
        FedLFWeights(center_reduction="median")
