import itertools

import numpy as np
import pytest

from niche_nas.benchmark.store import NUM_PROXIES, load_store
from niche_nas.benchmark.synthetic import SyntheticModel, cached_synthetic_store, synthesize
from niche_nas.errors import ConfigError
from niche_nas.objectives import spearman


def test_synthetic_store_is_complete(synthetic_store):
    assert len(synthetic_store) == 15625
    assert synthetic_store.is_complete("cifar10")
    assert synthetic_store.has_proxy_features
    assert synthetic_store.devices == ("edgegpu", "raspi4", "edgetpu", "pixel3", "eyeriss", "fpga")
    table = synthetic_store.table("cifar10")
    assert table.accuracy.min() >= 10.0
    assert table.accuracy.max() <= 95.0
    assert (table.latency["edgegpu"] > 0).all()
    assert table.features.shape == (15625, NUM_PROXIES)


def test_same_seed_same_store(synthetic_store):
    again = synthesize(SyntheticModel(seed=0))
    for a, b in itertools.islice(zip(synthetic_store, again), 0, None, 501):
        assert a == b


def test_different_seeds_differ():
    a = synthesize(SyntheticModel(seed=1)).table("cifar10").accuracy
    b = synthesize(SyntheticModel(seed=2)).table("cifar10").accuracy
    assert not np.array_equal(a, b)


def test_proxies_track_accuracy(synthetic_store):
    table = synthetic_store.table("cifar10")
    idx = np.arange(0, 15625, 7)
    for j in (0, NUM_PROXIES - 1):
        assert spearman(table.features[idx, j], table.accuracy[idx]) > 0.5


def test_model_validation():
    with pytest.raises(ConfigError):
        SyntheticModel(latency_jitter=1.0)
    with pytest.raises(ConfigError):
        SyntheticModel(op_costs={"edgegpu": (0.1, 0.1, 0.1, 0.1, 0.1)}, base_latency={"edgegpu": 1.0})
    with pytest.raises(ConfigError):
        SyntheticModel(proxy_noise=(0.5,))
    with pytest.raises(ConfigError):
        SyntheticModel.from_dict({"seed": 1, "colour": "blue"})


def test_model_file_round_trip(tmp_path):
    model = SyntheticModel(seed=3, noise=0.2)
    loaded = SyntheticModel.load(model.save(tmp_path / "model.json"))
    assert loaded == model
    assert model.noiseless().noise == 0.0
    assert set(model.noiseless().proxy_noise) == {0.0}


def test_cached_synthetic_store(tmp_path):
    path = tmp_path / "cache" / "synthetic_seed4.csv"
    first = cached_synthetic_store(4, path=path)
    assert path.is_file()
    second = cached_synthetic_store(4, path=path)
    assert np.array_equal(first.table("cifar10").accuracy, second.table("cifar10").accuracy)
    assert second.source == str(path)
    assert len(load_store(path)) == 15625
