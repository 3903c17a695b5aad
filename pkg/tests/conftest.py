import numpy as np
import pytest

from podfl.data import Dataset, synth_classification
from podfl.models import ModelSpec, TrainConfig
from podfl.orchestrator import RunConfig, make_clients


@pytest.fixture
def tiny_spec():
    return ModelSpec(kind="logistic-regression", input_dim=4, num_classes=3)


@pytest.fixture
def tiny_data():
    return synth_classification(n=120, input_dim=4, num_classes=3, seed=13)


def make_run(algorithm="k-ipfedavg", num_clients=6, rounds=3, k=2, x=1, **over):
    """Small but fully wired run config for orchestrator-level tests."""
    kwargs = dict(
        algorithm=algorithm,
        num_clients=num_clients,
        rounds=rounds,
        model=ModelSpec(kind="logistic-regression", input_dim=4, num_classes=3),
        train=TrainConfig(local_epochs=1, learning_rate=0.1, batch_size=16),
        k=k,
        x=x,
        delta=0.5,
        sigma=0.0,
        metric="l2",
        master_seed=99,
    )
    kwargs.update(over)
    return RunConfig(**kwargs)


def make_cohort(cfg, n_per_client=20, data_seed=5):
    """Clients with equal-size iid shards drawn from one synthetic pool."""
    pool = synth_classification(
        n=n_per_client * cfg.num_clients,
        input_dim=cfg.model.input_dim,
        num_classes=cfg.model.num_classes,
        seed=data_seed,
    )
    shards = [
        pool.subset(np.arange(i * n_per_client, (i + 1) * n_per_client))
        for i in range(cfg.num_clients)
    ]
    return make_clients(shards, cfg.master_seed)


def identical_cohort(cfg, n_samples=24, data_seed=3):
    """Every client holds the same shard, so one-epoch full-batch updates match."""
    shard = synth_classification(
        n=n_samples,
        input_dim=cfg.model.input_dim,
        num_classes=cfg.model.num_classes,
        seed=data_seed,
    )
    return make_clients([shard] * cfg.num_clients, cfg.master_seed)
