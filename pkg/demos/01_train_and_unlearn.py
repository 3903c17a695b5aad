"""Train a small federation, then remove a client mid-run.

The removal here is chosen so that the target's old cluster drops below
the anonymity floor, which forces a rollback: the orchestrator rewinds
to the snapshot before the first offending round and replays everything
without the departed client.
"""

import numpy as np

from podfl.data import PartitionPlan, partition, synth_classification, train_test_split
from podfl.models import ModelSpec, TrainConfig
from podfl.orchestrator import RunConfig, make_clients, train
from podfl.unlearning import UnlearnRequest

# a synthetic 3-class problem split across 8 clients
pool = synth_classification(n=640, input_dim=5, num_classes=3, seed=7)
trainset, holdout = train_test_split(pool, 0.2, seed=1)
shards = partition(trainset, PartitionPlan(mode="iid", num_clients=8, seed=0))

cfg = RunConfig(
    algorithm="k-ipfedavg",
    num_clients=8,
    rounds=6,
    model=ModelSpec(kind="logistic-regression", input_dim=5, num_classes=3),
    train=TrainConfig(local_epochs=1, learning_rate=0.2, batch_size=32),
    k=4,          # clusters of at least 4 clients
    x=4,          # post-removal clusters must keep 4 members, so any exit violates
    delta=1.0,
    sigma=0.0,    # no perturbation, keeps the demo deterministic to the eye
    master_seed=3,
)
clients = make_clients(shards, cfg.master_seed)

# client 5 asks to leave before round 4
result = train(cfg, clients, [UnlearnRequest(round=4, target_id=5)], test_data=holdout)

print("accuracy by round:")
for t in sorted(result.metrics.accuracy_by_round):
    print(f"  round {t}: {result.metrics.accuracy_by_round[t]:.3f}")

req = result.metrics.requests[0]
print("request served at round", req.round)
print("  proof valid:", req.pod_valid)
print("  first violated round:", req.violation_round)
for ev in result.metrics.retrain_events:
    print(f"  rewound to round {ev.round}, replayed in {ev.seconds:.3f}s")

# the departed client is gone from every surviving record
active = sorted({i for rec in result.store.rounds for i in rec.active_ids})
print("clients still in history:", active)
assert 5 not in active

# and the replay really is the from-scratch trajectory: rounds after the
# rollback carry generation 1
print("generations:", [rec.generation for rec in result.store.rounds])
print("final weights norm:", float(np.linalg.norm(result.model)))
