"""Serve an unlearning request that needs no retraining, then check its proof.

With 13 clients and k=4 the run builds three clusters (4, 4, 5 members);
removing one client from a 4-member cluster leaves 3 >= x=2, so history
survives as-is and the departing client receives a proof instead of a
rollback. The proof is saved next to the history and verified twice:
through the library call and through the CLI.
"""

from pathlib import Path

from podfl.cli import main as podfl_main
from podfl.data import PartitionPlan, partition, synth_classification
from podfl.models import ModelSpec, TrainConfig
from podfl.orchestrator import RunConfig, make_clients, train
from podfl.unlearning import UnlearnRequest, pod_digest, save_pod, verify_pod

pool = synth_classification(n=520, input_dim=6, num_classes=4, seed=11)
shards = partition(pool, PartitionPlan(mode="iid", num_clients=13, seed=2))

cfg = RunConfig(
    algorithm="k-ipfedavg",
    num_clients=13,
    rounds=4,
    model=ModelSpec(kind="logistic-regression", input_dim=6, num_classes=4),
    train=TrainConfig(local_epochs=1, learning_rate=0.15, batch_size=20),
    k=4,
    x=2,
    delta=2.0,
    sigma=0.0,
    master_seed=0,
)
clients = make_clients(shards, cfg.master_seed)
result = train(cfg, clients, [UnlearnRequest(round=3, target_id=0)])

req = result.metrics.requests[0]
print("served:", req)
_, pod = result.pods[0]
print("verdict:", pod.verdict.status)
for entry in pod.entries:
    print(f"  round {entry.round}: cluster kept {len(entry.member_ids)} members, "
          f"{entry.deniability_count} witnesses within delta")

out = Path("results/demo_pod")
store_dir = result.store.save(out / "history")
pod_path, digest_path = save_pod(pod, out / "pod_client0.json")
print("digest:", pod_digest(pod))

# library-side check against the surviving history
print("verify_pod:", verify_pod(pod, result.store))

# same check through the command line; exit code 0 means VALID
code = podfl_main(["verify-pod", str(pod_path), str(store_dir)])
print("cli exit code:", code)

# tampering with the document must break it (any nonzero exit)
doc_text = pod_path.read_text()
pod_path.write_text(doc_text.replace("0", "1", 1))
code = podfl_main(["verify-pod", str(pod_path), str(store_dir)])
print("cli exit code after tamper:", code)
pod_path.write_text(doc_text)  # restore
