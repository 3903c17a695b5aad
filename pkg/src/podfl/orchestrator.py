"""Round drivers for plain and clustered federated averaging.

Both algorithms run every active client's local update each round and
aggregate with the clients' data-proportional weights. The clustered
variant groups the raw updates, draws one representative per cluster at
random, perturbs it with seeded Gaussian noise, and aggregates the
perturbed representatives with the summed member weights. Every executed
round appends a :class:`podfl.history.RoundHistory` so that unlearning
requests can be served against the full training record.

Determinism contract: every random draw is keyed by a derived seed of the
form (master seed, purpose, retrain generation, round, entity), so a
rollback that replays rounds under a bumped generation is reproducible
bit for bit, and two identical runs produce identical stores.
"""

from __future__ import annotations

import hashlib
import time
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Sequence

import numpy as np

from . import unlearning
from .clustering import ClusterParams, cluster_weights, pairwise_distances, select_representative, with_representative
from .data import Dataset
from .errors import ConfigError, EmptyShardError, PodflError
from .history import ClusterLog, HistoryStore, RoundHistory, snapshot_digest
from .models import METRICS, ModelSpec, TrainConfig, accuracy, client_update, init_params
from .privacy import NOISE_CONVENTIONS, NoiseDraw, gaussian_perturb, noise_stddev
from .reporting import MetricsLog, RetrainEvent, ServedRequest

ALGORITHMS = ("fedavg", "k-ipfedavg")


def derive_seed(*parts) -> int:
    """Stable 64-bit seed from a tuple of hashable parts (order matters)."""
    text = "\x1f".join(str(p) for p in parts)
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


@dataclass
class ClientRecord:
    """One participant: identity, aggregation weight, data shard, personal seed."""

    id: int
    p: float
    shard: Dataset
    seed: int


@dataclass(frozen=True)
class RunConfig:
    """Everything a round driver needs besides the clients themselves."""

    algorithm: str
    num_clients: int
    rounds: int
    model: ModelSpec
    train: TrainConfig
    k: int = 1
    x: int = 1
    delta: float = 0.05
    sigma: float = 0.0
    metric: str = "l2"
    storage_mode: str = "index-only"
    noise_convention: str = "algorithm1"
    master_seed: int = 0

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ConfigError(f"algorithm: unknown algorithm {self.algorithm!r}")
        if self.rounds < 1:
            raise ConfigError(f"rounds: must be >= 1, got {self.rounds}")
        if self.num_clients < 1:
            raise ConfigError(f"num_clients: must be >= 1, got {self.num_clients}")
        if self.metric not in METRICS:
            raise ConfigError(f"metric: unknown metric {self.metric!r}")
        if self.noise_convention not in NOISE_CONVENTIONS:
            raise ConfigError(f"noise_convention: unknown value {self.noise_convention!r}")
        if self.sigma < 0:
            raise ConfigError(f"sigma: must be >= 0, got {self.sigma}")
        if self.algorithm == "k-ipfedavg":
            if not 1 <= self.x <= self.k:
                raise ConfigError(f"x: need 1 <= x <= k, got x={self.x}, k={self.k}")
            if self.k > self.num_clients:
                raise ConfigError(
                    f"k: cluster size {self.k} exceeds num_clients {self.num_clients}"
                )
            if not self.delta > 0:
                raise ConfigError(f"delta: must be > 0, got {self.delta}")


def make_clients(shards: Sequence[Dataset], master_seed: int) -> list[ClientRecord]:
    """Build client records with data-proportional weights summing to 1."""
    total = sum(s.n for s in shards)
    if total == 0:
        raise ConfigError("cannot build clients from empty shards")
    return [
        ClientRecord(
            id=i,
            p=s.n / total,
            shard=s,
            seed=derive_seed(master_seed, "client", i),
        )
        for i, s in enumerate(shards)
    ]


def renormalize(records: Sequence[ClientRecord]) -> list[ClientRecord]:
    """Rescale aggregation weights of the given records so they sum to 1."""
    ordered = sorted(records, key=lambda r: r.id)
    total = sum(r.p for r in ordered)
    if total <= 0:
        raise PodflError("cannot renormalize: total client weight is zero")
    return [replace(r, p=r.p / total) for r in ordered]


def weighted_sum(vectors: Sequence[np.ndarray], weights: Sequence[float]) -> np.ndarray:
    acc = np.zeros_like(vectors[0])
    for w, v in zip(weights, vectors):
        acc += w * v
    return acc


def _client_updates(
    w_t: np.ndarray,
    records: Sequence[ClientRecord],
    cfg: RunConfig,
    round_index: int,
    generation: int,
) -> dict[int, np.ndarray]:
    updates = {}
    for rec in sorted(records, key=lambda r: r.id):
        seed = derive_seed(rec.seed, generation, round_index)
        try:
            updates[rec.id] = client_update(cfg.model, w_t, rec.shard, cfg.train, seed)
        except EmptyShardError:
            continue
    if not updates:
        raise PodflError(f"round {round_index}: every client was skipped")
    return updates


def run_round_fedavg(
    w_t: np.ndarray,
    records: Sequence[ClientRecord],
    cfg: RunConfig,
    round_index: int = 1,
    generation: int = 0,
) -> np.ndarray:
    """One plain federated-averaging round: weighted sum of all client updates."""
    updates = _client_updates(w_t, records, cfg, round_index, generation)
    ids = sorted(updates)
    p_by_id = {rec.id: rec.p for rec in records}
    return weighted_sum([updates[i] for i in ids], [p_by_id[i] for i in ids])


def run_round_ipfedavg(
    w_t: np.ndarray,
    records: Sequence[ClientRecord],
    cfg: RunConfig,
    round_index: int = 1,
    generation: int = 0,
    retraining: bool = False,
) -> tuple[np.ndarray, RoundHistory]:
    """One clustered round: cluster raw updates, perturb one representative per cluster.

    Returns the next global model and the round record holding member
    indices, noise seeds, pairwise member distances, the perturbed
    representatives, and the post-aggregation snapshot. The cluster radius
    may exceed ``cfg.delta``; it is recorded for reporting, not enforced.
    """
    updates = _client_updates(w_t, records, cfg, round_index, generation)
    params = ClusterParams(k=cfg.k, delta=cfg.delta, metric=cfg.metric)
    clusters = cluster_weights(updates, params)
    scale = noise_stddev(cfg.sigma, cfg.delta, cfg.noise_convention)
    p_by_id = {rec.id: rec.p for rec in records}

    logs, seeds, perturbed, cluster_weights_p = [], [], [], []
    for pos, cl in enumerate(clusters):
        rep_seed = derive_seed(cfg.master_seed, "rep", generation, round_index, pos)
        rep_id = select_representative(cl, rep_seed)
        cl = with_representative(cl, updates, rep_id, cfg.metric)
        draw = NoiseDraw(
            seed=derive_seed(cfg.master_seed, "noise", generation, round_index, pos),
            stddev=scale,
        )
        noisy = gaussian_perturb(updates[rep_id], draw.stddev, draw.seed)
        logs.append(
            ClusterLog(
                member_ids=list(cl.member_ids),
                representative_id=rep_id,
                radius=cl.radius,
                pair_dists=pairwise_distances(cl.member_ids, updates, cfg.metric),
            )
        )
        seeds.append(draw.seed)
        perturbed.append(noisy)
        cluster_weights_p.append(sum(p_by_id[m] for m in cl.member_ids))

    w_next = weighted_sum(perturbed, cluster_weights_p)
    record = RoundHistory(
        round_index=round_index,
        generation=generation,
        retraining=retraining,
        delta=cfg.delta,
        metric=cfg.metric,
        active_ids=sorted(updates),
        clusters=logs,
        noise_seeds=seeds,
        noise_scale=scale,
        snapshot=w_next.copy(),
        aggregate_hash=snapshot_digest(w_next),
        perturbed_reps=perturbed,
        client_updates=updates,
    )
    return w_next, record


def execute_round(
    w_t: np.ndarray,
    records: Sequence[ClientRecord],
    cfg: RunConfig,
    round_index: int,
    generation: int,
    retraining: bool = False,
) -> tuple[np.ndarray, RoundHistory]:
    """Algorithm dispatch used by the training loop and by rollback replays."""
    if cfg.algorithm == "k-ipfedavg":
        return run_round_ipfedavg(w_t, records, cfg, round_index, generation, retraining)
    updates = _client_updates(w_t, records, cfg, round_index, generation)
    ids = sorted(updates)
    p_by_id = {rec.id: rec.p for rec in records}
    w_next = weighted_sum([updates[i] for i in ids], [p_by_id[i] for i in ids])
    record = RoundHistory(
        round_index=round_index,
        generation=generation,
        retraining=retraining,
        delta=cfg.delta,
        metric=cfg.metric,
        active_ids=ids,
        clusters=[],
        noise_seeds=[],
        noise_scale=0.0,
        snapshot=w_next.copy(),
        aggregate_hash=snapshot_digest(w_next),
        perturbed_reps=[],
        client_updates=updates,
    )
    return w_next, record


@dataclass
class TrainResult:
    model: np.ndarray
    store: HistoryStore
    metrics: MetricsLog
    pods: list = field(default_factory=list)


def train(
    cfg: RunConfig,
    clients: Sequence[ClientRecord],
    unlearn_stream=None,
    *,
    test_data: Dataset | None = None,
    initial_model: np.ndarray | None = None,
    clock: Callable[[], float] = time.monotonic,
) -> TrainResult:
    """Run ``cfg.rounds`` rounds, serving unlearning requests as they arrive.

    ``unlearn_stream`` may be ``None``, an iterable of
    :class:`podfl.unlearning.UnlearnRequest` ordered by round, or a callable
    that receives a zero-argument provider of the currently active client
    ids and returns such an iterable (which lets a request generator target
    only clients that still participate).

    Before each round every pending request for that round is served:
    the target's participation evidence is captured, the target is scrubbed
    from the whole store, a proof of deniability is generated, and if any
    historical cluster dropped below ``cfg.x`` members the run rolls back
    to the earliest violating round and replays history under a fresh seed
    generation. Wall-clock time is measured around the replay alone.
    """
    if len(clients) != cfg.num_clients:
        raise ConfigError(
            f"num_clients: config says {cfg.num_clients}, got {len(clients)} records"
        )
    active: dict[int, ClientRecord] = {r.id: r for r in sorted(clients, key=lambda r: r.id)}
    if abs(sum(r.p for r in active.values()) - 1.0) > 1e-12:
        raise ConfigError("client weights must sum to 1")

    w = (
        initial_model.copy()
        if initial_model is not None
        else init_params(cfg.model, derive_seed(cfg.master_seed, "init"))
    )
    store = HistoryStore(w, storage_mode=cfg.storage_mode)
    metrics = MetricsLog(
        algorithm=cfg.algorithm,
        k=cfg.k if cfg.algorithm == "k-ipfedavg" else None,
        x=cfg.x if cfg.algorithm == "k-ipfedavg" else None,
    )
    pods: list = []
    generation = 0

    if unlearn_stream is None:
        stream_iter = iter(())
    elif callable(unlearn_stream):
        stream_iter = iter(unlearn_stream(lambda: sorted(active)))
    else:
        stream_iter = iter(unlearn_stream)
    pending = next(stream_iter, None)

    def record_accuracy(round_indices):
        if test_data is None or test_data.n == 0:
            return
        for idx in round_indices:
            metrics.accuracy_by_round[idx] = accuracy(
                cfg.model, store.round(idx).snapshot, test_data
            )

    for t in range(1, cfg.rounds + 1):
        while pending is not None and pending.round <= t:
            request = pending
            if request.target_id not in active:
                pending = next(stream_iter, None)
                continue
            target = request.target_id

            evidence = unlearning.extract_participation(store, target)
            weights_by_round = None
            if cfg.storage_mode == "full-updates":
                weights_by_round = {
                    rec.round_index: dict(rec.client_updates)
                    for rec in store.rounds
                    if rec.client_updates
                }
            unlearning.scrub_history(store, target)
            del active[target]
            if not active:
                raise PodflError(
                    f"round {t}: unlearning request for client {target} removed the last client"
                )
            remaining = renormalize(list(active.values()))
            active = {r.id: r for r in remaining}

            violation = None
            pod_valid = None
            if cfg.algorithm == "k-ipfedavg":
                pod = unlearning.generate_pod(
                    store,
                    target,
                    cfg.x,
                    cfg.delta,
                    cfg.metric,
                    weights_by_round,
                    evidence=evidence,
                )
                pods.append((request, pod))
                # Attested now: a later retrain may rewrite the rounds it cites.
                pod_valid = unlearning.verify_pod(pod, store)
                violation = unlearning.find_violation(store, cfg.x)
            elif store.rounds:
                # The plain-averaging baseline cannot deny participation, so
                # every request forces a replay from the target's first round.
                violation = unlearning.Violation(round_index=1, cluster_index=-1)

            if violation is not None:
                generation += 1
                started = clock()
                w, replayed = unlearning.rollback_retrain(
                    store, violation.round_index, cfg, remaining, generation
                )
                elapsed = clock() - started
                metrics.retrain_events.append(
                    RetrainEvent(round=violation.round_index, seconds=elapsed)
                )
                metrics.executed_rounds += len(replayed)
                record_accuracy(
                    range(violation.round_index, store.last_round_index() + 1)
                )
            metrics.requests.append(
                ServedRequest(
                    round=request.round,
                    target_id=target,
                    violation_round=None if violation is None else violation.round_index,
                    pod_valid=pod_valid,
                )
            )
            # Advance only after the scrub so a lazy stream samples the
            # post-removal pool, never a client that just left.
            pending = next(stream_iter, None)

        w, record = execute_round(w, list(active.values()), cfg, t, generation)
        store.append(record)
        metrics.executed_rounds += 1
        record_accuracy([t])

    return TrainResult(model=w, store=store, metrics=metrics, pods=pods)
