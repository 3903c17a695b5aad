"""Streaming unlearning: scrubbing, rollback, deniability proofs, audits.

A served unlearning request proceeds in four steps. First the target's
participation evidence (which cluster it sat in each round, and its
recorded distances to the other members) is captured. Second the target
is scrubbed from every stored round: member lists, active lists, and the
condensed distance logs lose all trace of it, representatives it held
are reassigned to the lowest remaining id, and clusters left empty are
deleted outright. Third a proof of deniability is generated from the
captured evidence (or recomputed from archived per-round updates when
the server kept them): one entry per round the target appeared in,
exhibiting the post-removal membership and the peers whose updates were
within ``delta`` of the target's. Fourth, if any cluster anywhere in
history dropped below ``x`` members, the run rolls back to the earliest
violating round and replays the tail under a fresh seed generation.

Proofs serialize to a canonical JSON text (sorted keys, floats printed
with 17 significant digits) whose SHA-256 travels alongside the document
as a detached digest; verification checks the digest when one is
supplied, then re-derives every internal claim and cross-checks the
entries against the scrubbed history store.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterator, Mapping, Sequence

import numpy as np

from .errors import FormatError
from .history import HistoryStore, drop_member_distances, pair_distance
from .models import METRICS, functionally_equivalent, model_distance

_POD_SCHEMA = 1


@dataclass(frozen=True)
class UnlearnRequest:
    """A client asks to be forgotten before ``round`` executes."""

    round: int
    target_id: int


@dataclass(frozen=True)
class Violation:
    """Earliest stored cluster that fell below the required cardinality."""

    round_index: int
    cluster_index: int


def request_stream(
    p: float,
    rounds: int,
    active_clients: Sequence[int] | Callable[[], Sequence[int]],
    seed: int,
) -> Iterator[UnlearnRequest]:
    """Lazily emit at most one request per round, each with probability ``p``.

    The target is drawn uniformly from ``active_clients`` at emission
    time; passing a callable lets the draw follow a shrinking cohort. The
    sequence is a pure function of ``seed``.
    """
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"p must be in [0, 1], got {p}")
    if rounds < 1:
        raise ValueError(f"rounds must be >= 1, got {rounds}")
    rng = np.random.default_rng(seed)
    for t in range(1, rounds + 1):
        if rng.random() >= p:
            continue
        pool = list(active_clients() if callable(active_clients) else active_clients)
        if not pool:
            continue
        yield UnlearnRequest(round=t, target_id=int(pool[int(rng.integers(len(pool)))]))


# ----------------------------------------------------------------------
# participation evidence and scrubbing


@dataclass(frozen=True)
class ParticipationEvidence:
    """What the round log said about the target before it was scrubbed."""

    cluster_pos: int
    peer_ids: tuple[int, ...]
    peer_dists: tuple[float, ...]
    representative_id: int


def extract_participation(store: HistoryStore, target_id: int) -> dict[int, ParticipationEvidence]:
    """Per-round snapshot of the target's cluster context, keyed by round index.

    Must be called before :func:`scrub_history`; afterwards the store no
    longer contains the distances this reads.
    """
    out: dict[int, ParticipationEvidence] = {}
    for rec in store.rounds:
        for pos, cl in enumerate(rec.clusters):
            if target_id not in cl.member_ids:
                continue
            peers = tuple(m for m in cl.member_ids if m != target_id)
            dists = tuple(
                pair_distance(cl.pair_dists, cl.member_ids, target_id, peer)
                for peer in peers
            )
            out[rec.round_index] = ParticipationEvidence(
                cluster_pos=pos,
                peer_ids=peers,
                peer_dists=dists,
                representative_id=cl.representative_id,
            )
            break
    return out


def scrub_history(store: HistoryStore, target_id: int) -> HistoryStore:
    """Remove every trace of ``target_id`` from the stored rounds, in place.

    Member lists, active lists, archived updates, and the condensed
    distance logs are purged. A representative held by the target is
    reassigned to the lowest remaining member id with its radius
    recomputed from the logged distances; clusters left empty disappear
    along with their noise seeds.
    """
    for rec in store.rounds:
        rec.active_ids = [i for i in rec.active_ids if i != target_id]
        if rec.client_updates is not None:
            rec.client_updates.pop(target_id, None)
        doomed = []
        for pos, cl in enumerate(rec.clusters):
            if target_id not in cl.member_ids:
                continue
            survivors = [m for m in cl.member_ids if m != target_id]
            if not survivors:
                doomed.append(pos)
                continue
            cl.pair_dists = drop_member_distances(cl.pair_dists, cl.member_ids, target_id)
            cl.member_ids = survivors
            if cl.representative_id == target_id:
                cl.representative_id = min(survivors)
            cl.radius = max(
                (
                    pair_distance(cl.pair_dists, cl.member_ids, cl.representative_id, m)
                    for m in survivors
                    if m != cl.representative_id
                ),
                default=0.0,
            )
        for pos in reversed(doomed):
            del rec.clusters[pos]
            if pos < len(rec.noise_seeds):
                del rec.noise_seeds[pos]
            if pos < len(rec.perturbed_reps):
                del rec.perturbed_reps[pos]
    return store


def find_violation(store: HistoryStore, x: int) -> Violation | None:
    """Earliest (round, cluster) whose membership fell below ``x``, if any."""
    if x < 1:
        raise ValueError(f"x must be >= 1, got {x}")
    for rec in store.rounds:
        for pos, cl in enumerate(rec.clusters):
            if len(cl.member_ids) < x:
                return Violation(round_index=rec.round_index, cluster_index=pos)
    return None


def rollback_retrain(
    store: HistoryStore,
    violation_round: int,
    cfg,
    remaining_clients,
    generation: int,
):
    """Rewind to just before ``violation_round`` and replay history to its old end.

    The snapshot preceding the violating round is restored, every record
    from that round onward is discarded, and the same round indices are
    re-executed with the remaining clients under seed ``generation``.
    Returns the new model and the list of replayed round records (which
    have also been appended to the store, flagged as retraining).
    """
    from . import orchestrator  # deferred: orchestrator imports this module

    last = store.last_round_index()
    if violation_round < 1 or violation_round > last:
        raise ValueError(
            f"violation_round {violation_round} outside stored range 1..{last}"
        )
    w = store.snapshot_before(violation_round)
    store.discard_from(violation_round)
    replayed = []
    for t in range(violation_round, last + 1):
        w, rec = orchestrator.execute_round(
            w, remaining_clients, cfg, t, generation, retraining=True
        )
        store.append(rec)
        replayed.append(rec)
    return w, replayed


# ----------------------------------------------------------------------
# proofs of deniability


@dataclass(frozen=True)
class PodVerdict:
    status: str
    round: int | None = None
    cluster: int | None = None


@dataclass
class PodEntry:
    """Evidence for one round the target originally appeared in."""

    round: int
    cluster_index: int | None
    member_ids: list[int]
    representative_id: int | None
    representative_distance: float | None
    witnesses: list[tuple[int, float]]
    deniability_count: int
    size_ok: bool
    witnesses_ok: bool


@dataclass
class ProofOfDeniability:
    target_id: int
    x: int
    delta: float
    metric: str
    entries: list[PodEntry]
    verdict: PodVerdict


def _entry_clauses(entry: PodEntry, x: int) -> tuple[bool, bool]:
    size_ok = len(entry.member_ids) >= x or (not entry.member_ids and x == 1)
    witnesses_ok = entry.deniability_count >= x - 1
    return size_ok, witnesses_ok


def _verdict_from_entries(entries: Sequence[PodEntry], x: int) -> PodVerdict:
    for entry in entries:
        size_ok, witnesses_ok = _entry_clauses(entry, x)
        if not (size_ok and witnesses_ok):
            return PodVerdict(status="violated", round=entry.round, cluster=entry.cluster_index)
    return PodVerdict(status="valid")


def generate_pod(
    store: HistoryStore,
    target_id: int,
    x: int,
    delta: float,
    metric: str,
    client_weights_by_round: Mapping[int, Mapping[int, np.ndarray]] | None = None,
    *,
    evidence: Mapping[int, ParticipationEvidence] | None = None,
) -> ProofOfDeniability:
    """Build the deniability proof for an already-scrubbed target.

    ``evidence`` is the map captured by :func:`extract_participation`
    before the scrub; with no evidence the target is treated as never
    having participated and the proof is trivially valid. When
    ``client_weights_by_round`` holds the pre-scrub per-round updates
    (archival mode), peer distances are recomputed from the vectors;
    otherwise the distances recorded at round time are used as-is.

    An entry is clean when the post-removal cluster still has at least
    ``x`` members and at least ``x - 1`` recorded peers lie within
    ``delta`` of the target; the verdict is valid only if every entry is
    clean.
    """
    if x < 1:
        raise ValueError(f"x must be >= 1, got {x}")
    if not delta > 0:
        raise ValueError(f"delta must be > 0, got {delta}")
    if metric not in METRICS:
        raise ValueError(f"unknown metric {metric!r}")
    evidence = evidence or {}
    entries: list[PodEntry] = []
    for round_index in sorted(evidence):
        ev = evidence[round_index]
        rec = store.round(round_index)
        dists = list(ev.peer_dists)
        weights = (client_weights_by_round or {}).get(round_index)
        if weights is not None and target_id in weights:
            target_w = weights[target_id]
            dists = [model_distance(target_w, weights[peer], metric) for peer in ev.peer_ids]
        dist_by_peer = dict(zip(ev.peer_ids, dists))

        cluster_index = None
        members: list[int] = []
        rep_id = None
        rep_dist = None
        if ev.peer_ids:
            for pos, cl in enumerate(rec.clusters):
                if ev.peer_ids[0] in cl.member_ids:
                    cluster_index = pos
                    members = list(cl.member_ids)
                    rep_id = cl.representative_id
                    break
            if cluster_index is None:
                raise FormatError(
                    f"round {round_index}: scrubbed cluster for client {target_id} not found"
                )
            rep_dist = dist_by_peer.get(rep_id)
        witnesses = [
            (peer, dist) for peer, dist in zip(ev.peer_ids, dists) if dist <= delta
        ]
        entry = PodEntry(
            round=round_index,
            cluster_index=cluster_index,
            member_ids=members,
            representative_id=rep_id,
            representative_distance=rep_dist,
            witnesses=witnesses,
            deniability_count=len(witnesses),
            size_ok=True,
            witnesses_ok=True,
        )
        entry.size_ok, entry.witnesses_ok = _entry_clauses(entry, x)
        entries.append(entry)
    return ProofOfDeniability(
        target_id=target_id,
        x=x,
        delta=delta,
        metric=metric,
        entries=entries,
        verdict=_verdict_from_entries(entries, x),
    )


# ----------------------------------------------------------------------
# canonical serialization


def _canonical_text(obj) -> str:
    if obj is None:
        return "null"
    if isinstance(obj, bool):
        return "true" if obj else "false"
    if isinstance(obj, int):
        return str(obj)
    if isinstance(obj, float):
        if not math.isfinite(obj):
            raise FormatError(f"non-finite float {obj!r} is not serializable")
        return format(obj, ".17g")
    if isinstance(obj, str):
        return json.dumps(obj, ensure_ascii=False)
    if isinstance(obj, (list, tuple)):
        return "[" + ",".join(_canonical_text(v) for v in obj) + "]"
    if isinstance(obj, dict):
        items = sorted(obj.items())
        return "{" + ",".join(f"{json.dumps(k)}:{_canonical_text(v)}" for k, v in items) + "}"
    raise FormatError(f"cannot serialize {type(obj).__name__}")


def pod_to_dict(pod: ProofOfDeniability) -> dict:
    return {
        "schema_version": _POD_SCHEMA,
        "target_id": pod.target_id,
        "x": pod.x,
        "delta": float(pod.delta),
        "metric": pod.metric,
        "entries": [
            {
                "round": e.round,
                "cluster_index": e.cluster_index,
                "member_ids": list(e.member_ids),
                "representative_id": e.representative_id,
                "representative_distance": None
                if e.representative_distance is None
                else float(e.representative_distance),
                "witnesses": [[int(p), float(d)] for p, d in e.witnesses],
                "deniability_count": e.deniability_count,
                "size_ok": e.size_ok,
                "witnesses_ok": e.witnesses_ok,
            }
            for e in pod.entries
        ],
        "verdict": {
            "status": pod.verdict.status,
            "round": pod.verdict.round,
            "cluster": pod.verdict.cluster,
        },
    }


def _require(obj: dict, key: str, kinds, where: str):
    if key not in obj:
        raise FormatError(f"{where}: missing field {key!r}")
    value = obj[key]
    if kinds is not None and not isinstance(value, kinds):
        raise FormatError(f"{where}: field {key!r} has type {type(value).__name__}")
    return value


def pod_from_dict(obj: dict) -> ProofOfDeniability:
    """Parse and structurally validate a proof document."""
    if not isinstance(obj, dict):
        raise FormatError("proof document: expected an object")
    if _require(obj, "schema_version", int, "proof document") != _POD_SCHEMA:
        raise FormatError(f"proof document: unsupported schema_version {obj['schema_version']}")
    entries = []
    raw_entries = _require(obj, "entries", list, "proof document")
    for i, raw in enumerate(raw_entries):
        where = f"entries[{i}]"
        if not isinstance(raw, dict):
            raise FormatError(f"{where}: expected an object")
        witnesses = []
        for j, pair in enumerate(_require(raw, "witnesses", list, where)):
            if not (isinstance(pair, list) and len(pair) == 2):
                raise FormatError(f"{where}.witnesses[{j}]: expected [id, distance]")
            witnesses.append((int(pair[0]), float(pair[1])))
        rep_dist = raw.get("representative_distance")
        entries.append(
            PodEntry(
                round=_require(raw, "round", int, where),
                cluster_index=raw.get("cluster_index"),
                member_ids=[int(m) for m in _require(raw, "member_ids", list, where)],
                representative_id=raw.get("representative_id"),
                representative_distance=None if rep_dist is None else float(rep_dist),
                witnesses=witnesses,
                deniability_count=_require(raw, "deniability_count", int, where),
                size_ok=_require(raw, "size_ok", bool, where),
                witnesses_ok=_require(raw, "witnesses_ok", bool, where),
            )
        )
    raw_verdict = _require(obj, "verdict", dict, "proof document")
    verdict = PodVerdict(
        status=_require(raw_verdict, "status", str, "verdict"),
        round=raw_verdict.get("round"),
        cluster=raw_verdict.get("cluster"),
    )
    return ProofOfDeniability(
        target_id=_require(obj, "target_id", int, "proof document"),
        x=_require(obj, "x", int, "proof document"),
        delta=float(_require(obj, "delta", (int, float), "proof document")),
        metric=_require(obj, "metric", str, "proof document"),
        entries=entries,
        verdict=verdict,
    )


def pod_canonical_json(pod: ProofOfDeniability) -> str:
    return _canonical_text(pod_to_dict(pod))


def pod_digest(pod: ProofOfDeniability) -> str:
    import hashlib

    return hashlib.sha256(pod_canonical_json(pod).encode("utf-8")).hexdigest()


def save_pod(pod: ProofOfDeniability, path) -> tuple[Path, Path]:
    """Write the canonical proof document plus its detached digest file."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(pod_canonical_json(pod) + "\n", encoding="utf-8")
    digest_path = path.with_name(path.name + ".sha256")
    digest_path.write_text(f"{pod_digest(pod)}  {path.name}\n", encoding="utf-8")
    return path, digest_path


def load_pod(path) -> ProofOfDeniability:
    path = Path(path)
    try:
        obj = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise FormatError(f"{path}: unreadable proof document ({exc})")
    return pod_from_dict(obj)


def read_detached_digest(pod_path) -> str | None:
    digest_path = Path(str(pod_path) + ".sha256")
    if not digest_path.exists():
        return None
    text = digest_path.read_text(encoding="utf-8").strip()
    if not text:
        raise FormatError(f"{digest_path}: empty digest file")
    return text.split()[0]


# ----------------------------------------------------------------------
# verification


def _target_absent(store: HistoryStore, target_id: int) -> bool:
    for rec in store.rounds:
        if target_id in rec.active_ids:
            return False
        if rec.client_updates is not None and target_id in rec.client_updates:
            return False
        for cl in rec.clusters:
            if target_id in cl.member_ids or cl.representative_id == target_id:
                return False
    return True


def verify_pod(
    pod: ProofOfDeniability,
    store: HistoryStore,
    expected_digest: str | None = None,
) -> bool:
    """Independently re-check a proof against the scrubbed history.

    Verifies the detached digest when one is supplied, then confirms that
    the target appears nowhere in the store, that every entry matches the
    stored cluster it points at, that every witness distance respects the
    proof's ``delta``, that the per-entry clause flags and counts are
    reproducible, and that the verdict follows from the entries. Returns
    ``True`` only when everything checks out and the verdict is valid.
    """
    if expected_digest is not None and pod_digest(pod) != expected_digest:
        return False
    if pod.x < 1 or not pod.delta > 0 or pod.metric not in METRICS:
        return False
    if not _target_absent(store, pod.target_id):
        return False
    seen_rounds = set()
    for entry in pod.entries:
        if entry.round in seen_rounds:
            return False
        seen_rounds.add(entry.round)
        try:
            rec = store.round(entry.round)
        except KeyError:
            return False
        if rec.delta != pod.delta or rec.metric != pod.metric:
            return False
        if entry.cluster_index is None:
            if entry.member_ids or entry.representative_id is not None or entry.witnesses:
                return False
        else:
            if not 0 <= entry.cluster_index < len(rec.clusters):
                return False
            cl = rec.clusters[entry.cluster_index]
            if list(cl.member_ids) != list(entry.member_ids):
                return False
            if cl.representative_id != entry.representative_id:
                return False
        witness_ids = [p for p, _ in entry.witnesses]
        if len(set(witness_ids)) != len(witness_ids):
            return False
        if pod.target_id in witness_ids:
            return False
        if any(p not in entry.member_ids for p in witness_ids):
            return False
        if any(d > pod.delta or d < 0 for _, d in entry.witnesses):
            return False
        if entry.deniability_count != len(entry.witnesses):
            return False
        if (entry.representative_id is None) != (entry.representative_distance is None):
            if entry.representative_distance is not None and entry.representative_id is None:
                return False
        if entry.representative_distance is not None and entry.representative_distance < 0:
            return False
        size_ok, witnesses_ok = _entry_clauses(entry, pod.x)
        if entry.size_ok != size_ok or entry.witnesses_ok != witnesses_ok:
            return False
    expected_verdict = _verdict_from_entries(pod.entries, pod.x)
    if (
        pod.verdict.status != expected_verdict.status
        or pod.verdict.round != expected_verdict.round
        or pod.verdict.cluster != expected_verdict.cluster
    ):
        return False
    return pod.verdict.status == "valid"


# ----------------------------------------------------------------------
# audit game


@dataclass(frozen=True)
class AuditOutcome:
    """One play of the membership audit: guess, truth, and the server's answer."""

    adversary_prediction: int
    ground_truth_removed: bool
    pod_presented: bool

    @property
    def deniable(self) -> bool:
        """The adversary claims participation but a valid proof says it is deniable."""
        return self.adversary_prediction == 1 and self.pod_presented


def sg_fl_audit(
    global_model: np.ndarray,
    target_update: np.ndarray,
    store: HistoryStore,
    eps: float,
    metric: str = "l2",
    *,
    ground_truth_removed: bool = False,
    pod: ProofOfDeniability | None = None,
) -> AuditOutcome:
    """Distance adversary: predict participation iff some stored perturbed
    representative is functionally equivalent to the target's update.

    ``global_model`` is what the game hands the adversary; the built-in
    adversary bases its guess on the archived representatives alone. A
    proof counts as presented only when its verdict is valid.
    """
    prediction = 0
    for rec in store.rounds:
        for rep in rec.perturbed_reps:
            if functionally_equivalent(rep, target_update, eps, metric):
                prediction = 1
                break
        if prediction:
            break
    return AuditOutcome(
        adversary_prediction=prediction,
        ground_truth_removed=ground_truth_removed,
        pod_presented=pod is not None and pod.verdict.status == "valid",
    )
