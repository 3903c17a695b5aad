"""Round-by-round training log with snapshots, hashes, and disk persistence.

The server keeps one record per executed round: which clients were
active, how they were clustered, the seeds that drove representative
noise, the post-aggregation global snapshot, and a digest of that
snapshot. Records are kept in memory during a run and can be saved to a
directory as one JSON file plus one raw little-endian float64 snapshot
per round. In ``full-updates`` mode the per-client updates and the
perturbed representative vectors are persisted as well, mirroring a
baseline server that archives everything.

Pairwise member distances are logged condensed (upper triangle in member
order) so that deniability evidence can be assembled later without
retaining any weight vectors.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import FormatError, IntegrityError

STORAGE_MODES = ("index-only", "full-updates")
_SCHEMA = 1


def snapshot_digest(arr: np.ndarray) -> str:
    """Hex SHA-256 of the vector's little-endian float64 bytes."""
    return hashlib.sha256(np.ascontiguousarray(arr, dtype="<f8").tobytes()).hexdigest()


def _write_f64(path: Path, arr: np.ndarray):
    np.ascontiguousarray(arr, dtype="<f8").tofile(path)


def _read_f64(path: Path, shape) -> np.ndarray:
    arr = np.fromfile(path, dtype="<f8")
    expected = int(np.prod(shape))
    if arr.size != expected:
        raise FormatError(f"{path}: expected {expected} float64 values, found {arr.size}")
    return arr.reshape(shape).astype(np.float64)


def condensed_index(i: int, j: int, m: int) -> int:
    """Index of the (i, j) pair, i < j, inside a condensed m-member distance list."""
    if not 0 <= i < j < m:
        raise ValueError(f"bad pair ({i}, {j}) for {m} members")
    return i * m - i * (i + 1) // 2 + (j - i - 1)


def pair_distance(pair_dists, member_ids, a: int, b: int) -> float:
    """Distance between members ``a`` and ``b`` read from the condensed log."""
    i, j = member_ids.index(a), member_ids.index(b)
    if i > j:
        i, j = j, i
    return pair_dists[condensed_index(i, j, len(member_ids))]


def drop_member_distances(pair_dists, member_ids, victim: int) -> list[float]:
    """Condensed distances with ``victim``'s row/column removed."""
    m = len(member_ids)
    v = member_ids.index(victim)
    keep = [i for i in range(m) if i != v]
    out = []
    for a_pos, i in enumerate(keep):
        for j in keep[a_pos + 1 :]:
            out.append(pair_dists[condensed_index(i, j, m)])
    return out


@dataclass
class ClusterLog:
    """Cluster as recorded at round time: members, chosen representative, geometry."""

    member_ids: list[int]
    representative_id: int
    radius: float
    pair_dists: list[float]

    def to_json(self) -> dict:
        return {
            "member_ids": list(self.member_ids),
            "representative_id": self.representative_id,
            "radius": self.radius,
            "pair_dists": list(self.pair_dists),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "ClusterLog":
        return cls(
            member_ids=list(obj["member_ids"]),
            representative_id=obj["representative_id"],
            radius=obj["radius"],
            pair_dists=list(obj["pair_dists"]),
        )


@dataclass
class RoundHistory:
    """Everything the server remembers about one executed round."""

    round_index: int
    generation: int
    retraining: bool
    delta: float
    metric: str
    active_ids: list[int]
    clusters: list[ClusterLog]
    noise_seeds: list[int]
    noise_scale: float
    snapshot: np.ndarray
    aggregate_hash: str
    perturbed_reps: list[np.ndarray] = field(default_factory=list)
    client_updates: dict[int, np.ndarray] | None = None

    def to_json(self) -> dict:
        obj = {
            "schema_version": _SCHEMA,
            "round_index": self.round_index,
            "generation": self.generation,
            "retraining": self.retraining,
            "delta": self.delta,
            "metric": self.metric,
            "active_ids": list(self.active_ids),
            "clusters": [c.to_json() for c in self.clusters],
            "noise_seeds": list(self.noise_seeds),
            "noise_scale": self.noise_scale,
            "aggregate_hash": self.aggregate_hash,
        }
        if self.client_updates is not None:
            obj["update_ids"] = sorted(self.client_updates)
        return obj


class HistoryStore:
    """Ordered collection of round records plus the initial model."""

    def __init__(self, initial_model: np.ndarray, storage_mode: str = "index-only"):
        if storage_mode not in STORAGE_MODES:
            raise ValueError(f"unknown storage mode {storage_mode!r}")
        self.storage_mode = storage_mode
        self.initial_model = np.asarray(initial_model, dtype=np.float64).copy()
        self.rounds: list[RoundHistory] = []

    @property
    def d(self) -> int:
        return int(self.initial_model.shape[0])

    def append(self, record: RoundHistory):
        expected = self.rounds[-1].round_index + 1 if self.rounds else 1
        if record.round_index != expected:
            raise IntegrityError(
                f"round {record.round_index} appended out of order, expected {expected}"
            )
        if self.storage_mode != "full-updates":
            record.client_updates = None
        self.rounds.append(record)

    def last_round_index(self) -> int:
        return self.rounds[-1].round_index if self.rounds else 0

    def round(self, round_index: int) -> RoundHistory:
        for rec in self.rounds:
            if rec.round_index == round_index:
                return rec
        raise KeyError(f"no record for round {round_index}")

    def snapshot_before(self, round_index: int) -> np.ndarray:
        """Global model as it stood entering ``round_index`` (round 1 sees the initial model)."""
        if round_index < 1 or round_index > self.last_round_index() + 1:
            raise IntegrityError(f"no snapshot available before round {round_index}")
        if round_index == 1:
            return self.initial_model.copy()
        return self.round(round_index - 1).snapshot.copy()

    def discard_from(self, round_index: int) -> list[RoundHistory]:
        """Drop every record at or after ``round_index``; returns the dropped records."""
        kept = [r for r in self.rounds if r.round_index < round_index]
        dropped = self.rounds[len(kept) :]
        self.rounds = kept
        return dropped

    def verify_integrity(self):
        for rec in self.rounds:
            if snapshot_digest(rec.snapshot) != rec.aggregate_hash:
                raise IntegrityError(f"round {rec.round_index}: snapshot digest mismatch")

    # ------------------------------------------------------------------
    # persistence

    def save(self, directory) -> Path:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        meta = {
            "schema_version": _SCHEMA,
            "storage_mode": self.storage_mode,
            "d": self.d,
            "rounds": self.last_round_index(),
            "initial_hash": snapshot_digest(self.initial_model),
        }
        (directory / "store.json").write_text(
            json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
        _write_f64(directory / "initial.f64", self.initial_model)
        for stale in directory.glob("round_*"):
            stale.unlink()
        for rec in self.rounds:
            stem = f"round_{rec.round_index:04d}"
            (directory / f"{stem}.json").write_text(
                json.dumps(rec.to_json(), indent=2, sort_keys=True) + "\n", encoding="utf-8"
            )
            _write_f64(directory / f"{stem}.snapshot.f64", rec.snapshot)
            if self.storage_mode == "full-updates":
                if rec.client_updates is not None:
                    ids = sorted(rec.client_updates)
                    stacked = np.stack([rec.client_updates[i] for i in ids]) if ids else np.zeros((0, self.d))
                    _write_f64(directory / f"{stem}.updates.f64", stacked)
                if rec.perturbed_reps:
                    _write_f64(directory / f"{stem}.reps.f64", np.stack(rec.perturbed_reps))
        return directory

    @classmethod
    def load(cls, directory) -> "HistoryStore":
        directory = Path(directory)
        meta_path = directory / "store.json"
        if not meta_path.exists():
            raise FormatError(f"{meta_path}: missing store metadata")
        meta = json.loads(meta_path.read_text(encoding="utf-8"))
        d = int(meta["d"])
        initial = _read_f64(directory / "initial.f64", (d,))
        if snapshot_digest(initial) != meta["initial_hash"]:
            raise IntegrityError(f"{directory}: initial model digest mismatch")
        store = cls(initial, storage_mode=meta["storage_mode"])
        for idx in range(1, int(meta["rounds"]) + 1):
            stem = f"round_{idx:04d}"
            try:
                obj = json.loads((directory / f"{stem}.json").read_text(encoding="utf-8"))
            except FileNotFoundError:
                raise FormatError(f"{directory}: missing record for round {idx}")
            snapshot = _read_f64(directory / f"{stem}.snapshot.f64", (d,))
            rec = RoundHistory(
                round_index=obj["round_index"],
                generation=obj["generation"],
                retraining=obj["retraining"],
                delta=obj["delta"],
                metric=obj["metric"],
                active_ids=list(obj["active_ids"]),
                clusters=[ClusterLog.from_json(c) for c in obj["clusters"]],
                noise_seeds=list(obj["noise_seeds"]),
                noise_scale=obj["noise_scale"],
                snapshot=snapshot,
                aggregate_hash=obj["aggregate_hash"],
            )
            if store.storage_mode == "full-updates":
                update_ids = obj.get("update_ids", [])
                upd_path = directory / f"{stem}.updates.f64"
                if update_ids and upd_path.exists():
                    stacked = _read_f64(upd_path, (len(update_ids), d))
                    rec.client_updates = {cid: stacked[i] for i, cid in enumerate(update_ids)}
                reps_path = directory / f"{stem}.reps.f64"
                if reps_path.exists() and rec.clusters:
                    reps = _read_f64(reps_path, (len(rec.clusters), d))
                    rec.perturbed_reps = [reps[i] for i in range(reps.shape[0])]
            store.rounds.append(rec)
        store.verify_integrity()
        return store

    def serialized_records(self) -> list[str]:
        """Canonical JSON text of every round record (what a disk audit would see)."""
        return [json.dumps(rec.to_json(), sort_keys=True) for rec in self.rounds]
