"""Run metrics, the storage byte model, and deterministic report files.

The storage accounting follows a fixed byte model rather than measuring
a particular container format: per stored round, the index-only ledger
costs 4 bytes per active client id plus 8 bytes per noise seed plus 8
bytes per model coordinate for the aggregate snapshot, and the
full-updates archive adds 8 bytes per coordinate per active client.
The same totals can be recomputed from a saved store directory, where
the raw float payloads on disk must match the model exactly.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import FormatError

ID_BYTES = 4
SEED_BYTES = 8
COORD_BYTES = 8


@dataclass(frozen=True)
class RetrainEvent:
    """One rollback: the round history was rewound to, and the replay wall time."""

    round: int
    seconds: float


@dataclass(frozen=True)
class ServedRequest:
    """One served unlearning request and the rollback it did (or did not) force.

    ``pod_valid`` records whether the proof of deniability verified at
    generation time (later requests may rewrite the history it cites);
    ``None`` for the baseline algorithm, which produces no proofs.
    """

    round: int
    target_id: int
    violation_round: int | None = None
    pod_valid: bool | None = None


@dataclass(frozen=True)
class StorageReport:
    mode: str
    index_only_bytes: int
    full_updates_bytes: int

    @property
    def ratio(self) -> float:
        if self.index_only_bytes == 0:
            return float("nan")
        return self.full_updates_bytes / self.index_only_bytes


@dataclass
class MetricsLog:
    """Everything a run reports: accuracy curve, retrains, requests, costs."""

    algorithm: str
    k: int | None = None
    x: int | None = None
    accuracy_by_round: dict[int, float] = field(default_factory=dict)
    retrain_events: list[RetrainEvent] = field(default_factory=list)
    requests: list[ServedRequest] = field(default_factory=list)
    executed_rounds: int = 0
    storage: StorageReport | None = None
    privacy: dict | None = None


def round_storage_bytes(num_active: int, num_seeds: int, d: int, *, full: bool) -> int:
    """Byte cost of one stored round under the fixed accounting model."""
    base = ID_BYTES * num_active + SEED_BYTES * num_seeds + COORD_BYTES * d
    if full:
        base += COORD_BYTES * d * num_active
    return base


def storage_accounting(histories, storage_mode: str, d: int) -> StorageReport:
    """Total bytes for the given round records under both retention policies.

    ``histories`` is any iterable of round records (a store's ``rounds``
    list works); an empty iterable prices at zero under both policies.
    """
    index_total = 0
    full_total = 0
    for rec in histories:
        index_total += round_storage_bytes(len(rec.active_ids), len(rec.noise_seeds), d, full=False)
        full_total += round_storage_bytes(len(rec.active_ids), len(rec.noise_seeds), d, full=True)
    return StorageReport(
        mode=storage_mode,
        index_only_bytes=index_total,
        full_updates_bytes=full_total,
    )


def storage_from_dir(path) -> StorageReport:
    """Recompute the byte totals from a saved store directory.

    Counts come from the per-round JSON records; the snapshot and update
    payload files on disk must have exactly the sizes the byte model
    predicts, otherwise the directory is inconsistent.
    """
    path = Path(path)
    meta = json.loads((path / "store.json").read_text(encoding="utf-8"))
    d = meta["d"]
    mode = meta["storage_mode"]
    index_total = 0
    full_total = 0
    for t in range(1, meta["rounds"] + 1):
        rec = json.loads((path / f"round_{t:04d}.json").read_text(encoding="utf-8"))
        n_active = len(rec["active_ids"])
        n_seeds = len(rec["noise_seeds"])
        snap_size = (path / f"round_{t:04d}.snapshot.f64").stat().st_size
        if snap_size != COORD_BYTES * d:
            raise FormatError(
                f"round {t}: snapshot holds {snap_size} bytes, expected {COORD_BYTES * d}"
            )
        updates_file = path / f"round_{t:04d}.updates.f64"
        if updates_file.exists():
            actual = updates_file.stat().st_size
            if actual != COORD_BYTES * d * n_active:
                raise FormatError(
                    f"round {t}: update archive holds {actual} bytes, "
                    f"expected {COORD_BYTES * d * n_active}"
                )
        elif mode == "full-updates":
            raise FormatError(f"round {t}: full-updates store is missing its update archive")
        index_total += round_storage_bytes(n_active, n_seeds, d, full=False)
        full_total += round_storage_bytes(n_active, n_seeds, d, full=True)
    return StorageReport(mode=mode, index_only_bytes=index_total, full_updates_bytes=full_total)


# ----------------------------------------------------------------------
# report files


def _write_lines(path: Path, lines) -> None:
    path.write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")


def emit_report(metrics: MetricsLog, out_dir) -> dict[str, Path]:
    """Write accuracy.csv, timing.csv, storage.csv, and summary.json.

    Output is deterministic for identical metrics: fixed column order,
    rows sorted, floats via repr, LF line endings.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    k = "" if metrics.k is None else metrics.k
    x = "" if metrics.x is None else metrics.x

    acc_lines = ["round,algorithm,k,x,accuracy"]
    for t in sorted(metrics.accuracy_by_round):
        acc_lines.append(f"{t},{metrics.algorithm},{k},{x},{metrics.accuracy_by_round[t]!r}")
    _write_lines(out / "accuracy.csv", acc_lines)

    timing_lines = ["event,round,seconds"]
    for ev in metrics.retrain_events:
        timing_lines.append(f"retrain,{ev.round},{ev.seconds!r}")
    _write_lines(out / "timing.csv", timing_lines)

    storage_lines = ["mode,index_only_bytes,full_updates_bytes,ratio"]
    if metrics.storage is not None:
        s = metrics.storage
        storage_lines.append(
            f"{s.mode},{s.index_only_bytes},{s.full_updates_bytes},{s.ratio!r}"
        )
    _write_lines(out / "storage.csv", storage_lines)

    last_acc = None
    if metrics.accuracy_by_round:
        last_acc = metrics.accuracy_by_round[max(metrics.accuracy_by_round)]
    summary = {
        "algorithm": metrics.algorithm,
        "k": metrics.k,
        "x": metrics.x,
        "executed_rounds": metrics.executed_rounds,
        "requests_served": len(metrics.requests),
        "requests": [
            {
                "round": r.round,
                "target_id": r.target_id,
                "violation_round": r.violation_round,
                "pod_valid": r.pod_valid,
            }
            for r in metrics.requests
        ],
        "retrain_count": len(metrics.retrain_events),
        "retrain_seconds_total": sum(ev.seconds for ev in metrics.retrain_events),
        "final_accuracy": last_acc,
        "privacy": metrics.privacy,
        "storage": None
        if metrics.storage is None
        else {
            "mode": metrics.storage.mode,
            "index_only_bytes": metrics.storage.index_only_bytes,
            "full_updates_bytes": metrics.storage.full_updates_bytes,
            "ratio": metrics.storage.ratio,
        },
    }
    summary_path = out / "summary.json"
    summary_path.write_text(
        json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8", newline="\n"
    )
    return {
        "accuracy": out / "accuracy.csv",
        "timing": out / "timing.csv",
        "storage": out / "storage.csv",
        "summary": summary_path,
    }
