"""Experiment configuration: a versioned JSON document, strictly validated.

Every validation failure names the offending field path, so a driver can
fail fast with an actionable message. Parsing a serialized config yields
the identical object (defaults are materialized on parse, so the
round-trip fixed point is reached after one pass).

Layout (schema_version 1)::

    {
      "schema_version": 1,
      "name": "desk",
      "algorithm": "k-ipfedavg",
      "num_clients": 50,
      "rounds": 50,
      "k": 8, "x": 3, "delta": 0.05,
      "metric": "cosine",
      "storage_mode": "index-only",
      "noise_convention": "algorithm1",
      "master_seed": 0,
      "model": {"kind": "logistic-regression", "input_dim": 32,
                "num_classes": 10, "hidden_dim": 0},
      "train": {"local_epochs": 3, "learning_rate": 0.1, "batch_size": 32},
      "dataset": {"kind": "synthetic", "n": 2000, "input_dim": 32,
                  "num_classes": 10, "seed": 7,
                  "class_sep": 4.0, "cluster_std": 1.0},
      "partition": {"mode": "iid", "skew_classes_per_client": 0, "seed": 0},
      "holdout_fraction": 0.2,
      "unlearn": {"p": 0.2, "seed": 1},
      "privacy": {"epsilon": 8.0, "delta": 1e-5},
      "output_dir": "results/desk"
    }

The privacy block takes either a target pair (``epsilon`` and ``delta``,
from which the noise multiplier is calibrated) or an explicit ``sigma``
(optionally with a ``delta`` used only to report the achieved epsilon;
default 1e-5). Supplying both epsilon and sigma is an error, as is a
privacy block on the plain-averaging baseline. A dataset of kind
``idx`` replaces the synthetic fields with ``{"kind": "idx", "images":
path, "labels": path}``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .data import PARTITION_MODES, PartitionPlan
from .errors import ConfigError
from .history import STORAGE_MODES
from .models import MODEL_KINDS, METRICS, ModelSpec, TrainConfig
from .privacy import NOISE_CONVENTIONS

SCHEMA_VERSION = 1

DATASET_KINDS = ("synthetic", "idx")

_TOP_FIELDS = {
    "schema_version", "name", "algorithm", "num_clients", "rounds", "k", "x",
    "delta", "metric", "storage_mode", "noise_convention", "master_seed",
    "model", "train", "dataset", "partition", "holdout_fraction", "unlearn",
    "privacy", "output_dir",
}


def _get(obj: dict, path: str, key: str, kinds, default=_TOP_FIELDS):
    # default=_TOP_FIELDS is a unique "required" sentinel, never a real default
    where = f"{path}.{key}" if path else key
    if key not in obj:
        if default is _TOP_FIELDS:
            raise ConfigError(f"{where}: required field is missing")
        return default
    value = obj[key]
    if kinds is float and isinstance(value, int) and not isinstance(value, bool):
        value = float(value)
    if isinstance(value, bool) and kinds is not bool:
        raise ConfigError(f"{where}: expected {getattr(kinds, '__name__', kinds)}, got bool")
    if not isinstance(value, kinds):
        raise ConfigError(
            f"{where}: expected {getattr(kinds, '__name__', kinds)}, got {type(value).__name__}"
        )
    return value


@dataclass(frozen=True)
class DatasetConfig:
    kind: str
    n: int = 0
    input_dim: int = 0
    num_classes: int = 0
    seed: int = 0
    class_sep: float = 4.0
    cluster_std: float = 1.0
    images: str = ""
    labels: str = ""

    def to_dict(self) -> dict:
        if self.kind == "idx":
            return {"kind": self.kind, "images": self.images, "labels": self.labels}
        return {
            "kind": self.kind,
            "n": self.n,
            "input_dim": self.input_dim,
            "num_classes": self.num_classes,
            "seed": self.seed,
            "class_sep": self.class_sep,
            "cluster_std": self.cluster_std,
        }


@dataclass(frozen=True)
class PrivacyConfig:
    epsilon: float | None = None
    delta: float | None = None
    sigma: float | None = None

    def to_dict(self) -> dict:
        out = {}
        if self.epsilon is not None:
            out["epsilon"] = self.epsilon
        if self.delta is not None:
            out["delta"] = self.delta
        if self.sigma is not None:
            out["sigma"] = self.sigma
        return out


@dataclass(frozen=True)
class UnlearnConfig:
    p: float = 0.0
    seed: int = 0

    def to_dict(self) -> dict:
        return {"p": self.p, "seed": self.seed}


@dataclass(frozen=True)
class ExperimentConfig:
    name: str
    algorithm: str
    num_clients: int
    rounds: int
    model: ModelSpec
    train: TrainConfig
    dataset: DatasetConfig
    partition: PartitionPlan
    unlearn: UnlearnConfig
    privacy: PrivacyConfig | None
    k: int = 1
    x: int = 1
    delta: float = 0.05
    metric: str = "l2"
    storage_mode: str = "index-only"
    noise_convention: str = "algorithm1"
    master_seed: int = 0
    holdout_fraction: float = 0.2
    output_dir: str = "results"

    def to_dict(self) -> dict:
        out = {
            "schema_version": SCHEMA_VERSION,
            "name": self.name,
            "algorithm": self.algorithm,
            "num_clients": self.num_clients,
            "rounds": self.rounds,
            "k": self.k,
            "x": self.x,
            "delta": self.delta,
            "metric": self.metric,
            "storage_mode": self.storage_mode,
            "noise_convention": self.noise_convention,
            "master_seed": self.master_seed,
            "model": {
                "kind": self.model.kind,
                "input_dim": self.model.input_dim,
                "num_classes": self.model.num_classes,
                "hidden_dim": self.model.hidden_dim,
            },
            "train": {
                "local_epochs": self.train.local_epochs,
                "learning_rate": self.train.learning_rate,
                "batch_size": self.train.batch_size,
            },
            "dataset": self.dataset.to_dict(),
            "partition": {
                "mode": self.partition.mode,
                "skew_classes_per_client": self.partition.skew_classes_per_client,
                "seed": self.partition.seed,
            },
            "holdout_fraction": self.holdout_fraction,
            "unlearn": self.unlearn.to_dict(),
            "output_dir": self.output_dir,
        }
        if self.privacy is not None:
            out["privacy"] = self.privacy.to_dict()
        return out

    def save(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(
            json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
        return path


def _parse_dataset(obj: dict) -> DatasetConfig:
    kind = _get(obj, "dataset", "kind", str)
    if kind not in DATASET_KINDS:
        raise ConfigError(f"dataset.kind: expected one of {DATASET_KINDS}, got {kind!r}")
    if kind == "idx":
        return DatasetConfig(
            kind=kind,
            images=_get(obj, "dataset", "images", str),
            labels=_get(obj, "dataset", "labels", str),
        )
    ds = DatasetConfig(
        kind=kind,
        n=_get(obj, "dataset", "n", int),
        input_dim=_get(obj, "dataset", "input_dim", int),
        num_classes=_get(obj, "dataset", "num_classes", int),
        seed=_get(obj, "dataset", "seed", int, 0),
        class_sep=_get(obj, "dataset", "class_sep", float, 4.0),
        cluster_std=_get(obj, "dataset", "cluster_std", float, 1.0),
    )
    if ds.n < 1:
        raise ConfigError(f"dataset.n: must be >= 1, got {ds.n}")
    if ds.input_dim < 1:
        raise ConfigError(f"dataset.input_dim: must be >= 1, got {ds.input_dim}")
    if ds.num_classes < 2:
        raise ConfigError(f"dataset.num_classes: must be >= 2, got {ds.num_classes}")
    if ds.n < ds.num_classes:
        raise ConfigError(f"dataset.n: need at least one sample per class, got {ds.n}")
    return ds


def _parse_privacy(obj: dict | None, algorithm: str) -> PrivacyConfig | None:
    if obj is None:
        if algorithm == "k-ipfedavg":
            raise ConfigError(
                "privacy: required for k-ipfedavg; supply (epsilon, delta) or sigma"
            )
        return None
    if algorithm == "fedavg":
        raise ConfigError("privacy: not applicable to the fedavg baseline")
    epsilon = _get(obj, "privacy", "epsilon", float, None)
    delta = _get(obj, "privacy", "delta", float, None)
    sigma = _get(obj, "privacy", "sigma", float, None)
    if epsilon is not None and sigma is not None:
        raise ConfigError(
            "privacy: exactly one of (epsilon, delta) or sigma may be supplied, got both"
        )
    if epsilon is not None:
        if delta is None:
            raise ConfigError("privacy.delta: required when epsilon is given")
        if not epsilon > 0:
            raise ConfigError(f"privacy.epsilon: must be > 0, got {epsilon}")
        if not 0 < delta < 1:
            raise ConfigError(f"privacy.delta: must be in (0, 1), got {delta}")
        return PrivacyConfig(epsilon=epsilon, delta=delta)
    if sigma is None:
        raise ConfigError(
            "privacy: exactly one of (epsilon, delta) or sigma must be supplied, got neither"
        )
    if sigma < 0:
        raise ConfigError(f"privacy.sigma: must be >= 0, got {sigma}")
    if delta is not None and not 0 < delta < 1:
        raise ConfigError(f"privacy.delta: must be in (0, 1), got {delta}")
    return PrivacyConfig(sigma=sigma, delta=delta)


def parse_config(obj: dict) -> ExperimentConfig:
    """Validate a parsed JSON document and build the typed config."""
    if not isinstance(obj, dict):
        raise ConfigError("config: expected a JSON object at top level")
    unknown = sorted(set(obj) - _TOP_FIELDS)
    if unknown:
        raise ConfigError(f"{unknown[0]}: unknown field")
    version = _get(obj, "", "schema_version", int)
    if version != SCHEMA_VERSION:
        raise ConfigError(f"schema_version: expected {SCHEMA_VERSION}, got {version}")

    algorithm = _get(obj, "", "algorithm", str)
    num_clients = _get(obj, "", "num_clients", int)
    rounds = _get(obj, "", "rounds", int)
    k = _get(obj, "", "k", int, 1)
    x = _get(obj, "", "x", int, 1)
    delta = _get(obj, "", "delta", float, 0.05)
    metric = _get(obj, "", "metric", str, "l2")
    storage_mode = _get(obj, "", "storage_mode", str, "index-only")
    noise_convention = _get(obj, "", "noise_convention", str, "algorithm1")
    holdout = _get(obj, "", "holdout_fraction", float, 0.2)

    if algorithm not in ("fedavg", "k-ipfedavg"):
        raise ConfigError(f"algorithm: expected fedavg or k-ipfedavg, got {algorithm!r}")
    if rounds < 1:
        raise ConfigError(f"rounds: must be >= 1, got {rounds}")
    if num_clients < 1:
        raise ConfigError(f"num_clients: must be >= 1, got {num_clients}")
    if metric not in METRICS:
        raise ConfigError(f"metric: expected one of {METRICS}, got {metric!r}")
    if storage_mode not in STORAGE_MODES:
        raise ConfigError(f"storage_mode: expected one of {STORAGE_MODES}, got {storage_mode!r}")
    if noise_convention not in NOISE_CONVENTIONS:
        raise ConfigError(
            f"noise_convention: expected one of {NOISE_CONVENTIONS}, got {noise_convention!r}"
        )
    if not 0 <= holdout < 1:
        raise ConfigError(f"holdout_fraction: must be in [0, 1), got {holdout}")
    if algorithm == "k-ipfedavg":
        if not 1 <= x <= k:
            raise ConfigError(f"x: need 1 <= x <= k <= num_clients, got x={x}, k={k}")
        if k > num_clients:
            raise ConfigError(
                f"k: need 1 <= x <= k <= num_clients, got k={k}, num_clients={num_clients}"
            )
        if not delta > 0:
            raise ConfigError(f"delta: must be > 0, got {delta}")

    raw_model = _get(obj, "", "model", dict)
    kind = _get(raw_model, "model", "kind", str)
    if kind not in MODEL_KINDS:
        raise ConfigError(f"model.kind: expected one of {MODEL_KINDS}, got {kind!r}")
    try:
        model = ModelSpec(
            kind=kind,
            input_dim=_get(raw_model, "model", "input_dim", int),
            num_classes=_get(raw_model, "model", "num_classes", int),
            hidden_dim=_get(raw_model, "model", "hidden_dim", int, 0),
        )
    except ConfigError as exc:
        raise ConfigError(f"model.{exc}")

    raw_train = _get(obj, "", "train", dict, {})
    try:
        train = TrainConfig(
            local_epochs=_get(raw_train, "train", "local_epochs", int, 3),
            learning_rate=_get(raw_train, "train", "learning_rate", float, 0.1),
            batch_size=_get(raw_train, "train", "batch_size", int, 32),
        )
    except ConfigError as exc:
        raise ConfigError(f"train.{exc}")

    dataset = _parse_dataset(_get(obj, "", "dataset", dict))
    if dataset.kind == "synthetic" and dataset.input_dim != model.input_dim:
        raise ConfigError(
            f"model.input_dim: {model.input_dim} does not match "
            f"dataset.input_dim {dataset.input_dim}"
        )
    if dataset.kind == "synthetic" and dataset.num_classes != model.num_classes:
        raise ConfigError(
            f"model.num_classes: {model.num_classes} does not match "
            f"dataset.num_classes {dataset.num_classes}"
        )

    raw_part = _get(obj, "", "partition", dict, {"mode": "iid"})
    mode = _get(raw_part, "partition", "mode", str, "iid")
    if mode not in PARTITION_MODES:
        raise ConfigError(f"partition.mode: expected one of {PARTITION_MODES}, got {mode!r}")
    try:
        partition = PartitionPlan(
            mode=mode,
            num_clients=num_clients,
            skew_classes_per_client=_get(
                raw_part, "partition", "skew_classes_per_client", int, 0
            ),
            seed=_get(raw_part, "partition", "seed", int, 0),
        )
    except Exception as exc:
        raise ConfigError(f"partition.{exc}")

    raw_unlearn = _get(obj, "", "unlearn", dict, {})
    unlearn = UnlearnConfig(
        p=_get(raw_unlearn, "unlearn", "p", float, 0.0),
        seed=_get(raw_unlearn, "unlearn", "seed", int, 0),
    )
    if not 0 <= unlearn.p <= 1:
        raise ConfigError(f"unlearn.p: must be in [0, 1], got {unlearn.p}")

    privacy = _parse_privacy(_get(obj, "", "privacy", dict, None), algorithm)

    return ExperimentConfig(
        name=_get(obj, "", "name", str, "run"),
        algorithm=algorithm,
        num_clients=num_clients,
        rounds=rounds,
        model=model,
        train=train,
        dataset=dataset,
        partition=partition,
        unlearn=unlearn,
        privacy=privacy,
        k=k,
        x=x,
        delta=delta,
        metric=metric,
        storage_mode=storage_mode,
        noise_convention=noise_convention,
        master_seed=_get(obj, "", "master_seed", int, 0),
        holdout_fraction=holdout,
        output_dir=_get(obj, "", "output_dir", str, "results"),
    )


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"config: cannot read {path} ({exc})")
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config: {path} is not valid JSON ({exc})")
    return parse_config(obj)
