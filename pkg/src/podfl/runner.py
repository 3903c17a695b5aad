"""Experiment driver: config in, artifacts on disk out.

A run builds the dataset, carves off a holdout split, partitions the
rest across clients, resolves the noise multiplier (calibrating from an
epsilon target when one is given), trains with the unlearning stream
wired in, then writes per-round metrics, the run summary, the full
round-history directory, and one proof-of-deniability file per served
request.
"""

from __future__ import annotations

import json
import os
from pathlib import Path

from .config import ExperimentConfig, load_config
from .data import Dataset, load_idx, partition, synth_classification, train_test_split
from .errors import ConfigError
from .orchestrator import RunConfig, make_clients, train
from .privacy import calibrate_sigma, epsilon_for_sigma
from .reporting import emit_report, storage_accounting
from .unlearning import request_stream, save_pod

OUTPUT_ROOT_ENV = "PODFL_OUTPUT_ROOT"

_REPORT_DELTA = 1e-5


def build_dataset(cfg: ExperimentConfig) -> Dataset:
    ds = cfg.dataset
    if ds.kind == "synthetic":
        return synth_classification(
            n=ds.n,
            input_dim=ds.input_dim,
            num_classes=ds.num_classes,
            seed=ds.seed,
            class_sep=ds.class_sep,
            cluster_std=ds.cluster_std,
        )
    data = load_idx(ds.images, ds.labels)
    if data.input_dim != cfg.model.input_dim:
        raise ConfigError(
            f"model.input_dim: {cfg.model.input_dim} does not match "
            f"loaded data dimension {data.input_dim}"
        )
    if data.num_classes > cfg.model.num_classes:
        raise ConfigError(
            f"model.num_classes: {cfg.model.num_classes} is below the "
            f"{data.num_classes} classes present in the labels"
        )
    return data


def resolve_privacy(cfg: ExperimentConfig) -> tuple[float, dict | None]:
    """Noise multiplier for the run plus the summary's privacy block."""
    if cfg.privacy is None:
        return 0.0, None
    if cfg.privacy.epsilon is not None:
        sigma = calibrate_sigma(cfg.privacy.epsilon, cfg.privacy.delta, cfg.rounds)
        return sigma, {
            "epsilon": cfg.privacy.epsilon,
            "delta": cfg.privacy.delta,
            "sigma": sigma,
            "calibrated": True,
        }
    sigma = cfg.privacy.sigma
    delta = cfg.privacy.delta if cfg.privacy.delta is not None else _REPORT_DELTA
    block = {"sigma": sigma, "delta": delta, "calibrated": False}
    if sigma > 0:
        epsilon, alpha = epsilon_for_sigma(sigma, delta, cfg.rounds)
        block["epsilon"] = epsilon
        block["alpha"] = alpha
    else:
        block["epsilon"] = None
    return sigma, block


def output_dir_for(cfg: ExperimentConfig, output_root: str | os.PathLike | None = None) -> Path:
    """Resolve the run's output directory against the root override."""
    configured = Path(cfg.output_dir)
    if configured.is_absolute():
        return configured
    root = output_root if output_root is not None else os.environ.get(OUTPUT_ROOT_ENV)
    return (Path(root) if root else Path.cwd()) / configured


def run_experiment(
    config: ExperimentConfig | str | os.PathLike,
    output_root: str | os.PathLike | None = None,
) -> dict:
    """Execute one configured run and write all artifacts.

    Returns a manifest of what was written (paths plus headline numbers).
    Raises ConfigError for anything wrong with the configuration and lets
    runtime failures propagate.
    """
    cfg = config if isinstance(config, ExperimentConfig) else load_config(config)
    out = output_dir_for(cfg, output_root)
    out.mkdir(parents=True, exist_ok=True)

    data = build_dataset(cfg)
    if cfg.holdout_fraction > 0:
        trainset, holdout = train_test_split(data, cfg.holdout_fraction, cfg.master_seed)
    else:
        trainset, holdout = data, None
    shards = partition(trainset, cfg.partition)
    clients = make_clients(shards, cfg.master_seed)

    sigma, privacy_block = resolve_privacy(cfg)
    run_cfg = RunConfig(
        algorithm=cfg.algorithm,
        num_clients=cfg.num_clients,
        rounds=cfg.rounds,
        model=cfg.model,
        train=cfg.train,
        k=cfg.k,
        x=cfg.x,
        delta=cfg.delta,
        sigma=sigma,
        metric=cfg.metric,
        storage_mode=cfg.storage_mode,
        noise_convention=cfg.noise_convention,
        master_seed=cfg.master_seed,
    )

    stream = None
    if cfg.unlearn.p > 0:
        stream = lambda actives: request_stream(
            cfg.unlearn.p, cfg.rounds, actives, cfg.unlearn.seed
        )

    result = train(run_cfg, clients, stream, test_data=holdout)

    metrics = result.metrics
    metrics.storage = storage_accounting(
        result.store.rounds, cfg.storage_mode, result.store.d
    )
    metrics.privacy = privacy_block

    files = emit_report(metrics, out)
    history_dir = out / "history"
    result.store.save(history_dir)

    pod_paths = []
    pods_dir = out / "pods"
    for request, pod in result.pods:
        name = f"pod_round{request.round:04d}_client{request.target_id:04d}.json"
        pod_path, _ = save_pod(pod, pods_dir / name)
        pod_paths.append(pod_path)

    cfg.save(out / "config.json")
    return {
        "output_dir": out,
        "summary": files["summary"],
        "accuracy": files["accuracy"],
        "timing": files["timing"],
        "storage": files["storage"],
        "history": history_dir,
        "pods": pod_paths,
        "requests_served": len(metrics.requests),
        "retrain_count": len(metrics.retrain_events),
        "final_accuracy": metrics.accuracy_by_round.get(
            max(metrics.accuracy_by_round), None
        )
        if metrics.accuracy_by_round
        else None,
    }


def run_sweep(
    config_dir: str | os.PathLike,
    output_root: str | os.PathLike | None = None,
) -> dict:
    """Run every ``*.json`` config in the directory, in sorted name order.

    Each run keeps its own artifact directory; the sweep additionally
    concatenates the per-run CSVs (stable order, one header) into a
    ``sweep/`` directory under the output root.
    """
    config_dir = Path(config_dir)
    paths = sorted(config_dir.glob("*.json"))
    if not paths:
        raise ConfigError(f"config: no *.json configs found in {config_dir}")
    manifests = []
    for path in paths:
        manifests.append((path, run_experiment(path, output_root)))

    root = output_root if output_root is not None else os.environ.get(OUTPUT_ROOT_ENV)
    sweep_dir = (Path(root) if root else Path.cwd()) / "sweep"
    sweep_dir.mkdir(parents=True, exist_ok=True)
    for csv_name in ("accuracy.csv", "timing.csv", "storage.csv"):
        lines = []
        for _, manifest in manifests:
            text = (manifest["output_dir"] / csv_name).read_text(encoding="utf-8")
            rows = text.splitlines()
            if not lines:
                lines.append(rows[0])
            lines.extend(rows[1:])
        (sweep_dir / csv_name).write_text(
            "\n".join(lines) + "\n", encoding="utf-8", newline="\n"
        )
    summaries = {
        str(path): json.loads(manifest["summary"].read_text(encoding="utf-8"))
        for path, manifest in manifests
    }
    (sweep_dir / "summary.json").write_text(
        json.dumps(summaries, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    return {"sweep_dir": sweep_dir, "runs": [m for _, m in manifests]}
