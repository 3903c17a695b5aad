"""Deniable federated averaging with streaming unlearning.

The pipeline: partition a dataset across clients (``data``), train with
plain or clustered noisy averaging (``models``, ``clustering``,
``privacy``, ``orchestrator``), log every round (``history``), serve
unlearning requests with scrubbing, deniability proofs, and rollback
retraining (``unlearning``), then account costs and emit reports
(``reporting``, ``runner``, ``cli``).
"""

from .clustering import Cluster, ClusterParams, cluster_weights, deniability_count, pairwise_distances, select_representative
from .config import DatasetConfig, ExperimentConfig, PrivacyConfig, UnlearnConfig, load_config, parse_config
from .data import Dataset, PartitionPlan, load_idx, partition, synth_classification, train_test_split
from .errors import (
    CalibrationError,
    ClusteringError,
    ConfigError,
    EmptyShardError,
    FormatError,
    IntegrityError,
    PartitionError,
    PodflError,
)
from .history import HistoryStore, RoundHistory
from .models import (
    LOGISTIC,
    MLP,
    ModelSpec,
    TrainConfig,
    accuracy,
    client_update,
    functionally_equivalent,
    init_params,
    loss_and_grad,
    model_distance,
)
from .orchestrator import ClientRecord, RunConfig, TrainResult, make_clients, run_round_fedavg, run_round_ipfedavg, train
from .privacy import PrivacyBudget, calibrate_sigma, compose_rdp, epsilon_for_sigma, gaussian_perturb, rdp_of_gaussian, rdp_to_dp
from .reporting import MetricsLog, StorageReport, emit_report, storage_accounting, storage_from_dir
from .runner import run_experiment, run_sweep
from .unlearning import (
    AuditOutcome,
    ProofOfDeniability,
    UnlearnRequest,
    Violation,
    extract_participation,
    find_violation,
    generate_pod,
    load_pod,
    pod_digest,
    request_stream,
    rollback_retrain,
    save_pod,
    scrub_history,
    sg_fl_audit,
    verify_pod,
)

__version__ = "0.1.0"
