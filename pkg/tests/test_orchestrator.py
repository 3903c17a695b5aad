import numpy as np
import pytest

from podfl.errors import ConfigError, PodflError
from podfl.history import snapshot_digest
from podfl.models import ModelSpec, TrainConfig
from podfl.orchestrator import (
    RunConfig,
    derive_seed,
    make_clients,
    renormalize,
    run_round_fedavg,
    run_round_ipfedavg,
    train,
    weighted_sum,
)
from podfl.unlearning import UnlearnRequest

from conftest import make_cohort, make_run


class TestDeriveSeed:
    def test_stable_across_calls(self):
        assert derive_seed(1, "x", 2) == derive_seed(1, "x", 2)

    def test_order_and_boundary_sensitivity(self):
        assert derive_seed(1, 2) != derive_seed(2, 1)
        # "1" + "2" must not collide with "12"
        assert derive_seed(1, 2) != derive_seed(12)
        assert derive_seed("a", "b") != derive_seed("ab")

    def test_fits_in_uint64(self):
        for parts in [(0,), ("noise", 3, 1, 0), (2**63,)]:
            assert 0 <= derive_seed(*parts) < 2**64


class TestRunConfigValidation:
    def test_unknown_algorithm(self):
        with pytest.raises(ConfigError, match="algorithm"):
            make_run(algorithm="dp-sgd")

    def test_x_above_k(self):
        with pytest.raises(ConfigError, match="x"):
            make_run(k=2, x=3)

    def test_k_above_cohort(self):
        with pytest.raises(ConfigError, match="k"):
            make_run(num_clients=4, k=5, x=1)

    def test_negative_sigma(self):
        with pytest.raises(ConfigError, match="sigma"):
            make_run(sigma=-0.1)

    def test_zero_rounds(self):
        with pytest.raises(ConfigError, match="rounds"):
            make_run(rounds=0)

    def test_bad_metric_and_convention(self):
        with pytest.raises(ConfigError, match="metric"):
            make_run(metric="l1")
        with pytest.raises(ConfigError, match="noise_convention"):
            make_run(noise_convention="doubled")

    def test_fedavg_ignores_cluster_constraints(self):
        cfg = make_run(algorithm="fedavg", num_clients=2, k=1, x=1)
        assert cfg.algorithm == "fedavg"


class TestClientPlumbing:
    def test_weights_proportional_to_shard_size(self, tiny_data):
        shards = [tiny_data.subset(np.arange(30)), tiny_data.subset(np.arange(30, 120))]
        records = make_clients(shards, master_seed=1)
        assert [r.id for r in records] == [0, 1]
        assert records[0].p == pytest.approx(0.25)
        assert records[1].p == pytest.approx(0.75)
        assert records[0].seed != records[1].seed

    def test_renormalize_rescales_and_sorts(self, tiny_data):
        records = make_clients([tiny_data.subset(np.arange(40))] * 3, master_seed=1)
        kept = [records[2], records[0]]
        out = renormalize(kept)
        assert [r.id for r in out] == [0, 2]
        assert sum(r.p for r in out) == pytest.approx(1.0)
        assert out[0].p == pytest.approx(0.5)

    def test_renormalize_zero_total(self, tiny_data):
        records = make_clients([tiny_data.subset(np.arange(40))] * 2, master_seed=1)
        broken = [type(records[0])(id=r.id, p=0.0, shard=r.shard, seed=r.seed) for r in records]
        with pytest.raises(PodflError):
            renormalize(broken)

    def test_weighted_sum_order(self):
        vs = [np.array([1.0, 0.0]), np.array([0.0, 2.0])]
        np.testing.assert_array_equal(weighted_sum(vs, [0.25, 0.75]), np.array([0.25, 1.5]))


class TestDegenerateEquivalence:
    def test_k1_sigma0_matches_plain_averaging(self):
        """Singleton clusters with no noise collapse to the vanilla update rule."""
        cfg_ip = make_run(algorithm="k-ipfedavg", k=1, x=1, sigma=0.0, rounds=4)
        cfg_fed = make_run(algorithm="fedavg", k=1, x=1, sigma=0.0, rounds=4)
        res_ip = train(cfg_ip, make_cohort(cfg_ip))
        res_fed = train(cfg_fed, make_cohort(cfg_fed))
        np.testing.assert_array_equal(res_ip.model, res_fed.model)
        for a, b in zip(res_ip.store.rounds, res_fed.store.rounds):
            assert a.aggregate_hash == b.aggregate_hash

    def test_single_round_functions_agree(self):
        cfg = make_run(k=1, x=1, sigma=0.0)
        clients = make_cohort(cfg)
        w0 = np.zeros(15)  # (4+1)*3 logistic parameters
        w_fed = run_round_fedavg(w0, clients, cfg)
        w_ip, record = run_round_ipfedavg(w0, clients, cfg)
        np.testing.assert_array_equal(w_fed, w_ip)
        assert len(record.clusters) == cfg.num_clients
        assert all(len(c.member_ids) == 1 for c in record.clusters)


class TestDeterminismAndNoise:
    def test_same_config_twice_is_bit_identical(self):
        cfg = make_run(sigma=0.3, rounds=3)
        first = train(cfg, make_cohort(cfg))
        second = train(cfg, make_cohort(cfg))
        assert snapshot_digest(first.model) == snapshot_digest(second.model)
        assert first.store.serialized_records() == second.store.serialized_records()

    def test_noise_perturbs_the_trajectory(self):
        quiet = make_run(sigma=0.0, rounds=2)
        noisy = make_run(sigma=0.3, rounds=2)
        w_quiet = train(quiet, make_cohort(quiet)).model
        w_noisy = train(noisy, make_cohort(noisy)).model
        assert not np.array_equal(w_quiet, w_noisy)

    def test_master_seed_changes_noise(self):
        a = make_run(sigma=0.3, master_seed=1)
        b = make_run(sigma=0.3, master_seed=2)
        assert not np.array_equal(train(a, make_cohort(a)).model, train(b, make_cohort(b)).model)

    def test_round_record_shape(self):
        cfg = make_run(num_clients=6, k=2, rounds=1, sigma=0.1)
        res = train(cfg, make_cohort(cfg))
        rec = res.store.rounds[0]
        assert rec.active_ids == [0, 1, 2, 3, 4, 5]
        assert len(rec.clusters) == 3
        assert len(rec.noise_seeds) == 3
        assert rec.noise_scale == pytest.approx(cfg.sigma * cfg.delta)
        assert snapshot_digest(rec.snapshot) == rec.aggregate_hash


class TestTrainLoop:
    def test_cohort_size_mismatch(self):
        cfg = make_run(num_clients=6)
        clients = make_cohort(cfg)[:-1]
        with pytest.raises(ConfigError, match="num_clients"):
            train(cfg, clients)

    def test_accuracy_recorded_per_round(self, tiny_data):
        cfg = make_run(rounds=3)
        res = train(cfg, make_cohort(cfg), test_data=tiny_data)
        assert sorted(res.metrics.accuracy_by_round) == [1, 2, 3]
        assert all(0.0 <= v <= 1.0 for v in res.metrics.accuracy_by_round.values())

    def test_executed_rounds_without_requests(self):
        cfg = make_run(rounds=3)
        res = train(cfg, make_cohort(cfg))
        assert res.metrics.executed_rounds == 3
        assert res.metrics.retrain_events == []
        assert res.metrics.requests == []

    def test_static_stream_and_callable_stream_agree(self):
        cfg = make_run(num_clients=6, rounds=3, k=2, x=1)
        requests = [UnlearnRequest(round=2, target_id=4)]
        res_static = train(cfg, make_cohort(cfg), requests)
        res_callable = train(cfg, make_cohort(cfg), lambda actives: list(requests))
        assert res_static.metrics.requests == res_callable.metrics.requests
        np.testing.assert_array_equal(res_static.model, res_callable.model)

    def test_request_for_inactive_client_is_skipped(self):
        cfg = make_run(num_clients=6, rounds=3, k=2, x=1)
        requests = [UnlearnRequest(round=2, target_id=4), UnlearnRequest(round=3, target_id=4)]
        res = train(cfg, make_cohort(cfg), requests)
        assert len(res.metrics.requests) == 1

    def test_served_request_carries_attested_pod(self):
        cfg = make_run(num_clients=6, rounds=3, k=2, x=1)
        res = train(cfg, make_cohort(cfg), [UnlearnRequest(round=2, target_id=1)])
        (served,) = res.metrics.requests
        assert served.target_id == 1
        # x=1 can never be violated, so no retrain and a valid proof
        assert served.violation_round is None
        assert served.pod_valid is True
        assert len(res.pods) == 1
        assert res.metrics.retrain_events == []

    def test_violation_triggers_replay_with_new_generation(self):
        cfg = make_run(num_clients=6, rounds=4, k=3, x=3)
        res = train(cfg, make_cohort(cfg), [UnlearnRequest(round=3, target_id=2)])
        (served,) = res.metrics.requests
        assert served.violation_round == 1
        assert len(res.metrics.retrain_events) == 1
        assert res.metrics.retrain_events[0].round == 1
        # replayed rounds 1..2 under generation 1, then rounds 3..4 live
        assert [rec.generation for rec in res.store.rounds] == [1, 1, 1, 1]
        assert [rec.retraining for rec in res.store.rounds] == [True, True, False, False]
        # 2 pre-request + 2 replayed + 2 remaining
        assert res.metrics.executed_rounds == 6
        # the target never reappears
        assert all(2 not in rec.active_ids for rec in res.store.rounds)

    def test_fedavg_request_forces_full_replay_without_pods(self):
        cfg = make_run(algorithm="fedavg", num_clients=6, rounds=4, k=1, x=1)
        res = train(cfg, make_cohort(cfg), [UnlearnRequest(round=3, target_id=0)])
        (served,) = res.metrics.requests
        assert served.violation_round == 1
        assert served.pod_valid is None
        assert res.pods == []
        assert len(res.metrics.retrain_events) == 1

    def test_fedavg_request_before_any_round_needs_no_replay(self):
        cfg = make_run(algorithm="fedavg", num_clients=6, rounds=2, k=1, x=1)
        res = train(cfg, make_cohort(cfg), [UnlearnRequest(round=1, target_id=0)])
        (served,) = res.metrics.requests
        assert served.violation_round is None
        assert res.metrics.retrain_events == []

    def test_removing_last_client_fails_loudly(self, tiny_data):
        cfg = make_run(num_clients=1, k=1, x=1, rounds=2)
        clients = make_cohort(cfg)
        with pytest.raises(PodflError, match="last client"):
            train(cfg, clients, [UnlearnRequest(round=1, target_id=0)])

    def test_initial_model_override(self):
        cfg = make_run(rounds=1)
        w0 = np.full(15, 0.25)
        res = train(cfg, make_cohort(cfg), initial_model=w0)
        np.testing.assert_array_equal(res.store.initial_model, w0)

    def test_weight_sum_validated(self, tiny_data):
        cfg = make_run(num_clients=2, k=1)
        records = make_clients([tiny_data.subset(np.arange(40))] * 2, master_seed=1)
        bad = [type(r)(id=r.id, p=0.7, shard=r.shard, seed=r.seed) for r in records]
        with pytest.raises(ConfigError, match="sum to 1"):
            train(cfg, bad)


class TestRetrainClock:
    def test_replay_time_is_measured_with_injected_clock(self):
        ticks = iter(range(100))
        cfg = make_run(algorithm="fedavg", num_clients=4, rounds=3, k=1, x=1)
        res = train(
            cfg,
            make_cohort(cfg),
            [UnlearnRequest(round=3, target_id=1)],
            clock=lambda: float(next(ticks)),
        )
        assert res.metrics.retrain_events[0].seconds == 1.0
