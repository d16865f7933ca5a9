from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import synthetic_datasets
from fanet_ids.federated import (AUDIT, ClientData, ExperimentPlan, GlobalModel, fedavg_aggregate, run_cids, run_fl,
                                 run_fsfl, run_lids, run_plan, run_round, server_scope)
from fanet_ids.nn import TrainConfig


def test_single_client_aggregate_is_exact_copy():
    w = [np.random.default_rng(0).normal(size=(3, 2)), np.arange(4.0)]
    out = fedavg_aggregate([w], [7])
    assert all(np.array_equal(a, b) for a, b in zip(out, w))
    out[0][0, 0] = 99.0
    assert w[0][0, 0] != 99.0


def test_equal_counts_give_plain_mean():
    a, b = [np.array([1.0, 3.0])], [np.array([3.0, 5.0])]
    assert np.array_equal(fedavg_aggregate([a, b], [4, 4])[0], [2.0, 4.0])


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10 ** 6), st.integers(2, 6))
def test_weighted_mean_matches_brute_force(seed, k):
    rng = np.random.default_rng(seed)
    shapes = [(4, 3), (3,), (1,)]
    clients = [[rng.normal(size=s) for s in shapes] for _ in range(k)]
    counts = rng.integers(1, 40, size=k).tolist()
    out = fedavg_aggregate(clients, counts)
    for t, s in enumerate(shapes):
        for idx in np.ndindex(s):
            brute = sum(c * w[t][idx] for c, w in zip(counts, clients)) / sum(counts)
            assert out[t][idx] == pytest.approx(brute, rel=1e-12, abs=1e-15)


def test_aggregate_errors():
    with pytest.raises(ValueError):
        fedavg_aggregate([], [])
    with pytest.raises(ValueError):
        fedavg_aggregate([[np.zeros(2)], [np.zeros(3)]], [1, 1])
    with pytest.raises(ValueError):
        fedavg_aggregate([[np.zeros(2)], [np.zeros(2)]], [1, 0])
    with pytest.raises(ValueError):
        fedavg_aggregate([[np.zeros(2)]], [1, 2])


@pytest.mark.parametrize("model", ["dnn", "cnn"])
def test_one_client_federated_equals_centralized(model):
    ds = synthetic_datasets(1, 10)
    plan = ExperimentPlan(model=model, rounds=10, epochs=10, shot_size=10)
    g, _ = run_fl(replace(plan, ids_variant="FL"), ds, 0)
    m, _ = run_cids(replace(plan, ids_variant="C"), ds, 0)
    for a, b in zip(g.weights, m.weights):
        assert np.max(np.abs(a - b)) < 1e-12


def test_round_log_and_message_count():
    ds = synthetic_datasets(3, 10)
    plan = ExperimentPlan(ids_variant="FSFL", model="dnn", shot_size=10, rounds=2)
    _, rep = run_fsfl(plan, ds, 0)
    assert len(rep.round_logs) == 2
    rl = rep.round_logs[0]
    assert rl["clients"] == [1, 2, 3] and rl["messages"] == 6 and len(rl["losses"]) == 3
    assert rep.comm == {"N": 3, "W": 441, "E": 2, "S": 8, "cost": 3 * 441 * 2 * 8}


def test_empty_client_is_excluded(caplog):
    from fanet_ids.federated import ClientState
    from fanet_ids.nn import build_mlp
    ds = synthetic_datasets(2, 10)
    clients = []
    for i, (u, d) in enumerate(ds.items()):
        c = ClientState(u, ClientData(d.samples(), []))
        c.prepare(build_mlp(seed=0), TrainConfig(), np.random.default_rng(i))
        clients.append(c)
    clients.append(ClientState(9, ClientData([], [])))
    g = GlobalModel(build_mlp(seed=0).weights, 0, {})
    _, rl = run_round(g, clients, TrainConfig())
    assert rl["excluded"] == [9] and rl["clients"] == [1, 2]
    assert "no training data" in caplog.text


@pytest.mark.parametrize("variant", ["FL", "FSFL"])
def test_federated_runs_never_read_samples_on_server(variant):
    ds = synthetic_datasets(3, 10)
    _, rep = (run_fl if variant == "FL" else run_fsfl)(
        ExperimentPlan(ids_variant=variant, model="dnn", shot_size=10, rounds=2), ds, 0)
    assert rep.server_sample_reads == 0 == AUDIT.server_sample_reads


def test_audit_instrument_detects_server_reads():
    _, rep = run_cids(ExperimentPlan(ids_variant="C", model="dnn", shot_size=10, epochs=1), synthetic_datasets(2), 0)
    assert rep.server_sample_reads > 0
    d = ClientData([1], [2])
    AUDIT.reset()
    d.train
    assert AUDIT.server_sample_reads == 0
    with server_scope():
        d.test
    assert AUDIT.server_sample_reads == 1


def test_variants_learn_separable_data():
    ds = synthetic_datasets(3, 20, shift=4.0)
    for v in ("C", "L", "FL", "FSFL"):
        plan = ExperimentPlan(ids_variant=v, model="dnn", shot_size=20, epochs=20, rounds=20)
        reps = run_plan(replace(plan, seeds=(0, 1)), ds)
        assert len(reps) == 2
        assert np.mean([r.accuracy for r in reps]) > 0.8, v


def test_lids_reports_per_client_mean():
    ds = synthetic_datasets(3, 10)
    _, rep = run_lids(ExperimentPlan(ids_variant="L", model="dnn", shot_size=10, epochs=3), ds, 0)
    assert len(rep.per_client) == 3
    assert rep.accuracy == pytest.approx(np.mean([p["accuracy"] for p in rep.per_client]))
    assert rep.cm.total == 3 * 4


def test_fsfl_applies_kshot_before_split():
    ds = synthetic_datasets(2, 36)
    _, rep = run_fsfl(ExperimentPlan(model="dnn", shot_size=10, rounds=1), ds, 0)
    assert rep.train_rows == 2 * 16 and rep.cm.total == 2 * 4
    _, rep = run_fl(ExperimentPlan(ids_variant="FL", model="dnn", shot_size=10, rounds=1), ds, 0)
    assert rep.train_rows == 2 * 56


def test_pairwise_head_runs():
    ds = synthetic_datasets(2, 10, shift=4.0)
    plan = ExperimentPlan(model="dnn", shot_size=10, rounds=5, train=TrainConfig(head="pairwise"))
    _, rep = run_fsfl(plan, ds, 0)
    assert rep.n_params == 441 - 11 + 2 and 0 <= rep.accuracy <= 1


def test_plan_defaults_and_validation():
    assert ExperimentPlan(ids_variant="FSFL").effective_rounds == 10
    assert ExperimentPlan(ids_variant="FL").effective_rounds == 100
    assert ExperimentPlan(ids_variant="C").effective_rounds == 0
    p = ExperimentPlan(seeds=[1, 2], train=TrainConfig(learning_rate=0.005))
    assert ExperimentPlan.from_dict(p.to_dict()) == p
    with pytest.raises(ValueError):
        ExperimentPlan.from_dict({"variant": "FL"})
    with pytest.raises(ValueError):
        ExperimentPlan.from_dict({"train": {"lr": 0.1}})
    with pytest.raises(ValueError):
        ExperimentPlan(ids_variant="X")
