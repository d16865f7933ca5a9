"""The four IDS variants: centralized, local-only, federated, few-shot federated.

Clients hold their raw samples privately. Everything that runs on the
server (round orchestration and aggregation) executes inside
:func:`server_scope`; any read of client sample data from inside that
scope bumps :data:`AUDIT`, which FL/FSFL runs keep at zero.
"""
from contextlib import contextmanager
import contextvars
from dataclasses import dataclass, field, replace
import logging

import numpy as np

from .dataset import kshot_sample, split_train_test, to_arrays
from .evaluation import ConfusionMatrix, comm_cost, confusion, metrics
from .nn import PairwiseModel, TrainConfig, Trainer, build_model, fit_scaler, forward, transform
from .rng import substream

__all__ = ["ClientState", "GlobalModel", "ExperimentPlan", "MetricsReport", "fedavg_aggregate", "run_round",
           "run_fsfl", "run_fl", "run_cids", "run_lids", "run_plan", "kshot_sample", "AUDIT", "server_scope"]

log = logging.getLogger(__name__)

VARIANTS = ("C", "L", "FL", "FSFL")
WEIGHT_BYTES = 8  # float64 parameters on the wire

_on_server = contextvars.ContextVar("on_server", default=False)


class PrivacyAudit:
    """Counts sample-data reads that happen on the server side."""

    def __init__(self):
        self.server_sample_reads = 0

    def reset(self):
        self.server_sample_reads = 0


AUDIT = PrivacyAudit()


@contextmanager
def server_scope(on=True):
    token = _on_server.set(on)
    try:
        yield
    finally:
        _on_server.reset(token)


class ClientData:
    """Raw local samples. Reading them from server code is recorded."""

    def __init__(self, train, test):
        self._train = list(train)
        self._test = list(test)

    def _touch(self):
        if _on_server.get():
            AUDIT.server_sample_reads += 1

    @property
    def train(self):
        self._touch()
        return self._train

    @property
    def test(self):
        self._touch()
        return self._test

    def sizes(self):
        # counts are metadata, not samples
        return len(self._train), len(self._test)


@dataclass
class GlobalModel:
    weights: list
    round: int
    arch: dict

    def shapes(self):
        return [np.shape(w) for w in self.weights]


@dataclass
class ClientState:
    uav_id: int
    data: ClientData
    scaler: object = None
    trainer: Trainer = None
    losses: list = field(default_factory=list)
    X_train: np.ndarray = None
    y_train: np.ndarray = None

    def prepare(self, model, config, rng):
        """Fit the local scaler and cache the scaled training matrix (client side)."""
        with server_scope(False):
            X, y = to_arrays(self.data.train)
        self.scaler = fit_scaler(X)
        self.X_train, self.y_train = transform(self.scaler, X), y
        self.trainer = Trainer(model, config, rng)

    @property
    def n_train(self):
        return self.data.sizes()[0]

    def local_update(self, global_weights, epochs):
        with server_scope(False):
            self.trainer.model.set_weights(global_weights)
            hist = self.trainer.fit(self.X_train, self.y_train, epochs)
            self.losses.append(hist[-1])
            return self.trainer.model.weights

    def evaluate(self, weights=None, threshold=0.5):
        """Confusion counts of a model on this client's test split (client side)."""
        with server_scope(False):
            model = self.trainer.model
            if weights is not None:
                model.set_weights(weights)
            X, y = to_arrays(self.data.test)
            if len(y) == 0:
                return ConfusionMatrix()
            p = predict(model, transform(self.scaler, X), self.X_train, self.y_train)
            return confusion(y, p, threshold)


@dataclass(frozen=True)
class ExperimentPlan:
    ids_variant: str = "FSFL"
    model: str = "cnn"
    shot_size: int = 36
    rounds: int = None
    epochs: int = 100
    attack_kind: str = "blackhole"
    attacker_ratio: float = 0.25
    seeds: tuple = (0,)
    train: TrainConfig = TrainConfig()
    evaluation: str = "pooled"  # or "per-client"

    def __post_init__(self):
        if self.ids_variant not in VARIANTS:
            raise ValueError(f"ids_variant must be one of {VARIANTS}")
        if self.rounds is not None and self.rounds < 0:
            raise ValueError("rounds must be >= 0")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.evaluation not in ("pooled", "per-client"):
            raise ValueError("evaluation must be 'pooled' or 'per-client'")
        object.__setattr__(self, "seeds", tuple(self.seeds))

    @property
    def effective_rounds(self):
        if self.rounds is not None:
            return self.rounds
        return {"FSFL": 10, "FL": 100}.get(self.ids_variant, 0)

    def to_dict(self):
        d = {k: getattr(self, k) for k in ("ids_variant", "model", "shot_size", "rounds", "epochs",
                                            "attack_kind", "attacker_ratio", "evaluation")}
        d["seeds"] = list(self.seeds)
        d["train"] = self.train.to_dict()
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown plan keys: {sorted(unknown)}")
        if "train" in d:
            t = dict(d["train"])
            bad = set(t) - set(TrainConfig.__dataclass_fields__)
            if bad:
                raise ValueError(f"unknown train keys: {sorted(bad)}")
            d["train"] = TrainConfig(**t)
        if "seeds" in d:
            d["seeds"] = tuple(d["seeds"])
        return cls(**d)


@dataclass
class MetricsReport:
    plan: ExperimentPlan
    seed: int
    topology_id: int
    accuracy: float
    dr: float
    fpr: float
    cm: ConfusionMatrix
    n_clients: int
    n_params: int
    rounds: int = 0
    epochs: int = 0
    train_rows: int = 0
    comm: dict = None
    per_client: list = None
    round_logs: list = None
    server_sample_reads: int = 0


def predict(model, X, X_support=None, y_support=None):
    if isinstance(model, PairwiseModel):
        return model.predict_proba(X, X_support, y_support)
    return forward(model, X)


def _make_model(kind, config, rng):
    body = build_model(kind, rng=rng)
    return PairwiseModel(body) if config.head == "pairwise" else body


# -- aggregation ----------------------------------------------------------------

def fedavg_aggregate(client_weights, sample_counts):
    """Sample-count weighted element-wise mean of WeightSets."""
    client_weights = list(client_weights)
    counts = [float(c) for c in sample_counts]
    if not client_weights:
        raise ValueError("no client weights to aggregate")
    if len(counts) != len(client_weights):
        raise ValueError("one sample count per client is required")
    if any(c <= 0 for c in counts):
        raise ValueError("sample counts must be positive")
    ref = [np.shape(w) for w in client_weights[0]]
    for ws in client_weights[1:]:
        if [np.shape(w) for w in ws] != ref:
            raise ValueError("clients disagree on the weight shape signature")
    total = sum(counts)
    if len(client_weights) == 1:
        return [np.array(w, dtype=float, copy=True) for w in client_weights[0]]
    out = [np.zeros(s) for s in ref]
    for ws, c in zip(client_weights, counts):
        for acc, w in zip(out, ws):
            acc += (c / total) * np.asarray(w, dtype=float)
    return out


def run_round(global_model, clients, train_config):
    """One communication round: broadcast, local training, aggregation."""
    with server_scope():
        active, skipped = [], []
        for c in clients:
            (active if c.n_train > 0 else skipped).append(c)
        for c in skipped:
            log.warning("client %s has no training data; excluded from round %d", c.uav_id, global_model.round + 1)
        if not active:
            raise ValueError("no client has training data")
        uploads, counts = [], []
        for c in active:
            uploads.append(c.local_update(global_model.weights, train_config.local_epochs))
            counts.append(c.n_train)
        weights = fedavg_aggregate(uploads, counts)
        new = GlobalModel(weights, global_model.round + 1, global_model.arch)
        if new.shapes() != global_model.shapes():
            raise AssertionError("aggregation changed the weight shape signature")
    round_log = {
        "round": new.round,
        "clients": [c.uav_id for c in active],
        "excluded": [c.uav_id for c in skipped],
        "losses": [c.losses[-1] for c in active],
        "weights_down": len(active),
        "weights_up": len(active),
        "messages": 2 * len(active),
    }
    return new, round_log


# -- experiment drivers ---------------------------------------------------------

def _splits(datasets, shot_size, seed):
    out = {}
    for uav, ds in sorted(datasets.items()):
        if shot_size is not None and shot_size < ds.shot_size:
            ds = kshot_sample(ds, 2, shot_size, seed)
        out[uav] = split_train_test(ds, 0.8, seed)
    return out


def _topology(datasets):
    return next(iter(datasets.values())).topology_id if datasets else 0


def _report(plan, seed, datasets, cm, **kw):
    m = metrics(cm)
    return MetricsReport(plan=plan, seed=seed, topology_id=_topology(datasets), accuracy=m["accuracy"],
                         dr=m["dr"], fpr=m["fpr"], cm=cm, **kw)


def _federated(plan, datasets, seed, rounds, shot_size):
    AUDIT.reset()
    splits = _splits(datasets, shot_size, seed)
    init = _make_model(plan.model, plan.train, substream(seed, "init", plan.model))
    clients = []
    for i, (uav, (train, test)) in enumerate(splits.items()):
        c = ClientState(uav, ClientData(train, test))
        model = _make_model(plan.model, plan.train, substream(seed, "init", plan.model))
        c.prepare(model, plan.train, substream(seed, "train", i))
        clients.append(c)
    g = GlobalModel(init.weights, 0, init.arch)
    logs = []
    for _ in range(rounds):
        g, rl = run_round(g, clients, plan.train)
        logs.append(rl)
    # the final model is deployed to the ground station; each UAV contributes
    # its locally scaled test rows there
    cms = [c.evaluate(g.weights) for c in clients]
    cm = sum(cms, ConfusionMatrix())
    n_params = init.n_params()
    n = len(clients)
    comm = {"N": n, "W": n_params, "E": rounds, "S": WEIGHT_BYTES,
            "cost": comm_cost(n, n_params, rounds, WEIGHT_BYTES) if rounds > 0 else 0}
    per_client = [dict(uav_id=c.uav_id, **metrics(x)) for c, x in zip(clients, cms)] \
        if plan.evaluation == "per-client" else None
    report = _report(plan, seed, datasets, cm, n_clients=n, n_params=n_params, rounds=rounds,
                     train_rows=sum(c.n_train for c in clients), comm=comm, per_client=per_client,
                     round_logs=logs, server_sample_reads=AUDIT.server_sample_reads)
    if plan.evaluation == "per-client":
        report.accuracy = float(np.mean([p["accuracy"] for p in per_client]))
    return g, report


def run_fsfl(plan, datasets, seed=None):
    """Few-shot federated IDS: K-shot local sets, ``plan.effective_rounds`` rounds."""
    seed = plan.seeds[0] if seed is None else seed
    return _federated(plan, datasets, seed, plan.effective_rounds, plan.shot_size)


def run_fl(plan, datasets, seed=None):
    """Federated IDS on each UAV's full local dataset."""
    seed = plan.seeds[0] if seed is None else seed
    return _federated(plan, datasets, seed, plan.effective_rounds, None)


def run_cids(plan, datasets, seed=None):
    """Centralized IDS: all training rows pooled at the server."""
    seed = plan.seeds[0] if seed is None else seed
    AUDIT.reset()
    splits = _splits(datasets, plan.shot_size, seed)
    with server_scope():
        data = [ClientData(tr, te) for tr, te in splits.values()]
        train = [s for d in data for s in d.train]
        test = [s for d in data for s in d.test]
        X, y = to_arrays(train)
        scaler = fit_scaler(X)
        model = _make_model(plan.model, plan.train, substream(seed, "init", plan.model))
        trainer = Trainer(model, plan.train, substream(seed, "train", 0))
        Xs = transform(scaler, X)
        losses = trainer.fit(Xs, y, plan.epochs) if plan.epochs > 0 else []
        Xt, yt = to_arrays(test)
        cm = confusion(yt, predict(model, transform(scaler, Xt), Xs, y))
    rep = _report(plan, seed, datasets, cm, n_clients=len(splits), n_params=model.n_params(), epochs=plan.epochs,
                  train_rows=len(train), server_sample_reads=AUDIT.server_sample_reads)
    rep.round_logs = [{"epoch": i + 1, "loss": l} for i, l in enumerate(losses)]
    return model, rep


def run_lids(plan, datasets, seed=None):
    """Local-only IDS: every UAV trains and tests on its own data in isolation."""
    seed = plan.seeds[0] if seed is None else seed
    AUDIT.reset()
    splits = _splits(datasets, plan.shot_size, seed)
    per_client, total, n_params, rows = [], ConfusionMatrix(), 0, 0
    for i, (uav, (train, test)) in enumerate(splits.items()):
        if not test:
            log.warning("client %s has no test data; excluded from L-IDS", uav)
            continue
        c = ClientState(uav, ClientData(train, test))
        model = _make_model(plan.model, plan.train, substream(seed, "init", plan.model))
        c.prepare(model, plan.train, substream(seed, "train", i))
        with server_scope(False):
            if plan.epochs > 0:
                c.losses = c.trainer.fit(c.X_train, c.y_train, plan.epochs)
        cm = c.evaluate()
        total = total + cm
        n_params, rows = model.n_params(), rows + c.n_train
        per_client.append(dict(uav_id=uav, **metrics(cm)))
    if not per_client:
        raise ValueError("no client has test data")
    rep = _report(plan, seed, datasets, total, n_clients=len(per_client), n_params=n_params, epochs=plan.epochs,
                  train_rows=rows, per_client=per_client, server_sample_reads=AUDIT.server_sample_reads)
    # the L-IDS figure is the mean of the per-UAV outcomes
    rep.accuracy = float(np.mean([p["accuracy"] for p in per_client]))
    drs = [p["dr"] for p in per_client if p["dr"] is not None]
    fprs = [p["fpr"] for p in per_client if p["fpr"] is not None]
    rep.dr = float(np.mean(drs)) if drs else None
    rep.fpr = float(np.mean(fprs)) if fprs else None
    return None, rep


RUNNERS = {"C": run_cids, "L": run_lids, "FL": run_fl, "FSFL": run_fsfl}


def run_plan(plan, datasets):
    """Run every seed of a plan; returns one report per seed."""
    out = []
    for seed in plan.seeds:
        _, rep = RUNNERS[plan.ids_variant](plan, datasets, seed)
        out.append(rep)
    return out
