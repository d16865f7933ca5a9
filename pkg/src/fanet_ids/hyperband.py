"""Hyperband: random configurations plus successive halving over a resource budget."""
import csv
from dataclasses import dataclass, field, replace
import logging
import math

from .dataset import UavDataset, split_train_test
from .federated import RUNNERS
from .rng import substream

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SearchSpace:
    """Named ranges. Each value is ``("log", lo, hi)``, ``("uniform", lo, hi)``
    or ``("choice", [options])``."""

    ranges: dict = field(default_factory=lambda: {"learning_rate": ("log", 0.001, 0.01)})

    def __post_init__(self):
        for name, spec in self.ranges.items():
            kind = spec[0]
            if kind in ("log", "uniform"):
                lo, hi = spec[1], spec[2]
                if not lo <= hi or (kind == "log" and lo <= 0):
                    raise ValueError(f"bad range for {name}: {spec}")
            elif kind == "choice":
                if not list(spec[1]):
                    raise ValueError(f"empty choice list for {name}")
            else:
                raise ValueError(f"unknown range kind {kind!r} for {name}")

    @property
    def names(self):
        return sorted(self.ranges)

    def sample(self, rng):
        out = {}
        for name in self.names:
            spec = self.ranges[name]
            if spec[0] == "log":
                out[name] = float(math.exp(rng.uniform(math.log(spec[1]), math.log(spec[2]))))
            elif spec[0] == "uniform":
                out[name] = float(rng.uniform(spec[1], spec[2]))
            else:
                opts = list(spec[1])
                out[name] = opts[int(rng.integers(len(opts)))]
        return out

    def contains(self, config):
        for name, spec in self.ranges.items():
            v = config[name]
            if spec[0] == "choice":
                if v not in list(spec[1]):
                    return False
            elif not spec[1] <= v <= spec[2]:
                return False
        return True

    @classmethod
    def from_dict(cls, d):
        ranges = {}
        for name, spec in d.items():
            if isinstance(spec, dict):
                unknown = set(spec) - {"kind", "low", "high", "options"}
                if unknown:
                    raise ValueError(f"unknown keys {sorted(unknown)} in range {name}")
                if spec["kind"] == "choice":
                    ranges[name] = ("choice", tuple(spec["options"]))
                else:
                    ranges[name] = (spec["kind"], float(spec["low"]), float(spec["high"]))
            else:
                ranges[name] = tuple(spec)
        return cls(ranges)


@dataclass(frozen=True)
class Trial:
    bracket: int
    rung: int
    trial: int  # sample order within the bracket
    config: dict
    resource: int
    score: float  # None when disqualified


def _log_floor(R, eta):
    s = 0
    while eta ** (s + 1) <= R:
        s += 1
    return s


def schedule(R, eta=3):
    """Rungs of every bracket as ``[(s, [(n_i, r_i), ...]), ...]``.

    ``s_max = floor(log_eta R)``; bracket ``s`` starts
    ``ceil((s_max + 1) * eta**s / (s + 1))`` configurations at resource
    ``R * eta**-s`` and multiplies the resource by ``eta`` while keeping
    ``floor(n / eta)`` configurations per rung.
    """
    if R < 1 or eta < 2:
        raise ValueError("need R >= 1 and eta >= 2")
    s_max = _log_floor(R, eta)
    out = []
    for s in range(s_max, -1, -1):
        n = -(-(s_max + 1) * eta ** s // (s + 1))
        rungs = []
        for i in range(s + 1):
            n_i = n // eta ** i
            r_i = max(1, int(round(R * eta ** (i - s))))
            rungs.append((n_i, r_i))
        out.append((s, rungs))
    return out


def schedule_budget(R, eta=3):
    return sum(n * r for _, rungs in schedule(R, eta) for n, r in rungs)


def _score(objective, config, resource):
    try:
        v = float(objective(config, resource))
    except (ArithmeticError, ValueError) as exc:
        log.warning("trial %s at resource %s failed: %s", config, resource, exc)
        return None
    if not math.isfinite(v):
        log.warning("trial %s at resource %s returned %r; disqualified", config, resource, v)
        return None
    return v


def successive_halving(configs, objective, rung_resources, eta=3, bracket=0):
    """Evaluate every survivor at each rung and keep the best ``floor(n / eta)``.

    Ties go to the configuration sampled first. Returns the ledger of
    :class:`Trial` records in evaluation order.
    """
    if not configs:
        raise ValueError("successive halving needs at least one configuration")
    alive = list(range(len(configs)))
    ledger = []
    for rung, r in enumerate(rung_resources):
        scored = []
        for idx in alive:
            sc = _score(objective, configs[idx], r)
            ledger.append(Trial(bracket, rung, idx, dict(configs[idx]), r, sc))
            if sc is not None:
                scored.append((-sc, idx))
        if rung == len(rung_resources) - 1:
            break
        keep = len(alive) // eta
        alive = [idx for _, idx in sorted(scored)[:keep]]
        if not alive:
            break
    return ledger


@dataclass
class HyperbandResult:
    best_config: dict
    best_score: float
    ledger: list
    R: int
    eta: int

    @property
    def total_resource(self):
        return sum(t.resource for t in self.ledger)


def run_hyperband(space, objective, R, eta=3, seed=0):
    """Full Hyperband sweep; the winner is the best score seen at resource ``R``."""
    rng = substream(seed, "hyperband")
    ledger = []
    for s, rungs in schedule(R, eta):
        n0 = rungs[0][0]
        configs = [space.sample(rng) for _ in range(n0)]
        ledger += successive_halving(configs, objective, [r for _, r in rungs], eta, bracket=s)
    expected = schedule_budget(R, eta)
    spent = sum(t.resource for t in ledger)
    disqualified = any(t.score is None for t in ledger)
    if spent != expected and not disqualified:
        raise AssertionError(f"resource accounting off: spent {spent}, schedule says {expected}")
    full = [t for t in ledger if t.resource == max(r for _, rr in schedule(R, eta) for _, r in rr)
            and t.score is not None]
    if not full:
        raise RuntimeError("every full-budget trial was disqualified")
    best = min(full, key=lambda t: (-t.score, -t.bracket, t.trial))
    return HyperbandResult(best.config, best.score, ledger, R, eta)


def export_ledger(ledger, path):
    names = sorted({k for t in ledger for k in t.config})
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["bracket", "rung", "trial"] + names + ["resource", "score"])
        for t in ledger:
            w.writerow([t.bracket, t.rung, t.trial] + [repr(t.config[n]) if isinstance(t.config[n], float)
                                                       else t.config[n] for n in names]
                       + [t.resource, "" if t.score is None else repr(t.score)])
    return path


def validation_objective(plan, datasets, seed=0, runner=None):
    """Objective for tuning an IDS plan: accuracy on a held-out 20% of each
    client's training split. The test split is never touched."""
    inner = {}
    for uav, ds in datasets.items():
        train, _ = split_train_test(ds, 0.8, seed)
        benign = [s for s in train if s.label == 0]
        mal = [s for s in train if s.label == 1]
        inner[uav] = UavDataset(ds.topology_id, uav, benign, mal, ds.fallback)

    def objective(config, resource):
        train_cfg = replace(plan.train, **{k: v for k, v in config.items() if k in plan.train.__dataclass_fields__})
        if plan.ids_variant in ("FL", "FSFL"):
            p = replace(plan, train=train_cfg, rounds=int(resource))
        else:
            p = replace(plan, train=train_cfg, epochs=int(resource))
        _, rep = (runner or RUNNERS[p.ids_variant])(p, inner, seed)
        return rep.accuracy

    return objective
