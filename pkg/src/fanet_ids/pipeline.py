"""Experiment grid: simulations, dataset files, manifests and training runs."""
from collections import defaultdict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
import hashlib
import json
import logging
import os
import time

from . import __version__
from .dataset import build_uav_datasets, export_dataset, group_uav_datasets, import_dataset, kshot_sample
from .federated import ExperimentPlan, RUNNERS
from .rng import derive_seed
from .sim import AttackKind, SimConfig, run_simulation

log = logging.getLogger(__name__)

ATTACKS = ("sinkhole", "blackhole", "flooding")
RATIOS = (0.05, 0.10, 0.15, 0.20, 0.25)
SHOTS = (36, 20, 10)

# 20 UAVs in 12 km x 12 km with a 250 m radio almost never meet, and ten
# traffic pairs would leave too few relays to host 25% attackers, so the
# small preset shrinks the area and the connection count with the swarm.
PRESETS = {
    "full": {},
    "desk": {"uav_count": 20, "duration_s": 600.0, "area_x": 1000.0, "area_y": 1000.0,
             "traffic_connections": 4},
}


class PipelineError(RuntimeError):
    category = "pipeline"


class MissingTwinError(PipelineError):
    category = "missing-twin"


@dataclass(frozen=True)
class GridConfig:
    """Topologies x (attack-free + attacks x ratios)."""

    sim: dict = field(default_factory=dict)
    topologies: int = 10
    attacks: tuple = ATTACKS
    ratios: tuple = RATIOS
    include_attack_free: bool = True
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "attacks", tuple(AttackKind.parse(a).value for a in self.attacks))
        object.__setattr__(self, "ratios", tuple(float(r) for r in self.ratios))
        if self.topologies < 1:
            raise ValueError("topologies must be >= 1")
        SimConfig.from_dict(dict(self.sim))  # validate early

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        preset = d.pop("preset", None)
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown grid keys: {sorted(unknown)}")
        if preset is not None:
            if preset not in PRESETS:
                raise ValueError(f"unknown preset {preset!r}; choose from {sorted(PRESETS)}")
            d["sim"] = {**PRESETS[preset], **d.get("sim", {})}
        for k in ("attacks", "ratios"):
            if k in d:
                d[k] = tuple(d[k])
        return cls(**d)

    def to_dict(self):
        return {"sim": dict(self.sim), "topologies": self.topologies, "attacks": list(self.attacks),
                "ratios": list(self.ratios), "include_attack_free": self.include_attack_free, "seed": self.seed}


@dataclass(frozen=True)
class SimJob:
    name: str
    topology_id: int
    config: SimConfig


def sim_name(topology_id, attack, ratio):
    if attack == "none":
        return f"topo{topology_id:02d}_none"
    return f"topo{topology_id:02d}_{attack}_{int(round(ratio * 100)):02d}"


def grid_jobs(grid):
    """Every simulation of the grid; all runs of one topology share its seed."""
    jobs = []
    for t in range(grid.topologies):
        base = SimConfig.from_dict({**grid.sim, "seed": derive_seed(grid.seed, "topology", t)})
        if grid.include_attack_free:
            jobs.append(SimJob(sim_name(t, "none", 0.0), t, base.replace(attack_kind="none", attacker_ratio=0.0)))
        for a in grid.attacks:
            for r in grid.ratios:
                jobs.append(SimJob(sim_name(t, a, r), t, base.replace(attack_kind=a, attacker_ratio=r)))
    return jobs


def digest_of(obj):
    blob = json.dumps(obj, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()


def file_digest(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _run_job(job):
    return job.name, run_simulation(job.config, topology_id=job.topology_id)


def run_jobs(jobs, n_jobs=1):
    """``{name: SimTrace}``; ``n_jobs > 1`` spreads simulations over processes."""
    if n_jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=n_jobs) as pool:
            return dict(pool.map(_run_job, jobs))
    return dict(_run_job(j) for j in jobs)


def load_manifest(path):
    if not os.path.exists(path):
        return None
    with open(path) as fh:
        return json.load(fh)


def write_json(path, obj):
    tmp = path + ".tmp"
    with open(tmp, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")
    os.replace(tmp, path)


def simulate_grid(grid, out_dir, n_jobs=1):
    """Run the grid into ``out_dir`` (one trace CSV per simulation plus
    ``manifest.json``). Simulations whose config digest and output file
    digest still match the manifest are skipped. Returns ``(ran, skipped)``.
    """
    os.makedirs(out_dir, exist_ok=True)
    mpath = os.path.join(out_dir, "manifest.json")
    old = load_manifest(mpath) or {}
    old_entries = {e["name"]: e for e in old.get("simulations", [])}
    jobs = grid_jobs(grid)
    todo, entries = [], {}
    for job in jobs:
        cdig = digest_of(job.config.to_dict())
        prev = old_entries.get(job.name)
        path = os.path.join(out_dir, job.name + ".csv")
        if prev and prev["config_digest"] == cdig and os.path.exists(path) and file_digest(path) == prev["output_digest"]:
            entries[job.name] = prev
        else:
            todo.append(job)
    traces = run_jobs(todo, n_jobs)
    for job in todo:
        tr = traces[job.name]
        path = os.path.join(out_dir, job.name + ".csv")
        export_dataset(tr.samples, path, with_provenance=True)
        entries[job.name] = {
            "name": job.name, "topology_id": job.topology_id, "attack_kind": job.config.attack_kind.value,
            "attacker_ratio": job.config.attacker_ratio, "seed": job.config.seed,
            "config": job.config.to_dict(), "config_digest": digest_of(job.config.to_dict()),
            "trace_digest": tr.digest, "output_digest": file_digest(path), "attackers": list(tr.attackers),
        }
    manifest = {"tool_version": __version__, "grid": grid.to_dict(), "grid_digest": digest_of(grid.to_dict()),
                "root_seed": grid.seed, "simulations": [entries[j.name] for j in jobs]}
    write_json(mpath, manifest)
    return len(todo), len(jobs) - len(todo)


# -- datasets -------------------------------------------------------------------

def load_traces(traces_dir):
    manifest = load_manifest(os.path.join(traces_dir, "manifest.json"))
    if manifest is None:
        raise PipelineError(f"no manifest.json in {traces_dir}; run `simulate` first")
    runs = {}
    for e in manifest["simulations"]:
        runs[(e["topology_id"], e["attack_kind"], float(e["attacker_ratio"]))] = \
            (e, import_dataset(os.path.join(traces_dir, e["name"] + ".csv")))
    return manifest, runs


def uav_datasets_from_runs(runs, attack, ratio, per_class=36, seed=0, log_list=None):
    """``{topology_id: {uav: UavDataset}}`` for one (attack, ratio)."""
    out = {}
    topos = sorted({t for (t, a, r) in runs if a == attack and abs(r - ratio) < 1e-9})
    for t in topos:
        hit = runs[(t, attack, ratio)]
        free = runs.get((t, "none", 0.0))
        if free is None:
            raise MissingTwinError(f"topology {t} has no attack-free twin run")
        _, hit_samples = hit if isinstance(hit, tuple) else (None, hit)
        _, free_samples = free if isinstance(free, tuple) else (None, free)
        out[t] = build_uav_datasets(hit_samples, free_samples, per_class=per_class, seed=seed, log=log_list)
    return out


def dataset_name(attack, ratio, shot):
    return f"{attack}_{int(round(ratio * 100)):02d}_{shot}shot.csv"


def build_dataset_files(traces_dir, shots, out_dir, seed=0):
    """One CSV per (attack, ratio, shot) holding every topology's UAV sets.

    Smaller shot sets are drawn as nested subsets of larger ones; the
    nesting is checked before anything is written.
    """
    manifest, runs = load_traces(traces_dir)
    os.makedirs(out_dir, exist_ok=True)
    shots = sorted({int(s) for s in shots}, reverse=True)
    if shots[0] > 36:
        raise PipelineError("shot sizes above 36 exceed the per-UAV dataset")
    keys = sorted({(a, r) for (_, a, r) in runs if a != "none"})
    written, fallbacks = [], []
    for attack, ratio in keys:
        by_topo = uav_datasets_from_runs(runs, attack, ratio, seed=seed, log_list=fallbacks)
        sets = {}
        for shot in shots:
            sets[shot] = {t: {u: kshot_sample(ds, 2, shot, seed) for u, ds in uavs.items()}
                          for t, uavs in by_topo.items()}
        for big, small in zip(shots, shots[1:]):
            for t in sets[small]:
                for u in sets[small][t]:
                    a_ids = {id(s) for s in sets[big][t][u].samples()}
                    if not all(id(s) in a_ids for s in sets[small][t][u].samples()):
                        raise AssertionError(f"{small}-shot set of UAV {u} is not inside the {big}-shot set")
        for shot in shots:
            rows = [s for uavs in sets[shot].values() for ds in uavs.values() for s in ds.samples()]
            path = os.path.join(out_dir, dataset_name(attack, ratio, shot))
            export_dataset(rows, path)
            written.append(path)
    write_json(os.path.join(out_dir, "datasets.json"), {
        "tool_version": __version__, "source_manifest": manifest["grid_digest"], "shots": shots, "seed": seed,
        "files": {os.path.basename(p): file_digest(p) for p in written},
        "fallbacks": [list(f) for f in fallbacks],
    })
    return written


def load_dataset_file(dataset_dir, attack, ratio, shot):
    path = os.path.join(dataset_dir, dataset_name(attack, ratio, shot))
    if not os.path.exists(path):
        raise PipelineError(f"missing dataset file {path}; run `dataset` first")
    return group_uav_datasets(import_dataset(path))


# -- training -------------------------------------------------------------------

def run_experiment(plan, by_topo):
    """Every (topology, seed) combination of a plan. Returns reports and timings."""
    reports, timings = [], []
    for t in sorted(by_topo):
        for seed in plan.seeds:
            t0 = time.perf_counter()
            _, rep = RUNNERS[plan.ids_variant](plan, by_topo[t], seed)
            timings.append((f"{plan.ids_variant}/{plan.model}/{plan.attack_kind}/{plan.attacker_ratio}/"
                            f"{plan.shot_size}/topo{t}/seed{seed}", time.perf_counter() - t0))
            reports.append(rep)
    return reports, timings


def plan_matrix(base, variants=None, models=None, attacks=None, ratios=None, shots=None):
    """Cartesian product of plan fields around ``base``."""
    out = []
    for v in variants or (base.ids_variant,):
        for m in models or (base.model,):
            for a in attacks or (base.attack_kind,):
                for r in ratios or (base.attacker_ratio,):
                    for s in shots or (base.shot_size,):
                        out.append(replace(base, ids_variant=v, model=m, attack_kind=a, attacker_ratio=r,
                                           shot_size=s))
    return out


def train_from_dir(plans, dataset_dir):
    """Run plans against dataset files written by :func:`build_dataset_files`."""
    cache = {}
    reports, timings = [], []
    for plan in plans:
        # FL-IDS trains on the full 36-sample sets
        shot = 36 if plan.ids_variant == "FL" else plan.shot_size
        key = (plan.attack_kind, float(plan.attacker_ratio), shot)
        if key not in cache:
            cache[key] = load_dataset_file(dataset_dir, *key)
        r, tm = run_experiment(plan, cache[key])
        reports += r
        timings += tm
    return reports, timings


def lab_datasets(grid, n_jobs=1, per_class=36, seed=0):
    """In-memory grid: ``{(attack, ratio): {topology: {uav: UavDataset}}}``."""
    traces = run_jobs(grid_jobs(grid), n_jobs)
    runs = {}
    for name, tr in traces.items():
        c = tr.config
        t = int(name[4:6])
        runs[(t, c.attack_kind.value, float(c.attacker_ratio))] = tr.samples
    out = defaultdict(dict)
    for a in grid.attacks:
        for r in grid.ratios:
            out[(a, r)] = uav_datasets_from_runs(runs, a, r, per_class=per_class, seed=seed)
    return dict(out), traces
