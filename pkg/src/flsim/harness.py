"""Federation driver, metrics and parameter sweeps."""
from __future__ import annotations

import csv
import dataclasses
import hashlib
import io
import json
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import yaml

from . import attacks, defense, secureshare
from .data import PartitionSpec, backdoor_testset, disjoint_triggers, generate_task, partition_noniid, split
from .learning import ModelArch, TrainConfig, init_model, local_train, predict
from .linalg import DomainError

DEFENSES = ("flguard", "private_flguard", "fedavg", "static_dp", "kmeans_filter", "krum")
ROUND_FIELDS = ("round", "ba", "ma", "tpr", "tnr", "s_t", "sigma")


class ConfigError(ValueError):
    """Invalid experiment configuration; the message starts with the offending field path."""


@dataclass(frozen=True)
class TaskConfig:
    d: int = 20
    classes: int = 2
    hidden: tuple = (16,)
    n_train: int = 2000
    n_test: int = 1000
    separation: float = 8.0
    informative: int | None = 10
    noise: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        if self.d < self.classes or self.classes < 2:
            raise DomainError("need classes >= 2 and d >= classes")
        if self.n_train < 1 or self.n_test < 1:
            raise DomainError("n_train and n_test must be positive")


@dataclass(frozen=True)
class FederationConfig:
    K: int = 20
    rounds: int = 15
    clients_per_round: int | None = None
    deg_niid: float = 0.5

    def __post_init__(self):
        if self.K < 3:
            raise DomainError("K must be >= 3")
        if self.rounds < 1:
            raise DomainError("rounds must be >= 1")
        if self.clients_per_round is not None and not 1 <= self.clients_per_round <= self.K:
            raise DomainError("clients_per_round must lie in [1, K]")
        if not 0.0 <= self.deg_niid <= 1.0:
            raise DomainError("deg_niid must lie in [0, 1]")


@dataclass(frozen=True)
class TriggerConfig:
    width: int = 3
    value: float = 4.0
    target_label: int = 0

    def __post_init__(self):
        if self.width < 1:
            raise DomainError("width must be >= 1")


@dataclass(frozen=True)
class DefenseSection:
    """Selected aggregation rule plus every knob any of them reads."""

    name: str = "flguard"
    lam: float = 0.001
    clip_mode: str = "delta"
    median_scope: str = "admitted"
    min_cluster_size: int | None = None
    min_samples: int | None = None
    clusterer: str = "hdbscan"
    filtering: bool = True
    smoothing: bool = True
    static_S: float = 1.0
    static_sigma: float = 0.01
    krum_f: int | None = None
    frac_bits: int = 16

    def __post_init__(self):
        if self.name not in DEFENSES:
            raise DomainError(f"name must be one of {DEFENSES}")
        self.flguard(0)
        if self.static_S < 0 or self.static_sigma < 0:
            raise DomainError("static_S and static_sigma must be >= 0")

    def flguard(self, noise_seed):
        return defense.DefenseConfig(
            lam=self.lam, clip_mode=self.clip_mode, median_scope=self.median_scope,
            min_cluster_size=self.min_cluster_size, min_samples=self.min_samples,
            clusterer=self.clusterer, filtering=self.filtering, smoothing=self.smoothing,
            noise_seed=noise_seed,
        )


@dataclass(frozen=True)
class AdversarySection:
    pmr: float = 0.0
    strategy: str = "data_poison"
    pdr: float = 0.5
    pdr_range: tuple = (0.05, 0.20)
    backdoors: int = 1
    scale_factor: float = 1.0
    obfuscation_std: float = 0.034
    schedule: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "pdr_range", tuple(float(v) for v in self.pdr_range))
        object.__setattr__(self, "schedule", tuple(self.schedule))
        self.build((), 0)

    def build(self, triggers, seed):
        return attacks.AdversaryConfig(
            pmr=self.pmr, strategy=self.strategy, triggers=tuple(triggers), pdr=self.pdr,
            pdr_range=self.pdr_range, backdoors=self.backdoors, scale_factor=self.scale_factor,
            obfuscation_std=self.obfuscation_std, schedule=self.schedule, seed=seed,
        )


@dataclass(frozen=True)
class TrainSection:
    learning_rate: float = 0.1
    epochs: int = 2
    batch_size: int = 32

    def __post_init__(self):
        TrainConfig(self.learning_rate, self.epochs, self.batch_size)

    def build(self, seed):
        return TrainConfig(self.learning_rate, self.epochs, self.batch_size, seed)


@dataclass(frozen=True)
class ExperimentConfig:
    task: TaskConfig = field(default_factory=TaskConfig)
    federation: FederationConfig = field(default_factory=FederationConfig)
    train: TrainSection = field(default_factory=TrainSection)
    trigger: TriggerConfig = field(default_factory=TriggerConfig)
    adversary: AdversarySection = field(default_factory=AdversarySection)
    defense: DefenseSection = field(default_factory=DefenseSection)
    master_seed: int = 0

    def __post_init__(self):
        if self.task.d < self.adversary.backdoors * self.trigger.width:
            raise ConfigError("trigger: backdoors * width exceeds the feature count")
        if self.trigger.target_label >= self.task.classes:
            raise ConfigError("trigger.target_label: outside the class range")

    def to_dict(self):
        return dataclasses.asdict(self)

    def digest(self):
        """SHA-256 of the canonical JSON form."""
        blob = json.dumps(self.to_dict(), sort_keys=True, default=list).encode()
        return hashlib.sha256(blob).hexdigest()

    def replace(self, path, value):
        """Copy with the dotted ``path`` set to ``value`` (validated)."""
        d = self.to_dict()
        node = d
        keys = path.split(".")
        for k in keys[:-1]:
            if not isinstance(node, dict) or k not in node:
                raise ConfigError(f"{path}: unknown field")
            node = node[k]
        if not isinstance(node, dict) or keys[-1] not in node:
            raise ConfigError(f"{path}: unknown field")
        node[keys[-1]] = value
        return config_from_dict(d)


def _build(cls, raw, prefix):
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError(f"{prefix or '<root>'}: expected a mapping")
    known = {f.name: f for f in dataclasses.fields(cls)}
    kwargs = {}
    for key, val in raw.items():
        path = f"{prefix}.{key}" if prefix else str(key)
        if key not in known:
            raise ConfigError(f"{path}: unknown field")
        sub = _SECTIONS.get(known[key].name) if cls is ExperimentConfig else None
        if sub is not None:
            kwargs[key] = _build(sub, val, path)
        else:
            kwargs[key] = _coerce(known[key], val, path)
    try:
        return cls(**kwargs)
    except ConfigError:
        raise
    except (DomainError, TypeError, ValueError) as exc:
        raise ConfigError(f"{prefix or '<root>'}: {exc}") from exc


def _coerce(f, val, path):
    ann = str(f.type)
    if val is None:
        if "None" in ann:
            return None
        raise ConfigError(f"{path}: must not be null")
    if ann.startswith("bool"):
        if not isinstance(val, bool):
            raise ConfigError(f"{path}: expected a boolean")
        return val
    if ann.startswith("int"):
        if isinstance(val, bool) or not isinstance(val, int):
            raise ConfigError(f"{path}: expected an integer")
        return val
    if ann.startswith("float"):
        if isinstance(val, bool) or not isinstance(val, (int, float)):
            raise ConfigError(f"{path}: expected a number")
        return float(val)
    if ann.startswith("str"):
        if not isinstance(val, str):
            raise ConfigError(f"{path}: expected a string")
        return val
    if ann.startswith("tuple"):
        if not isinstance(val, (list, tuple)):
            raise ConfigError(f"{path}: expected a list")
        return tuple(val)
    return val


_SECTIONS = {
    "task": TaskConfig,
    "federation": FederationConfig,
    "train": TrainSection,
    "trigger": TriggerConfig,
    "adversary": AdversarySection,
    "defense": DefenseSection,
}


def config_from_dict(raw):
    return _build(ExperimentConfig, raw, "")


def load_config(path):
    try:
        with open(path) as fh:
            raw = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError(f"<file>: cannot read {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"<file>: invalid YAML: {exc}") from exc
    return config_from_dict(raw or {})


def dump_config(cfg):
    return yaml.safe_dump(json.loads(json.dumps(cfg.to_dict(), default=list)), sort_keys=False)


@dataclass
class RoundReport:
    round: int
    ba: float
    ma: float
    tpr: float | None
    tnr: float | None
    admitted: tuple
    s_t: float
    sigma: float
    flags: frozenset = frozenset()
    ba_per_trigger: tuple = ()
    confusion: dict = field(default_factory=dict)
    # excluded from every artifact so outputs stay reproducible
    wall_time: float = field(default=0.0, compare=False)


@dataclass
class MetricsSummary:
    final_ba: float
    final_ma: float
    ba: tuple
    ma: tuple
    confusion: dict
    conventional: dict

    @classmethod
    def from_reports(cls, reports):
        tot = {"tp": 0, "fp": 0, "tn": 0, "fn": 0}
        for r in reports:
            for k in tot:
                tot[k] += r.confusion.get(k, 0)
        conv = {
            "tpr": tot["tp"] / (tot["tp"] + tot["fn"]) if tot["tp"] + tot["fn"] else None,
            "tnr": tot["tn"] / (tot["tn"] + tot["fp"]) if tot["tn"] + tot["fp"] else None,
        }
        return cls(reports[-1].ba, reports[-1].ma, tuple(r.ba for r in reports), tuple(r.ma for r in reports), tot, conv)


def compute_ba(model, triggered_testset, target_label):
    """Fraction of triggered inputs classified as ``target_label``."""
    if len(triggered_testset) == 0:
        raise DomainError("empty triggered test set")
    return float(np.mean(predict(model, triggered_testset.X) == target_label))


def compute_ma(model, testset):
    return float(np.mean(predict(model, testset.X) == testset.y))


def confusion_counts(admitted, malicious, clients):
    """Positives are excluded models: tp = excluded poisoned, fp = excluded benign, and so on."""
    admitted, malicious = set(admitted), set(malicious)
    tp = fp = tn = fn = 0
    for c in clients:
        excluded = c not in admitted
        bad = c in malicious
        if excluded and bad:
            tp += 1
        elif excluded:
            fp += 1
        elif bad:
            fn += 1
        else:
            tn += 1
    return {"tp": tp, "fp": fp, "tn": tn, "fn": fn}


def compute_tpr_tnr(admitted, ground_truth_malicious, K):
    """Ratios over the defense's own decisions.

    TPR = excluded-and-poisoned / excluded, TNR = admitted-and-benign / admitted;
    ``None`` when the respective denominator is zero.
    """
    c = confusion_counts(admitted, ground_truth_malicious, range(K))
    excluded = c["tp"] + c["fp"]
    kept = c["tn"] + c["fn"]
    return (c["tp"] / excluded if excluded else None, c["tn"] / kept if kept else None)


def worker_count():
    raw = os.environ.get("FLSIM_THREADS")
    if raw:
        try:
            return max(1, int(raw))
        except ValueError:
            pass
    return os.cpu_count() or 1


def _seed(master, *tags):
    return int(np.random.SeedSequence([master, *tags]).generate_state(1)[0])


@dataclass
class Scenario:
    """Everything derived from a config before the first round."""

    arch: ModelArch
    clients: list
    test: object
    triggers: list
    trigger_tests: list
    adversary: attacks.AdversaryConfig
    plan: attacks.AttackPlan
    G0: object


def build_scenario(cfg):
    t, fed, m = cfg.task, cfg.federation, cfg.master_seed
    data = generate_task(_seed(m, 1), t.classes, t.d, t.n_train + t.n_test, t.separation, t.informative, t.noise)
    train, test = split(data, [t.n_train / (t.n_train + t.n_test), t.n_test / (t.n_train + t.n_test)], _seed(m, 2))
    clients = partition_noniid(train, PartitionSpec(fed.K, fed.deg_niid, _seed(m, 3)))
    tr = cfg.trigger
    triggers = disjoint_triggers(cfg.adversary.backdoors, t.d, tr.width, tr.value, tr.target_label)
    adv = cfg.adversary.build(triggers, _seed(m, 4))
    arch = ModelArch((t.d, *t.hidden, t.classes))
    return Scenario(arch, clients, test, triggers, [backdoor_testset(test, g) for g in triggers],
                    adv, attacks.make_plan(adv, fed.K), init_model(arch, _seed(m, 5)))


def _client_update(cfg, sc, G, r, c, malicious):
    tcfg = cfg.train.build(_seed(cfg.master_seed, 6, r, c))
    if c in malicious:
        return attacks.craft_update(sc.adversary, sc.plan, G, sc.clients[c], tcfg, c, r)
    return local_train(G, sc.clients[c], tcfg)


def _aggregate(cfg, G, updates, r, audit):
    d = cfg.defense
    noise_seed = _seed(cfg.master_seed, 7)
    if d.name == "flguard":
        return defense.flguard_round(G, updates, d.flguard(noise_seed), r)
    if d.name == "private_flguard":
        ctx = secureshare.PrivateContext(
            codec=secureshare.FixedPointCodec(d.frac_bits),
            dealer=secureshare.Dealer(_seed(cfg.master_seed, 8, r)),
            audit=audit, seed=_seed(cfg.master_seed, 9, r),
        )
        shared = [secureshare.share_model(u, ctx, i) for i, u in enumerate(updates)]
        return secureshare.private_flguard_round(G, shared, d.flguard(noise_seed), ctx, r)
    if d.name == "fedavg":
        return defense.fedavg_round(G, updates)
    if d.name == "static_dp":
        return defense.static_dp_round(G, updates, d.static_S, d.static_sigma, noise_seed, r)
    if d.name == "kmeans_filter":
        return defense.kmeans_filter_round(G, updates, d.static_S, d.static_sigma, noise_seed, r)
    f = d.krum_f if d.krum_f is not None else max(0, len(updates) // 2 - 2)
    return defense.krum_round(G, updates, f)


def select_clients(cfg, r):
    fed = cfg.federation
    n = fed.clients_per_round or fed.K
    if n >= fed.K:
        return np.arange(fed.K)
    rng = np.random.default_rng([cfg.master_seed, 10, r])
    return np.sort(rng.choice(fed.K, size=n, replace=False))


def run_federation(cfg, audit=None, scenario=None):
    """Run ``cfg.federation.rounds`` rounds and return one RoundReport per round."""
    sc = scenario or build_scenario(cfg)
    audit = audit if audit is not None else secureshare.AuditLog()
    malicious = set(int(i) for i in sc.plan.malicious)
    G = sc.G0
    reports = []
    workers = min(worker_count(), cfg.federation.K)
    pool = ThreadPoolExecutor(workers) if workers > 1 else None
    try:
        for r in range(cfg.federation.rounds):
            t0 = time.perf_counter()
            chosen = [int(c) for c in select_clients(cfg, r)]
            if pool is None:
                updates = [_client_update(cfg, sc, G, r, c, malicious) for c in chosen]
            else:
                # map preserves submission order, so the reduction order is fixed
                updates = list(pool.map(lambda c: _client_update(cfg, sc, G, r, c, malicious), chosen))
            out = _aggregate(cfg, G, updates, r, audit)
            G = out.global_model
            admitted = [chosen[i] for i in out.admitted]
            behaviour = attacks.round_behaviour(sc.adversary, r)
            poisoned = set() if behaviour == "benign" else malicious
            truth = [i for i, c in enumerate(chosen) if c in poisoned]
            tpr, tnr = compute_tpr_tnr(out.admitted, truth, len(chosen))
            bas = tuple(compute_ba(G, ts, g.target_label) for ts, g in zip(sc.trigger_tests, sc.triggers))
            reports.append(RoundReport(
                round=r, ba=float(np.mean(bas)), ma=compute_ma(G, sc.test), tpr=tpr, tnr=tnr,
                admitted=tuple(admitted), s_t=float(out.s_t), sigma=float(out.sigma), flags=out.flags,
                ba_per_trigger=bas, confusion=confusion_counts(admitted, poisoned, chosen),
                wall_time=time.perf_counter() - t0,
            ))
    finally:
        if pool is not None:
            pool.shutdown()
    return reports


def _fmt(v):
    return "" if v is None else repr(float(v))


def rounds_csv(reports):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(ROUND_FIELDS)
    for r in reports:
        w.writerow([r.round, _fmt(r.ba), _fmt(r.ma), _fmt(r.tpr), _fmt(r.tnr), _fmt(r.s_t), _fmt(r.sigma)])
    return buf.getvalue()


def summary_dict(cfg, reports):
    s = MetricsSummary.from_reports(reports)
    return {
        "seed": cfg.master_seed,
        "config_hash": cfg.digest(),
        "final": {"ba": s.final_ba, "ma": s.final_ma, "ba_per_trigger": list(reports[-1].ba_per_trigger)},
        "series": {"ba": list(s.ba), "ma": list(s.ma)},
        "confusion": s.confusion,
        "note": {"conventional_rates": s.conventional},
    }


def sweep(cfg, axis, values):
    """Run one federation per value of the dotted ``axis``; return long-format rows.

    Every run keeps the master seed, so runs differ only in the swept value.
    """
    rows = []
    for v in values:
        reports = run_federation(cfg.replace(axis, v))
        for r in reports:
            for metric in ROUND_FIELDS[1:]:
                rows.append({"axis": axis, "value": v, "round": r.round, "metric": metric, "score": getattr(r, metric)})
    return rows


def sweep_csv(rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["axis", "value", "round", "metric", "score"])
    for row in rows:
        w.writerow([row["axis"], row["value"], row["round"], row["metric"], _fmt(row["score"])])
    return buf.getvalue()
