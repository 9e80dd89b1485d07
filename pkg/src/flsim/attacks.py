"""Adversary strategies that turn a client's honest behaviour into a poisoned update."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .data import TriggerSpec, poison_dataset
from .learning import Model, local_train
from .linalg import DimensionError, DomainError, l2_norm

STRATEGIES = (
    "data_poison",
    "scaled_data_poison",
    "multi_backdoor",
    "model_alignment",
    "obfuscate",
    "untargeted_random",
)
ROUND_BEHAVIOURS = ("attack", "benign", "single", "multi")


@dataclass(frozen=True)
class AdversaryConfig:
    """Who is malicious and what they do.

    ``schedule`` optionally cycles per round through ``attack`` (configured
    strategy), ``benign`` (act honestly), ``single`` (one shared backdoor) or
    ``multi`` (``backdoors`` distinct backdoors).
    """

    pmr: float = 0.0
    strategy: str = "data_poison"
    triggers: tuple = ()
    pdr: float = 0.5
    pdr_range: tuple = (0.05, 0.20)
    backdoors: int = 1
    scale_factor: float = 1.0
    obfuscation_std: float = 0.034
    schedule: tuple = ()
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.pmr < 1.0:
            raise DomainError("adversary.pmr must lie in [0, 1)")
        if self.strategy not in STRATEGIES:
            raise DomainError(f"adversary.strategy must be one of {STRATEGIES}")
        if not 0.0 <= self.pdr <= 1.0:
            raise DomainError("adversary.pdr must lie in [0, 1]")
        if self.scale_factor < 0 or self.obfuscation_std < 0:
            raise DomainError("adversary.scale_factor and obfuscation_std must be >= 0")
        if self.backdoors < 1:
            raise DomainError("adversary.backdoors must be >= 1")
        bad = [s for s in self.schedule if s not in ROUND_BEHAVIOURS]
        if bad:
            raise DomainError(f"adversary.schedule entries must be in {ROUND_BEHAVIOURS}, got {bad}")
        object.__setattr__(self, "triggers", tuple(self.triggers))
        object.__setattr__(self, "schedule", tuple(self.schedule))

    @property
    def in_contract(self):
        return self.pmr < 0.5


def select_malicious(K, pmr, seed):
    """Exactly ``floor(pmr * K)`` client indices, sorted, stable for a given seed."""
    count = int(math.floor(pmr * K + 1e-9))
    if count == 0:
        return np.zeros(0, dtype=np.intp)
    rng = np.random.default_rng([seed, 0xADF])
    return np.sort(rng.choice(K, size=count, replace=False)).astype(np.intp)


def scale_update(update, global_model, gamma):
    """``global + gamma * (update - global)``."""
    if update.arch != global_model.arch:
        raise DimensionError("architecture mismatch")
    return update.with_params(global_model.params + gamma * (update.params - global_model.params))


def assign_backdoors(malicious_indices, triggers, m):
    """Split the malicious clients into ``m`` near-equal groups, group ``g`` gets ``triggers[g]``."""
    malicious = list(malicious_indices)
    if m < 1 or m > len(triggers):
        raise DomainError(f"need 1 <= m <= {len(triggers)} triggers, got m={m}")
    if m > len(malicious):
        raise DomainError(f"cannot split {len(malicious)} malicious clients into {m} groups")
    groups = np.array_split(np.asarray(malicious), m)
    return {int(c): triggers[g] for g, members in enumerate(groups) for c in members}


def align_pdrs(malicious_indices, pdr_range=(0.05, 0.20), seed=0):
    """Seeded uniform poisoned-data rate per malicious client within ``pdr_range``."""
    lo, hi = pdr_range
    if not (0.0 < lo <= hi <= 1.0):
        raise DomainError(f"pdr range must satisfy 0 < lo <= hi <= 1, got {pdr_range}")
    rng = np.random.default_rng([seed, 0xA119])
    draws = rng.uniform(lo, hi, size=len(malicious_indices))
    return {int(c): float(min(max(v, lo), hi)) for c, v in zip(malicious_indices, draws)}


def obfuscate(update, std, seed):
    """Add i.i.d. N(0, std^2) noise to every parameter."""
    if std < 0:
        raise DomainError("std must be >= 0")
    if std == 0:
        return update.copy()
    rng = np.random.default_rng([seed, 0x0BF])
    return update.with_params(update.params + rng.normal(0.0, std, size=update.params.shape))


def untargeted_random(global_model, seed):
    """Random parameters with the global model's per-coordinate RMS scale."""
    p = global_model.params.size
    scale = l2_norm(global_model.params) / math.sqrt(p) or 1.0
    rng = np.random.default_rng([seed, 0x42A])
    return global_model.with_params(rng.normal(0.0, scale, size=p))


@dataclass
class AttackPlan:
    """Per-client trigger and data rate for one federation run."""

    malicious: np.ndarray
    trigger_of: dict = field(default_factory=dict)
    pdr_of: dict = field(default_factory=dict)
    single_trigger_of: dict = field(default_factory=dict)


def make_plan(cfg, K):
    malicious = select_malicious(K, cfg.pmr, cfg.seed)
    plan = AttackPlan(malicious)
    if len(malicious) == 0 or cfg.strategy == "untargeted_random":
        return plan
    if not cfg.triggers:
        raise DomainError("adversary.triggers must be non-empty for targeted strategies")
    m = cfg.backdoors if cfg.strategy == "multi_backdoor" else 1
    plan.trigger_of = assign_backdoors(malicious, cfg.triggers, m)
    plan.single_trigger_of = assign_backdoors(malicious, cfg.triggers, 1)
    if cfg.strategy == "model_alignment":
        plan.pdr_of = align_pdrs(malicious, cfg.pdr_range, cfg.seed)
    else:
        plan.pdr_of = {int(c): cfg.pdr for c in malicious}
    return plan


def round_behaviour(cfg, round_index):
    if not cfg.schedule:
        return "attack"
    return cfg.schedule[round_index % len(cfg.schedule)]


def craft_update(cfg, plan, global_model, benign_data, train_cfg, client_index, round_index=0):
    """Poisoned model for malicious client ``client_index`` in this round."""
    c = int(client_index)
    if c not in set(plan.malicious.tolist()):
        raise DomainError(f"client {c} is not malicious under this configuration")
    behaviour = round_behaviour(cfg, round_index)
    if behaviour == "benign":
        return local_train(global_model, benign_data, train_cfg)
    if cfg.strategy == "untargeted_random":
        return untargeted_random(global_model, train_cfg.seed)
    trigger = plan.single_trigger_of[c] if behaviour == "single" else plan.trigger_of[c]
    if behaviour == "multi" and cfg.strategy != "multi_backdoor":
        trigger = assign_backdoors(plan.malicious, cfg.triggers, cfg.backdoors)[c]
    poisoned = poison_dataset(benign_data, trigger, plan.pdr_of[c], train_cfg.seed)
    update = local_train(global_model, poisoned, train_cfg)
    if cfg.strategy == "scaled_data_poison":
        update = scale_update(update, global_model, cfg.scale_factor)
    elif cfg.strategy == "obfuscate":
        update = obfuscate(update, cfg.obfuscation_std, train_cfg.seed)
    return update
