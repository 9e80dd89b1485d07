"""Synthetic classification tasks, non-IID client partitioning and trigger poisoning."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .linalg import DimensionError, DomainError


@dataclass
class LabeledDataset:
    X: np.ndarray
    y: np.ndarray
    num_classes: int

    def __post_init__(self):
        self.X = np.ascontiguousarray(self.X, dtype=np.float64)
        self.y = np.ascontiguousarray(self.y, dtype=np.intp)
        if self.X.ndim != 2 or self.y.shape != (self.X.shape[0],):
            raise DimensionError(f"inconsistent dataset shapes X{self.X.shape} y{self.y.shape}")
        if self.y.size and (self.y.min() < 0 or self.y.max() >= self.num_classes):
            raise DomainError("labels outside [0, num_classes)")

    def __len__(self):
        return self.X.shape[0]

    @property
    def dim(self):
        return self.X.shape[1]

    def subset(self, idx):
        idx = np.asarray(idx, dtype=np.intp)
        return LabeledDataset(self.X[idx], self.y[idx], self.num_classes)

    def to_csv(self, path):
        """Write ``f0..f{d-1},label`` rows; floats use ``repr`` so replay is exact."""
        path = Path(path)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([f"f{i}" for i in range(self.dim)] + ["label"])
            for row, label in zip(self.X, self.y):
                w.writerow([repr(float(v)) for v in row] + [int(label)])

    @classmethod
    def from_csv(cls, path, num_classes=None):
        with Path(path).open(newline="") as fh:
            r = csv.reader(fh)
            header = next(r)
            if header[-1] != "label" or header[:-1] != [f"f{i}" for i in range(len(header) - 1)]:
                raise DomainError(f"unexpected CSV header: {header}")
            rows = list(r)
        X = np.array([[float(v) for v in row[:-1]] for row in rows], dtype=np.float64).reshape(len(rows), len(header) - 1)
        y = np.array([int(row[-1]) for row in rows], dtype=np.intp)
        if num_classes is None:
            num_classes = int(y.max()) + 1 if y.size else 2
        return cls(X, y, num_classes)


@dataclass(frozen=True)
class TriggerSpec:
    feature_indices: tuple
    trigger_values: tuple
    target_label: int = 0

    def __post_init__(self):
        idx = tuple(int(i) for i in self.feature_indices)
        vals = tuple(float(v) for v in self.trigger_values)
        if len(set(idx)) != len(idx):
            raise DomainError("trigger feature indices must be distinct")
        if len(vals) != len(idx):
            raise DimensionError("one trigger value per feature index is required")
        if any(i < 0 for i in idx):
            raise DomainError("negative trigger feature index")
        object.__setattr__(self, "feature_indices", idx)
        object.__setattr__(self, "trigger_values", vals)


@dataclass(frozen=True)
class PartitionSpec:
    K: int
    deg_niid: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.K < 2:
            raise DomainError("need at least two clients")
        if not 0.0 <= self.deg_niid <= 1.0:
            raise DomainError("deg_niid must lie in [0, 1]")


def round_half_away(x):
    """Round half away from zero (``round(2.5) == 3``, ``round(-2.5) == -3``)."""
    return int(math.copysign(math.floor(abs(x) + 0.5), x))


def class_centers(seed, num_classes, d, separation=6.0, informative=None):
    """Seeded class centers with pairwise distance at least ``separation``.

    Only the first ``informative`` coordinates carry class signal; the rest
    are zero for every class.
    """
    informative = d if informative is None else informative
    if not num_classes <= informative <= d:
        raise DomainError("need num_classes <= informative <= d")
    rng = np.random.default_rng([seed, 0xC3])
    # orthogonal directions guarantee separation regardless of the draw
    q, _ = np.linalg.qr(rng.standard_normal((informative, num_classes)))
    centers = np.zeros((num_classes, d))
    centers[:, :informative] = q.T * (separation / math.sqrt(2.0))
    return centers


def generate_task(seed, num_classes, d, n, separation=6.0, informative=None, noise=1.0):
    """Balanced Gaussian blobs, one per class, around :func:`class_centers`."""
    if num_classes < 2 or d < num_classes or n < num_classes:
        raise DomainError("need num_classes >= 2, d >= num_classes, n >= num_classes")
    centers = class_centers(seed, num_classes, d, separation, informative)
    rng = np.random.default_rng([seed, 0xDA7A])
    y = np.arange(n, dtype=np.intp) % num_classes
    rng.shuffle(y)
    X = centers[y] + noise * rng.standard_normal((n, d))
    return LabeledDataset(X, y, num_classes)


def split(data, fractions, seed):
    """Seeded disjoint split of ``data`` into parts with the given size fractions."""
    rng = np.random.default_rng([seed, 0x5917])
    perm = rng.permutation(len(data))
    cuts = np.floor(np.cumsum(fractions)[:-1] * len(data)).astype(int)
    return [data.subset(np.sort(p)) for p in np.split(perm, cuts)]


def partition_noniid(data, spec):
    """Split ``data`` across ``spec.K`` clients.

    Client ``k`` is designated class ``k % num_classes``.  Every client gets
    ``n // K`` samples (the first ``n % K`` clients one more); a fraction
    ``deg_niid`` of them (floored) comes from the designated class while
    available, the remainder uniformly from what is left.
    """
    n, K = len(data), spec.K
    if K > n:
        raise DomainError(f"cannot split {n} samples across {K} clients")
    rng = np.random.default_rng([spec.seed, 0x9A27])
    sizes = [n // K + (1 if k < n % K else 0) for k in range(K)]
    pools = {c: list(rng.permutation(np.flatnonzero(data.y == c))) for c in range(data.num_classes)}
    taken = np.zeros(n, dtype=bool)
    owned = [[] for _ in range(K)]
    for k in range(K):
        c = k % data.num_classes
        want = min(int(math.floor(spec.deg_niid * sizes[k])), len(pools[c]))
        picked = pools[c][:want]
        pools[c] = pools[c][want:]
        owned[k].extend(picked)
        taken[picked] = True
    rest = rng.permutation(np.flatnonzero(~taken))
    pos = 0
    for k in range(K):
        need = sizes[k] - len(owned[k])
        owned[k].extend(rest[pos:pos + need])
        pos += need
    return [data.subset(np.sort(np.asarray(o, dtype=np.intp))) for o in owned]


def apply_trigger(x, trig):
    """Copy of ``x`` (one sample or a batch) with trigger values written in."""
    out = np.array(x, dtype=np.float64, copy=True)
    if not trig.feature_indices:
        return out
    d = out.shape[-1]
    if max(trig.feature_indices) >= d:
        raise DimensionError(f"trigger index {max(trig.feature_indices)} out of range for d={d}")
    out[..., list(trig.feature_indices)] = trig.trigger_values
    return out


def poison_dataset(data, trig, pdr, seed):
    """Trigger ``round(pdr * n)`` seeded-random samples and relabel them to the target."""
    if not 0.0 <= pdr <= 1.0:
        raise DomainError("pdr must lie in [0, 1]")
    n = len(data)
    count = round_half_away(pdr * n)
    X = data.X.copy()
    y = data.y.copy()
    if count:
        rng = np.random.default_rng([seed, 0xBAD])
        idx = np.sort(rng.choice(n, size=count, replace=False))
        X[idx] = apply_trigger(X[idx], trig)
        y[idx] = trig.target_label
    return LabeledDataset(X, y, data.num_classes)


def backdoor_testset(data, trig):
    """Held-out non-target samples with the trigger applied (labels kept as true labels)."""
    keep = data.y != trig.target_label
    return LabeledDataset(apply_trigger(data.X[keep], trig), data.y[keep], data.num_classes)


def disjoint_triggers(m, d, width=3, value=4.0, target_label=0, start=None):
    """``m`` triggers over disjoint feature blocks taken from the end of the feature range."""
    start = d - m * width if start is None else start
    if start < 0 or start + m * width > d:
        raise DomainError(f"cannot fit {m} triggers of width {width} into d={d}")
    return [
        TriggerSpec(tuple(range(start + g * width, start + (g + 1) * width)), (value,) * width, target_label)
        for g in range(m)
    ]
