"""Multi-task datasets: CSV manifests, split protocol and a synthetic generator."""
from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np


class DataError(ValueError):
    pass


@dataclass
class Task:
    id: str
    features: np.ndarray
    targets: np.ndarray
    kind: str

    def __post_init__(self):
        self.features = np.atleast_2d(np.asarray(self.features, dtype=float))
        self.targets = np.asarray(self.targets, dtype=float).ravel()
        if self.kind not in ("classification", "regression"):
            raise DataError(f"unknown task kind {self.kind!r}")
        if self.features.shape[0] != self.targets.shape[0]:
            raise DataError(f"task {self.id}: {self.features.shape[0]} rows but "
                            f"{self.targets.shape[0]} targets")
        if not (np.all(np.isfinite(self.features)) and np.all(np.isfinite(self.targets))):
            raise DataError(f"task {self.id}: non-finite values")
        if self.kind == "classification" and not np.all(np.isin(self.targets, (-1.0, 1.0))):
            raise DataError(f"task {self.id}: classification targets must be -1/+1")

    @property
    def n(self):
        return self.targets.shape[0]

    def subset(self, idx):
        return Task(self.id, self.features[idx], self.targets[idx], self.kind)


@dataclass
class MultiTaskDataset:
    tasks: list = field(default_factory=list)

    def __post_init__(self):
        if self.tasks:
            dims = {t.features.shape[1] for t in self.tasks}
            if len(dims) > 1:
                raise DataError(f"inconsistent feature dimensions across tasks: {sorted(dims)}")
            kinds = {t.kind for t in self.tasks}
            if len(kinds) > 1:
                raise DataError("tasks mix classification and regression")

    @property
    def kind(self):
        return self.tasks[0].kind

    @property
    def T(self):
        return len(self.tasks)

    @property
    def features(self):
        return [t.features for t in self.tasks]

    @property
    def targets(self):
        return [t.targets for t in self.tasks]

    @property
    def sizes(self):
        return [t.n for t in self.tasks]


# ---------------------------------------------------------------------------
# CSV
# ---------------------------------------------------------------------------

def _parse_rows(path):
    with open(path, encoding="utf-8") as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    if not lines:
        raise DataError(f"{path}: empty file")
    rows = [ln.split(",") for ln in lines]
    start = 0
    try:
        [float(x) for x in rows[0]]
    except ValueError:
        start = 1  # header row
    width = len(rows[start]) if start < len(rows) else len(rows[0])
    out = []
    for r, row in enumerate(rows[start:], start=start + 1):
        if len(row) != width:
            raise DataError(f"{path}: row {r} has {len(row)} columns, expected {width}")
        vals = []
        for c, cell in enumerate(row, start=1):
            try:
                vals.append(float(cell))
            except ValueError:
                raise DataError(f"{path}: non-numeric cell {cell!r} at row {r}, column {c}") from None
        out.append(vals)
    if not out:
        raise DataError(f"{path}: no data rows")
    arr = np.array(out)
    if arr.shape[1] < 2:
        raise DataError(f"{path}: need a target column and at least one feature")
    return arr


def read_manifest(path):
    base = os.path.dirname(os.path.abspath(path))
    entries = []
    with open(path, encoding="utf-8") as fh:
        for ln in fh:
            ln = ln.split("#", 1)[0].strip()
            if ln:
                entries.append(ln if os.path.isabs(ln) else os.path.join(base, ln))
    if not entries:
        raise DataError(f"{path}: manifest lists no task files")
    return entries


def load_csv(manifest):
    """Load one CSV per task listed in ``manifest`` (first column is the target).

    Targets drawn from {-1, 0, 1} make a classification dataset, with 0
    mapped to -1; anything else is regression.
    """
    files = read_manifest(manifest)
    arrays = [_parse_rows(f) for f in files]
    dims = {a.shape[1] - 1 for a in arrays}
    if len(dims) > 1:
        raise DataError(f"inconsistent feature dimensions across task files: {sorted(dims)}")
    allt = np.concatenate([a[:, 0] for a in arrays])
    kind = "classification" if np.all(np.isin(allt, (-1.0, 0.0, 1.0))) else "regression"
    tasks = []
    for f, a in zip(files, arrays):
        y = a[:, 0].copy()
        if kind == "classification":
            y[y == 0] = -1.0
        tasks.append(Task(os.path.splitext(os.path.basename(f))[0], a[:, 1:], y, kind))
    return MultiTaskDataset(tasks)


def write_csv(data, directory, manifest_name="manifest.txt"):
    """Write one CSV per task plus a manifest; returns the manifest path."""
    os.makedirs(directory, exist_ok=True)
    names = []
    for t in data.tasks:
        name = f"{t.id}.csv"
        arr = np.column_stack([t.targets, t.features])
        np.savetxt(os.path.join(directory, name), arr, delimiter=",", fmt="%.17g")
        names.append(name)
    path = os.path.join(directory, manifest_name)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("# one task file per line\n")
        fh.write("\n".join(names) + "\n")
    return path


# ---------------------------------------------------------------------------
# splits
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SplitPlan:
    seed: int = 0
    train: float = 0.2
    validation: float = 0.4
    test: float = 0.4
    stratified: bool = True

    def __post_init__(self):
        fr = (self.train, self.validation, self.test)
        if min(fr) <= 0 or abs(sum(fr) - 1.0) > 1e-9:
            raise ValueError(f"split fractions must be positive and sum to 1, got {fr}")


def _allocate(total, counts):
    """Largest-remainder split of ``total`` proportionally to ``counts``."""
    counts = np.asarray(counts, dtype=float)
    exact = total * counts / counts.sum()
    base = np.floor(exact).astype(int)
    rem = total - base.sum()
    order = np.argsort(-(exact - base), kind="stable")
    base[order[:rem]] += 1
    return base


def split_indices(task, plan, rng):
    n = task.n
    n_tr = int(round(plan.train * n))
    n_va = int(round(plan.validation * n))
    if n_tr < 1 or n_va < 1 or n - n_tr - n_va < 1:
        raise DataError(f"task {task.id}: {n} samples are too few to split")
    if plan.stratified and task.kind == "classification":
        classes = [np.flatnonzero(task.targets == c) for c in (-1.0, 1.0)]
        counts = [len(c) for c in classes]
        if min(counts) < 5:
            raise DataError(f"task {task.id}: stratified split needs >= 5 samples per class")
        tr_k = _allocate(n_tr, counts)
        va_k = _allocate(n_va, [c - k for c, k in zip(counts, tr_k)])
        parts = ([], [], [])
        for idx, a, b in zip(classes, tr_k, va_k):
            idx = rng.permutation(idx)
            parts[0].append(idx[:a])
            parts[1].append(idx[a:a + b])
            parts[2].append(idx[a + b:])
        return tuple(np.sort(np.concatenate(p)) for p in parts)
    perm = rng.permutation(n)
    return (np.sort(perm[:n_tr]), np.sort(perm[n_tr:n_tr + n_va]), np.sort(perm[n_tr + n_va:]))


def split(data, plan=SplitPlan()):
    """Per-task train/validation/test partition; deterministic in ``plan.seed``."""
    out = ([], [], [])
    for t, task in enumerate(data.tasks):
        rng = np.random.default_rng([plan.seed, t])
        for part, idx in zip(out, split_indices(task, plan, rng)):
            part.append(task.subset(idx))
    return tuple(MultiTaskDataset(p) for p in out)


# ---------------------------------------------------------------------------
# synthetic related tasks
# ---------------------------------------------------------------------------

def synth_related_tasks(seed, T, n, p, relatedness=0.9, noise=0.3, kind="classification"):
    """Tasks with weights ``r w0 + (1 - r) u_t`` and standard normal features."""
    if T < 1 or n < 1 or p < 1:
        raise ValueError("T, n and p must be positive")
    if not 0.0 <= relatedness <= 1.0:
        raise ValueError("relatedness must lie in [0, 1]")
    rng = np.random.default_rng(seed)
    w0 = rng.standard_normal(p)
    tasks = []
    for t in range(T):
        w = relatedness * w0 + (1.0 - relatedness) * rng.standard_normal(p)
        X = rng.standard_normal((n, p))
        z = X @ w + noise * rng.standard_normal(n)
        y = np.where(z >= 0, 1.0, -1.0) if kind == "classification" else z
        tasks.append(Task(f"task{t}", X, y, kind))
    return MultiTaskDataset(tasks)
