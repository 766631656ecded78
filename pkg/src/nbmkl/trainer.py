"""Block coordinate descent training, baselines, prediction and reports."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import svm
from .blocks import build_A, build_b, build_c, build_q, per_task
from .bounds import omega
from .kernels import KernelBank, alignment, build_bank
from .subproblems import (HyperParams, NeighborhoodSet, ThetaParams, combined_kernel,
                          nonneg_qp, solve_neighborhood, solve_theta)

METHODS = ("MT-ONMKL", "ITL", "AVMTMKL", "MT-MKL", "KTA")


@dataclass
class TraceEntry:
    iteration: int
    step: str
    objective: float


@dataclass
class TrainedModel:
    method: str
    kind: str
    theta: ThetaParams
    solutions: list
    neighborhood: NeighborhoodSet | None
    specs: list
    features: list
    targets: list
    hp: HyperParams
    trace: list = field(default_factory=list)
    center: np.ndarray | None = None
    scale: np.ndarray | None = None

    @property
    def T(self):
        return len(self.solutions)

    def _bank_view(self):
        return KernelBank([np.zeros((len(self.specs), 0, 0))], self.specs, self.center, self.scale)

    def kernel_rows(self, task, X):
        """Combined kernel between new rows and the task's training rows."""
        cross = self._bank_view().cross(self.features[task], np.atleast_2d(X))
        return np.tensordot(self.theta.task_weights()[task], cross, axes=1)

    def decision(self, task, X):
        return svm.decision(self.solutions[task], self.kernel_rows(task, X))

    def predict(self, task, X):
        return svm.predict(self.solutions[task], self.kernel_rows(task, X))

    def objective_trace(self):
        return [e.objective for e in self.trace]


# ---------------------------------------------------------------------------
# objective
# ---------------------------------------------------------------------------

def task_primal(K, sol, y, kind, C, epsilon):
    """``0.5 |w|^2 + C * loss`` for the expansion stored in ``sol``."""
    f = K @ sol.coef + sol.bias
    reg = 0.5 * float(sol.coef @ K @ sol.coef)
    if kind == "classification":
        loss = np.maximum(0.0, 1.0 - y * f)
    else:
        loss = np.maximum(0.0, np.abs(y - f) - epsilon)
    return reg + C * float(loss.sum())


def fit_term(bank, theta, nbhd):
    return float(sum(np.sum((combined_kernel(bank, theta, t) - K) ** 2)
                     for t, K in enumerate(nbhd.matrices)))


def primal_objective(bank, cache, theta, solutions, targets, kind, hp, nbhd=None):
    """Full primal: SVM terms, plus ``(eta/2) fit + (beta/2) Omega`` when ``nbhd`` is given."""
    val = sum(task_primal(combined_kernel(bank, theta, t), s, targets[t], kind, hp.C, hp.epsilon)
              for t, s in enumerate(solutions))
    if nbhd is not None:
        val += 0.5 * hp.eta * fit_term(bank, theta, nbhd)
        if hp.beta:
            val += 0.5 * hp.beta * omega(cache, build_b(bank, nbhd), build_c(nbhd))
    return val


# ---------------------------------------------------------------------------
# block steps
# ---------------------------------------------------------------------------

def _solve_task(K, y, kind, hp, alpha0=None, tol=None):
    tol = hp.svm_tol if tol is None else tol
    if kind == "classification":
        return svm.solve_svc(K, y, hp.C, tol=tol, alpha0=alpha0)
    return svm.solve_svr(K, y, hp.C, hp.epsilon, tol=tol, alpha0=alpha0)


def svm_step(bank, theta, targets, kind, hp, previous=None, safeguard=True):
    """Re-solve every task's dual on ``K_t(theta)``.

    With ``safeguard`` a task keeps its previous solution when the new one
    does not lower its primal value (guards against solver tolerance noise).
    """
    out = []
    for t in range(bank.tasks):
        K = combined_kernel(bank, theta, t)
        old = None if previous is None else previous[t]
        new = _solve_task(K, targets[t], kind, hp, None if old is None else old.alpha)
        if safeguard and old is not None:
            if (task_primal(K, new, targets[t], kind, hp.C, hp.epsilon)
                    > task_primal(K, old, targets[t], kind, hp.C, hp.epsilon)):
                new = old
        out.append(new)
    return out


def _duals_for_q(solutions):
    return [s.coef for s in solutions]


def theta_step(bank, cache, theta, solutions, targets, kind, hp, nbhd, safeguard=True,
               printed=False):
    """Kernel-weight update; backtracks toward the old weights if the primal rises."""
    b = build_b(bank, nbhd)
    q = build_q(bank, _duals_for_q(solutions))
    cand = solve_theta(cache, b, q, hp.eta, hp.theta_tol, printed)
    if not safeguard:
        return cand

    def P(th):
        return primal_objective(bank, cache, th, solutions, targets, kind, hp, nbhd)

    base = P(theta)
    step = cand.vec - theta.vec
    s = 1.0
    for _ in range(40):
        trial = ThetaParams(theta.vec + s * step, theta.M, theta.T)
        if P(trial) <= base:
            return trial
        s *= 0.5
    return theta


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------

def _check(bank, data):
    if bank.tasks != data.T:
        raise ValueError(f"bank has {bank.tasks} tasks, dataset has {data.T}")
    if list(bank.sizes) != list(data.sizes):
        raise ValueError("bank task sizes do not match the dataset")


def _model(method, data, bank, theta, sols, nbhd, hp, trace):
    return TrainedModel(method, data.kind, theta, sols, nbhd, list(bank.specs),
                        [t.features.copy() for t in data.tasks],
                        [t.targets.copy() for t in data.tasks], hp, trace,
                        bank.center, bank.scale)


def train_mtonmkl(bank, data, hp=None, fixed_neighborhood=None, form="exact",
                  order=("nbhd", "svm", "theta"), safeguard=True, printed_theta=False,
                  cache=None):
    """Alternate neighborhood, SVM and kernel-weight updates.

    ``fixed_neighborhood`` freezes the neighborhood block (the KTA baseline
    passes ``y y'``).  The trace records the primal after every block step
    once dual variables exist.
    """
    hp = hp or HyperParams()
    _check(bank, data)
    kind, targets = data.kind, data.targets
    cache = cache or build_A(bank)
    theta = ThetaParams.uniform(bank.bases, bank.tasks)
    nbhd = fixed_neighborhood
    sols = None
    trace = []
    prev_end = None

    def record(it, step):
        if sols is not None and nbhd is not None:
            trace.append(TraceEntry(it, step, primal_objective(
                bank, cache, theta, sols, targets, kind, hp, nbhd)))

    for it in range(hp.max_outer):
        for step in order:
            if step == "nbhd":
                if fixed_neighborhood is None:
                    nbhd = solve_neighborhood(cache, bank, theta, hp.eta, hp.beta, form)
            elif step == "svm":
                sols = svm_step(bank, theta, targets, kind, hp, sols, safeguard)
            elif step == "theta":
                if sols is None or nbhd is None:
                    continue
                theta = theta_step(bank, cache, theta, sols, targets, kind, hp, nbhd,
                                   safeguard, printed_theta)
            else:
                raise ValueError(f"unknown block {step!r}")
            record(it, step)
        if trace:
            end = trace[-1].objective
            if prev_end is not None and (prev_end - end) <= hp.rel_tol * abs(prev_end):
                break
            prev_end = end
    method = "MT-ONMKL" if fixed_neighborhood is None else "KTA"
    return _model(method, data, bank, theta, sols, nbhd, hp, trace)


def _normalize_mixed(vec, M, T):
    mu, lam = vec[:M], vec[M:].reshape(M, T)
    total = np.linalg.norm(mu) + np.linalg.norm(lam, axis=0).sum()
    return vec / total if total > 0 else vec


def _train_mtmkl(bank, data, hp, cache=None):
    kind, targets = data.kind, data.targets
    M, T = bank.bases, bank.tasks
    cache = cache or build_A(bank)
    theta = ThetaParams(_normalize_mixed(ThetaParams.uniform(M, T).vec, M, T), M, T)
    sols = None
    trace = []
    prev = None
    for it in range(hp.max_outer):
        sols = svm_step(bank, theta, targets, kind, hp, sols, safeguard=False)
        val = primal_objective(bank, cache, theta, sols, targets, kind, hp)
        trace.append(TraceEntry(it, "svm", val))
        if prev is not None and abs(prev - val) <= hp.rel_tol * abs(prev):
            break
        prev = val
        q = build_q(bank, _duals_for_q(sols))
        x, _ = nonneg_qp(cache.A, q)
        if not np.any(x > 0):
            break
        theta = ThetaParams(_normalize_mixed(x, M, T), M, T)
    return theta, sols, trace


def train_baseline(method, bank, data, hp=None):
    """ITL, AVMTMKL, MT-MKL or KTA."""
    hp = hp or HyperParams()
    _check(bank, data)
    M, T = bank.bases, bank.tasks
    if method == "AVMTMKL":
        theta = ThetaParams.uniform(M, T)
        sols = svm_step(bank, theta, data.targets, data.kind, hp, None, safeguard=False)
        cache = build_A(bank)
        val = primal_objective(bank, cache, theta, sols, data.targets, data.kind, hp)
        return _model(method, data, bank, theta, sols, None, hp, [TraceEntry(0, "svm", val)])
    if method == "MT-MKL":
        theta, sols, trace = _train_mtmkl(bank, data, hp)
        return _model(method, data, bank, theta, sols, None, hp, trace)
    if method == "ITL":
        from .data import MultiTaskDataset
        W = np.zeros((T, M))
        sols, trace = [], []
        for t in range(T):
            sub = KernelBank([bank.gram[t]], bank.specs, bank.center, bank.scale)
            th, s, tr = _train_mtmkl(sub, MultiTaskDataset([data.tasks[t]]), hp)
            W[t] = th.task_weights()[0]
            sols += s
            trace += [TraceEntry(e.iteration, f"task{t}", e.objective) for e in tr]
        return _model(method, data, bank, ThetaParams.from_task_weights(W), sols, None, hp, trace)
    if method == "KTA":
        return train_mtonmkl(bank, data, hp, NeighborhoodSet.targets(data.targets))
    if method == "MT-ONMKL":
        return train_mtonmkl(bank, data, hp)
    raise ValueError(f"unknown method {method!r}")


def train(method, data, hp=None, specs=None, zscore=False, **kw):
    """Build the bank for ``data`` and train ``method``."""
    bank = build_bank(data, specs, zscore=zscore)
    if method == "MT-ONMKL":
        return train_mtonmkl(bank, data, hp, **kw)
    return train_baseline(method, bank, data, hp)


# ---------------------------------------------------------------------------
# evaluation and reports
# ---------------------------------------------------------------------------

@dataclass
class Metrics:
    kind: str
    per_task: list
    mean: float


def evaluate(model, test):
    """Per-task and mean accuracy (classification) or MSE (regression)."""
    if test.T != model.T:
        raise ValueError(f"test split has {test.T} tasks, model has {model.T}")
    scores = []
    for t, task in enumerate(test.tasks):
        if task.n == 0:
            raise ValueError(f"task {task.id}: empty test split")
        pred = model.predict(t, task.features)
        if model.kind == "classification":
            scores.append(float(np.mean(pred == task.targets)))
        else:
            scores.append(float(np.mean((pred - task.targets) ** 2)))
    return Metrics(model.kind, scores, float(np.mean(scores)))


def training_bank(model):
    return build_bank(model.features, model.specs) if model.center is None else \
        _rebuild_with_stats(model)


def _rebuild_with_stats(model):
    from .kernels import gram, normalize_gram
    grams = []
    for X in model.features:
        Z = (X - model.center) / model.scale
        grams.append(np.stack([normalize_gram(gram(s, Z)) for s in model.specs]))
    return KernelBank(grams, model.specs, model.center, model.scale)


def alignment_report(model, bank=None):
    """``T x T`` matrix of ``alignment(K_s(theta), Khat_t)``; NaN where sizes differ."""
    if model.neighborhood is None:
        raise ValueError(f"{model.method} model has no neighborhood matrices")
    bank = bank or training_bank(model)
    T = model.T
    out = np.full((T, T), np.nan)
    for s in range(T):
        Ks = combined_kernel(bank, model.theta, s)
        for t, Kh in enumerate(model.neighborhood.matrices):
            if Ks.shape == np.shape(Kh):
                out[s, t] = alignment(Ks, Kh)
    return out
