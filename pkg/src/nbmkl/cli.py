"""Command-line entry point.

Commands::

    nbmkl synth       --config cfg --out DIR        write a synthetic dataset as CSV
    nbmkl build-bank  --config cfg --out DIR        cache the kernel bank of a dataset
    nbmkl train       --config cfg --out DIR        fixed hyperparameters, repeated splits
    nbmkl tune        --config cfg --out DIR        grid search on the validation split
    nbmkl report      --model FILE --out DIR        bound, regularizer and alignment matrix

Any config value can be overridden with a flag named ``--section.key``, e.g.
``--train.C 4`` or ``--split.train=0.3``.  Exit status: 0 on success, 2 for
usage or config problems, 3 when the computation itself fails.
"""
from __future__ import annotations

import argparse
import configparser
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .blocks import build_A, build_b, build_c
from .bounds import BoundInputs, NegativeRadicandError, omega, rademacher_bound
from .data import DataError, SplitPlan, load_csv, split, synth_related_tasks, write_csv
from .kernels import KernelSpec, build_bank, save_bank
from .linalg import FactorizationError
from .modelfile import ModelFileError, load_model, save_model
from .subproblems import HyperParams, NeighborhoodSet
from .svm import DegenerateTaskError
from .trainer import METHODS, alignment_report, evaluate, train_baseline, train_mtonmkl, \
    training_bank

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3

TRACE_COLUMNS = ("repeat", "seed", "method", "iteration", "step", "objective")
METRIC_COLUMNS = ("repeat", "seed", "method", "split", "task", "score")
SUMMARY_COLUMNS = ("method", "metric", "split", "repeats", "mean", "std")
GRID_COLUMNS = ("repeat", "seed", "method", "C", "eta", "beta", "epsilon", "validation")
BEST_COLUMNS = ("repeat", "seed", "method", "C", "eta", "beta", "epsilon", "validation", "test")


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# config
# ---------------------------------------------------------------------------

DEFAULTS = {
    "data": {"manifest": "", "zscore": "false"},
    "synth": {"seed": "0", "tasks": "3", "n": "60", "p": "5", "relatedness": "0.9",
              "noise": "0.3", "kind": "classification"},
    "kernels": {"linear": "true", "polynomial_degree": "2", "polynomial_offset": "1",
                "gaussian_spreads": "pow2:1:8", "width_mode": "2s2"},
    "train": {"method": "MT-ONMKL", "C": "1", "eta": "64", "beta": "1", "epsilon": "0.1",
              "svm_tol": "1e-5", "theta_tol": "1e-8", "max_outer": "50", "rel_tol": "1e-5",
              "neighborhood_form": "exact", "order": "nbhd,svm,theta"},
    "tune": {"C": "pow2:-13:13", "eta": "pow2:0:40", "beta": "pow2:0:40", "epsilon": "",
             "tune_once": "false"},
    "split": {"train": "0.2", "validation": "0.4", "test": "0.4", "stratified": "true"},
    "run": {"repeats": "1", "seed_base": "0", "workers": "0", "out": ""},
    "bound": {"R": "1", "rho": ""},
}


def parse_grid(text):
    """``pow2:a:b`` for ``2^a..2^b``, or a comma-separated list."""
    text = text.strip()
    if not text:
        return []
    if text.startswith("pow2:"):
        try:
            _, lo, hi = text.split(":")
            return [2.0 ** k for k in range(int(lo), int(hi) + 1)]
        except ValueError as exc:
            raise ConfigError(f"bad grid {text!r}; expected pow2:LOW:HIGH") from exc
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise ConfigError(f"bad grid {text!r}") from exc


def _bool(section, key, raw):
    low = raw.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off", ""):
        return False
    raise ConfigError(f"[{section}] {key}: expected a boolean, got {raw!r}")


@dataclass
class RunConfig:
    manifest: str
    synth: dict | None
    zscore: bool
    specs: list
    method: str
    hp: HyperParams
    form: str
    order: tuple
    grids: dict
    tune_once: bool
    plan: SplitPlan
    repeats: int
    seed_base: int
    workers: int
    out: str
    R: float = 1.0
    rho: float | None = None
    raw: dict = field(default_factory=dict)


def read_config(path, overrides=(), need_data=True):
    """Merge defaults, the config file and ``--section.key`` overrides."""
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    cp.read_dict(DEFAULTS)
    has_synth = False
    if path:
        if not Path(path).is_file():
            raise ConfigError(f"config file {path} does not exist")
        try:
            with open(path, encoding="utf-8") as fh:
                text = fh.read()
            probe = configparser.ConfigParser(interpolation=None)
            probe.optionxform = str
            probe.read_string(text, source=str(path))
            cp.read_string(text, source=str(path))
        except configparser.Error as exc:
            raise ConfigError(str(exc)) from exc
        has_synth = probe.has_section("synth")
    for key, value in overrides:
        section, _, name = key.partition(".")
        if not name or section not in DEFAULTS or name not in DEFAULTS[section]:
            raise ConfigError(f"unknown setting --{key}")
        cp.set(section, name, value)
        has_synth |= section == "synth"
    return _build(cp, has_synth, path, need_data)


def _num(cp, section, key, cast=float):
    raw = cp.get(section, key)
    try:
        return cast(raw)
    except ValueError as exc:
        raise ConfigError(f"[{section}] {key}: cannot read {raw!r}") from exc


def _build(cp, has_synth, path, need_data=True):
    base = Path(path).parent if path else Path(".")
    manifest = cp.get("data", "manifest").strip()
    if manifest:
        mp = Path(manifest)
        mp = mp if mp.is_absolute() else base / mp
        if not mp.is_file():
            raise ConfigError(f"manifest {mp} does not exist")
        manifest = str(mp)
    synth = None
    if not manifest:
        if not has_synth and need_data:
            raise ConfigError("no dataset: set [data] manifest or give a [synth] section")
        synth = {"seed": _num(cp, "synth", "seed", int), "T": _num(cp, "synth", "tasks", int),
                 "n": _num(cp, "synth", "n", int), "p": _num(cp, "synth", "p", int),
                 "relatedness": _num(cp, "synth", "relatedness"),
                 "noise": _num(cp, "synth", "noise"), "kind": cp.get("synth", "kind").strip()}
        if synth["kind"] not in ("classification", "regression"):
            raise ConfigError(f"[synth] kind: unknown kind {synth['kind']!r}")

    specs = []
    if _bool("kernels", "linear", cp.get("kernels", "linear")):
        specs.append(KernelSpec("linear"))
    deg = cp.get("kernels", "polynomial_degree").strip()
    if deg and deg != "0":
        specs.append(KernelSpec("polynomial", degree=_num(cp, "kernels", "polynomial_degree", int),
                                offset=_num(cp, "kernels", "polynomial_offset")))
    mode = cp.get("kernels", "width_mode").strip()
    try:
        for s in parse_grid(cp.get("kernels", "gaussian_spreads")):
            specs.append(KernelSpec("gaussian", spread=s, width_mode=mode))
    except ValueError as exc:
        raise ConfigError(f"[kernels] {exc}") from exc
    if not specs:
        raise ConfigError("[kernels] selects no base kernels")

    method = cp.get("train", "method").strip()
    if method not in METHODS:
        raise ConfigError(f"unknown method {method!r}; choose from {', '.join(METHODS)}")
    try:
        hp = HyperParams(C=_num(cp, "train", "C"), eta=_num(cp, "train", "eta"),
                         beta=_num(cp, "train", "beta"), epsilon=_num(cp, "train", "epsilon"),
                         svm_tol=_num(cp, "train", "svm_tol"),
                         theta_tol=_num(cp, "train", "theta_tol"),
                         max_outer=_num(cp, "train", "max_outer", int),
                         rel_tol=_num(cp, "train", "rel_tol"))
    except ValueError as exc:
        raise ConfigError(f"[train] {exc}") from exc
    form = cp.get("train", "neighborhood_form").strip()
    if form not in ("exact", "printed"):
        raise ConfigError(f"[train] neighborhood_form: unknown form {form!r}")
    order = tuple(s.strip() for s in cp.get("train", "order").split(",") if s.strip())
    if sorted(order) != ["nbhd", "svm", "theta"]:
        raise ConfigError(f"[train] order must be a permutation of nbhd,svm,theta, got {order}")

    grids = {k: parse_grid(cp.get("tune", k)) for k in ("C", "eta", "beta", "epsilon")}
    try:
        plan = SplitPlan(0, _num(cp, "split", "train"), _num(cp, "split", "validation"),
                         _num(cp, "split", "test"),
                         _bool("split", "stratified", cp.get("split", "stratified")))
    except ValueError as exc:
        raise ConfigError(f"[split] {exc}") from exc
    repeats = _num(cp, "run", "repeats", int)
    workers = _num(cp, "run", "workers", int)
    if repeats < 1:
        raise ConfigError("[run] repeats must be at least 1")
    if workers < 0:
        raise ConfigError("[run] workers must be nonnegative")
    rho = cp.get("bound", "rho").strip()
    return RunConfig(manifest, synth, _bool("data", "zscore", cp.get("data", "zscore")), specs,
                     method, hp, form, order, grids,
                     _bool("tune", "tune_once", cp.get("tune", "tune_once")), plan, repeats,
                     _num(cp, "run", "seed_base", int), workers or (os.cpu_count() or 1),
                     cp.get("run", "out").strip(), _num(cp, "bound", "R"),
                     float(rho) if rho else None,
                     {s: dict(cp.items(s)) for s in cp.sections()})


def tuning_grid(cfg, method, kind):
    """Candidate hyperparameters in tie-break order (smaller C, eta, beta first)."""
    Cs = sorted(cfg.grids["C"]) or [cfg.hp.C]
    eps = sorted(cfg.grids["epsilon"]) or [cfg.hp.epsilon]
    if kind != "regression":
        eps = [cfg.hp.epsilon]
    if method in ("MT-ONMKL", "KTA"):
        etas = sorted(cfg.grids["eta"]) or [cfg.hp.eta]
        betas = sorted(cfg.grids["beta"]) or [cfg.hp.beta]
        pairs = [(e, b) for e in etas for b in betas if b == 0 or e > 4 * b]
    else:
        pairs = [(cfg.hp.eta, cfg.hp.beta)]
    grid = [replace(cfg.hp, C=C, eta=e, beta=b, epsilon=ep)
            for C in Cs for e, b in pairs for ep in eps]
    if not grid:
        raise ConfigError("hyperparameter grid is empty after filtering eta > 4*beta")
    return grid


# ---------------------------------------------------------------------------
# work units (module level so worker processes can pickle them)
# ---------------------------------------------------------------------------

def load_dataset(cfg):
    if cfg.manifest:
        return load_csv(cfg.manifest)
    s = cfg.synth
    return synth_related_tasks(s["seed"], s["T"], s["n"], s["p"], s["relatedness"],
                               s["noise"], s["kind"])


def fit(method, bank, data, hp, cfg):
    if method == "MT-ONMKL":
        return train_mtonmkl(bank, data, hp, form=cfg.form, order=cfg.order)
    if method == "KTA":
        return train_mtonmkl(bank, data, hp, NeighborhoodSet.targets(data.targets),
                             form=cfg.form, order=cfg.order)
    return train_baseline(method, bank, data, hp)


def _splits(cfg, data, seed):
    return split(data, replace(cfg.plan, seed=seed))


def _score_point(args):
    cfg, data, method, seed, hp = args
    tr, va, _ = _splits(cfg, data, seed)
    bank = build_bank(tr, cfg.specs, zscore=cfg.zscore)
    model = fit(method, bank, tr, hp, cfg)
    return evaluate(model, va).mean


def _better(kind, a, b):
    return a > b if kind == "classification" else a < b


def _fit_repeat(args):
    cfg, data, method, seed, hp = args
    tr, va, te = _splits(cfg, data, seed)
    bank = build_bank(tr, cfg.specs, zscore=cfg.zscore)
    model = fit(method, bank, tr, hp, cfg)
    return model, evaluate(model, va), evaluate(model, te)


def _map(cfg, fn, jobs):
    if cfg.workers <= 1 or len(jobs) <= 1:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=min(cfg.workers, len(jobs))) as pool:
        return list(pool.map(fn, jobs))


# ---------------------------------------------------------------------------
# CSV output
# ---------------------------------------------------------------------------

def _fmt(v):
    if isinstance(v, float):
        return "nan" if math.isnan(v) else repr(v)
    return str(v)


def write_rows(path, columns, rows):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def _metric_rows(r, seed, method, split_name, metrics):
    rows = [(r, seed, method, split_name, t, float(s)) for t, s in enumerate(metrics.per_task)]
    rows.append((r, seed, method, split_name, "mean", float(metrics.mean)))
    return rows


def _summary(method, kind, per_repeat):
    metric = "accuracy" if kind == "classification" else "mse"
    rows = []
    for split_name in ("validation", "test"):
        vals = np.array([m[split_name] for m in per_repeat])
        std = float(vals.std(ddof=1)) if len(vals) > 1 else 0.0
        rows.append((method, metric, split_name, len(vals), float(vals.mean()), std))
    return rows


def _write_run(out, cfg, method, kind, results, seeds, extra=None):
    trace_rows, metric_rows, per_repeat = [], [], []
    for r, (seed, (model, va, te)) in enumerate(zip(seeds, results)):
        save_model(model, out / f"model_r{r}.nbm")
        trace_rows += [(r, seed, method, e.iteration, e.step, float(e.objective))
                       for e in model.trace]
        metric_rows += _metric_rows(r, seed, method, "validation", va)
        metric_rows += _metric_rows(r, seed, method, "test", te)
        per_repeat.append({"validation": va.mean, "test": te.mean})
    write_rows(out / "trace.csv", TRACE_COLUMNS, trace_rows)
    write_rows(out / "metrics.csv", METRIC_COLUMNS, metric_rows)
    summary = _summary(method, kind, per_repeat)
    write_rows(out / "summary.csv", SUMMARY_COLUMNS, summary)
    for row in summary:
        print(f"{row[0]} {row[1]} {row[2]}: {row[4]:.4f} +/- {row[5]:.4f} over {row[3]} repeats")


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def _outdir(cfg):
    if not cfg.out:
        raise ConfigError("no output directory: pass --out or set [run] out")
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_synth(cfg):
    if cfg.synth is None:
        raise ConfigError("synth needs a [synth] section")
    out = _outdir(cfg)
    path = write_csv(load_dataset(cfg), out)
    print(f"wrote {path}")


def cmd_build_bank(cfg):
    out = _outdir(cfg)
    data = load_dataset(cfg)
    bank = build_bank(data, cfg.specs, zscore=cfg.zscore)
    path = out / "bank.nbkb"
    save_bank(bank, path)
    print(f"wrote {path} ({bank.tasks} tasks, {bank.bases} kernels)")


def cmd_train(cfg):
    out = _outdir(cfg)
    data = load_dataset(cfg)
    seeds = [cfg.seed_base + r for r in range(cfg.repeats)]
    jobs = [(cfg, data, cfg.method, s, cfg.hp) for s in seeds]
    results = _map(cfg, _fit_repeat, jobs)
    _write_run(out, cfg, cfg.method, data.kind, results, seeds)


def _select(kind, grid, scores):
    best = 0
    for i in range(1, len(grid)):
        if _better(kind, scores[i], scores[best]):
            best = i
    return grid[best]


def cmd_tune(cfg):
    out = _outdir(cfg)
    data = load_dataset(cfg)
    grid = tuning_grid(cfg, cfg.method, data.kind)
    seeds = [cfg.seed_base + r for r in range(cfg.repeats)]
    tune_seeds = seeds[:1] if cfg.tune_once else seeds
    jobs = [(cfg, data, cfg.method, s, hp) for s in tune_seeds for hp in grid]
    scores = _map(cfg, _score_point, jobs)
    grid_rows, chosen = [], {}
    for k, s in enumerate(tune_seeds):
        sc = scores[k * len(grid):(k + 1) * len(grid)]
        r = seeds.index(s)
        grid_rows += [(r, s, cfg.method, hp.C, hp.eta, hp.beta, hp.epsilon, float(v))
                      for hp, v in zip(grid, sc)]
        chosen[s] = _select(data.kind, grid, sc)
    write_rows(out / "grid.csv", GRID_COLUMNS, grid_rows)
    best = [chosen[s] if s in chosen else chosen[tune_seeds[0]] for s in seeds]
    results = _map(cfg, _fit_repeat, [(cfg, data, cfg.method, s, hp)
                                      for s, hp in zip(seeds, best)])
    write_rows(out / "best.csv", BEST_COLUMNS,
               [(r, s, cfg.method, hp.C, hp.eta, hp.beta, hp.epsilon, float(va.mean),
                 float(te.mean)) for r, (s, hp, (_, va, te)) in
                enumerate(zip(seeds, best, results))])
    _write_run(out, cfg, cfg.method, data.kind, results, seeds)


def cmd_report(cfg, model_path):
    out = _outdir(cfg)
    if not Path(model_path).is_file():
        raise ConfigError(f"model file {model_path} does not exist")
    model = load_model(model_path)
    bank = training_bank(model)
    cache = build_A(bank)
    nbhd = model.neighborhood or NeighborhoodSet([np.zeros((n, n)) for n in bank.sizes])
    b, c = build_b(bank, nbhd), build_c(nbhd)
    rho = cfg.rho if cfg.rho is not None else c + 1.0
    bound = rademacher_bound(BoundInputs(cfg.R, rho, min(bank.sizes), cache, b, c))
    om = omega(cache, b, c)
    rows = [("method", model.method), ("R", repr(float(cfg.R))), ("rho", repr(float(rho))),
            ("bound", repr(bound)), ("omega", repr(om)),
            ("alignment", "available" if model.neighborhood is not None else "unavailable")]
    write_rows(out / "report.csv", ("quantity", "value"), rows)
    print(f"bound {bound:.6g}  omega {om:.6g}")
    if model.neighborhood is None:
        print(f"alignment unavailable: {model.method} has no neighborhood matrices")
        return
    M = alignment_report(model, bank)
    write_rows(out / "alignment.csv", [f"task{t}" for t in range(M.shape[1])],
               [tuple(float(v) for v in row) for row in M])
    print(f"wrote {out / 'alignment.csv'}")


COMMANDS = ("synth", "build-bank", "train", "tune", "report")


def _parser():
    p = argparse.ArgumentParser(prog="nbmkl", description="multi-task multiple kernel learning")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", help="sectioned key = value file")
    p.add_argument("--method", choices=METHODS)
    p.add_argument("--repeats", type=int)
    p.add_argument("--seed-base", type=int)
    p.add_argument("--workers", type=int, help="worker processes (0 = logical cores)")
    p.add_argument("--out", help="output directory")
    p.add_argument("--model", help="model file (report)")
    p.add_argument("--tune-once", action="store_true", help="tune on the first repeat only")
    return p


def _overrides(extra):
    pairs, i = [], 0
    while i < len(extra):
        tok = extra[i]
        if not tok.startswith("--") or "." not in tok:
            raise ConfigError(f"unrecognized argument {tok!r}")
        key = tok[2:]
        if "=" in key:
            key, value = key.split("=", 1)
        else:
            if i + 1 >= len(extra):
                raise ConfigError(f"--{key} needs a value")
            i += 1
            value = extra[i]
        pairs.append((key, value))
        i += 1
    return pairs


def main(argv=None):
    parser = _parser()
    args, extra = parser.parse_known_args(argv)
    try:
        over = _overrides(extra)
        for flag, key in (("method", "train.method"), ("repeats", "run.repeats"),
                          ("seed_base", "run.seed_base"), ("workers", "run.workers"),
                          ("out", "run.out")):
            if getattr(args, flag) is not None:
                over.append((key, str(getattr(args, flag))))
        if args.tune_once:
            over.append(("tune.tune_once", "true"))
        if args.command == "report":
            if not args.model:
                raise ConfigError("report needs --model")
            cfg = read_config(args.config, over, need_data=False)
            cmd_report(cfg, args.model)
        else:
            cfg = read_config(args.config, over)
            {"synth": cmd_synth, "build-bank": cmd_build_bank, "train": cmd_train,
             "tune": cmd_tune}[args.command](cfg)
    except (ConfigError, FileNotFoundError) as exc:
        print(f"nbmkl: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, DegenerateTaskError, FactorizationError, NegativeRadicandError,
            ModelFileError, ValueError) as exc:
        print(f"nbmkl: {args.command} failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
