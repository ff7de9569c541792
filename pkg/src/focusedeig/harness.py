"""Experiment orchestration: grid sweeps, convergence and scaling studies,
replicate management, and result emission.

Experiments are described by a JSON config (see README for the schema).
Each (design point, replicate) pair is an independent work unit with its
own substream of the root seed, so result tables are reproducible
bit-for-bit regardless of thread count, and adding replicates never
changes existing ones.
"""

import csv
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .diagnostics import (
    estimate_delta_constants,
    fixed_ratio_plan,
    replicate_stats,
)
from .estimator import EstimatorConfig, estimate_eig
from .models import make_model


class ConfigError(ValueError):
    """Invalid experiment configuration; carries the offending key path."""

    def __init__(self, path, message):
        self.path = path
        super().__init__(f"{path}: {message}")


EXPERIMENT_KINDS = ("eig", "sweep", "convergence", "scaling", "diagnostics")

CSV_COLUMNS = (
    "estimator", "mode", "N", "M1", "M2", "W", "replicate", "eig_hat",
    "eig_ref", "cess_marg_mean", "cess_cond_mean", "model_evals", "wall_ms",
)


@dataclass
class ResultRow:
    """One estimator run: a design point and replicate index with its
    estimate, reference (when known), and diagnostics."""

    design: tuple
    estimator: str
    mode: str
    n_outer: int
    m1: int
    m2: int
    work: float
    replicate: int
    eig_hat: float
    eig_ref: float
    cess_marg_mean: float
    cess_marg_median: float
    cess_marg_min: float
    cess_cond_mean: float
    cess_cond_median: float
    cess_cond_min: float
    model_evals: int
    wall_ms: float


@dataclass
class ExperimentConfig:
    kind: str
    model_name: str
    model_kwargs: dict
    mode: str
    estimator: dict
    designs: list
    replicates: int
    seed: int
    out: str = None
    format: str = "csv"
    threads: int = 1
    reference: dict = None
    budgets: list = field(default_factory=list)
    allocation: dict = None
    anchor: dict = None


def _expect(cond, path, message):
    if not cond:
        raise ConfigError(path, message)


def _grid_points(design_spec):
    if "points" in design_spec:
        pts = design_spec["points"]
        _expect(isinstance(pts, list) and pts, "design.points", "non-empty list required")
        out = []
        for i, p in enumerate(pts):
            if isinstance(p, (int, float)):
                p = [p]
            _expect(
                isinstance(p, list) and all(isinstance(v, (int, float)) for v in p),
                f"design.points[{i}]", "each point must be a number or list of numbers",
            )
            out.append(tuple(float(v) for v in p))
        return out
    if "grid" in design_spec:
        axes = []
        spec = design_spec["grid"]
        _expect(isinstance(spec, list) and spec, "design.grid", "non-empty list required")
        for i, ax in enumerate(spec):
            path = f"design.grid[{i}]"
            _expect(isinstance(ax, dict), path, "axis must be an object")
            for key in ("lo", "hi", "steps"):
                _expect(key in ax, f"{path}.{key}", "required")
            _expect(ax["steps"] >= 1, f"{path}.steps", "must be >= 1")
            if ax["steps"] == 1:
                axes.append(np.array([float(ax["lo"])]))
            else:
                axes.append(np.linspace(float(ax["lo"]), float(ax["hi"]), int(ax["steps"])))
        mesh = np.meshgrid(*axes, indexing="ij")
        return [tuple(float(m[idx]) for m in mesh) for idx in np.ndindex(mesh[0].shape)]
    raise ConfigError("design", "need either 'grid' or 'points'")


def load_config(raw):
    """Validate a raw config dict into an ExperimentConfig."""
    _expect(isinstance(raw, dict), "", "config must be a JSON object")
    kind = raw.get("experiment")
    _expect(kind in EXPERIMENT_KINDS, "experiment", f"must be one of {EXPERIMENT_KINDS}")

    model = raw.get("model")
    _expect(isinstance(model, dict) and "name" in model, "model.name", "required")
    model_kwargs = {k: v for k, v in model.items() if k != "name"}
    try:
        make_model(model["name"], **model_kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError("model", str(exc)) from exc

    mode = raw.get("mode", "marginal")
    _expect(mode in ("marginal", "joint"), "mode", "must be 'marginal' or 'joint'")

    est = raw.get("estimator")
    _expect(isinstance(est, dict), "estimator", "required object")
    try:
        EstimatorConfig(seed=0, **est)
    except (TypeError, ValueError) as exc:
        raise ConfigError("estimator", str(exc)) from exc

    _expect("design" in raw, "design", "required")
    designs = _grid_points(raw["design"])
    if kind == "eig":
        _expect(len(designs) == 1, "design", "'eig' expects exactly one design point")

    replicates = raw.get("replicates", 1)
    _expect(isinstance(replicates, int) and replicates >= 1, "replicates", "must be >= 1")
    seed = raw.get("seed", 0)
    _expect(isinstance(seed, int), "seed", "must be an integer")
    fmt = raw.get("format", "csv")
    _expect(fmt in ("csv", "jsonl"), "format", "must be 'csv' or 'jsonl'")
    threads = raw.get("threads", 1)
    _expect(isinstance(threads, int) and threads >= 1, "threads", "must be >= 1")

    budgets = raw.get("budgets", [])
    if kind in ("convergence", "scaling"):
        _expect(
            isinstance(budgets, list) and budgets and all(b >= 8 for b in budgets),
            "budgets", "non-empty list of budgets >= 8 required",
        )
        _expect(len(designs) == 1, "design", f"'{kind}' expects exactly one design point")

    allocation = raw.get("allocation")
    if kind == "convergence":
        allocation = allocation or {"kind": "fixed_ratio", "ratio": 1.0}
        _expect(allocation.get("kind") in ("fixed_ratio", "optimal"),
                "allocation.kind", "must be 'fixed_ratio' or 'optimal'")
        if allocation["kind"] == "fixed_ratio":
            _expect(allocation.get("ratio", 0) > 0, "allocation.ratio", "must be > 0")
        else:
            _expect(allocation.get("c_tilde", -1) >= 0, "allocation.c_tilde", "must be >= 0")
            _expect(allocation.get("d3", 0) > 0, "allocation.d3", "must be > 0")

    anchor = raw.get("anchor")
    if kind == "scaling":
        _expect(isinstance(anchor, dict), "anchor", "required for scaling")
        _expect(anchor.get("w0", 0) >= 8, "anchor.w0", "must be >= 8")
        _expect(anchor.get("ratio", 0) > 0, "anchor.ratio", "must be > 0")
        _expect(est.get("biasing", "lmis") == "prior", "estimator.biasing",
                "the scaling study targets the prior-biased estimator")

    reference = raw.get("reference")
    if reference is not None:
        _expect(isinstance(reference, dict) and "kind" in reference, "reference.kind", "required")
        _expect(reference["kind"] in ("closed_form", "value", "lmis"),
                "reference.kind", "must be 'closed_form', 'value' or 'lmis'")
        if reference["kind"] == "value":
            _expect(isinstance(reference.get("value"), (int, float)),
                    "reference.value", "numeric value required")
        if reference["kind"] == "lmis":
            _expect(reference.get("budget", 0) >= 8, "reference.budget", "must be >= 8")

    return ExperimentConfig(
        kind=kind,
        model_name=model["name"],
        model_kwargs=model_kwargs,
        mode=mode,
        estimator=dict(est),
        designs=designs,
        replicates=replicates,
        seed=seed,
        out=raw.get("out"),
        format=fmt,
        threads=threads,
        reference=reference,
        budgets=list(budgets),
        allocation=allocation,
        anchor=anchor,
    )


def load_config_file(path):
    with open(path) as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError("<file>", f"invalid JSON: {exc}") from exc
    return raw


# ---------------------------------------------------------------------------
# execution
# ---------------------------------------------------------------------------

def _unit_seed(root, *path):
    ss = np.random.SeedSequence(int(root), spawn_key=tuple(int(k) for k in path))
    return int(ss.generate_state(1, np.uint64)[0])


def _summary(a):
    a = np.asarray(a, dtype=float)
    good = a[np.isfinite(a)]
    if good.size == 0:
        return (float("nan"),) * 3
    return float(np.mean(good)), float(np.median(good)), float(np.min(good))


def _run_unit(model, design, est_kwargs, mode, label, replicate, seed, reference):
    cfg = EstimatorConfig(seed=seed, **est_kwargs)
    est = estimate_eig(model, np.asarray(design), cfg, mode=mode)
    cm = _summary(est.cess_marg)
    cc = _summary(est.cess_cond)
    return ResultRow(
        design=tuple(design),
        estimator=label,
        mode=mode,
        n_outer=cfg.N,
        m1=cfg.M1,
        m2=cfg.M2,
        work=float(cfg.N * (cfg.M1 + cfg.M2)),
        replicate=replicate,
        eig_hat=est.value,
        eig_ref=reference,
        cess_marg_mean=cm[0], cess_marg_median=cm[1], cess_marg_min=cm[2],
        cess_cond_mean=cc[0], cess_cond_median=cc[1], cess_cond_min=cc[2],
        model_evals=est.n_evals,
        wall_ms=est.wall_time * 1e3,
    ), est


def _run_units(units, threads):
    """Run (key, thunk) units, preserving deterministic key order."""
    if threads <= 1:
        results = [(key, thunk()) for key, thunk in units]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            futures = [(key, pool.submit(thunk)) for key, thunk in units]
        results = [(key, f.result()) for key, f in futures]
    results.sort(key=lambda kv: kv[0])
    return [r for _, r in results]


def _closed_form(model, design, mode):
    if not hasattr(model, "eig_closed_form"):
        raise ConfigError("reference.kind",
                          f"model {type(model).__name__} has no closed form")
    return model.eig_closed_form(np.asarray(design), mode)


def resolve_reference(config, model, design):
    """Reference EIG value at one design, or None when not configured."""
    ref = config.reference
    if ref is None:
        return None
    if ref["kind"] == "closed_form":
        return _closed_form(model, design, config.mode)
    if ref["kind"] == "value":
        return float(ref["value"])
    # High-budget LMIS reference run, pinned to its own seed.
    plan = fixed_ratio_plan(ref.get("ratio", 0.01), float(ref["budget"]))
    seed = int(ref.get("seed", config.seed + 1))
    cfg = EstimatorConfig(
        N=plan.n_outer, M1=plan.m_inner, seed=seed,
        **{k: v for k, v in config.estimator.items()
           if k not in ("N", "M1", "M2", "biasing")},
    )
    est = estimate_eig(model, np.asarray(design), cfg, mode=config.mode)
    return est.value


def run_sweep(config):
    """Grid sweep: rows for every design point and replicate, plus argmax
    bookkeeping per replicate and for the replicate-mean profile."""
    model = make_model(config.model_name, **config.model_kwargs)
    label = config.estimator.get("biasing", "lmis")
    refs = [resolve_reference(config, model, d) for d in config.designs]

    units = []
    for di, design in enumerate(config.designs):
        for rep in range(config.replicates):
            seed = _unit_seed(config.seed, di, rep)
            units.append((
                (di, rep),
                (lambda d=design, r=rep, s=seed, ref=refs[di]:
                 _run_unit(model, d, config.estimator, config.mode, label, r, s, ref)[0]),
            ))
    rows = _run_units(units, config.threads)

    n_d = len(config.designs)
    mat = np.array([r.eig_hat for r in rows]).reshape(n_d, config.replicates)

    # Ties break toward the lexicographically smallest design.
    def argmax(values):
        return max(
            range(n_d),
            key=lambda i: (values[i], [-v for v in config.designs[i]]),
        )

    per_rep = [config.designs[argmax(mat[:, rep])] for rep in range(config.replicates)]
    means = mat.mean(axis=1)
    best_mean = argmax(means)
    summary = {
        "argmax_per_replicate": per_rep,
        "argmax_mean": config.designs[best_mean],
        "mean_profile": {str(config.designs[i]): float(means[i]) for i in range(n_d)},
    }
    return rows, summary


def run_eig(config):
    rows, _ = run_sweep(config)
    summary = {
        "design": config.designs[0],
        "mean_eig": float(np.mean([r.eig_hat for r in rows])),
        "reference": rows[0].eig_ref,
    }
    return rows, summary


def _allocation_plans(config):
    alloc = config.allocation
    plans = []
    for w in config.budgets:
        if alloc["kind"] == "fixed_ratio":
            plans.append(fixed_ratio_plan(float(alloc["ratio"]), float(w)))
        else:
            from .diagnostics import optimal_alpha

            plans.append(optimal_alpha(float(alloc["c_tilde"]), float(alloc["d3"]), float(w)))
    return plans


def run_convergence(config):
    """Replicated runs across budgets; per-budget bias/variance/MSE versus
    the configured reference."""
    model = make_model(config.model_name, **config.model_kwargs)
    design = config.designs[0]
    if config.reference is None:
        raise ConfigError("reference", "convergence study needs a reference")
    ref = resolve_reference(config, model, design)
    label = config.estimator.get("biasing", "lmis")
    plans = _allocation_plans(config)

    units = []
    for bi, plan in enumerate(plans):
        est_kwargs = dict(config.estimator, N=plan.n_outer, M1=plan.m_inner, M2=plan.m_inner)
        for rep in range(config.replicates):
            seed = _unit_seed(config.seed, bi, rep)
            units.append((
                (bi, rep),
                (lambda ek=est_kwargs, r=rep, s=seed:
                 _run_unit(model, design, ek, config.mode, label, r, s, ref)[0]),
            ))
    rows = _run_units(units, config.threads)

    stats = {}
    r_count = config.replicates
    for bi, plan in enumerate(plans):
        vals = [r.eig_hat for r in rows[bi * r_count : (bi + 1) * r_count]]
        st = replicate_stats(vals, ref)
        stats[str(int(plan.work))] = {
            "N": plan.n_outer, "M": plan.m_inner,
            "bias": st.bias, "variance": st.variance, "mse": st.mse,
            "se_bias": st.se_bias, "se_mse": st.se_mse,
        }
    return rows, {"reference": ref, "per_budget": stats}


def run_scaling(config):
    """Fixed-ratio versus optimally scaled inner/outer allocation.

    Both strategies are anchored at (w0, ratio): the fixed strategy keeps
    M/N at the anchor ratio for every budget, while the scaled strategy
    shrinks the ratio as (W/w0)^(-1/3) from the same anchor.
    """
    model = make_model(config.model_name, **config.model_kwargs)
    design = config.designs[0]
    if config.reference is None:
        raise ConfigError("reference", "scaling study needs a reference")
    ref = resolve_reference(config, model, design)
    w0 = float(config.anchor["w0"])
    ratio0 = float(config.anchor["ratio"])

    plans = []
    for w in config.budgets:
        plans.append(("fixed", fixed_ratio_plan(ratio0, float(w))))
        scaled_ratio = ratio0 * (float(w) / w0) ** (-1.0 / 3.0)
        plans.append(("scaled", fixed_ratio_plan(scaled_ratio, float(w))))

    units = []
    for pi, (strategy, plan) in enumerate(plans):
        est_kwargs = dict(config.estimator, N=plan.n_outer, M1=plan.m_inner, M2=plan.m_inner)
        label = f"{config.estimator.get('biasing', 'prior')}:{strategy}"
        for rep in range(config.replicates):
            seed = _unit_seed(config.seed, pi, rep)
            units.append((
                (pi, rep),
                (lambda ek=est_kwargs, lb=label, r=rep, s=seed:
                 _run_unit(model, design, ek, config.mode, lb, r, s, ref)[0]),
            ))
    rows = _run_units(units, config.threads)

    stats = {}
    r_count = config.replicates
    for pi, (strategy, plan) in enumerate(plans):
        vals = [r.eig_hat for r in rows[pi * r_count : (pi + 1) * r_count]]
        st = replicate_stats(vals, ref)
        stats.setdefault(strategy, {})[str(int(plan.work))] = {
            "N": plan.n_outer, "M": plan.m_inner,
            "bias": st.bias, "variance": st.variance, "mse": st.mse,
        }
    return rows, {"reference": ref, "per_strategy": stats}


def run_diagnostics(config):
    """Replicated runs at one design with delta-method constants and
    predicted-versus-empirical bias and variance."""
    model = make_model(config.model_name, **config.model_kwargs)
    design = config.designs[0]
    ref = resolve_reference(config, model, design)
    label = config.estimator.get("biasing", "lmis")

    rows = []
    consts = []
    for rep in range(config.replicates):
        seed = _unit_seed(config.seed, 0, rep)
        row, est = _run_unit(
            model, design, config.estimator, config.mode, label, rep, seed, ref
        )
        rows.append(row)
        consts.append(estimate_delta_constants(est))

    cfg = EstimatorConfig(seed=0, **config.estimator)
    c1 = float(np.mean([c.c1 for c in consts]))
    c2 = float(np.mean([c.c2 for c in consts]))
    d1 = float(np.mean([c.d1 for c in consts]))
    d2 = float(np.mean([c.d2 for c in consts]))
    d3 = float(np.mean([c.d3 for c in consts]))
    summary = {
        "constants": {"c1": c1, "c2": c2, "d1": d1, "d2": d2, "d3": d3},
        "predicted_bias": c1 / cfg.M1 - c2 / cfg.M2,
        "predicted_variance": d3 / cfg.N + d1 / (cfg.N * cfg.M2) + d2 / (cfg.N * cfg.M1),
        "cess_marg_median": float(np.median([r.cess_marg_median for r in rows])),
        "cess_cond_median": float(np.median([r.cess_cond_median for r in rows])),
    }
    if ref is not None and config.replicates >= 2:
        st = replicate_stats([r.eig_hat for r in rows], ref)
        summary["empirical"] = {"bias": st.bias, "variance": st.variance, "mse": st.mse}
    return rows, summary


RUNNERS = {
    "eig": run_eig,
    "sweep": run_sweep,
    "convergence": run_convergence,
    "scaling": run_scaling,
    "diagnostics": run_diagnostics,
}


def run_experiment(config):
    return RUNNERS[config.kind](config)


# ---------------------------------------------------------------------------
# emission
# ---------------------------------------------------------------------------

def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def emit(rows, fmt, path):
    """Write a result table as CSV or JSON lines.

    The CSV header is fixed: design coordinates first (``design_0`` ...),
    then the schema columns. Floats are rendered as their shortest
    round-trip decimal.
    """
    if not rows:
        raise ValueError("refusing to emit an empty result table")
    n_d = len(rows[0].design)
    design_cols = [f"design_{k}" for k in range(n_d)]
    header = design_cols + list(CSV_COLUMNS)

    def values(row):
        return list(row.design) + [
            row.estimator, row.mode, row.n_outer, row.m1, row.m2, row.work,
            row.replicate, row.eig_hat, row.eig_ref, row.cess_marg_mean,
            row.cess_cond_mean, row.model_evals, row.wall_ms,
        ]

    try:
        with open(path, "w", newline="") as fh:
            if fmt == "csv":
                writer = csv.writer(fh)
                writer.writerow(header)
                for row in rows:
                    writer.writerow([_fmt(v) for v in values(row)])
            else:
                for row in rows:
                    rec = dict(zip(header, values(row)))
                    fh.write(json.dumps(rec, allow_nan=True) + "\n")
    except OSError as exc:
        raise IOError(f"cannot write result table to {path}: {exc}") from exc


def parse_table(path, fmt="csv"):
    """Read back an emitted table as a list of dicts (strings kept as
    written for CSV; typed values for JSON lines)."""
    out = []
    with open(path, newline="") as fh:
        if fmt == "csv":
            for rec in csv.DictReader(fh):
                out.append(rec)
        else:
            for line in fh:
                out.append(json.loads(line))
    return out
