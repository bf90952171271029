"""Experiment driver: model registry, the run grid and result summaries.

Output files written by :func:`run` into the output directory:

``results.csv``
    ``experiment,model,seed,rmse,mae,rmse_avg,crps,nll,recovery_corr,status``,
    one row per (experiment, repetition, model) in plan order.
``checksums.csv``
    ``experiment,seed,model,data_checksum``.  Every model in a cell must
    report the same checksum of the generated train/test data.
``long.csv``
    ``experiment,model,seed,metric,value``, ready for plotting.
"""

import csv
import math
import os
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .baselines import fit_glm_irls, fit_glmm_baseline, fit_nn_ee, glmm_encode
from .checkpoint import save_checkpoint
from .errors import ConfigError
from .metrics import METRIC_NAMES, score_predictions, wilcoxon_signed_rank
from .model import GLMMNet, TrainingConfig
from .simulation import generate

RESULT_HEADER = ["experiment", "model", "seed", "rmse", "mae", "rmse_avg", "crps", "nll", "recovery_corr", "status"]
SUMMARY_STATS = ("min", "q1", "median", "q3", "max", "mean")

# Weight decay of GLMMNet_l2 (per-parameter coefficient added to the summed
# batch-loss gradient).
DEFAULT_L2 = 10.0

# Adam step size of the raw posterior scales in the mixed models.  At the
# network's 1e-3 the scales barely move away from their small initial value.
DEFAULT_SCALE_LR = 0.1

_TRAINING_KEYS = {"hidden", "learning_rate", "batch_size", "max_epochs", "patience", "validation_fraction",
                  "mc_samples", "weight_decay", "prior_scale", "scale_multiplier", "scale_learning_rate"}


def training_config(options, **defaults):
    merged = {**defaults, **{k: v for k, v in options.items() if k in _TRAINING_KEYS}}
    return TrainingConfig(**merged)


@dataclass
class Fitted:
    """A fitted model with uniform access for scoring."""

    mean: np.ndarray
    prediction: object
    recovery_corr: float = float("nan")
    checkpoint_model: object = None


def _recovery(model, train, u):
    seen = np.bincount(train.category, minlength=u.size) > 0
    est = model.posterior_means
    if seen.sum() < 2 or np.std(est[seen]) == 0:
        return float("nan")
    return float(np.corrcoef(est[seen], u[seen])[0, 1])


def _fit_glm(design):
    def fit(data, options, ctx, rng):
        cfg = data.config
        tr, te = data.train, data.test
        if design == "encoded":
            enc = glmm_encode(tr, options.get("folds", ctx["folds"]), cfg.family, cfg.link, rng,
                              training_config(options))
            model = fit_glm_irls(tr, "encoded", cfg.family, cfg.link, z=enc.encoding)
            z_te = enc.transform(te.category)
            pred = model.predict_distribution(te.X, te.category, z_te)
        else:
            model = fit_glm_irls(tr, design, cfg.family, cfg.link)
            pred = model.predict_distribution(te.X, te.category)
        return Fitted(pred.mean(), pred)
    return fit


def _fit_mixed(hidden, default_decay=0.0):
    def fit(data, options, ctx, rng):
        cfg = data.config
        tc = training_config(options, hidden=hidden, weight_decay=default_decay,
                             scale_learning_rate=DEFAULT_SCALE_LR)
        if hidden == ():
            tc = tc.replace(hidden=())
            model = fit_glmm_baseline(data.train, cfg.family, cfg.link, tc, rng)
        else:
            model = GLMMNet(data.train.n_features, data.train.n_categories, cfg.family, cfg.link, tc, rng)
            model.fit(data.train, rng)
        pred = model.predict_distribution(data.test.X, data.test.category, ctx["n_draws"], rng)
        return Fitted(pred.mean(), pred, _recovery(model, data.train, data.u), model)
    return fit


def _fit_nn_ee(data, options, ctx, rng):
    cfg = data.config
    model = fit_nn_ee(data.train, options.get("embedding_dim"), training_config(options), cfg.family, cfg.link, rng)
    pred = model.predict_distribution(data.test.X, data.test.category)
    return Fitted(pred.mean(), pred)


MODEL_REGISTRY = {
    "GLM_ignore_cat": _fit_glm("ignore"),
    "GLM_one_hot": _fit_glm("one_hot"),
    "GLM_GLMM_enc": _fit_glm("encoded"),
    "GLMM": _fit_mixed(()),
    "NN_ee": _fit_nn_ee,
    "GLMMNet": _fit_mixed((64, 32, 16)),
    "GLMMNet_l2": _fit_mixed((64, 32, 16), DEFAULT_L2),
}
MIXED_MODELS = ("GLMM", "GLMMNet", "GLMMNet_l2")


def validate_plan(plan):
    unknown = [m for m in plan.models if m not in MODEL_REGISTRY]
    if unknown:
        raise ConfigError(f"unknown model(s) {unknown}; registered: {sorted(MODEL_REGISTRY)}")
    for name in plan.model_options:
        if name not in MODEL_REGISTRY:
            raise ConfigError(f"options given for unknown model {name!r}")
    if not plan.models:
        raise ConfigError("no models selected")
    for exp_id in plan.experiments:
        plan.experiment(exp_id)


def cell_seed_sequence(base_seed, exp_index, rep, model_name=None):
    """Seed stream of one cell (``model_name=None``: the data) or of one model in it."""
    key = [int(base_seed), int(exp_index), int(rep)]
    if model_name is not None:
        key.append(zlib.crc32(model_name.encode()))
    return np.random.SeedSequence(key)


def _run_cell(args):
    exp_id, exp_index, rep, plan_dict, checkpoint_dir = args
    from .config import RunPlan

    plan = RunPlan(**plan_dict)
    cfg = plan.experiment(exp_id)
    cell = cell_seed_sequence(plan.base_seed, exp_index, rep)
    data = generate(cfg.with_seed(rep), np.random.default_rng(cell))
    checksum = data.checksum()
    ctx = {"n_draws": plan.n_draws, "folds": plan.folds}
    rows = []
    for name in plan.models:
        rng = np.random.default_rng(cell_seed_sequence(plan.base_seed, exp_index, rep, name))
        try:
            with np.errstate(over="ignore", under="ignore"):
                fitted = MODEL_REGISTRY[name](data, plan.model_options.get(name, {}), ctx, rng)
                rec = score_predictions(name, exp_id, rep, fitted.mean, fitted.prediction, data.test.y,
                                        data.test.category, fitted.recovery_corr)
            if checkpoint_dir and fitted.checkpoint_model is not None:
                save_checkpoint(fitted.checkpoint_model,
                                os.path.join(checkpoint_dir, f"exp{exp_id}_{name}_rep{rep}.npz"))
            row = [exp_id, name, rep, rec.rmse, rec.mae, rec.rmse_avg, rec.crps, rec.nll, rec.recovery_corr,
                   rec.status]
        except Exception as exc:  # fail-soft per cell
            nan = float("nan")
            row = [exp_id, name, rep, nan, nan, nan, nan, nan, nan, f"error:{type(exc).__name__}"]
        rows.append((row, checksum))
    return rows


def _fmt(v):
    if isinstance(v, float):
        if math.isnan(v):
            return ""
        return repr(v)
    return str(v)


def run(plan, out_dir, save_models=False, progress=None):
    """Execute ``plan``; returns 0 when every cell succeeded and 2 otherwise."""
    validate_plan(plan)
    os.makedirs(out_dir, exist_ok=True)
    ckpt = os.path.join(out_dir, "models") if save_models else None
    if ckpt:
        os.makedirs(ckpt, exist_ok=True)
    plan_dict = {k: getattr(plan, k) for k in ("experiments", "models", "reps", "base_seed", "jobs", "n_draws",
                                                "folds", "model_options", "experiment_configs")}
    tasks = []
    for exp_id in plan.experiments:
        exp_index = int(exp_id) if str(exp_id).isdigit() else zlib.crc32(str(exp_id).encode())
        for rep in range(plan.reps):
            tasks.append((exp_id, exp_index, rep, plan_dict, ckpt))
    if plan.jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=plan.jobs) as pool:
            results = list(pool.map(_run_cell, tasks))
    else:
        results = []
        for t in tasks:
            results.append(_run_cell(t))
            if progress:
                progress(t[0], t[2])
    failed = False
    with open(os.path.join(out_dir, "results.csv"), "w", newline="") as res, \
            open(os.path.join(out_dir, "checksums.csv"), "w", newline="") as chk, \
            open(os.path.join(out_dir, "long.csv"), "w", newline="") as lng:
        wr, wc, wl = csv.writer(res), csv.writer(chk), csv.writer(lng)
        wr.writerow(RESULT_HEADER)
        wc.writerow(["experiment", "seed", "model", "data_checksum"])
        wl.writerow(["experiment", "model", "seed", "metric", "value"])
        for cell in results:
            for row, checksum in cell:
                wr.writerow([_fmt(v) for v in row])
                wc.writerow([row[0], row[2], row[1], checksum])
                for name, value in zip(RESULT_HEADER[3:9], row[3:9]):
                    wl.writerow([row[0], row[1], row[2], name, _fmt(value)])
                failed = failed or row[-1].startswith("error")
    return 2 if failed else 0


# ---------------------------------------------------------------------------
# Summaries
# ---------------------------------------------------------------------------

def read_results(in_dir):
    path = os.path.join(in_dir, "results.csv")
    if not os.path.exists(path):
        raise ConfigError(f"no results.csv in {in_dir!r}")
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != RESULT_HEADER:
            raise ConfigError(f"unexpected results header {reader.fieldnames}")
        rows = list(reader)
    if not rows:
        raise ConfigError("results.csv has no rows")

    def num(s):
        return float(s) if s not in ("", None) else float("nan")

    for r in rows:
        r["seed"] = int(r["seed"])
        for key in RESULT_HEADER[3:9]:
            r[key] = num(r[key])
    return rows


def quantile_summary(values):
    v = np.asarray(values, dtype=np.float64)
    v = v[np.isfinite(v)]
    if v.size == 0:
        return {k: float("nan") for k in SUMMARY_STATS}
    q = np.quantile(v, [0.0, 0.25, 0.5, 0.75, 1.0])
    return dict(zip(SUMMARY_STATS, [*map(float, q), float(v.mean())]))


def summarize(in_dir, reference="GLMMNet", out_dir=None):
    """Write ``summary.csv``, ``wilcoxon.csv`` and ``recovery.csv``; return them as row lists."""
    rows = [r for r in read_results(in_dir) if r["status"] in ("ok", "nll_infinite")]
    out_dir = in_dir if out_dir is None else out_dir
    os.makedirs(out_dir, exist_ok=True)
    experiments = list(dict.fromkeys(r["experiment"] for r in rows))
    models = list(dict.fromkeys(r["model"] for r in rows))
    summary, tests, recovery = [], [], []
    for exp in experiments:
        by_model = {m: {r["seed"]: r for r in rows if r["experiment"] == exp and r["model"] == m} for m in models}
        for m in models:
            if not by_model[m]:
                continue
            for metric in METRIC_NAMES:
                stats_ = quantile_summary([r[metric] for r in by_model[m].values()])
                summary.append([exp, m, metric, len(by_model[m])] + [stats_[k] for k in SUMMARY_STATS])
        ref = by_model.get(reference, {})
        for m in models:
            if m == reference or not ref or not by_model[m]:
                continue
            seeds = sorted(set(ref) & set(by_model[m]))
            for metric in METRIC_NAMES:
                a = np.array([ref[s][metric] for s in seeds])
                b = np.array([by_model[m][s][metric] for s in seeds])
                ok = np.isfinite(a) & np.isfinite(b)
                res = wilcoxon_signed_rank(a[ok], b[ok])
                tests.append([exp, metric, reference, m, res.n, res.statistic, res.p_less, res.p_two_sided,
                              "reference" if res.direction == "a<b" else (m if res.direction == "a>b" else "none")])
        for m in models:
            for s, r in sorted(by_model[m].items()):
                if m in MIXED_MODELS and math.isfinite(r["recovery_corr"]):
                    recovery.append([exp, m, s, r["recovery_corr"]])
    _write(os.path.join(out_dir, "summary.csv"), ["experiment", "model", "metric", "n", *SUMMARY_STATS], summary)
    _write(os.path.join(out_dir, "wilcoxon.csv"),
           ["experiment", "metric", "reference", "model", "n", "statistic", "p_reference_smaller", "p_two_sided",
            "favours"], tests)
    _write(os.path.join(out_dir, "recovery.csv"), ["experiment", "model", "seed", "recovery_corr"], recovery)
    return {"summary": summary, "wilcoxon": tests, "recovery": recovery}


def _write(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) for v in r])
