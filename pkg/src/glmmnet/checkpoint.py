"""Versioned ``.npz`` container for trained :class:`~glmmnet.model.GLMMNet` models.

Layout (``FORMAT_VERSION = 1``):

* ``meta``: a 0-d unicode array holding JSON with ``format_version``,
  ``family``, ``link``, ``n_features``, ``hidden``, ``n_categories`` (list,
  one per block), ``prior_scale`` (list), ``scale_multiplier``,
  ``weight_decay``, ``parameter_names`` and ``report`` (the fit report).
* ``param_000``, ``param_001``, ...: parameter arrays in the order of
  ``parameter_names``: per layer weights then biases, per block locations
  then raw scales, then the raw dispersion.
* ``x_mean``, ``x_scale``: the feature standardiser.
"""

import json

import numpy as np

from .data import Standardizer
from .errors import ShapeError
from .model import FitReport, GLMMNet, TrainingConfig

FORMAT_VERSION = 1


def save_checkpoint(model, path):
    cfg = model.config
    meta = {
        "format_version": FORMAT_VERSION,
        "family": model.family.name,
        "link": model.link.name,
        "n_features": model.n_features,
        "hidden": list(model.net.hidden),
        "n_categories": list(model.sizes),
        "prior_scale": [p.scale for p in model.priors],
        "scale_multiplier": model.posteriors[0].multiplier,
        "weight_decay": cfg.weight_decay,
        "parameter_names": model.parameter_names(),
        "report": None if model.report is None else model.report.to_dict(),
    }
    arrays = {f"param_{i:03d}": p for i, p in enumerate(model.parameters())}
    arrays["x_mean"] = model.standardizer.mean
    arrays["x_scale"] = model.standardizer.scale
    with open(path, "wb") as fh:
        np.savez(fh, meta=np.array(json.dumps(meta)), **arrays)


def load_checkpoint(path):
    with np.load(path, allow_pickle=False) as data:
        meta = json.loads(str(data["meta"]))
        version = meta.get("format_version")
        if version != FORMAT_VERSION:
            raise ShapeError(f"unsupported checkpoint format {version!r}")
        cfg = TrainingConfig(hidden=tuple(meta["hidden"]), prior_scale=tuple(meta["prior_scale"]),
                             scale_multiplier=meta["scale_multiplier"], weight_decay=meta["weight_decay"])
        model = GLMMNet(meta["n_features"], tuple(meta["n_categories"]), meta["family"], meta["link"], cfg,
                        np.random.default_rng(0))
        if model.parameter_names() != meta["parameter_names"]:
            raise ShapeError("checkpoint parameter layout does not match the model")
        for i, p in enumerate(model.parameters()):
            stored = data[f"param_{i:03d}"]
            if stored.shape != p.shape:
                raise ShapeError(f"parameter {meta['parameter_names'][i]} has shape {stored.shape}, expected {p.shape}")
            p[...] = stored
        model.standardizer = Standardizer(data["x_mean"], data["x_scale"])
    if meta["report"] is not None:
        model.report = FitReport.from_dict(meta["report"])
    return model
