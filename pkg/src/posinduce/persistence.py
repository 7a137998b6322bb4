"""Versioned model files.

A model file is an uncompressed ``.npz`` archive.  The ``__meta__`` entry is
a JSON document with the format name, version, estimator kind, constructor
parameters and caller metadata; every other entry is a parameter array.
Arrays are stored as float64/int64, so a save/load cycle is bit-exact.
"""

from __future__ import annotations

import json

import numpy as np

from .crfae import TEMPLATES, CRFAutoencoder, FeatureExtractor
from .exceptions import ModelFormatError
from .hmm import GaussianHMM, MultinomialHMM

FORMAT = "posinduce-model"
VERSION = 1

_ARRAYS = {
    "GaussianHMM": ("startprob_", "transmat_", "stopprob_", "means_", "variances_"),
    "MultinomialHMM": ("startprob_", "transmat_", "stopprob_", "emissionprob_"),
    "CRFAutoencoder": ("coef_", "means_", "variances_", "reconstructionprob_"),
}
_CLASSES = {"GaussianHMM": GaussianHMM, "MultinomialHMM": MultinomialHMM,
            "CRFAutoencoder": CRFAutoencoder}


def _jsonable_params(model):
    params = {}
    for k, v in model.get_params().items():
        if isinstance(v, np.ndarray):
            continue
        params[k] = list(v) if isinstance(v, tuple) else v
    return params


def save_model(model, path, metadata=None) -> None:
    kind = type(model).__name__
    if kind not in _ARRAYS:
        raise TypeError(f"cannot serialise {kind}")
    arrays = {name: getattr(model, name) for name in _ARRAYS[kind] if hasattr(model, name)}
    arrays["trace_"] = np.asarray(model.trace_, dtype=np.float64)
    if kind == "CRFAutoencoder":
        arrays["observations"] = np.array(model.extractor_.observations, dtype=str)
    meta = {
        "format": FORMAT,
        "version": VERSION,
        "kind": kind,
        "params": _jsonable_params(model),
        "fitted": {k: getattr(model, k) for k in ("n_features_", "n_features_in_", "n_iter_")
                   if hasattr(model, k)},
        "metadata": metadata or {},
    }
    arrays["__meta__"] = np.array(json.dumps(meta, sort_keys=True))
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def load_model(path):
    """Read a model file; returns ``(model, metadata)``."""
    try:
        archive = np.load(path, allow_pickle=False)
        meta = json.loads(str(archive["__meta__"]))
    except (OSError, ValueError, KeyError) as exc:
        raise ModelFormatError(f"{path}: not a model file ({exc})") from None
    if meta.get("format") != FORMAT:
        raise ModelFormatError(f"{path}: unknown format {meta.get('format')!r}")
    if meta.get("version") != VERSION:
        raise ModelFormatError(
            f"{path}: format version {meta.get('version')} is not supported (expected {VERSION})")
    kind = meta["kind"]
    params = meta["params"]
    if isinstance(params.get("templates"), list):
        params["templates"] = tuple(params["templates"])
    model = _CLASSES[kind](**params)
    for name in _ARRAYS[kind]:
        if name in archive.files:
            setattr(model, name, archive[name])
    model.trace_ = archive["trace_"].tolist()
    for k, v in meta["fitted"].items():
        setattr(model, k, v)
    if kind == "CRFAutoencoder":
        templates = TEMPLATES if model.templates is None else model.templates
        model.extractor_ = FeatureExtractor.from_observations(
            model.n_components, templates, archive["observations"].tolist())
    return model, meta["metadata"]
