"""Run configuration: one JSON file, defaults for every unspecified key."""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass
from pathlib import Path

from . import __version__
from .errors import MalformedConfig, UnknownKey
from .evaluation import DEFAULT_TOP_K, SplitPlan
from .pv import Hyperparams

PIPELINE_DEFAULTS = {
    "repos": {"vector_size": 230, "window": 5, "min_count": 5, "algorithm": "DM", "negative": 5, "epochs": 15},
    "issues": {"vector_size": 150, "window": 5, "min_count": 5, "algorithm": "DM", "negative": 5, "epochs": 20},
    "apis": {"vector_size": 200, "window": 30, "min_count": 5, "algorithm": "DBOW", "negative": 20, "epochs": 10,
             "train_word_vectors": True},
}
_HYPER_COMMON = {"alpha_initial": 0.025, "alpha_final": 1e-4, "seed": None, "workers": 1,
                 "train_word_vectors": False, "infer_epochs": None}

DEFAULTS = {
    "paths": {"out_dir": "devforge-run", "mined_dir": None, "corpus_dir": None, "model_dir": None,
              "report_dir": None, "developers_file": None},
    "repos": {**_HYPER_COMMON, **PIPELINE_DEFAULTS["repos"]},
    "issues": {**_HYPER_COMMON, **PIPELINE_DEFAULTS["issues"]},
    "apis": {**_HYPER_COMMON, **PIPELINE_DEFAULTS["apis"]},
    "api_weighting": "weighted",
    "split": {"ratios": [0.8, 0.1, 0.1], "seed": None, "stratified": True},
    "classifier": {"l2": 1e-4, "lr": 0.5, "max_iters": 2000, "tol": 1e-6},
    "tfidf_top_k": DEFAULT_TOP_K,
    "pca_dims": [50, 100, 200, 250, 300],
    "mining": {"since": None, "byte_cap": 1 << 20, "requests_per_second": 10.0, "sources": ["repos", "issues", "apis"]},
    "seed": 0,
}
PIPELINES = ("repos", "issues", "apis")


@dataclass
class RunConfig:
    raw: dict

    @property
    def seed(self):
        return self.raw["seed"]

    def path(self, name) -> Path:
        p = self.raw["paths"]
        explicit = p.get(name)
        if explicit:
            return Path(explicit)
        sub = {"mined_dir": "mined", "corpus_dir": "corpus", "model_dir": "models", "report_dir": "reports"}[name]
        return Path(p["out_dir"]) / sub

    def hyper(self, pipeline) -> Hyperparams:
        section = dict(self.raw[pipeline])
        section.pop("infer_epochs")
        if section["seed"] is None:
            section["seed"] = self.seed
        return Hyperparams(**section)

    def infer_epochs(self, pipeline):
        return self.raw[pipeline]["infer_epochs"]

    @property
    def split_plan(self) -> SplitPlan:
        s = self.raw["split"]
        return SplitPlan(tuple(s["ratios"]), self.seed if s["seed"] is None else s["seed"], s["stratified"])

    @property
    def classifier(self) -> dict:
        return dict(self.raw["classifier"])

    @property
    def pca_dims(self) -> list:
        return list(self.raw["pca_dims"])

    def resolved(self) -> dict:
        out = copy.deepcopy(self.raw)
        for p in PIPELINES:
            if out[p]["seed"] is None:
                out[p]["seed"] = self.seed
        if out["split"]["seed"] is None:
            out["split"]["seed"] = self.seed
        out["artifact_version"] = __version__
        return out

    def write_resolved(self, directory):
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        (directory / "config.resolved.json").write_text(
            json.dumps(self.resolved(), indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _merge(defaults, override, prefix, strict):
    out = copy.deepcopy(defaults)
    for key, value in override.items():
        where = f"{prefix}{key}"
        if key not in defaults:
            if strict:
                raise UnknownKey(f"unknown config key: {where}")
            out[key] = value
            continue
        if isinstance(defaults[key], dict):
            if not isinstance(value, dict):
                raise MalformedConfig(f"{where}: expected an object")
            out[key] = _merge(defaults[key], value, where + ".", strict)
        else:
            out[key] = value
    return out


def _validate(cfg):
    for p in PIPELINES:
        section = cfg[p]
        for key in ("vector_size", "window", "min_count", "negative", "epochs", "algorithm"):
            if section.get(key) is None:
                raise MalformedConfig(f"{p}.{key} is required")
        try:
            params = {k: v for k, v in section.items() if k not in ("infer_epochs",)}
            if params["seed"] is None:
                params["seed"] = 0
            Hyperparams(**params)
        except (TypeError, ValueError) as exc:
            raise MalformedConfig(f"{p}: {exc}") from exc
        ie = section.get("infer_epochs")
        if ie is not None and (not isinstance(ie, int) or ie < 1):
            raise MalformedConfig(f"{p}.infer_epochs must be a positive int")
    try:
        ratios = cfg["split"]["ratios"]
        SplitPlan(tuple(ratios), 0, bool(cfg["split"]["stratified"]))
    except (TypeError, ValueError) as exc:
        raise MalformedConfig(f"split.ratios: {exc}") from exc
    dims = cfg["pca_dims"]
    if not isinstance(dims, list) or not all(isinstance(k, int) and k > 0 for k in dims):
        raise MalformedConfig("pca_dims must be a list of positive ints")
    if cfg["api_weighting"] not in ("weighted", "unweighted"):
        raise MalformedConfig("api_weighting must be 'weighted' or 'unweighted'")
    if not isinstance(cfg["seed"], int) or cfg["seed"] < 0:
        raise MalformedConfig("seed must be an unsigned int")
    for key in ("l2", "lr", "max_iters", "tol"):
        v = cfg["classifier"][key]
        if not isinstance(v, (int, float)) or v < 0 or (key != "l2" and v == 0):
            raise MalformedConfig(f"classifier.{key} must be positive")


def config_from_dict(data, strict=False) -> RunConfig:
    if not isinstance(data, dict):
        raise MalformedConfig("config root must be a JSON object")
    cfg = _merge(DEFAULTS, data, "", strict)
    _validate(cfg)
    return RunConfig(cfg)


def load_config(path=None, strict=False) -> RunConfig:
    if path is None:
        return config_from_dict({}, strict)
    text = Path(path).read_text(encoding="utf-8")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise MalformedConfig(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    return config_from_dict(data, strict)
