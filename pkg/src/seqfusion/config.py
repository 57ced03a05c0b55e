"""JSON configuration files for hypothesis sets, quantizers and tests.

A configuration looks like::

    {
      "name": "ht1",
      "sensors": 1,
      "densities": [{"family": "gaussian", "mean": -0.5}, ...],
      "priors": [0.3333333333333333, ...],
      "loss": null, "groups": null,
      "test": {"cost": 0.0036, "u": 0.1, "rule": "cost", "block": 64,
               "first_stage": {"type": "threshold", "lambda": 0.0},
               "second_stage": null},
      "centralized": {"thresholds": [0.99601, 0.99601, 0.99467]}
    }

``densities`` holds one entry per state; an entry is either a single
density (shared by every sensor) or a list with one density per sensor.
Priors default to uniform.  Quantizer entries may likewise be a single
quantizer (replicated across sensors) or a per-sensor list.  A missing
``second_stage`` means "solve for the maximin quantizers".
"""
from __future__ import annotations

import json
from dataclasses import dataclass, replace
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import AssumptionViolation, ConfigError
from .models import FiniteSupport, Gaussian, HypothesisSet
from .quantizers import (CellMapQuantizer, IntervalQuantizer, QuantizerVector,
                         RandomizedQuantizer, ULQQuantizer)

BUNDLED = ("ht1", "ht2")


@dataclass(frozen=True)
class ExperimentConfig:
    hs: HypothesisSet
    cost: float = 3.6e-3
    u: float = None
    rule: str = "cost"
    block: int = 64
    first_stage: object = None
    second_stage: tuple = None
    thresholds: tuple = None
    name: str = ""

    def with_sensors(self, K: int) -> "ExperimentConfig":
        """Replicate sensor 0 ``K`` times; explicit per-sensor quantizers are dropped."""
        if not self.hs.homogeneous():
            raise ConfigError("only configurations with identical sensors can be replicated")
        first = self.first_stage
        if isinstance(first, QuantizerVector):
            first = first[0]
        return replace(self, hs=self.hs.with_sensors(K), first_stage=first, second_stage=None)

    def first_stage_vector(self):
        q = self.first_stage
        if q is None or isinstance(q, QuantizerVector):
            return q
        return QuantizerVector.replicate(q, self.hs.K)


def _need(obj, key, path, kind=None):
    if not isinstance(obj, dict) or key not in obj:
        raise ConfigError(f"missing field {key!r}", path)
    val = obj[key]
    if kind is not None and not isinstance(val, kind):
        raise ConfigError(f"expected {kind.__name__ if isinstance(kind, type) else 'value'}",
                          f"{path}.{key}" if path else key)
    return val


def _number(obj, key, path, default=None):
    if key not in obj or obj[key] is None:
        if default is None:
            raise ConfigError(f"missing field {key!r}", path)
        return default
    val = obj[key]
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        raise ConfigError("expected a number", f"{path}.{key}" if path else key)
    return float(val)


def parse_density(obj, path):
    if not isinstance(obj, dict):
        raise ConfigError("density must be an object", path)
    family = obj.get("family")
    try:
        if family == "gaussian":
            return Gaussian(_number(obj, "mean", path), _number(obj, "stddev", path, 1.0))
        if family == "finite":
            return FiniteSupport(tuple(_need(obj, "probs", path, list)))
    except ConfigError as exc:
        if exc.path:
            raise
        raise ConfigError(str(exc), path) from exc
    raise ConfigError(f"unknown density family {family!r}", f"{path}.family")


def density_to_dict(d) -> dict:
    if isinstance(d, Gaussian):
        return {"family": "gaussian", "mean": d.mean, "stddev": d.stddev}
    return {"family": "finite", "probs": list(d.probs)}


def parse_hypotheses(obj, path="", sensors=None) -> HypothesisSet:
    raw = _need(obj, "densities", path, list)
    K = int(sensors if sensors is not None else obj.get("sensors", 1))
    rows = []
    for m, entry in enumerate(raw):
        p = f"{path}densities[{m}]"
        if isinstance(entry, list):
            row = tuple(parse_density(e, f"{p}[{k}]") for k, e in enumerate(entry))
            if sensors is None and "sensors" not in obj:
                K = len(row)
            if len(row) != K:
                raise ConfigError(f"expected {K} per-sensor densities", p)
        else:
            row = (parse_density(entry, p),) * K
        rows.append(row)
    M = len(rows)
    priors = obj.get("priors") or [1.0 / M] * M
    try:
        return HypothesisSet(tuple(rows), tuple(priors), obj.get("loss"),
                             obj.get("groups"), name=obj.get("name", ""))
    except AssumptionViolation:
        raise
    except ConfigError as exc:
        raise ConfigError(str(exc), f"{path}hypotheses") from exc


def hypotheses_to_dict(hs: HypothesisSet) -> dict:
    dens = []
    for row in hs.densities:
        dens.append(density_to_dict(row[0]) if len(set(row)) == 1
                    else [density_to_dict(d) for d in row])
    return {"name": hs.name, "sensors": hs.K, "densities": dens, "priors": list(hs.priors),
            "loss": [list(r) for r in hs.loss], "groups": [list(g) for g in hs.groups]}


def parse_quantizer(obj, path):
    if not isinstance(obj, dict):
        raise ConfigError("quantizer must be an object", path)
    kind = obj.get("type")
    try:
        if kind == "threshold":
            return IntervalQuantizer.threshold(_number(obj, "lambda", path))
        if kind == "interval":
            return IntervalQuantizer(tuple(_need(obj, "breakpoints", path, list)),
                                     tuple(_need(obj, "labels", path, list)),
                                     int(obj.get("alphabet_size", 2)))
        if kind == "ulq":
            return ULQQuantizer(np.asarray(_need(obj, "coefficients", path, list), dtype=float))
        if kind == "cellmap":
            return CellMapQuantizer(tuple(_need(obj, "cells", path, list)),
                                    int(obj.get("alphabet_size", 2)))
    except ConfigError as exc:
        if exc.path:
            raise
        raise ConfigError(str(exc), path) from exc
    raise ConfigError(f"unknown quantizer type {kind!r}", f"{path}.type")


def quantizer_to_dict(q) -> dict:
    if isinstance(q, IntervalQuantizer):
        return {"type": "interval", "breakpoints": list(q.breakpoints), "labels": list(q.labels),
                "alphabet_size": q.alphabet_size}
    if isinstance(q, ULQQuantizer):
        return {"type": "ulq", "coefficients": q.matrix.tolist()}
    if isinstance(q, CellMapQuantizer):
        return {"type": "cellmap", "cells": list(q.cells), "alphabet_size": q.alphabet_size}
    raise TypeError(f"not a deterministic quantizer: {q!r}")


def parse_vector(obj, path, K):
    if isinstance(obj, list):
        if len(obj) != K:
            raise ConfigError(f"expected {K} per-sensor quantizers", path)
        return QuantizerVector(tuple(parse_quantizer(o, f"{path}[{k}]") for k, o in enumerate(obj)))
    return QuantizerVector.replicate(parse_quantizer(obj, path), K)


def vector_to_list(vec) -> list:
    return [quantizer_to_dict(q) for q in vec]


def parse_randomized(obj, path, K):
    if isinstance(obj, dict) and "components" in obj:
        comps = _need(obj, "components", path, list)
        weights = obj.get("weights") or [1.0 / len(comps)] * len(comps)
        vecs = tuple(parse_vector(c, f"{path}.components[{j}]", K) for j, c in enumerate(comps))
        try:
            return RandomizedQuantizer(vecs, tuple(weights))
        except ConfigError as exc:
            raise ConfigError(str(exc), path) from exc
    return RandomizedQuantizer.deterministic(parse_vector(obj, path, K))


def randomized_to_dict(rq: RandomizedQuantizer) -> dict:
    return {"weights": list(rq.weights), "components": [vector_to_list(c) for c in rq.components]}


def parse_config(obj, source: str = "") -> ExperimentConfig:
    if not isinstance(obj, dict):
        raise ConfigError("configuration must be a JSON object", source or None)
    hs = parse_hypotheses(obj)
    test = obj.get("test") or {}
    if not isinstance(test, dict):
        raise ConfigError("expected an object", "test")
    first = test.get("first_stage")
    if first is not None:
        first = (parse_vector(first, "test.first_stage", hs.K) if isinstance(first, list)
                 else parse_quantizer(first, "test.first_stage"))
    second = test.get("second_stage")
    if second is not None:
        if not isinstance(second, list) or len(second) != hs.M:
            raise ConfigError(f"expected one entry per state ({hs.M})", "test.second_stage")
        second = tuple(parse_randomized(s, f"test.second_stage[{m}]", hs.K)
                       for m, s in enumerate(second))
    rule = test.get("rule", "cost")
    if rule not in ("cost", "threshold"):
        raise ConfigError(f"unknown stopping rule {rule!r}", "test.rule")
    u = test.get("u")
    if u is not None and (isinstance(u, bool) or not isinstance(u, (int, float))):
        raise ConfigError("expected a number", "test.u")
    central = obj.get("centralized") or {}
    thresholds = central.get("thresholds")
    if thresholds is not None:
        if not isinstance(thresholds, list) or len(thresholds) != hs.M:
            raise ConfigError(f"expected {hs.M} thresholds", "centralized.thresholds")
        thresholds = tuple(float(a) for a in thresholds)
    block = test.get("block", 64)
    if isinstance(block, bool) or not isinstance(block, int):
        raise ConfigError("expected an integer", "test.block")
    return ExperimentConfig(hs, _number(test, "cost", "test", 3.6e-3), u, rule, block, first,
                            second, thresholds, obj.get("name", hs.name))


def config_to_dict(cfg: ExperimentConfig) -> dict:
    out = hypotheses_to_dict(cfg.hs)
    out["name"] = cfg.name
    first = cfg.first_stage
    test = {"cost": cfg.cost, "u": cfg.u, "rule": cfg.rule, "block": cfg.block,
            "first_stage": None if first is None else (
                vector_to_list(first) if isinstance(first, QuantizerVector) else quantizer_to_dict(first)),
            "second_stage": None if cfg.second_stage is None else
            [randomized_to_dict(rq) for rq in cfg.second_stage]}
    out["test"] = test
    out["centralized"] = {"thresholds": None if cfg.thresholds is None else list(cfg.thresholds)}
    return out


def load_config(path) -> ExperimentConfig:
    """Read a configuration file, or a bundled one by name (``ht1``, ``ht2``)."""
    if str(path) in BUNDLED:
        text = resources.files("seqfusion.data").joinpath(f"{path}.json").read_text()
        source = f"<bundled {path}>"
    else:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read configuration: {exc.strerror}", str(path)) from exc
        source = str(path)
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc.msg}", f"{source}:{exc.lineno}:{exc.colno}") from exc
    return parse_config(obj, source)
