"""Experiment configuration: a YAML document validated into an
:class:`ExperimentConfig`, plus builders that turn its function descriptors
into objectives, environments and constraint mappings.

A minimal continuous config::

    name: linear
    algorithm: {name: mlsm, params: auto}
    domain: {simplex_dims: [2]}
    environment:
      generator: constant
      functions:
        - {kind: linear, weights: [1.0, 0.0]}
    horizon: 4096
    seeds: [0, 1, 2]
"""
from __future__ import annotations

import copy
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .environments import make_oblivious_sequence, make_stochastic_env
from .errors import ConfigError
from .geometry import make_domain
from .learners import ALGORITHMS, PRESETS, LearnerParams, default_params
from .objectives import (
    LinearObjective,
    MultilinearPolynomial,
    SaturatingObjective,
    concave_over_modular,
    coverage_function,
    facility_location,
    modular_function,
    probabilistic_coverage,
)
from .reductions import (
    OrderedListExtension,
    OrderedListSpace,
    PartitionMatroid,
    PartitionMatroidExtension,
    SequentialObjective,
)
from .sampling import RandomStream

WRAPPER = "wrapper"
TOP_KEYS = {"name", "algorithm", "environment", "domain", "constraint", "horizon", "seeds", "output_dir"}
ALGORITHM_KEYS = {"name", "params", "preset", "eta_scale", "block_scale"}
PARAM_KEYS = {"eta", "block_length", "delta"}
ENV_KEYS = {"mode", "generator", "functions", "switch_at", "probs"}
DOMAIN_KEYS = {"simplex_dims"}
CONSTRAINT_KEYS = {
    "partition_matroid": {"kind", "blocks", "capacities"},
    "cardinality": {"kind", "n", "k"},
    "ordered_list": {"kind", "alphabet", "length"},
}

CONTINUOUS_KINDS = {
    "linear": {"kind", "weights"},
    "multilinear": {"kind", "dim", "terms"},
    "saturating": {"kind", "weights", "coefs"},
    "probabilistic_coverage": {"kind", "probs", "weights"},
}
SET_KINDS = {
    "modular": {"kind", "weights"},
    "coverage": {"kind", "covers", "item_weights"},
    "concave_over_modular": {"kind", "weights", "concave"},
    "facility_location": {"kind", "utility"},
}
SEQUENCE_KINDS = {"sequential": {"kind", "weights", "positions", "dummy"}}


def _reject_unknown(section: str, got: dict, allowed: set):
    if not isinstance(got, dict):
        raise ConfigError(f"{section} must be a mapping, got {type(got).__name__}")
    extra = sorted(set(got) - allowed)
    if extra:
        raise ConfigError(f"unknown key(s) in {section}: {', '.join(map(str, extra))}")


def _require(section: str, got: dict, keys):
    missing = [k for k in keys if k not in got]
    if missing:
        raise ConfigError(f"{section} is missing: {', '.join(missing)}")


@dataclass
class ExperimentConfig:
    """Validated experiment description; ``raw`` is the normalised mapping
    that :meth:`dump` writes back out."""

    name: str
    algorithm: str
    horizon: int
    seeds: list[int]
    environment: dict
    params: dict | str = "auto"
    preset: str | None = None
    eta_scale: float = 1.0
    block_scale: float = 1.0
    domain: dict | None = None
    constraint: dict | None = None
    output_dir: str = "results"
    raw: dict = field(default_factory=dict, repr=False)

    # -------------------------------------------------------------- parsing

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        data = copy.deepcopy(data)
        _reject_unknown("config", data, TOP_KEYS)
        _require("config", data, ["algorithm", "environment", "horizon", "seeds"])

        alg = data["algorithm"]
        if isinstance(alg, str):
            alg = {"name": alg}
        _reject_unknown("algorithm", alg, ALGORITHM_KEYS)
        _require("algorithm", alg, ["name"])
        name = alg["name"]
        if name not in ALGORITHMS + (WRAPPER,):
            raise ConfigError(f"unknown algorithm {name!r}; choose from {ALGORITHMS + (WRAPPER,)}")
        params = alg.get("params", "auto")
        if params != "auto":
            _reject_unknown("algorithm.params", params, PARAM_KEYS)
        base = "mlsm4ps" if name == WRAPPER else name
        preset = alg.get("preset")
        if preset is not None and preset not in PRESETS[base]:
            raise ConfigError(f"unknown preset {preset!r} for {base}: {sorted(PRESETS[base])}")
        for k in ("eta_scale", "block_scale"):
            if k in alg and not float(alg[k]) > 0:
                raise ConfigError(f"algorithm.{k} must be positive")

        try:
            T = int(data["horizon"])
        except (TypeError, ValueError):
            raise ConfigError("horizon must be an integer") from None
        if T < 1:
            raise ConfigError("horizon must be >= 1")
        seeds = data["seeds"]
        if isinstance(seeds, int):
            seeds = [seeds]
        if not isinstance(seeds, list) or not seeds or not all(isinstance(s, int) and s >= 0 for s in seeds):
            raise ConfigError("seeds must be a non-empty list of non-negative integers")
        if len(set(seeds)) != len(seeds):
            raise ConfigError("seeds must be distinct")

        env = data["environment"]
        _reject_unknown("environment", env, ENV_KEYS)
        mode = env.get("mode", "oblivious")
        if mode not in ("oblivious", "stochastic"):
            raise ConfigError(f"environment.mode must be oblivious or stochastic, got {mode!r}")
        if not env.get("functions"):
            raise ConfigError("environment.functions must list at least one function")

        dom, con = data.get("domain"), data.get("constraint")
        if name == WRAPPER:
            if con is None:
                raise ConfigError("the wrapper needs a constraint section")
            if dom is not None:
                raise ConfigError("the wrapper derives its domain from the constraint; drop the domain section")
            kind = con.get("kind") if isinstance(con, dict) else None
            if kind not in CONSTRAINT_KEYS:
                raise ConfigError(f"constraint.kind must be one of {sorted(CONSTRAINT_KEYS)}")
            _reject_unknown("constraint", con, CONSTRAINT_KEYS[kind])
        else:
            if con is not None:
                raise ConfigError("continuous learners take a domain section, not a constraint")
            if dom is None:
                raise ConfigError("continuous learners need a domain section")
            _reject_unknown("domain", dom, DOMAIN_KEYS)
            _require("domain", dom, ["simplex_dims"])
            if mode == "stochastic":
                raise ConfigError("stochastic mode is only available through the wrapper")

        cfg = cls(
            name=str(data.get("name", name)),
            algorithm=name,
            horizon=T,
            seeds=list(seeds),
            environment=env,
            params=params,
            preset=preset,
            eta_scale=float(alg.get("eta_scale", 1.0)),
            block_scale=float(alg.get("block_scale", 1.0)),
            domain=dom,
            constraint=con,
            output_dir=str(data.get("output_dir", "results")),
            raw=data,
        )
        # build once so that descriptor errors surface before any run
        cfg.build_environment(seed=cfg.seeds[0], horizon=min(T, 8))
        return cfg

    @classmethod
    def from_yaml(cls, text: str) -> "ExperimentConfig":
        try:
            data = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            raise ConfigError(f"could not parse config: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigError("config must be a mapping at the top level")
        return cls.from_dict(data)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        p = Path(path)
        if not p.is_file():
            raise ConfigError(f"config file not found: {p}")
        return cls.from_yaml(p.read_text())

    def dump(self) -> str:
        return yaml.safe_dump(self.raw, sort_keys=False, default_flow_style=None)

    def with_horizon(self, T: int) -> "ExperimentConfig":
        data = copy.deepcopy(self.raw)
        data["horizon"] = int(T)
        return ExperimentConfig.from_dict(data)

    # ------------------------------------------------------------- builders

    @property
    def is_stochastic(self) -> bool:
        return self.environment.get("mode", "oblivious") == "stochastic"

    def build_domain(self):
        if self.algorithm == WRAPPER:
            return self.build_mapping().domain
        return make_domain(self.domain["simplex_dims"])

    def build_constraint(self):
        con = self.constraint
        kind = con["kind"]
        try:
            if kind == "partition_matroid":
                _require("constraint", con, ["blocks", "capacities"])
                return PartitionMatroid(tuple(tuple(b) for b in con["blocks"]), tuple(con["capacities"]))
            if kind == "cardinality":
                _require("constraint", con, ["n", "k"])
                return PartitionMatroid.cardinality(int(con["n"]), int(con["k"]))
            _require("constraint", con, ["alphabet"])
            return OrderedListSpace(int(con["alphabet"]), con.get("length"))
        except ConfigError:
            raise
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad constraint: {exc}") from None

    def build_mapping(self):
        c = self.build_constraint()
        if isinstance(c, PartitionMatroid):
            return PartitionMatroidExtension(c)
        return OrderedListExtension(c)

    def build_functions(self) -> list:
        wrapper = self.algorithm == WRAPPER
        out = []
        for i, desc in enumerate(self.environment["functions"]):
            where = f"environment.functions[{i}]"
            out.append(build_function(desc, discrete=wrapper, where=where))
        return out

    def build_environment(self, seed: int, horizon: int | None = None):
        T = self.horizon if horizon is None else int(horizon)
        funcs = self.build_functions()
        env = self.environment
        try:
            if self.is_stochastic:
                spec = {"functions": funcs, "horizon": T, "name": self.name}
                if "probs" in env:
                    spec["probs"] = env["probs"]
                # the draw sequence gets its own stream, disjoint from the learner's
                return make_stochastic_env(spec, environment_stream(seed))
            spec = {
                "generator": env.get("generator", "constant"),
                "functions": funcs,
                "horizon": T,
                "name": self.name,
            }
            if "switch_at" in env:
                spec["switch_at"] = env["switch_at"]
            if self.algorithm != WRAPPER:
                spec["domain"] = self.build_domain()
            return make_oblivious_sequence(spec)
        except ConfigError:
            raise
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad environment: {exc}") from None

    def learner_params(self, horizon: int | None = None) -> LearnerParams:
        T = self.horizon if horizon is None else int(horizon)
        dom = self.build_domain()
        base = "mlsm4ps" if self.algorithm == WRAPPER else self.algorithm
        auto = default_params(
            base, dom.dim, T, D=dom.diameter, preset=self.preset,
            eta_scale=self.eta_scale, block_scale=self.block_scale,
        )
        if self.params == "auto":
            return auto
        p = self.params
        return LearnerParams(
            eta=float(p.get("eta", auto.eta)),
            block_length=int(p.get("block_length", auto.block_length)),
            delta=float(p["delta"]) if "delta" in p else auto.delta,
            raw_block_length=auto.raw_block_length,
            raw_delta=auto.raw_delta,
            preset=auto.preset,
        )


def run_stream(seed: int) -> RandomStream:
    """Stream driving the learner (and, for the wrapper, EXT sampling)."""
    return RandomStream(seed, (0,))


def environment_stream(seed: int) -> RandomStream:
    """Stream that fixes a stochastic environment's draw sequence."""
    return RandomStream(seed, (1,))


def build_function(desc: dict, discrete: bool, where: str = "function"):
    """Turn one function descriptor into an objective.

    Continuous kinds: linear, multilinear, saturating, probabilistic_coverage.
    Discrete kinds: modular, coverage, concave_over_modular,
    facility_location, and sequential (ordered-list objectives).
    """
    if not isinstance(desc, dict) or "kind" not in desc:
        raise ConfigError(f"{where} must be a mapping with a 'kind'")
    kind = desc["kind"]
    table = {**SET_KINDS, **SEQUENCE_KINDS} if discrete else CONTINUOUS_KINDS
    if kind not in table:
        raise ConfigError(f"{where}: unknown kind {kind!r}; choose from {sorted(table)}")
    _reject_unknown(where, desc, table[kind])
    try:
        if kind == "linear":
            return LinearObjective(desc["weights"])
        if kind == "multilinear":
            terms = {}
            for t in desc["terms"]:
                terms[tuple(int(i) for i in t["vars"])] = float(t["coef"])
            return MultilinearPolynomial.from_terms(int(desc["dim"]), terms)
        if kind == "saturating":
            return SaturatingObjective(desc["weights"], desc.get("coefs"))
        if kind == "probabilistic_coverage":
            return probabilistic_coverage(desc["probs"], desc.get("weights"))
        if kind == "modular":
            return modular_function(desc["weights"])
        if kind == "coverage":
            return coverage_function(desc["covers"], desc.get("item_weights"))
        if kind == "concave_over_modular":
            return concave_over_modular(desc["weights"], desc.get("concave", "sqrt"))
        if kind == "facility_location":
            return facility_location(np.asarray(desc["utility"], dtype=float))
        # sequential
        pos = [build_function(p, True, f"{where}.positions[{j}]") for j, p in enumerate(desc["positions"])]
        return SequentialObjective(desc["weights"], pos, desc.get("dummy"))
    except ConfigError:
        raise
    except KeyError as exc:
        raise ConfigError(f"{where} is missing {exc}") from None
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from None
