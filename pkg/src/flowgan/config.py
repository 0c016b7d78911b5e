"""Layered pipeline configuration: packaged defaults, a YAML file, flag overrides."""

from __future__ import annotations

import copy
import os
from datetime import date
from importlib import resources
from pathlib import Path
from typing import Any, Mapping

import yaml

from .evaluation import CheckConfig
from .flows import DEFAULT_COLUMNS, SubnetRules
from .ip2vec import IP2VecConfig
from .wgan import GanConfig


class ConfigError(ValueError):
    pass


def default_config() -> dict:
    text = resources.files("flowgan").joinpath("default_config.yaml").read_text()
    return yaml.safe_load(text)


def merge(base: Mapping, override: Mapping, where: str = "") -> dict:
    """Recursive merge; keys unknown to ``base`` are rejected."""
    out = copy.deepcopy(dict(base))
    for key, value in override.items():
        path = f"{where}{key}"
        if key not in out:
            raise ConfigError(f"unknown configuration key {path!r}")
        if isinstance(out[key], dict) and isinstance(value, Mapping) and key != "columns":
            out[key] = merge(out[key], value, path + ".")
        else:
            out[key] = copy.deepcopy(value)
    return out


class PipelineConfig:
    def __init__(self, data: Mapping[str, Any]):
        self.data = dict(data)
        self._validate()

    @classmethod
    def load(cls, path: str | os.PathLike | None = None,
             overrides: Mapping[str, Any] | None = None) -> "PipelineConfig":
        data = default_config()
        if path is not None:
            try:
                text = Path(path).read_text()
            except OSError as exc:
                raise ConfigError(f"cannot read config {path}: {exc}") from exc
            loaded = yaml.safe_load(text) or {}
            if not isinstance(loaded, Mapping):
                raise ConfigError(f"{path}: top level must be a mapping")
            data = merge(data, loaded)
        if overrides:
            data = merge(data, overrides)
        return cls(data)

    def _validate(self) -> None:
        d = self.data
        try:
            self.week_start
            self.subnet_rules()
            self.check_config()
            GanConfig(**self._gan_kwargs("e"))
        except (TypeError, ValueError, KeyError) as exc:
            raise ConfigError(f"invalid configuration: {exc}") from exc
        if d["ip2vec"]["pairs"] not in ("extended", "original"):
            raise ConfigError("ip2vec.pairs must be 'extended' or 'original'")
        if d["ip2vec"]["embedding_side"] not in ("auto", "input"):
            raise ConfigError("ip2vec.embedding_side must be 'auto' or 'input'")
        if d["ingest"]["unknown_addresses"] not in ("alias", "reject"):
            raise ConfigError("ingest.unknown_addresses must be 'alias' or 'reject'")
        if int(d["workers"]) < 1:
            raise ConfigError("workers must be >= 1")

    # -- views
    @property
    def seed(self) -> int:
        return int(self.data["seed"])

    @property
    def workers(self) -> int:
        return int(self.data["workers"])

    @property
    def week_start(self) -> date:
        value = self.data["week_start"]
        d = value if isinstance(value, date) else date.fromisoformat(str(value))
        if d.weekday() != 0:
            raise ValueError(f"week_start {d} is not a Monday")
        return d

    def column_map(self) -> dict[str, str]:
        cols = self.data["columns"]
        return dict(DEFAULT_COLUMNS) if cols is None else {**DEFAULT_COLUMNS, **cols}

    def subnet_rules(self) -> SubnetRules:
        return SubnetRules.from_config(self.data["subnets"])

    def ingest_kwargs(self) -> dict:
        i = self.data["ingest"]
        return {"max_bad_fraction": float(i["max_bad_fraction"]), "strict": bool(i["strict"]),
                "unknown_addresses": i["unknown_addresses"], "limit": i["limit"]}

    def ip2vec_config(self) -> IP2VecConfig:
        c = self.data["ip2vec"]
        return IP2VecConfig(dim=int(c["dim"]), epochs=int(c["epochs"]), negatives=int(c["negatives"]),
                            learning_rate=float(c["learning_rate"]),
                            min_learning_rate=float(c["min_learning_rate"]),
                            noise_power=float(c["noise_power"]), extended=c["pairs"] == "extended",
                            chunk_size=int(c["chunk_size"]), seed=self.seed,
                            embedding_side=c["embedding_side"])

    def _gan_kwargs(self, method: str) -> dict:
        g = self.data["gan"]
        width = int(g["hidden"][method.lower()])
        hidden = (width,) * int(g["layers"])
        return {"noise_dim": int(g["noise_dim"]), "generator_hidden": hidden, "critic_hidden": hidden,
                "penalty": float(g["penalty"]), "critic_lr": float(g["critic_lr"]),
                "generator_lr": float(g["generator_lr"]), "beta1": float(g["beta1"]),
                "beta2": float(g["beta2"]), "n_critic": int(g["n_critic"]),
                "batch_size": int(g["batch_size"]), "epochs": float(g["epochs"]),
                "iterations": None if g["iterations"] is None else int(g["iterations"]),
                "seed": self.seed}

    def gan_config(self, method: str) -> GanConfig:
        return GanConfig(**self._gan_kwargs(method))

    def check_config(self) -> CheckConfig:
        e = self.data["evaluation"]
        return CheckConfig(tuple(e["internal_prefixes"]), e["label_handling"])

    def snapshot(self, command: str, inputs: Mapping[str, Any] | None = None) -> str:
        """Resolved configuration as YAML; contains no clock-dependent values."""
        doc = {"command": command, "inputs": dict(inputs or {}), "config": self.data}
        return yaml.safe_dump(doc, sort_keys=True, default_flow_style=False)

    def write_snapshot(self, path: str | os.PathLike, command: str,
                       inputs: Mapping[str, Any] | None = None) -> None:
        Path(path).write_text(self.snapshot(command, inputs))
