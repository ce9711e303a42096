"""Experiment configuration: INI-style ``key = value`` sections with a fixed schema.

Every key lives in exactly one section; ``--set`` overrides may name it as
``key=value`` or ``section.key=value``. Defaults reproduce the paper-scale
setup (K=20, E=5, B=32, lr=0.1, 40% online, alpha=0.25, tau=100,
lambda=gamma=0.01, T=200).
"""

from __future__ import annotations

import configparser
import dataclasses
import io
from dataclasses import dataclass, field, fields
from pathlib import Path

from fedlf.baselines import METHODS, BaselineConfig
from fedlf.data import PartitionSpec
from fedlf.errors import ConfigError
from fedlf.federation import FLConfig
from fedlf.losses import FedLFWeights
from fedlf.model import ModelArch


def _f(section, default, key=None, choices=None, minimum=None, exclusive=False, maximum=None):
    return field(default=default, metadata={"section": section, "key": key, "choices": choices,
                                            "min": minimum, "exclusive": exclusive, "max": maximum})


@dataclass(frozen=True)
class ExperimentConfig:
    # [data]
    dataset: str = _f("data", "synthetic", choices=("synthetic", "cifar10"))
    data_path: str = _f("data", "")
    num_classes: int = _f("data", 10, minimum=2)
    input_dim: int = _f("data", 16, minimum=1)
    n_max: int = _f("data", 5000, minimum=1)
    n_test_per_class: int = _f("data", 100, minimum=1)
    class_spread: float = _f("data", 3.0, minimum=0.0)
    noise: float = _f("data", 1.0, minimum=0.0, exclusive=True)
    data_seed: int = _f("data", 0)
    # [partition]
    num_clients: int = _f("partition", 20, minimum=1)
    dirichlet_alpha: float = _f("partition", 0.5, minimum=0.0, exclusive=True)
    imbalance_factor: float = _f("partition", 100.0, minimum=1.0)
    # [model]
    hidden_widths: tuple = _f("model", (64,))
    feature_dim: int = _f("model", 32, minimum=1)
    activation: str = _f("model", "relu", choices=("relu", "tanh"))
    activate_features: bool = _f("model", False)
    # [federation]
    num_rounds: int = _f("federation", 200, minimum=0)
    online_rate: float = _f("federation", 0.4, minimum=0.0, exclusive=True, maximum=1.0)
    local_epochs: int = _f("federation", 5, minimum=1)
    batch_size: int = _f("federation", 32, minimum=1)
    learning_rate: float = _f("federation", 0.1, minimum=0.0)
    method: str = _f("federation", "fedlf", choices=METHODS)
    focal_gamma: float = _f("federation", 2.0, minimum=0.0)
    prox_mu: float = _f("federation", 0.01, minimum=0.0)
    seed: int = _f("federation", 0)
    checkpoint_every: int = _f("federation", 0, minimum=0)
    max_workers: int = _f("federation", 1, minimum=1)
    # [fedlf]
    lam: float = _f("fedlf", 0.01, key="lambda", minimum=0.0)
    gamma: float = _f("fedlf", 0.01, minimum=0.0)
    smoothing_factor: float = _f("fedlf", 0.25, minimum=0.0, maximum=1.0)
    tau: float = _f("fedlf", 100.0, minimum=0.0, exclusive=True)
    use_center: bool = _f("fedlf", True)
    use_decorrelation: bool = _f("fedlf", True)
    decorrelation_exclude_diagonal: bool = _f("fedlf", False)
    center_reduction: str = _f("fedlf", "mean", choices=("mean", "sum"))
    min_decorrelation_batch: int = _f("fedlf", 4, minimum=2)
    # [groups]
    head_threshold: int = _f("groups", 1500, minimum=0)
    tail_threshold: int = _f("groups", 200, minimum=0)
    # [output]
    out: str = _f("output", "fedlf_report.csv")
    format: str = _f("output", "csv", choices=("csv", "jsonl"))

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)

    def arch(self) -> ModelArch:
        return ModelArch(input_dim=3072 if self.dataset == "cifar10" else self.input_dim,
                         feature_dim=self.feature_dim, num_classes=self.num_classes,
                         hidden_widths=tuple(self.hidden_widths), activation=self.activation,
                         activate_features=self.activate_features)

    def partition(self) -> PartitionSpec:
        return PartitionSpec(self.num_clients, self.dirichlet_alpha, self.imbalance_factor,
                             self.seed)

    def fl(self) -> FLConfig:
        return FLConfig(
            num_rounds=self.num_rounds, num_clients=self.num_clients, online_rate=self.online_rate,
            local_epochs=self.local_epochs, batch_size=self.batch_size,
            learning_rate=self.learning_rate,
            method=BaselineConfig(self.method, self.focal_gamma, self.prox_mu),
            weights=FedLFWeights(lam=self.lam, gamma=self.gamma, tau=self.tau,
                                 smoothing_factor=self.smoothing_factor,
                                 use_center=self.use_center,
                                 use_decorrelation=self.use_decorrelation,
                                 exclude_diagonal=self.decorrelation_exclude_diagonal,
                                 center_reduction=self.center_reduction,
                                 min_decorrelation_batch=self.min_decorrelation_batch),
            seed=self.seed, checkpoint_every=self.checkpoint_every, max_workers=self.max_workers)


def _schema():
    out = {}
    for f in fields(ExperimentConfig):
        key = f.metadata["key"] or f.name
        out[key] = (f, f.metadata["section"])
    return out


SCHEMA = _schema()
_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


def _convert(f, text: str):
    text = text.strip()
    kind = type(f.default)
    if kind is bool:
        low = text.lower()
        if low in _TRUE:
            return True
        if low in _FALSE:
            return False
        raise ValueError(f"expected a boolean, got {text!r}")
    if kind is int:
        return int(text)
    if kind is float:
        return float(text)
    if kind is tuple:
        return tuple(int(p) for p in text.replace(";", ",").split(",") if p.strip())
    return text


def _check(f, value, key) -> list[str]:
    m = f.metadata
    problems = []
    if m["choices"] and value not in m["choices"]:
        problems.append(f"{key}: must be one of {', '.join(m['choices'])} (got {value!r})")
    if m["min"] is not None:
        if m["exclusive"] and not value > m["min"]:
            problems.append(f"{key}: must be > {m['min']} (got {value})")
        elif not m["exclusive"] and value < m["min"]:
            problems.append(f"{key}: must be >= {m['min']} (got {value})")
    if m["max"] is not None and value > m["max"]:
        problems.append(f"{key}: must be <= {m['max']} (got {value})")
    return problems


def _resolve_key(name: str):
    if "." in name:
        section, key = name.split(".", 1)
        if key in SCHEMA and SCHEMA[key][1] == section:
            return key
        return None
    return name if name in SCHEMA else None


def parse_config(path=None, overrides=(), text: str | None = None) -> ExperimentConfig:
    """Build a validated config from a file (or ``text``) plus ``key=value`` overrides.

    All problems (unknown keys, bad types, constraint violations) are
    collected and raised together as one :class:`ConfigError`.
    """
    problems: list[str] = []
    raw: dict[str, str] = {}
    if path is not None:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if text:
        cp = configparser.ConfigParser(interpolation=None, default_section="__none__")
        cp.optionxform = str
        try:
            cp.read_string(text)
        except configparser.Error as exc:
            raise ConfigError(f"malformed config: {exc}") from exc
        for section in cp.sections():
            for key, value in cp.items(section):
                if key not in SCHEMA:
                    problems.append(f"unknown key {section}.{key}")
                elif SCHEMA[key][1] != section:
                    problems.append(f"key {key} belongs in [{SCHEMA[key][1]}], found in [{section}]")
                else:
                    raw[key] = value
    for item in overrides:
        if "=" not in item:
            problems.append(f"override {item!r} is not key=value")
            continue
        name, value = item.split("=", 1)
        key = _resolve_key(name.strip())
        if key is None:
            problems.append(f"unknown key {name.strip()}")
        else:
            raw[key] = value

    values = {}
    for key, text_value in raw.items():
        f, _ = SCHEMA[key]
        try:
            values[f.name] = _convert(f, text_value)
        except ValueError as exc:
            problems.append(f"{key}: {exc}")
    cfg = ExperimentConfig(**values)
    for key, (f, _) in SCHEMA.items():
        v = getattr(cfg, f.name)
        if type(f.default) is tuple:
            if any(w < 1 for w in v):
                problems.append(f"{key}: widths must be positive integers (got {v})")
            continue
        problems.extend(_check(f, v, key))
    problems.extend(_cross_checks(cfg))
    if problems:
        raise ConfigError(problems)
    return cfg


def _cross_checks(cfg: ExperimentConfig) -> list[str]:
    out = []
    if cfg.head_threshold < cfg.tail_threshold:
        out.append("head_threshold must be >= tail_threshold")
    if cfg.dataset == "cifar10":
        if not cfg.data_path:
            out.append("data_path: required when dataset = cifar10")
        elif not Path(cfg.data_path).is_dir():
            out.append(f"data_path: {cfg.data_path} is not a directory")
        if cfg.num_classes != 10:
            out.append("num_classes must be 10 for cifar10")
    return out


def dump_config(cfg: ExperimentConfig) -> str:
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    for key, (f, section) in SCHEMA.items():
        if not cp.has_section(section):
            cp.add_section(section)
        v = getattr(cfg, f.name)
        if isinstance(v, bool):
            s = "true" if v else "false"
        elif isinstance(v, tuple):
            s = ",".join(str(w) for w in v)
        else:
            s = repr(v) if isinstance(v, float) else str(v)
        cp.set(section, key, s)
    buf = io.StringIO()
    cp.write(buf)
    return buf.getvalue()
