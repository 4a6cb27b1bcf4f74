"""Experiment configuration files.

Configs are INI-style text with dotted key names, e.g. ``train.epochs``
lives under ``[train]``. Unknown sections or keys are rejected so typos
surface as errors naming the key. Example::

    [experiment]
    id = synth_is09_svm
    feature = is09
    classifier = svm
    seed = 0
    output_dir = runs/synth_is09_svm

    [data]
    manifests = synth/manifest.csv
"""
from __future__ import annotations

import configparser
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from .classifiers import LogRegConfig, LstmConfig, SvmConfig
from .errors import ConfigError
from .features import FEATURE_KINDS

CLASSIFIERS = ("logreg", "svm", "lstm", "mtl")


@dataclass
class ExperimentSection:
    id: str = "experiment"
    feature: str = "is09"
    classifier: str = "svm"
    seed: int = 0
    output_dir: str = "runs/experiment"
    allow_any_pairing: bool = False
    workers: int = 1


@dataclass
class DataSection:
    manifests: list = field(default_factory=list)
    test_manifests: list = field(default_factory=list)
    cache_dir: str = ""
    strict_labels: bool = True
    iemocap_excitement_as_happy: bool = False
    held_out_speakers: list = field(default_factory=list)
    split_file: str = ""
    split_per_language: bool = False


@dataclass
class FinetuneSection:
    base_model: str = ""
    train_head: bool = False
    refit_normalizer: bool = False
    epochs: int = 50
    lr: float = 1e-3
    batch_size: int = 32
    patience: int = 5


@dataclass
class ExperimentConfig:
    experiment: ExperimentSection = field(default_factory=ExperimentSection)
    data: DataSection = field(default_factory=DataSection)
    train: LstmConfig = field(default_factory=LstmConfig)
    logreg: LogRegConfig = field(default_factory=LogRegConfig)
    svm: SvmConfig = field(default_factory=SvmConfig)
    finetune: FinetuneSection = field(default_factory=FinetuneSection)
    base_dir: str = "."

    def path(self, p):
        p = Path(p)
        return p if p.is_absolute() else Path(self.base_dir) / p

    def to_dict(self):
        d = asdict(self)
        d.pop("base_dir")
        return d

    def lstm_config(self):
        cfg = LstmConfig(**asdict(self.train))
        cfg.seed = self.experiment.seed
        return cfg

    def finetune_config(self):
        cfg = self.lstm_config()
        for k in ("train_head", "refit_normalizer", "epochs", "lr", "batch_size", "patience"):
            setattr(cfg, k, getattr(self.finetune, k))
        return cfg


_SECTIONS = ("experiment", "data", "train", "logreg", "svm", "finetune")


def _convert(raw, current, key):
    try:
        if isinstance(current, bool):
            low = raw.strip().lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if isinstance(current, int):
            return int(raw)
        if isinstance(current, float) or current is None:
            return None if raw.strip().lower() in ("", "none", "auto") else float(raw)
        if isinstance(current, list):
            return [s.strip() for s in raw.replace("\n", ",").split(",") if s.strip()]
        return raw.strip()
    except ValueError:
        raise ConfigError(f"bad value {raw!r} for {key}", [key]) from None


def validate(cfg: ExperimentConfig):
    e = cfg.experiment
    if e.feature not in FEATURE_KINDS:
        raise ConfigError(f"experiment.feature must be one of {FEATURE_KINDS}", ["experiment.feature"])
    if e.classifier not in CLASSIFIERS:
        raise ConfigError(f"experiment.classifier must be one of {CLASSIFIERS}",
                          ["experiment.classifier"])
    if not e.allow_any_pairing:
        if e.classifier in ("svm", "logreg") and e.feature != "is09":
            raise ConfigError(f"classifier/feature: {e.classifier} requires is09 features "
                              "(set experiment.allow_any_pairing to override)",
                              ["experiment.classifier", "experiment.feature"])
        if e.classifier == "mtl" and e.feature != "mfcc_seq":
            raise ConfigError("classifier/feature: mtl requires mfcc_seq features "
                              "(set experiment.allow_any_pairing to override)",
                              ["experiment.classifier", "experiment.feature"])
    if not cfg.data.manifests:
        raise ConfigError("data.manifests is required", ["data.manifests"])
    if cfg.train.lambda_lang < 0:
        raise ConfigError("train.lambda_lang must be >= 0", ["train.lambda_lang"])
    return cfg


def parse_config(text, base_dir="."):
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=(";", "#"))
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"unparseable config: {exc}") from None
    cfg = ExperimentConfig(base_dir=str(base_dir))
    for section in parser.sections():
        if section not in _SECTIONS:
            raise ConfigError(f"unknown section [{section}]", [section])
        target = getattr(cfg, section)
        names = {f.name for f in fields(target)}
        for key, raw in parser.items(section):
            dotted = f"{section}.{key}"
            if key not in names:
                raise ConfigError(f"unknown key {dotted}", [dotted])
            setattr(target, key, _convert(raw, getattr(target, key), dotted))
    return validate(cfg)


def load_config(path):
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}", ["config"]) from None
    return parse_config(text, path.parent)


def dump_config(cfg: ExperimentConfig):
    """Serialize back to the INI form (used for provenance and tests)."""
    lines = []
    for section in _SECTIONS:
        lines.append(f"[{section}]")
        for k, v in asdict(getattr(cfg, section)).items():
            if isinstance(v, list):
                v = ", ".join(v)
            elif v is None:
                v = "auto"
            lines.append(f"{k} = {v}")
        lines.append("")
    return "\n".join(lines)
