"""Experiment orchestration: extract -> split -> train -> evaluate -> report.

Each run writes into ``experiment.output_dir``:

- ``model.serm``           trained model bundle (transfer runs: one per target)
- ``splits/<corpus>.json`` the speaker-disjoint split used
- ``reports.json``         full-precision results plus provenance
- ``table.txt``            the aligned text table
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .bundle import read_model, write_model
from .cache import FeatureCache, extract_records, file_sha256
from .classifiers import (finetune_frozen, predict, train_logreg, train_lstm, train_multitask,
                          train_svm_ovr)
from .config import ExperimentConfig
from .corpus import SplitSpec, load_manifest, split_speaker_disjoint, split_from_json, split_to_json
from .errors import FeatureKindMismatch, UnknownSpeaker, VariantMismatch
from .evaluation import compute_metrics, render_report

log = logging.getLogger(__name__)


@dataclass
class Corpus:
    name: str
    manifest: Path
    records: list
    cache: FeatureCache
    cache_sha: str
    train: list = field(default_factory=list)
    test: list = field(default_factory=list)
    split: SplitSpec | None = None

    def X(self, records, kind):
        return self.cache.matrix(records, kind)


def corpus_name(records, manifest):
    names = sorted({r.corpus for r in records})
    name = "+".join(names) if names else Path(manifest).stem
    if name == "synthetic":
        name += "-" + "+".join(sorted({r.language for r in records}))
    return name


def cache_path_for(cfg: ExperimentConfig, manifest: Path):
    base = cfg.path(cfg.data.cache_dir) if cfg.data.cache_dir else \
        cfg.path(cfg.experiment.output_dir) / "cache"
    base.mkdir(parents=True, exist_ok=True)
    return base / f"{manifest.parent.name}_{manifest.stem}.serf"


def load_corpus(cfg: ExperimentConfig, manifest, kinds):
    manifest = cfg.path(manifest)
    records = load_manifest(manifest, cfg.data.strict_labels, cfg.data.iemocap_excitement_as_happy)
    path = cache_path_for(cfg, manifest)
    cache = FeatureCache.load(path) if path.exists() else FeatureCache()
    before = len(cache)
    extract_records(records, kinds, cfg.experiment.workers, cache)
    if len(cache) != before or not path.exists():
        cache.save(path)
    return Corpus(corpus_name(records, manifest), manifest, records, cache, file_sha256(path))


def split_corpus(cfg: ExperimentConfig, corpus: Corpus):
    if cfg.data.split_file:
        text = cfg.path(cfg.data.split_file).read_text()
        corpus.train, corpus.test, corpus.split = split_from_json(text, corpus.records)
        return corpus
    speakers = {r.speaker_id for r in corpus.records}
    wanted = [s for s in cfg.data.held_out_speakers if s in speakers]
    if cfg.data.split_per_language:
        train, test, held = [], [], []
        for lang in sorted({r.language for r in corpus.records}):
            group = [r for r in corpus.records if r.language == lang]
            group_spk = {r.speaker_id for r in group}
            spec = SplitSpec(corpus.name, [s for s in wanted if s in group_spk], cfg.experiment.seed)
            tr, te, used = split_speaker_disjoint(group, spec)
            train += tr
            test += te
            held += used.held_out_speakers
        order = {r.id: i for i, r in enumerate(corpus.records)}
        corpus.train = sorted(train, key=lambda r: order[r.id])
        corpus.test = sorted(test, key=lambda r: order[r.id])
        corpus.split = SplitSpec(corpus.name, sorted(held), cfg.experiment.seed)
    else:
        if cfg.data.held_out_speakers and not wanted:
            raise UnknownSpeaker(f"none of {cfg.data.held_out_speakers} speak in {corpus.name}")
        spec = SplitSpec(corpus.name, wanted, cfg.experiment.seed)
        corpus.train, corpus.test, corpus.split = split_speaker_disjoint(corpus.records, spec)
    return corpus


def _write_split(out: Path, corpus: Corpus):
    (out / "splits").mkdir(parents=True, exist_ok=True)
    (out / "splits" / f"{corpus.name}.json").write_text(
        split_to_json(corpus.train, corpus.test, corpus.split) + "\n")


def train_classifier(cfg: ExperimentConfig, X, y, languages=None, classifier=None):
    kind = cfg.experiment.feature
    classifier = classifier or cfg.experiment.classifier
    if classifier == "logreg":
        return train_logreg(X, y, cfg.logreg, kind)
    if classifier == "svm":
        return train_svm_ovr(X, y, cfg.svm, kind)
    if classifier == "lstm":
        return train_lstm(X, y, cfg.lstm_config(), kind)
    return train_multitask(X, y, languages, cfg.lstm_config(), kind)


def evaluate(model, corpus: Corpus, records, kind, experiment_id, tags, config, seed):
    preds = predict(model, corpus.X(records, kind), kind)
    return compute_metrics([p.emotion for p in preds], [r.emotion for r in records],
                           labels=list(model.labels), experiment_id=experiment_id,
                           tags=tags, config=config, seed=seed)


def _language_accuracy(model, corpus, records, kind):
    preds = predict(model, corpus.X(records, kind), kind)
    return float(np.mean([p.language == r.language for p, r in zip(preds, records)]))


def _finish(cfg, out: Path, reports, layout, provenance):
    table, doc = render_report(reports, layout, provenance)
    (out / "reports.json").write_text(doc)
    (out / "table.txt").write_text(table + "\n")
    return {"reports": reports, "table": table, "json": doc, "output_dir": out}


def _provenance(cfg, corpora, extra=None):
    prov = {"code_version": __version__, "config": cfg.to_dict(), "seed": cfg.experiment.seed,
            "feature_caches": {c.name: c.cache_sha for c in corpora}}
    prov.update(extra or {})
    return prov


def run_experiment(cfg: ExperimentConfig):
    """Train on the pooled train splits of ``data.manifests`` and evaluate on
    each corpus test split, plus the test splits of ``data.test_manifests``.

    ``mtl`` runs train a single-task LSTM and the multi-task model with the
    same seed and report both.
    """
    kind = cfg.experiment.feature
    out = cfg.path(cfg.experiment.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    corpora = [split_corpus(cfg, load_corpus(cfg, m, (kind,))) for m in cfg.data.manifests]
    extra = [split_corpus(cfg, load_corpus(cfg, m, (kind,))) for m in cfg.data.test_manifests]
    for c in corpora + extra:
        _write_split(out, c)
    train = [(c, r) for c in corpora for r in c.train]
    X = np.concatenate([c.X([r for cc, r in train if cc is c], kind) for c in corpora])
    y = [r.emotion for _, r in train]
    config = cfg.to_dict()
    seed = cfg.experiment.seed
    train_name = "+".join(c.name for c in corpora)
    layout = "cross_corpus" if extra else "single_corpus"
    reports = []
    model_hashes = {}
    if cfg.experiment.classifier == "mtl":
        layout = "mtl"
        langs = [r.language for _, r in train]
        arms = {"single": train_classifier(cfg, X, y, classifier="lstm"),
                "mtl": train_classifier(cfg, X, y, langs)}
        model_hashes["single"] = write_model(arms["single"], out / "model_single.serm")
        model_hashes["mtl"] = write_model(arms["mtl"], out / "model.serm")
        for arm, model in arms.items():
            for c in corpora + extra:
                tags = {"feature": kind, "classifier": "lstm" if arm == "single" else "mtl",
                        "arm": arm, "corpus": c.name, "train_corpus": train_name}
                if arm == "mtl":
                    tags["language_accuracy"] = _language_accuracy(model, c, c.test, kind)
                reports.append(evaluate(model, c, c.test, kind, f"{cfg.experiment.id}/{arm}/{c.name}",
                                        tags, config, seed))
    else:
        model = train_classifier(cfg, X, y)
        model_hashes["model"] = write_model(model, out / "model.serm")
        for c in corpora + extra:
            tags = {"feature": kind, "classifier": cfg.experiment.classifier, "corpus": c.name,
                    "train_corpus": train_name}
            reports.append(evaluate(model, c, c.test, kind, f"{cfg.experiment.id}/{c.name}",
                                    tags, config, seed))
    prov = _provenance(cfg, corpora + extra, {"model_sha256": model_hashes})
    return _finish(cfg, out, reports, layout, prov)


def run_transfer(base_cfg: ExperimentConfig, ft_cfg: ExperimentConfig):
    """Train (or load) a base LSTM with a penultimate dense layer, then for
    each target corpus report its test accuracy before and after fine-tuning
    the dense layers with the trunk frozen."""
    kind = ft_cfg.experiment.feature
    out = ft_cfg.path(ft_cfg.experiment.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    base_path = ft_cfg.path(ft_cfg.finetune.base_model) if ft_cfg.finetune.base_model else None
    base_corpora = []
    if base_path is not None and base_path.exists():
        base = read_model(base_path)
        base_name = base.config.get("train_corpus", base_path.stem)
    else:
        if base_cfg.train.penultimate <= 0:
            base_cfg.train.penultimate = 64
        if base_cfg.experiment.classifier != "lstm":
            raise VariantMismatch("transfer base must use classifier = lstm")
        bkind = base_cfg.experiment.feature
        base_corpora = [split_corpus(base_cfg, load_corpus(base_cfg, m, (bkind,)))
                        for m in base_cfg.data.manifests]
        X = np.concatenate([c.X(c.train, bkind) for c in base_corpora])
        y = [r.emotion for c in base_corpora for r in c.train]
        base = train_classifier(base_cfg, X, y)
        base_name = "+".join(c.name for c in base_corpora)
        base.config["train_corpus"] = base_name
        write_model(base, base_path or out / "base.serm")
    if base.variant != "lstm":
        raise VariantMismatch(f"transfer base must be an lstm model, got {base.variant}")
    if base.feature_kind != kind:
        raise FeatureKindMismatch(f"base model uses {base.feature_kind}, fine-tune config uses {kind}")
    base_dict = base_cfg.to_dict() if base_cfg is not None else {"model": str(base_path),
                                                                 "train": base.config}
    config = {"base": base_dict, "finetune": ft_cfg.to_dict()}
    seed = ft_cfg.experiment.seed
    reports, hashes = [], {}
    for m in ft_cfg.data.manifests:
        c = split_corpus(ft_cfg, load_corpus(ft_cfg, m, (kind,)))
        _write_split(out, c)
        tags = {"feature": kind, "classifier": "lstm", "corpus": c.name, "train_corpus": base_name}
        reports.append(evaluate(base, c, c.test, kind, f"{ft_cfg.experiment.id}/base/{c.name}",
                                {**tags, "arm": "base"}, config, seed))
        tuned = finetune_frozen(base, c.X(c.train, kind), [r.emotion for r in c.train],
                                ft_cfg.finetune_config())
        hashes[c.name] = write_model(tuned, out / f"finetuned_{c.name}.serm")
        reports.append(evaluate(tuned, c, c.test, kind, f"{ft_cfg.experiment.id}/finetuned/{c.name}",
                                {**tags, "arm": "finetuned"}, config, seed))
        base_corpora.append(c)
    prov = _provenance(ft_cfg, base_corpora, {"model_sha256": hashes, "base_config": base_dict})
    return _finish(ft_cfg, out, reports, "transfer", prov)
