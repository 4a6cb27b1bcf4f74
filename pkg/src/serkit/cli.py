"""Command-line entry point: ``serkit <subcommand> ...``.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric
failure. Failures print a one-line JSON error record on stderr.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .bundle import read_model
from .cache import FeatureCache, extract_records
from .classifiers import predict
from .config import load_config, validate
from .corpus import (SplitSpec, SynthConfig, generate_synthetic_corpus, load_manifest,
                     split_from_json, split_speaker_disjoint, split_to_json)
from .errors import ConfigError, SerError
from .evaluation import compute_metrics, render_report, reports_from_json
from .features import FEATURE_KINDS, extract
from .pipeline import run_experiment, run_transfer
from .signal import read_wav


def cmd_synth(args):
    cfg = SynthConfig(args.classes, args.languages, args.speakers, args.utterances, args.seed,
                      args.min_dur, args.max_dur, args.first_language)
    try:
        cfg.validate()
    except ValueError as exc:
        raise ConfigError(str(exc), ["synth"]) from None
    print(generate_synthetic_corpus(cfg, args.out))


def cmd_extract(args):
    kinds = tuple(k.strip() for k in args.kinds.split(","))
    bad = [k for k in kinds if k not in FEATURE_KINDS]
    if bad:
        raise ConfigError(f"unknown feature kind(s) {bad}", ["kinds"])
    records = load_manifest(args.manifest, not args.lenient)
    path = Path(args.cache)
    cache = FeatureCache.load(path) if path.exists() else FeatureCache()
    extract_records(records, kinds, args.workers, cache)
    print(f"{path}\t{cache.save(path)}\t{len(cache)} entries")


def cmd_split(args):
    records = load_manifest(args.manifest, not args.lenient)
    held = [s for s in (args.held_out or "").split(",") if s]
    corpus = args.corpus or (records[0].corpus if records else "")
    train, test, spec = split_speaker_disjoint(records, SplitSpec(corpus, held, args.seed))
    text = split_to_json(train, test, spec) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    print(f"held out {', '.join(spec.held_out_speakers)}: {len(train)} train / {len(test)} test")


def _print_result(result):
    print(result["table"])
    print(f"results: {Path(result['output_dir']) / 'reports.json'}")


def cmd_run(args):
    _print_result(run_experiment(load_config(args.config)))


def cmd_mtl(args):
    cfg = load_config(args.config)
    cfg.experiment.classifier = "mtl"
    validate(cfg)
    _print_result(run_experiment(cfg))


def cmd_transfer(args):
    base = load_config(args.base_config) if args.base_config else None
    ft = load_config(args.config)
    if base is None and not ft.finetune.base_model:
        raise ConfigError("need --base-config or finetune.base_model", ["finetune.base_model"])
    _print_result(run_transfer(base, ft))


def cmd_evaluate(args):
    model = read_model(args.model)
    records = load_manifest(args.manifest, not args.lenient)
    if args.split:
        _, records, _ = split_from_json(Path(args.split).read_text(), records)
    cache = FeatureCache.load(args.cache) if args.cache and Path(args.cache).exists() else None
    cache = extract_records(records, (model.feature_kind,), args.workers, cache)
    if args.cache:
        cache.save(args.cache)
    preds = predict(model, cache.matrix(records, model.feature_kind), model.feature_kind)
    report = compute_metrics([p.emotion for p in preds], [r.emotion for r in records],
                             labels=list(model.labels), experiment_id=args.id,
                             tags={"feature": model.feature_kind, "classifier": model.variant,
                                   "corpus": records[0].corpus if records else ""})
    table, doc = render_report([report], "single_corpus", {"model": str(args.model)})
    if args.out:
        Path(args.out).write_text(doc)
    print(table)


def cmd_predict(args):
    model = read_model(args.model)
    for wav in args.wav:
        p = predict(model, extract(read_wav(wav), model.feature_kind), model.feature_kind)
        cols = [wav, p.emotion, f"{p.confidence:.4f}"]
        if p.language is not None:
            cols += [p.language, f"{p.language_confidence:.4f}"]
        print("\t".join(cols))


def cmd_report(args):
    reports, layout, prov = [], args.layout, {}
    for path in args.results:
        rs, lay, pv = reports_from_json(Path(path).read_text())
        reports += rs
        layout = layout or lay
        prov[str(path)] = pv
    table, doc = render_report(reports, layout, {"merged_from": prov} if len(args.results) > 1 else
                               next(iter(prov.values()), {}))
    if args.out:
        Path(args.out).write_text(doc)
    print(table)


def build_parser():
    p = argparse.ArgumentParser(prog="serkit", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", help="generate a synthetic corpus (WAVs + manifest.csv)")
    s.add_argument("--out", required=True)
    s.add_argument("--classes", type=int, default=2)
    s.add_argument("--languages", type=int, default=1)
    s.add_argument("--speakers", type=int, default=4)
    s.add_argument("--utterances", type=int, default=10)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--min-dur", type=float, default=1.0)
    s.add_argument("--max-dur", type=float, default=3.0)
    s.add_argument("--first-language", type=int, default=0)
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("extract", help="extract features into a SERF cache")
    s.add_argument("--manifest", required=True)
    s.add_argument("--cache", required=True)
    s.add_argument("--kinds", default="is09,mfcc_seq")
    s.add_argument("--workers", type=int, default=1)
    s.add_argument("--lenient", action="store_true", help="drop unknown labels instead of failing")
    s.set_defaults(func=cmd_extract)

    s = sub.add_parser("split", help="speaker-disjoint train/test split")
    s.add_argument("--manifest", required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--held-out", help="comma-separated speaker ids")
    s.add_argument("--corpus")
    s.add_argument("--out")
    s.add_argument("--lenient", action="store_true")
    s.set_defaults(func=cmd_split)

    for name, func, text in (("run", cmd_run, "full pipeline from a config"),
                             ("train", cmd_run, "train and evaluate one classifier"),
                             ("mtl-train", cmd_mtl, "single-task vs multi-task LSTM")):
        s = sub.add_parser(name, help=text)
        s.add_argument("--config", required=True)
        s.set_defaults(func=func)

    for name in ("finetune", "transfer"):
        s = sub.add_parser(name, help="base model vs frozen-trunk fine-tuning per target")
        s.add_argument("--config", required=True, help="fine-tune config (target manifests)")
        s.add_argument("--base-config", help="config for training the base model")
        s.set_defaults(func=cmd_transfer)

    s = sub.add_parser("evaluate", help="evaluate a model bundle on a manifest")
    s.add_argument("--model", required=True)
    s.add_argument("--manifest", required=True)
    s.add_argument("--split", help="split JSON; evaluates its test side")
    s.add_argument("--cache")
    s.add_argument("--out")
    s.add_argument("--id", default="evaluate")
    s.add_argument("--workers", type=int, default=1)
    s.add_argument("--lenient", action="store_true")
    s.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("predict", help="classify WAV files")
    s.add_argument("--model", required=True)
    s.add_argument("wav", nargs="+")
    s.set_defaults(func=cmd_predict)

    s = sub.add_parser("report", help="render result JSON files as a table")
    s.add_argument("results", nargs="+")
    s.add_argument("--layout", choices=("single_corpus", "cross_corpus", "transfer", "mtl"))
    s.add_argument("--out")
    s.set_defaults(func=cmd_report)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except SerError as exc:
        print(json.dumps(exc.record(), sort_keys=True), file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        rec = {"error": "Io", "message": str(exc), "exit_code": 3}
        print(json.dumps(rec, sort_keys=True), file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
