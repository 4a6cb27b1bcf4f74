"""Feature x classifier grid on one or more corpora (single-corpus layout).

Without --manifest a 5-class synthetic corpus is generated first. With
licensed corpora, pass one manifest per corpus:

    python3 scripts/feature_grid.py --manifest emodb.csv savee.csv --out runs/grid
"""
import argparse
from pathlib import Path

from serkit.config import parse_config
from serkit.corpus import SynthConfig, generate_synthetic_corpus
from serkit.evaluation import render_report
from serkit.pipeline import run_experiment

GRID = (("is09", "logreg"), ("is09", "svm"), ("is09", "lstm"), ("mfcc_seq", "lstm"))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--manifest", nargs="*", default=[])
    ap.add_argument("--out", default="runs/grid")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--epochs", type=int, default=50)
    args = ap.parse_args()
    out = Path(args.out).resolve()
    manifests = [Path(m).resolve() for m in args.manifest]
    if not manifests:
        manifests = [generate_synthetic_corpus(
            SynthConfig(classes=5, languages=1, speakers=6, utterances=20, seed=args.seed),
            out / "synthetic")]
    reports = []
    for manifest in manifests:
        for feature, clf in GRID:
            cfg = parse_config(f"""
[experiment]
id = {manifest.parent.name}_{feature}_{clf}
feature = {feature}
classifier = {clf}
seed = {args.seed}
allow_any_pairing = true
output_dir = {out / manifest.parent.name / f"{feature}_{clf}"}
[data]
manifests = {manifest}
cache_dir = {out / "cache"}
[train]
epochs = {args.epochs}
""")
            reports += run_experiment(cfg)["reports"]
    table, doc = render_report(reports, "single_corpus", {"manifests": [str(m) for m in manifests]})
    (out / "grid.json").write_text(doc)
    (out / "grid.txt").write_text(table + "\n")
    print(table)


if __name__ == "__main__":
    main()
