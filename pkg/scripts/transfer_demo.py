"""Frozen-trunk transfer on synthetic data: base LSTM trained on language A,
fine-tuned on a 20-utterance train split of language B."""
import argparse
from pathlib import Path

from serkit.config import parse_config
from serkit.corpus import SynthConfig, generate_synthetic_corpus
from serkit.pipeline import run_transfer


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="runs/transfer")
    ap.add_argument("--train-head", action="store_true")
    ap.add_argument("--refit-normalizer", action="store_true")
    args = ap.parse_args()
    out = Path(args.out).resolve()
    a = generate_synthetic_corpus(SynthConfig(classes=2, speakers=4, utterances=25, seed=3), out / "A")
    b = generate_synthetic_corpus(SynthConfig(classes=2, speakers=3, utterances=10, seed=4,
                                              first_language=1), out / "B")
    base = parse_config(f"""
[experiment]
id = base_A
feature = mfcc_seq
classifier = lstm
output_dir = {out / "base"}
[data]
manifests = {a}
cache_dir = {out / "cache"}
[train]
penultimate = 64
""")
    ft = parse_config(f"""
[experiment]
id = transfer_A_to_B
feature = mfcc_seq
classifier = lstm
output_dir = {out / "finetune"}
[data]
manifests = {b}
cache_dir = {out / "cache"}
[finetune]
base_model = {out / "base" / "base.serm"}
train_head = {args.train_head}
refit_normalizer = {args.refit_normalizer}
""")
    print(run_transfer(base, ft)["table"])


if __name__ == "__main__":
    main()
