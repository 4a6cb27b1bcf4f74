"""Manifests, canonical emotion labels, speaker-disjoint splits and a
synthetic corpus generator for running the pipeline without licensed data."""
from __future__ import annotations

import csv
import json
import logging
import re
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import DuplicateId, EmptySplit, MissingColumn, UnknownRawLabel, UnknownSpeaker
from .signal import SAMPLE_RATE, write_wav

log = logging.getLogger(__name__)

EMOTIONS = ("anger", "happy", "sad", "fear", "neutral")
EXCLUDE = None
MANIFEST_COLUMNS = ("id", "audio_path", "speaker_id", "language", "raw_label", "corpus")
LARGE_CORPUS_UTTERANCES = 1000


def _label_maps(iemocap_excitement_as_happy=False):
    maps = {
        "emodb": {"anger": "anger", "sadness": "sad", "fear": "fear", "disgust": EXCLUDE,
                  "boredom": EXCLUDE, "neutral": "neutral", "happiness": "happy"},
        "savee": {"anger": "anger", "sadness": "sad", "fear": "fear", "disgust": EXCLUDE,
                  "neutral": "neutral", "happiness": "happy", "surprise": EXCLUDE},
        "emovo": {"anger": "anger", "sadness": "sad", "fear": "fear", "disgust": EXCLUDE,
                  "neutral": "neutral", "joy": "happy", "surprise": EXCLUDE},
        "masc": {"anger": "anger", "sadness": "sad", "panic": "fear", "neutral": "neutral",
                 "elation": "happy"},
        "iemocap": {"anger": "anger", "happiness": "happy",
                    "excitement": "happy" if iemocap_excitement_as_happy else EXCLUDE,
                    "sadness": "sad", "frustration": EXCLUDE, "fear": "fear",
                    "surprise": EXCLUDE, "other": EXCLUDE, "neutral": "neutral"},
        "synthetic": {e: e for e in EMOTIONS},
    }
    return maps


LABEL_MAPS = _label_maps()


def map_label(corpus: str, raw_label: str, strict=True, iemocap_excitement_as_happy=False):
    """Canonical emotion for a raw corpus label, or ``None`` when excluded."""
    maps = _label_maps(iemocap_excitement_as_happy) if iemocap_excitement_as_happy else LABEL_MAPS
    table = maps.get(corpus.strip().lower())
    key = raw_label.strip().lower()
    if table is not None and key in table:
        return table[key]
    if strict:
        raise UnknownRawLabel(f"corpus {corpus!r} has no mapping for label {raw_label!r}")
    return key if key in EMOTIONS else EXCLUDE


@dataclass(frozen=True)
class UtteranceRecord:
    id: str
    audio_path: str
    speaker_id: str
    language: str
    raw_label: str
    emotion: str
    corpus: str = "synthetic"


def load_manifest(path, strict=True, iemocap_excitement_as_happy=False):
    """Parse a CSV or JSON-lines manifest into included utterance records."""
    path = Path(path)
    if path.suffix in (".jsonl", ".json"):
        rows = [json.loads(line) for line in path.read_text().splitlines() if line.strip()]
        columns = set().union(*(r.keys() for r in rows)) if rows else set()
        missing = [c for c in MANIFEST_COLUMNS if any(c not in r for r in rows)]
    else:
        with path.open(newline="") as fh:
            reader = csv.DictReader(fh)
            columns = set(reader.fieldnames or ())
            rows = list(reader)
        missing = [c for c in MANIFEST_COLUMNS if c not in columns]
    if missing:
        raise MissingColumn(f"{path}: missing column(s) {', '.join(missing)}")

    records, seen, excluded = [], set(), 0
    for row in rows:
        uid = str(row["id"])
        if uid in seen:
            raise DuplicateId(f"{path}: duplicate id {uid!r}")
        seen.add(uid)
        emotion = map_label(str(row["corpus"]), str(row["raw_label"]), strict,
                            iemocap_excitement_as_happy)
        if emotion is EXCLUDE:
            excluded += 1
            continue
        audio = Path(str(row["audio_path"]))
        if not audio.is_absolute():
            audio = path.parent / audio
        records.append(UtteranceRecord(uid, str(audio), str(row["speaker_id"]),
                                       str(row["language"]), str(row["raw_label"]),
                                       emotion, str(row["corpus"]).lower()))
    if excluded:
        log.info("%s: dropped %d utterances with excluded labels", path, excluded)
    return records


def write_manifest(path, rows):
    """Write manifest rows (dicts keyed by the manifest columns) as CSV."""
    with Path(path).open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=MANIFEST_COLUMNS, lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({c: row[c] for c in MANIFEST_COLUMNS})


# ---------------------------------------------------------------------------
# splits

@dataclass
class SplitSpec:
    corpus: str
    held_out_speakers: list = field(default_factory=list)
    seed: int = 0


_IEMOCAP_SPEAKER = re.compile(r"^(Ses\d+)[FM]$")


def choose_held_out(records, corpus="", seed=0):
    """Pick held-out speakers: 1 for corpora under 1000 utterances, else 2.

    IEMOCAP-style speaker ids (``Ses01F``/``Ses01M``) hold out one full
    dyadic session instead of two arbitrary speakers.
    """
    speakers = sorted({r.speaker_id for r in records})
    rng = np.random.default_rng(seed)
    large = len(records) >= LARGE_CORPUS_UTTERANCES
    if large and speakers and all(_IEMOCAP_SPEAKER.match(s) for s in speakers):
        sessions = sorted({_IEMOCAP_SPEAKER.match(s).group(1) for s in speakers})
        pick = sessions[int(rng.integers(len(sessions)))]
        return [s for s in speakers if s.startswith(pick)]
    count = 2 if large else 1
    if len(speakers) <= count:
        raise EmptySplit(f"corpus {corpus!r} has only {len(speakers)} speaker(s)")
    idx = np.sort(rng.choice(len(speakers), size=count, replace=False))
    return [speakers[i] for i in idx]


def split_speaker_disjoint(records, spec: SplitSpec):
    """Return (train, test, spec) with every held-out speaker's utterances in test."""
    speakers = {r.speaker_id for r in records}
    held = list(spec.held_out_speakers) or choose_held_out(records, spec.corpus, spec.seed)
    unknown = [s for s in held if s not in speakers]
    if unknown:
        raise UnknownSpeaker(f"speaker(s) not in corpus: {', '.join(unknown)}")
    held_set = set(held)
    train = [r for r in records if r.speaker_id not in held_set]
    test = [r for r in records if r.speaker_id in held_set]
    if not train or not test:
        raise EmptySplit("split leaves train or test empty")
    return train, test, SplitSpec(spec.corpus, sorted(held_set), spec.seed)


def split_to_json(train, test, spec: SplitSpec):
    return json.dumps({"spec": asdict(spec), "train": [r.id for r in train],
                       "test": [r.id for r in test]}, indent=2, sort_keys=True)


def split_from_json(text, records):
    data = json.loads(text)
    by_id = {r.id: r for r in records}
    try:
        train = [by_id[i] for i in data["train"]]
        test = [by_id[i] for i in data["test"]]
    except KeyError as exc:
        raise UnknownSpeaker(f"split references unknown utterance {exc}") from None
    return train, test, SplitSpec(**data["spec"])


# ---------------------------------------------------------------------------
# synthetic corpus

SYNTH_LANGUAGES = ("synthA", "synthB", "synthC")
# class index -> emotion; pitch and energy rise with the index
SYNTH_EMOTIONS = ("sad", "neutral", "happy", "anger", "fear")
_FORMANT_HZ = (500.0, 1500.0, 3000.0)


@dataclass
class SynthConfig:
    classes: int = 2
    languages: int = 1
    speakers: int = 4          # per language
    utterances: int = 10       # per (class, language, speaker) cell
    seed: int = 0
    min_dur: float = 1.0
    max_dur: float = 3.0
    first_language: int = 0    # offset into SYNTH_LANGUAGES

    def validate(self):
        if not 1 <= self.classes <= len(SYNTH_EMOTIONS):
            raise ValueError("classes must be in 1..5")
        if not 1 <= self.languages or self.first_language + self.languages > len(SYNTH_LANGUAGES):
            raise ValueError("at most 3 synthetic languages")
        if self.classes * self.languages * self.speakers * self.utterances <= 0:
            raise ValueError("empty synthetic corpus")


def class_f0(c):
    return 120.0 + c * 160.0 / 3.0


def synthesize_utterance(cls, lang, speaker_offset_hz, rng, min_dur=1.0, max_dur=3.0,
                         rate=SAMPLE_RATE):
    """Harmonic tone plus noise.

    The class sets the base F0 band, the level and (for the two highest
    classes) a 5 Hz tremolo; the language sets a formant-like spectral peak.
    """
    dur = rng.uniform(min_dur, max_dur)
    n = int(round(dur * rate))
    t = np.arange(n) / rate
    f0 = class_f0(cls) + speaker_offset_hz + rng.uniform(-10.0, 10.0)
    glide = 1.0 + rng.uniform(-0.04, 0.04) * (t / dur - 0.5)
    phase = 2 * np.pi * np.cumsum(f0 * glide) / rate
    fc = _FORMANT_HZ[lang]
    x = np.zeros(n)
    for h in range(1, int(4000.0 // f0) + 1):
        gain = (0.25 + 1.5 * np.exp(-0.5 * ((h * f0 - fc) / 300.0) ** 2)) / h ** 0.5
        x += gain * np.sin(h * phase + rng.uniform(0, 2 * np.pi))
    x /= np.max(np.abs(x)) + 1e-12
    level = 0.08 + 0.1 * cls
    env = np.ones(n)
    if cls >= 3:
        env *= 1.0 - 0.4 * (0.5 + 0.5 * np.sin(2 * np.pi * 5.0 * t))
    ramp = min(n // 2, int(0.02 * rate))
    env[:ramp] *= np.linspace(0.0, 1.0, ramp)
    env[n - ramp:] *= np.linspace(1.0, 0.0, ramp)
    x = level * env * x + level * 0.03 * rng.standard_normal(n)
    return np.clip(x, -1.0, 1.0)


def generate_synthetic_corpus(cfg: SynthConfig, out_dir):
    """Write WAVs plus ``manifest.csv`` under ``out_dir``; returns the manifest path."""
    cfg.validate()
    out = Path(out_dir)
    (out / "wav").mkdir(parents=True, exist_ok=True)
    rows = []
    for li in range(cfg.languages):
        lang = cfg.first_language + li
        lang_name = SYNTH_LANGUAGES[lang]
        for s in range(cfg.speakers):
            spk_rng = np.random.default_rng([cfg.seed, lang, s, 0xA5])
            offset = spk_rng.uniform(-8.0, 8.0)
            speaker = f"{lang_name}_spk{s:02d}"
            for c in range(cfg.classes):
                for u in range(cfg.utterances):
                    rng = np.random.default_rng([cfg.seed, lang, s, c, u])
                    x = synthesize_utterance(c, lang, offset, rng, cfg.min_dur, cfg.max_dur)
                    uid = f"{speaker}_c{c}_u{u:03d}"
                    rel = f"wav/{uid}.wav"
                    write_wav(out / rel, x)
                    rows.append({"id": uid, "audio_path": rel, "speaker_id": speaker,
                                 "language": lang_name, "raw_label": SYNTH_EMOTIONS[c],
                                 "corpus": "synthetic"})
    manifest = out / "manifest.csv"
    write_manifest(manifest, rows)
    return manifest
