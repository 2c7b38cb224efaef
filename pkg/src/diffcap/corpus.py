"""Dataset ingestion: annotations, tokenization, vocabulary, video-aware
splits, and candidate frame-pair extraction."""
from __future__ import annotations

import json
import string
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InvalidInputError
from .imaging import load_image, whole_image_l2, ImagePair

PAD_ID, BOS_ID, EOS_ID, UNK_ID = 0, 1, 2, 3
RESERVED_TOKENS = ("<pad>", "<bos>", "<eos>", "<unk>")

_PUNCT = set(string.punctuation)


def tokenize(sentence: str) -> list[str]:
    """Lowercase, split punctuation into standalone tokens, split on whitespace."""
    out = []
    for ch in sentence.lower():
        if ch in _PUNCT:
            out.append(" ")
            out.append(ch)
            out.append(" ")
        else:
            out.append(ch)
    return "".join(out).split()


@dataclass
class Vocabulary:
    """Token/id bijection with fixed reserved ids PAD=0, BOS=1, EOS=2, UNK=3."""

    tokens: list[str]
    index: dict[str, int] = field(default=None, repr=False)

    def __post_init__(self):
        if tuple(self.tokens[:4]) != RESERVED_TOKENS:
            raise InvalidInputError("vocabulary must start with the reserved tokens")
        self.index = {t: i for i, t in enumerate(self.tokens)}
        if len(self.index) != len(self.tokens):
            raise InvalidInputError("vocabulary contains duplicate tokens")

    def __len__(self) -> int:
        return len(self.tokens)

    def encode(self, words: list[str]) -> list[int]:
        return [self.index.get(w, UNK_ID) for w in words]

    def decode(self, ids: list[int]) -> list[str]:
        return [self.tokens[i] for i in ids]

    @classmethod
    def from_words(cls, words: list[str]) -> "Vocabulary":
        return cls(tokens=list(RESERVED_TOKENS) + list(words))


@dataclass
class AnnotationRecord:
    img_id: str
    sentences: list[str]
    video_id: str = ""

    def __post_init__(self):
        if not self.img_id:
            raise InvalidInputError("record needs a nonempty img_id")
        if len(self.sentences) < 1:
            raise InvalidInputError(f"record {self.img_id} has no sentences")


def video_id_of(img_id: str, delim: str = "_") -> str:
    """Derive the source-clip id from an image id by a delimiter rule."""
    return img_id.split(delim)[0] if delim and delim in img_id else img_id


def load_annotations(path, video_delim: str = "_") -> list[AnnotationRecord]:
    """Read a JSON array of {img_id, sentences: [...]} records."""
    with open(path, "r", encoding="utf-8") as fh:
        raw = json.load(fh)
    if not isinstance(raw, list):
        raise InvalidInputError("annotation file must hold an array of records")
    records = []
    for entry in raw:
        records.append(AnnotationRecord(
            img_id=str(entry["img_id"]),
            sentences=[str(s) for s in entry["sentences"]],
            video_id=str(entry.get("video_id") or video_id_of(str(entry["img_id"]), video_delim)),
        ))
    return records


def save_annotations(path, records: list[AnnotationRecord]) -> None:
    data = [{"img_id": r.img_id, "sentences": r.sentences} for r in records]
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(data, fh, indent=1, sort_keys=True)
        fh.write("\n")


def build_vocab(train_records: list[AnnotationRecord], min_count: int = 5) -> Vocabulary:
    """Vocabulary of word types seen at least ``min_count`` times in training.

    Ids are ordered by descending frequency, ties alphabetical; rarer types
    map to UNK at encode time.
    """
    if min_count < 1:
        raise InvalidInputError("min_count must be >= 1")
    if not train_records:
        raise InvalidInputError("empty train split")
    counts = Counter()
    for rec in train_records:
        for sent in rec.sentences:
            counts.update(tokenize(sent))
    kept = sorted((t for t, n in counts.items() if n >= min_count),
                  key=lambda t: (-counts[t], t))
    return Vocabulary.from_words(kept)


@dataclass
class DatasetSplit:
    train: list[AnnotationRecord]
    val: list[AnnotationRecord]
    test: list[AnnotationRecord]

    def part(self, name: str) -> list[AnnotationRecord]:
        try:
            return getattr(self, name)
        except AttributeError:
            raise InvalidInputError(f"unknown split {name!r}") from None


def split_by_video(records: list[AnnotationRecord],
                   ratios: tuple[float, float, float] = (0.8, 0.1, 0.1),
                   seed: int = 0) -> DatasetSplit:
    """Partition records so every video lands entirely in one split.

    Distinct video ids are shuffled with a seeded generator and assigned
    greedily: each video goes to the split with the largest remaining
    record-count deficit (ties to the earlier split).
    """
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise InvalidInputError("split ratios must sum to 1")
    by_video: dict[str, list[AnnotationRecord]] = {}
    for rec in records:
        by_video.setdefault(rec.video_id, []).append(rec)
    videos = sorted(by_video)
    if len(videos) < 3:
        raise InvalidInputError("need at least 3 videos to split")
    rng = np.random.default_rng(seed)
    order = [videos[i] for i in rng.permutation(len(videos))]
    total = len(records)
    targets = [r * total for r in ratios]
    counts = [0, 0, 0]
    parts: list[list[AnnotationRecord]] = [[], [], []]
    for vid in order:
        deficits = [targets[i] - counts[i] for i in range(3)]
        dest = int(np.argmax(deficits))
        parts[dest].extend(by_video[vid])
        counts[dest] += len(by_video[vid])
    return DatasetSplit(train=parts[0], val=parts[1], test=parts[2])


@dataclass
class FramePairCandidate:
    file1: str
    file2: str
    distance: float
    pair: ImagePair


def extract_frame_pairs(frame_dir, count: int = 50, lower: float = 0.0,
                        upper: float = float("inf"), seed: int = 0) -> list[FramePairCandidate]:
    """Sample random frame pairs from a directory and keep those whose
    whole-image L2 distance lies strictly between the two thresholds."""
    if lower >= upper:
        raise InvalidInputError("lower threshold must be below upper")
    frame_dir = Path(frame_dir)
    files = sorted(p for p in frame_dir.iterdir()
                   if p.suffix.lower() in (".png", ".jpg", ".jpeg"))
    if len(files) < 2:
        raise InvalidInputError("need at least 2 frames")
    images = {p.name: load_image(p) for p in files}
    rng = np.random.default_rng(seed)
    kept = []
    for _ in range(count):
        i, j = sorted(rng.choice(len(files), size=2, replace=False))
        a, b = files[int(i)].name, files[int(j)].name
        if images[a].shape != images[b].shape:
            raise InvalidInputError(f"frames {a} and {b} differ in size")
        dist = whole_image_l2(images[a], images[b])
        if lower < dist < upper:
            kept.append(FramePairCandidate(
                file1=a, file2=b, distance=dist,
                pair=ImagePair(img1=images[a], img2=images[b])))
    return kept


def dataset_stats(records: list[AnnotationRecord], min_count: int = 5) -> dict:
    """Aggregate corpus statistics: annotation and sentence counts, vocabulary
    size, frequent-type coverage, and sentence-length distribution."""
    sent_counts = [len(r.sentences) for r in records]
    token_lists = [tokenize(s) for r in records for s in r.sentences]
    lengths = [len(t) for t in token_lists]
    counts = Counter(t for toks in token_lists for t in toks)
    total_tokens = sum(counts.values())
    frequent = {t for t, n in counts.items() if n >= min_count}
    frequent_tokens = sum(n for t, n in counts.items() if t in frequent)
    return {
        "annotations": len(records),
        "sentences_per_annotation_mean": float(np.mean(sent_counts)) if records else 0.0,
        "sentences_per_annotation_std": float(np.std(sent_counts)) if records else 0.0,
        "vocabulary_size": len(counts),
        "frequent_word_types": len(frequent),
        "frequent_token_coverage": (frequent_tokens / total_tokens) if total_tokens else 0.0,
        "words_per_sentence_mean": float(np.mean(lengths)) if lengths else 0.0,
        "words_per_sentence_std": float(np.std(lengths)) if lengths else 0.0,
        "long_sentence_fraction": (sum(1 for n in lengths if n > 20) / len(lengths)) if lengths else 0.0,
    }
