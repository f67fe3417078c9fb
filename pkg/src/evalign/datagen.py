"""Deterministic synthetic image-text corpora.

Each class owns a unit-norm anchor vector; images are the anchor plus
Gaussian noise, pushed through a fixed per-domain affine map (rotation +
bias) that emulates acquisition-device shift.  Texts render the fixed
template "a fundus image of <class name>" as token ids over a tiny closed
vocabulary.  Label noise reassigns a fraction of records to a wrong class,
which corrupts the paired text, not the image.

Generation is a pure function of the spec: every stream is seeded per
class, so the corpus is identical no matter how generation is scheduled.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .errors import ContractError, StratificationError, VocabularyError

TEMPLATE_WORDS = ("a", "fundus", "image", "of")


@dataclass(frozen=True)
class CorpusSpec:
    n_classes: int = 8
    samples_per_class: int = 64
    image_dim: int = 16
    vocab_size: int = 16
    tokens_per_text: int = 5
    noise_sigma: float = 0.05
    label_noise_rate: float = 0.0
    domain_id: int = 0
    seed: int = 0

    def __post_init__(self):
        if self.n_classes < 2:
            raise ContractError("need at least 2 classes")
        if self.vocab_size < self.n_classes:
            raise ContractError("vocab_size must be >= n_classes")
        if self.noise_sigma < 0:
            raise ContractError("noise_sigma must be >= 0")
        if not 0.0 <= self.label_noise_rate < 1.0:
            raise ContractError("label_noise_rate must lie in [0, 1)")
        if self.samples_per_class < 1 or self.image_dim < 1 or self.tokens_per_text < 1:
            raise ContractError("sizes must be positive")


@dataclass
class PairRecord:
    image: np.ndarray
    tokens: list
    true_class: int
    assigned_class: int
    domain: int
    split: str | None = None


def class_names(n_classes):
    return [f"class_{i}" for i in range(n_classes)]


def build_vocab(n_classes):
    """word -> token id; template words first, then the class names."""
    vocab = {w: i for i, w in enumerate(TEMPLATE_WORDS)}
    for i, name in enumerate(class_names(n_classes)):
        vocab[name] = len(TEMPLATE_WORDS) + i
    return vocab


def render_prompt(label):
    """Exactly the fixed template around the label, nothing else."""
    return f"a fundus image of {label}"


def tokenize(text, vocab):
    ids = []
    for word in text.split(" "):
        if word not in vocab:
            raise VocabularyError(f"unknown word {word!r}")
        ids.append(vocab[word])
    return ids


def prompt_tokens(class_index, tokens_per_text=5):
    """Token rendering of the class prompt, exactly `tokens_per_text` long.

    The template prefix is truncated when the budget is short and the class
    token fills any remaining slots, so corpus texts and inference prompts
    tokenize identically for the same length setting.
    """
    prefix = list(range(len(TEMPLATE_WORDS)))[: tokens_per_text - 1]
    class_token = len(TEMPLATE_WORDS) + class_index
    return prefix + [class_token] * (tokens_per_text - len(prefix))


def domain_transform(spec: CorpusSpec):
    """Fixed rotation + bias for the spec's domain; identity for domain 0."""
    d = spec.image_dim
    if spec.domain_id == 0:
        return np.eye(d), np.zeros(d)
    rng = np.random.default_rng([spec.seed, 0xD0, spec.domain_id])
    q, r = np.linalg.qr(rng.normal(size=(d, d)))
    q = q * np.sign(np.diag(r))  # fix the sign convention so q is well-defined
    bias = 0.25 * rng.normal(size=d)
    return q, bias


def class_anchors(spec: CorpusSpec):
    """Unit-norm anchor per class, drawn once from the corpus seed.

    Anchors are shared across domains (same seed component), so domain
    shift is purely the affine map.
    """
    rng = np.random.default_rng([spec.seed, 0xA0])
    anchors = rng.normal(size=(spec.n_classes, spec.image_dim))
    return anchors / np.linalg.norm(anchors, axis=1, keepdims=True)


def generate_corpus(spec: CorpusSpec):
    """Class-balanced list of PairRecord, deterministic per spec."""
    needed = spec.n_classes + len(TEMPLATE_WORDS)
    if spec.vocab_size < needed:
        raise VocabularyError(
            f"vocab_size {spec.vocab_size} too small for {spec.n_classes} class names "
            f"plus the {len(TEMPLATE_WORDS)}-word template"
        )
    anchors = class_anchors(spec)
    rot, bias = domain_transform(spec)
    records = []
    for c in range(spec.n_classes):
        rng = np.random.default_rng([spec.seed, 0xC0, spec.domain_id, c])
        for _ in range(spec.samples_per_class):
            noise = spec.noise_sigma * rng.normal(size=spec.image_dim)
            image = rot @ (anchors[c] + noise) + bias
            assigned = c
            if spec.label_noise_rate > 0.0 and rng.random() < spec.label_noise_rate:
                assigned = int((c + 1 + rng.integers(0, spec.n_classes - 1)) % spec.n_classes)
            records.append(
                PairRecord(
                    image=image,
                    tokens=prompt_tokens(assigned, spec.tokens_per_text),
                    true_class=c,
                    assigned_class=assigned,
                    domain=spec.domain_id,
                    split=None,
                )
            )
    return records


def split_corpus(corpus, fractions=(0.6, 0.2, 0.2), seed=0):
    """Stratified train/val/test partition; tags records and returns the
    three disjoint lists."""
    fractions = tuple(float(f) for f in fractions)
    if len(fractions) != 3 or any(f <= 0 for f in fractions):
        raise ContractError("need three positive fractions")
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise ContractError(f"fractions must sum to 1, got {sum(fractions)}")
    by_class = {}
    for idx, rec in enumerate(corpus):
        by_class.setdefault(rec.true_class, []).append(idx)
    names = ("train", "val", "test")
    splits = {name: [] for name in names}
    for c in sorted(by_class):
        idxs = by_class[c]
        if len(idxs) < len(fractions):
            raise StratificationError(
                f"class {c} has {len(idxs)} samples, fewer than {len(fractions)} splits"
            )
        rng = np.random.default_rng([seed, 0x50, c])
        order = [idxs[i] for i in rng.permutation(len(idxs))]
        counts = _largest_remainder(len(idxs), fractions)
        start = 0
        for name, cnt in zip(names, counts):
            for i in order[start : start + cnt]:
                corpus[i].split = name
                splits[name].append(corpus[i])
            start += cnt
    return splits["train"], splits["val"], splits["test"]


def _largest_remainder(total, fractions):
    raw = [total * f for f in fractions]
    counts = [int(np.floor(r)) for r in raw]
    short = total - sum(counts)
    order = sorted(range(len(raw)), key=lambda i: (-(raw[i] - counts[i]), i))
    for i in order[:short]:
        counts[i] += 1
    return counts


def save_corpus(records, path):
    path = Path(path)
    with path.open("w") as fh:
        for rec in records:
            fh.write(
                json.dumps(
                    {
                        "image": [float(v) for v in rec.image],
                        "tokens": [int(t) for t in rec.tokens],
                        "true_class": int(rec.true_class),
                        "assigned_class": int(rec.assigned_class),
                        "domain": int(rec.domain),
                        "split": rec.split,
                    },
                    separators=(",", ":"),
                )
                + "\n"
            )


def load_corpus(path):
    """Read a JSONL corpus back, validating record invariants."""
    records = []
    width = None
    with Path(path).open() as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as e:
                raise ContractError(f"corpus line {lineno}: invalid JSON ({e})") from e
            image = np.asarray(obj["image"], dtype=np.float64)
            if not np.all(np.isfinite(image)):
                raise ContractError(f"corpus line {lineno}: non-finite image values")
            if width is None:
                width = image.shape[0]
            elif image.shape[0] != width:
                raise ContractError(f"corpus line {lineno}: inconsistent image width")
            if obj["assigned_class"] < 0 or obj["true_class"] < 0:
                raise ContractError(f"corpus line {lineno}: negative class id")
            if obj["split"] not in (None, "train", "val", "test"):
                raise ContractError(f"corpus line {lineno}: bad split tag {obj['split']!r}")
            if not obj["tokens"]:
                raise ContractError(f"corpus line {lineno}: empty token list")
            records.append(
                PairRecord(
                    image=image,
                    tokens=[int(t) for t in obj["tokens"]],
                    true_class=int(obj["true_class"]),
                    assigned_class=int(obj["assigned_class"]),
                    domain=int(obj["domain"]),
                    split=obj["split"],
                )
            )
    return records


def with_domain(spec: CorpusSpec, domain_id: int):
    """Same corpus family, different acquisition domain."""
    return replace(spec, domain_id=domain_id)
