"""Zero-shot classification, leave-one-out retrieval, and the metric suite.

Rankings are exact exhaustive cosine over unit-norm embeddings.  Ties break
by ascending label index or item id everywhere, so repeated runs agree
bit-for-bit.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .datagen import prompt_tokens, render_prompt
from .errors import ContractError, ShapeError, UndefinedMetricError
from .evidential import dirichlet_params

# -- prompt set -------------------------------------------------------------


@dataclass
class PromptSet:
    """Ordered label names with their rendered prompts and embeddings."""

    labels: list
    prompts: list
    embeddings: np.ndarray  # (n_labels, d), unit rows

    def __post_init__(self):
        if len(self.labels) != len(self.prompts) or len(self.labels) != self.embeddings.shape[0]:
            raise ContractError("one prompt and one embedding per label")


def build_prompt_set(encoder, labels, tokens_per_text=5):
    """Render "a fundus image of <label>" for each label and embed it.

    Label order is preserved; token rendering matches the corpus format so
    prompts line up with training texts of the same length setting.
    """
    prompts = [render_prompt(lbl) for lbl in labels]
    embs = np.stack(
        [encoder.encode_text(prompt_tokens(i, tokens_per_text)) for i in range(len(labels))]
    )
    return PromptSet(labels=list(labels), prompts=prompts, embeddings=embs)


def zero_shot_classify(image_emb, prompts: PromptSet, k):
    """Top-k labels by cosine to the prompt embeddings.

    Ties break toward the lower label index; returns (label, score) pairs
    with nonincreasing scores.
    """
    emb = np.asarray(image_emb, dtype=np.float64)
    if emb.shape != (prompts.embeddings.shape[1],):
        raise ShapeError(
            f"embedding width {emb.shape} does not match prompts {prompts.embeddings.shape[1]}"
        )
    if not 1 <= k <= len(prompts.labels):
        raise ContractError(f"k={k} outside [1, {len(prompts.labels)}]")
    scores = prompts.embeddings @ emb
    order = sorted(range(len(scores)), key=lambda i: (-scores[i], i))[:k]
    return [(prompts.labels[i], float(scores[i])) for i in order]


# -- retrieval ----------------------------------------------------------------


@dataclass
class RetrievalIndex:
    """Immutable store of unit-norm item embeddings with labels and ids."""

    embeddings: np.ndarray
    labels: list
    ids: list

    def __post_init__(self):
        n = self.embeddings.shape[0]
        if len(self.labels) != n or len(self.ids) != n:
            raise ContractError("embeddings, labels and ids must align")
        if len(set(self.ids)) != n:
            raise ContractError("item ids must be unique")
        self._pos = {item: i for i, item in enumerate(self.ids)}

    def position(self, item_id):
        if item_id not in self._pos:
            raise ContractError(f"unknown item id {item_id!r}")
        return self._pos[item_id]


@dataclass
class RankedResult:
    query_id: object
    ids: list
    labels: list
    scores: list
    uncertainty: float | None = None

    def __post_init__(self):
        if any(b > a + 1e-12 for a, b in zip(self.scores, self.scores[1:])):
            raise ContractError("scores must be nonincreasing")


def retrieve_similar(index: RetrievalIndex, query_id, k, with_uncertainty=False):
    """Leave-one-out top-k: the query never appears among its candidates."""
    q = index.position(query_id)
    if not 1 <= k <= len(index.ids) - 1:
        raise ContractError(f"k={k} outside [1, {len(index.ids) - 1}]")
    sims = index.embeddings @ index.embeddings[q]
    candidates = [i for i in range(len(index.ids)) if i != q]
    candidates.sort(key=lambda i: (-sims[i], index.ids[i]))
    top = candidates[:k]
    uncertainty = None
    if with_uncertainty:
        # softplus evidence over the candidate pool, as a diagnostic only
        pool = sims[candidates]
        ev = np.log1p(np.exp(-np.abs(pool))) + np.maximum(pool, 0.0)
        uncertainty = dirichlet_params(ev, len(ev)).uncertainty
    return RankedResult(
        query_id=query_id,
        ids=[index.ids[i] for i in top],
        labels=[index.labels[i] for i in top],
        scores=[float(sims[i]) for i in top],
        uncertainty=uncertainty,
    )


# -- metrics ------------------------------------------------------------------


def topk_accuracy(predictions, truths, k):
    """Fraction of samples whose truth appears in their top-k predictions."""
    if len(predictions) == 0 or len(predictions) != len(truths):
        raise ContractError("need one non-empty prediction list per truth")
    for ranked in predictions:
        if len(ranked) < k:
            raise ContractError(f"a prediction list is shorter than k={k}")
    hits = sum(1 for ranked, truth in zip(predictions, truths) if truth in ranked[:k])
    return hits / len(predictions)


def precision_at_n(result: RankedResult, relevant_label, n):
    """Fraction of the top-n retrieved items sharing the query's label."""
    if n < 1:
        raise ContractError("N must be >= 1")
    if n > len(result.labels):
        raise ContractError(f"N={n} exceeds result length {len(result.labels)}")
    return sum(1 for lbl in result.labels[:n] if lbl == relevant_label) / n


def auc_score(scores, binary_labels):
    """Rank-based (Mann-Whitney) AUC with midrank tie handling."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(binary_labels)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise ContractError("scores and labels must be equal-length vectors")
    n_pos = int((labels == 1).sum())
    n_neg = int((labels == 0).sum())
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError("AUC needs both classes present")
    order = np.argsort(scores, kind="mergesort")
    ranks = np.empty(len(scores), dtype=np.float64)
    i = 0
    while i < len(scores):
        j = i
        while j + 1 < len(scores) and scores[order[j + 1]] == scores[order[i]]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0  # midrank, 1-based
        i = j + 1
    rank_sum = float(ranks[labels == 1].sum())
    return (rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def pearson(x, y):
    """Sample Pearson correlation coefficient."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1 or len(x) < 2:
        raise ContractError("need two equal-length sequences of length >= 2")
    dx = x - x.mean()
    dy = y - y.mean()
    vx = float(dx @ dx)
    vy = float(dy @ dy)
    if vx == 0.0 or vy == 0.0:
        raise UndefinedMetricError("correlation undefined for constant sequences")
    return float(dx @ dy) / np.sqrt(vx * vy)


# -- evaluation protocols ------------------------------------------------------


def zero_shot_report(encoder, records, labels, ks=(1, 3, 5), tokens_per_text=5):
    """Zero-shot Top-K report over records, truth = true class name."""
    prompts = build_prompt_set(encoder, labels, tokens_per_text)
    ranked = []
    truths = []
    for rec in records:
        emb = encoder.encode_image(rec.image)
        ranked.append([lbl for lbl, _ in zero_shot_classify(emb, prompts, len(labels))])
        truths.append(labels[rec.true_class])
    report = {}
    for k in ks:
        report[f"Top-{k}"] = topk_accuracy(ranked, truths, k)
    report["n_samples"] = len(records)
    return report


def build_retrieval_index(encoder, records, labels):
    embs = np.stack([encoder.encode_image(rec.image) for rec in records])
    return RetrievalIndex(
        embeddings=embs,
        labels=[labels[rec.true_class] for rec in records],
        ids=list(range(len(records))),
    )


def retrieval_report(index: RetrievalIndex, ks=(1, 3, 5), ns=(1, 3, 5)):
    """Leave-one-out evaluation: Top-K any-hit rate and Precision@N.

    A Top-K hit means any of the K nearest neighbours shares the query's
    label (the indicator convention of Top-K accuracy).
    """
    max_k = max(max(ks), max(ns))
    hits = {k: 0 for k in ks}
    precisions = {n: [] for n in ns}
    for item_id in index.ids:
        result = retrieve_similar(index, item_id, min(max_k, len(index.ids) - 1))
        label = index.labels[index.position(item_id)]
        for k in ks:
            kk = min(k, len(result.labels))
            if any(lbl == label for lbl in result.labels[:kk]):
                hits[k] += 1
        for n in ns:
            nn = min(n, len(result.labels))
            precisions[n].append(precision_at_n(result, label, nn))
    report = {f"Top-{k}": hits[k] / len(index.ids) for k in ks}
    report.update({f"Precision@{n}": float(np.mean(precisions[n])) for n in ns})
    report["n_samples"] = len(index.ids)
    return report


# -- export formats -------------------------------------------------------------


def export_embeddings(path, index: RetrievalIndex):
    """JSON lines {id, label, vector}."""
    with Path(path).open("w") as fh:
        for i, item_id in enumerate(index.ids):
            fh.write(
                json.dumps(
                    {
                        "id": item_id,
                        "label": index.labels[i],
                        "vector": [float(v) for v in index.embeddings[i]],
                    },
                    sort_keys=True,
                )
                + "\n"
            )


def load_embeddings(path):
    ids, labels, vectors = [], [], []
    with Path(path).open() as fh:
        for line in fh:
            if not line.strip():
                continue
            obj = json.loads(line)
            ids.append(obj["id"])
            labels.append(obj["label"])
            vectors.append(obj["vector"])
    return RetrievalIndex(embeddings=np.asarray(vectors, dtype=np.float64), labels=labels, ids=ids)


def write_metric_report(path, metrics):
    """Deterministic JSON metric file (sorted keys, no timestamps)."""
    Path(path).write_text(json.dumps(metrics, sort_keys=True, indent=2) + "\n")
