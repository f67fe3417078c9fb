"""Optimization loops: contrastive pretraining with the annealed balance
factor, linear-probe fine-tuning (internal, few-shot, cross-domain), and
exact checkpoint round trips.

Training is reproducible bit-for-bit from (corpus, config): every shuffle
and batch draw comes from generators seeded by (seed, epoch), and all math
is float64.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor, backward
from .encoder import DualEncoder, EncoderConfig, config_hash
from .errors import CheckpointError, ContractError, TrainingDivergedError
from .evidential import similarity_matrix, total_loss
from .inference import auc_score

LOSS_MODES = ("full", "em_only")


@dataclass
class TrainConfig:
    batch_size: int = 32
    epochs: int = 60
    learning_rate: float = 1e-3
    adam_betas: tuple = (0.9, 0.999)
    t_anneal: int = 10
    seed: int = 0
    loss_mode: str = "full"
    checkpoint_dir: str | None = None

    def __post_init__(self):
        if self.batch_size < 2:
            raise ContractError("contrastive training needs batch_size >= 2")
        if self.epochs < 1:
            raise ContractError("epochs must be >= 1")
        if self.loss_mode not in LOSS_MODES:
            raise ContractError(f"loss_mode must be one of {LOSS_MODES}")


def lambda_schedule(epoch, t_anneal):
    """Balance factor ramp: 0 at epoch 0, 1 from epoch t_anneal onward."""
    if t_anneal <= 0:
        return 1.0
    return min(1.0, epoch / t_anneal)


class Adam:
    """Plain Adam over named parameter tensors; state is per-parameter."""

    def __init__(self, params, lr=1e-3, betas=(0.9, 0.999), eps=1e-8):
        self.params = dict(params)
        self.lr = lr
        self.b1, self.b2 = betas
        self.eps = eps
        self.t = 0
        self.m = {k: np.zeros_like(p.data) for k, p in self.params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in self.params.items()}

    def step(self):
        self.t += 1
        for name, p in self.params.items():
            if p.grad is None:
                continue
            g = p.grad
            self.m[name] = self.b1 * self.m[name] + (1 - self.b1) * g
            self.v[name] = self.b2 * self.v[name] + (1 - self.b2) * g * g
            m_hat = self.m[name] / (1 - self.b1**self.t)
            v_hat = self.v[name] / (1 - self.b2**self.t)
            p.data = p.data - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def assemble_batches(records, batch_size, rng):
    """Batches drawing at most one record per class while enough distinct
    classes remain; with fewer classes than the batch size, duplicates are
    allowed and the diagonal-target assumption becomes approximate."""
    queues = {}
    for rec in records:
        queues.setdefault(rec.assigned_class, []).append(rec)
    for c in sorted(queues):
        items = queues[c]
        queues[c] = [items[i] for i in rng.permutation(len(items))]
    batches = []
    while sum(len(q) for q in queues.values()) >= batch_size:
        avail = [c for c in sorted(queues) if queues[c]]
        order = [avail[i] for i in rng.permutation(len(avail))]
        order.sort(key=lambda c: -len(queues[c]))  # stable: even consumption
        batch = []
        if len(avail) >= batch_size:
            chosen = order[:batch_size]
        else:
            chosen = [order[i % len(order)] for i in range(batch_size)]
        for c in chosen:
            if queues[c]:
                batch.append(queues[c].pop())
        if len(batch) < batch_size:
            break
        batches.append(batch)
    return batches


def batch_loss(encoder, batch, lam, loss_mode="full"):
    """Differentiable loss over one batch plus its breakdown."""
    image_rows = encoder.encode_image_batch_t([r.image for r in batch])
    text_rows = encoder.encode_text_batch_t([r.tokens for r in batch])
    sim = similarity_matrix(image_rows, text_rows)
    return total_loss(sim, lam, em_only=(loss_mode == "em_only"))


def train_contrastive(corpus, cfg: TrainConfig, encoder_config: EncoderConfig):
    """Train a DualEncoder on the corpus's train split.

    Returns (encoder, history) where history has one record per epoch with
    the mean loss components and the validation objective.  Writes final
    and best-validation checkpoints when `cfg.checkpoint_dir` is set.
    """
    train_recs = [r for r in corpus if r.split == "train"]
    val_recs = [r for r in corpus if r.split == "val"]
    if not train_recs:
        raise ContractError("corpus has no train split")

    encoder = DualEncoder(encoder_config)
    opt = Adam(encoder.parameters(), lr=cfg.learning_rate, betas=cfg.adam_betas)
    history = []
    best_val = None
    ckpt_dir = Path(cfg.checkpoint_dir) if cfg.checkpoint_dir else None
    if ckpt_dir:
        ckpt_dir.mkdir(parents=True, exist_ok=True)

    val_batches = None
    if val_recs:
        # fixed validation batching so epoch objectives are comparable
        val_batches = assemble_batches(
            val_recs, min(cfg.batch_size, len(val_recs)), np.random.default_rng([cfg.seed, 0xFA])
        )

    for epoch in range(cfg.epochs):
        lam = lambda_schedule(epoch, cfg.t_anneal)
        rng = np.random.default_rng([cfg.seed, epoch])
        sums = {"L_Em": 0.0, "CE_i2t": 0.0, "KL_i2t": 0.0, "CE_t2i": 0.0, "KL_t2i": 0.0, "L_Con": 0.0}
        batches = assemble_batches(train_recs, cfg.batch_size, rng)
        if not batches:
            raise ContractError("train split smaller than one batch")
        for batch in batches:
            loss, bd = batch_loss(encoder, batch, lam, cfg.loss_mode)
            if not np.isfinite(loss.item()):
                raise TrainingDivergedError(f"loss diverged at epoch {epoch}")
            backward(loss)
            opt.step()
            rec = bd.as_log_record()
            for key in sums:
                sums[key] += rec[key]
        record = {"epoch": epoch, "lambda": lam}
        for key, total in sums.items():
            record[key] = total / len(batches)
        record["val_L_Con"] = None
        if val_batches:
            with ad.no_grad():
                vals = [batch_loss(encoder, b, lam, cfg.loss_mode)[1].total for b in val_batches]
            record["val_L_Con"] = float(np.mean(vals))
            if best_val is None or record["val_L_Con"] < best_val:
                best_val = record["val_L_Con"]
                if ckpt_dir:
                    save_checkpoint(encoder, ckpt_dir / "best.json")
        history.append(record)

    if ckpt_dir:
        save_checkpoint(encoder, ckpt_dir / "final.json")
        if best_val is None:
            save_checkpoint(encoder, ckpt_dir / "best.json")
    return encoder, history


def write_train_log(history, path):
    with Path(path).open("w") as fh:
        for rec in history:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")


# -- checkpoints ---------------------------------------------------------


def save_checkpoint(encoder: DualEncoder, path):
    payload = {
        "format_version": 1,
        "config": encoder.config.to_dict(),
        "config_hash": encoder.config.hash(),
        "params": {
            name: {"shape": list(t.shape), "data": t.flat().tolist()}
            for name, t in sorted(encoder.all_tensors().items())
        },
    }
    Path(path).write_text(json.dumps(payload, sort_keys=True))


def load_checkpoint(path, expected_config: EncoderConfig | None = None) -> DualEncoder:
    try:
        payload = json.loads(Path(path).read_text())
    except (json.JSONDecodeError, OSError) as e:
        raise CheckpointError(f"unreadable checkpoint {path}: {e}") from e
    for key in ("format_version", "config", "config_hash", "params"):
        if key not in payload:
            raise CheckpointError(f"checkpoint missing field {key!r}")
    stored_hash = payload["config_hash"]
    actual_hash = config_hash(payload["config"])
    if stored_hash != actual_hash:
        raise CheckpointError(
            f"checkpoint config hash mismatch: stored {stored_hash}, recomputed {actual_hash}"
        )
    if expected_config is not None and expected_config.hash() != stored_hash:
        raise CheckpointError(
            f"checkpoint was written for config {stored_hash}, expected {expected_config.hash()}"
        )
    config = EncoderConfig(**payload["config"])
    encoder = DualEncoder(config)
    tensors = encoder.all_tensors()
    if set(tensors) != set(payload["params"]):
        raise CheckpointError("checkpoint parameter names do not match the architecture")
    for name, t in tensors.items():
        entry = payload["params"][name]
        if tuple(entry["shape"]) != t.shape:
            raise CheckpointError(f"parameter {name} has shape {entry['shape']}, expected {t.shape}")
        t.data = np.asarray(entry["data"], dtype=np.float64).reshape(t.shape)
    return encoder


# -- linear probes ---------------------------------------------------------


@dataclass
class EmbeddedSample:
    sample_id: int
    embedding: np.ndarray
    label: int
    true_label: int
    domain: int
    split: str | None


def embed_corpus(encoder: DualEncoder, records):
    """Image embeddings for every record, with labels and domain tags."""
    out = []
    for i, rec in enumerate(records):
        out.append(
            EmbeddedSample(
                sample_id=i,
                embedding=encoder.encode_image(rec.image),
                label=rec.assigned_class,
                true_label=rec.true_class,
                domain=rec.domain,
                split=rec.split,
            )
        )
    return out


@dataclass
class ProbeConfig:
    n_classes: int
    epochs: int = 100
    learning_rate: float = 0.05
    few_shot_k: int | None = None
    train_domains: tuple | None = None
    eval_domains: tuple | None = None
    eval_split: str = "test"
    seed: int = 0
    encoder: DualEncoder | None = None  # provenance/convenience reference

    def __post_init__(self):
        if self.n_classes < 2:
            raise ContractError("probe needs at least 2 classes")
        if self.few_shot_k is not None and self.few_shot_k < 1:
            raise ContractError("few_shot_k must be >= 1 when set")


@dataclass
class ProbeResult:
    weight: np.ndarray
    bias: np.ndarray
    train_accuracy: float
    per_class_auc: dict
    mean_auc: float
    n_train: int
    n_eval: int
    eval_accuracy: float


def _probe_filter(samples, split, domains):
    out = [s for s in samples if s.split == split]
    if domains is not None:
        allowed = set(domains)
        out = [s for s in out if s.domain in allowed]
    return out


def train_linear_probe(emb_corpus, cfg: ProbeConfig) -> ProbeResult:
    """Softmax head over frozen embeddings, trained with cross-entropy.

    Few-shot mode draws exactly `few_shot_k` training samples per class;
    evaluation runs on the requested split/domains without retraining.
    """
    train = _probe_filter(emb_corpus, "train", cfg.train_domains)
    eval_set = _probe_filter(emb_corpus, cfg.eval_split, cfg.eval_domains)
    if not train or not eval_set:
        raise ContractError("probe needs non-empty train and eval sets")

    by_class = {}
    for s in train:
        by_class.setdefault(s.label, []).append(s)
    for c in range(cfg.n_classes):
        if c not in by_class:
            raise ContractError(f"class {c} absent from the probe training split")
    if cfg.few_shot_k is not None:
        picked = []
        for c in sorted(by_class):
            pool = by_class[c]
            if len(pool) < cfg.few_shot_k:
                raise ContractError(
                    f"class {c} has {len(pool)} samples, fewer than few_shot_k={cfg.few_shot_k}"
                )
            rng = np.random.default_rng([cfg.seed, 0xF5, c])
            idx = rng.choice(len(pool), size=cfg.few_shot_k, replace=False)
            picked.extend(pool[i] for i in sorted(idx))
        train = picked

    x = np.stack([s.embedding for s in train])
    y = np.array([s.label for s in train], dtype=np.intp)
    d = x.shape[1]
    rng = np.random.default_rng([cfg.seed, 0xF6])
    w = Tensor(rng.normal(0.0, 0.01, size=(cfg.n_classes, d)), requires_grad=True)
    b = Tensor(np.zeros(cfg.n_classes), requires_grad=True)
    opt = Adam({"w": w, "b": b}, lr=cfg.learning_rate)
    xt = Tensor(x)
    for _ in range(cfg.epochs):
        logits = ad.add(ad.matmul(xt, ad.transpose(w)), b)
        ce = ad.mul(ad.tsum(ad.gather_rows(ad.log_softmax_row(logits), y)), -1.0 / len(train))
        backward(ce)
        opt.step()

    def predict(samples):
        logits = np.stack([s.embedding for s in samples]) @ w.data.T + b.data
        shifted = logits - logits.max(axis=1, keepdims=True)
        e = np.exp(shifted)
        return e / e.sum(axis=1, keepdims=True)

    train_probs = predict(train)
    train_acc = float(np.mean(train_probs.argmax(axis=1) == y))

    eval_probs = predict(eval_set)
    eval_truth = np.array([s.true_label for s in eval_set], dtype=np.intp)
    eval_acc = float(np.mean(eval_probs.argmax(axis=1) == eval_truth))
    per_class = {}
    aucs = []
    for c in range(cfg.n_classes):
        labels = (eval_truth == c).astype(int)
        if labels.min() == labels.max():
            continue  # class absent (or exclusive) in eval: AUC undefined
        auc = auc_score(eval_probs[:, c], labels)
        per_class[c] = auc
        aucs.append(auc)
    if not aucs:
        raise ContractError("AUC undefined for every class on the eval set")
    return ProbeResult(
        weight=w.data.copy(),
        bias=b.data.copy(),
        train_accuracy=train_acc,
        per_class_auc=per_class,
        mean_auc=float(np.mean(aucs)),
        n_train=len(train),
        n_eval=len(eval_set),
        eval_accuracy=eval_acc,
    )
