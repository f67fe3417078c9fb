"""Flat dotted-key run configuration.

A config is a plain dict of known keys.  Resolution order: package defaults,
then the JSON config file, then repeated ``--set key=value`` overrides, then
``--seed``.  Unknown keys are rejected wherever they appear, and every run
writes the resolved snapshot next to its outputs so results can be audited.
"""

from __future__ import annotations

import json
from pathlib import Path

from .datagen import CorpusSpec
from .encoder import EncoderConfig
from .errors import ConfigError
from .trainer import ProbeConfig, TrainConfig

DEFAULTS = {
    "seed": 0,
    "corpus.n_classes": 8,
    "corpus.samples_per_class": 64,
    "corpus.image_dim": 16,
    "corpus.vocab_size": 16,
    "corpus.tokens_per_text": 5,
    "corpus.noise_sigma": 0.05,
    "corpus.label_noise_rate": 0.0,
    "corpus.domain_id": 0,
    "corpus.split_train": 0.6,
    "corpus.split_val": 0.2,
    "corpus.split_test": 0.2,
    "encoder.n_tokens": 4,
    "encoder.backbone_dim": 16,
    "encoder.lora_rank": 2,
    "encoder.embed_dim": 32,
    "encoder.positional_encoding": False,
    "train.batch_size": 32,
    "train.epochs": 60,
    "train.learning_rate": 1e-3,
    "train.adam_beta1": 0.9,
    "train.adam_beta2": 0.999,
    "train.t_anneal": 10,
    "train.loss_mode": "full",
    "probe.epochs": 100,
    "probe.learning_rate": 0.05,
    "probe.few_shot_k": None,
    "probe.train_domains": None,
    "probe.eval_domains": None,
    "eval.split": "test",
    "eval.ks": (1, 3, 5),
    "eval.ns": (1, 3, 5),
    "serve.host": "127.0.0.1",
    "serve.port": 8765,
}


def _check_known(keys):
    unknown = sorted(set(keys) - set(DEFAULTS))
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")


def parse_override(text):
    """Parse one ``key=value`` pair; values are JSON when possible."""
    if "=" not in text:
        raise ConfigError(f"override {text!r} is not of the form key=value")
    key, raw = text.split("=", 1)
    key = key.strip()
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key, value


def resolve_config(config_path=None, overrides=(), seed=None):
    """Merge defaults, file, --set pairs, and --seed into one flat dict."""
    cfg = dict(DEFAULTS)
    if config_path:
        try:
            loaded = json.loads(Path(config_path).read_text())
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError(f"cannot read config {config_path}: {e}") from e
        if not isinstance(loaded, dict):
            raise ConfigError("config file must hold a JSON object of dotted keys")
        _check_known(loaded)
        cfg.update(loaded)
    pairs = [parse_override(o) for o in overrides]
    _check_known(k for k, _ in pairs)
    cfg.update(pairs)
    if seed is not None:
        cfg["seed"] = int(seed)
    return cfg


def write_snapshot(cfg, out_dir):
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / "config.snapshot.json"
    path.write_text(json.dumps(cfg, sort_keys=True, indent=2, default=list) + "\n")
    return path


# -- typed views -----------------------------------------------------------


def corpus_spec(cfg):
    return CorpusSpec(
        n_classes=int(cfg["corpus.n_classes"]),
        samples_per_class=int(cfg["corpus.samples_per_class"]),
        image_dim=int(cfg["corpus.image_dim"]),
        vocab_size=int(cfg["corpus.vocab_size"]),
        tokens_per_text=int(cfg["corpus.tokens_per_text"]),
        noise_sigma=float(cfg["corpus.noise_sigma"]),
        label_noise_rate=float(cfg["corpus.label_noise_rate"]),
        domain_id=int(cfg["corpus.domain_id"]),
        seed=int(cfg["seed"]),
    )


def split_fractions(cfg):
    return (
        float(cfg["corpus.split_train"]),
        float(cfg["corpus.split_val"]),
        float(cfg["corpus.split_test"]),
    )


def encoder_config(cfg):
    return EncoderConfig(
        image_dim=int(cfg["corpus.image_dim"]),
        n_tokens=int(cfg["encoder.n_tokens"]),
        backbone_dim=int(cfg["encoder.backbone_dim"]),
        lora_rank=int(cfg["encoder.lora_rank"]),
        embed_dim=int(cfg["encoder.embed_dim"]),
        vocab_size=int(cfg["corpus.vocab_size"]),
        positional_encoding=bool(cfg["encoder.positional_encoding"]),
        seed=int(cfg["seed"]),
    )


def train_config(cfg, checkpoint_dir=None):
    return TrainConfig(
        batch_size=int(cfg["train.batch_size"]),
        epochs=int(cfg["train.epochs"]),
        learning_rate=float(cfg["train.learning_rate"]),
        adam_betas=(float(cfg["train.adam_beta1"]), float(cfg["train.adam_beta2"])),
        t_anneal=int(cfg["train.t_anneal"]),
        seed=int(cfg["seed"]),
        loss_mode=str(cfg["train.loss_mode"]),
        checkpoint_dir=checkpoint_dir,
    )


def probe_config(cfg):
    domains = cfg["probe.train_domains"]
    eval_domains = cfg["probe.eval_domains"]
    return ProbeConfig(
        n_classes=int(cfg["corpus.n_classes"]),
        epochs=int(cfg["probe.epochs"]),
        learning_rate=float(cfg["probe.learning_rate"]),
        few_shot_k=None if cfg["probe.few_shot_k"] is None else int(cfg["probe.few_shot_k"]),
        train_domains=None if domains is None else tuple(domains),
        eval_domains=None if eval_domains is None else tuple(eval_domains),
        eval_split=str(cfg["eval.split"]),
        seed=int(cfg["seed"]),
    )
