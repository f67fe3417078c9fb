"""Trainer tests: reproducibility, schedule endpoints, frozen weights,
ablation plumbing, probes, and checkpoint round trips."""

import json

import numpy as np
import pytest

from evalign import autodiff as ad
from evalign.autodiff import backward
from evalign.datagen import CorpusSpec, generate_corpus, split_corpus, with_domain
from evalign.encoder import DualEncoder, EncoderConfig
from evalign.errors import CheckpointError, ContractError
from evalign.trainer import (
    Adam,
    EmbeddedSample,
    ProbeConfig,
    TrainConfig,
    assemble_batches,
    batch_loss,
    embed_corpus,
    lambda_schedule,
    load_checkpoint,
    save_checkpoint,
    train_contrastive,
    train_linear_probe,
    write_train_log,
)


def tiny_corpus(seed=0, n_classes=4, per_class=12, **kw):
    spec = CorpusSpec(
        n_classes=n_classes,
        samples_per_class=per_class,
        image_dim=8,
        vocab_size=12,
        noise_sigma=0.05,
        seed=seed,
        **kw,
    )
    recs = generate_corpus(spec)
    split_corpus(recs, (0.6, 0.2, 0.2), seed=seed)
    return recs


def tiny_encoder_config(**kw):
    base = dict(
        image_dim=8, n_tokens=2, backbone_dim=8, lora_rank=1, embed_dim=12, vocab_size=12, seed=0
    )
    base.update(kw)
    return EncoderConfig(**base)


class TestLambdaSchedule:
    def test_endpoints(self):
        assert lambda_schedule(0, 10) == 0.0
        assert lambda_schedule(10, 10) == 1.0
        assert lambda_schedule(25, 10) == 1.0

    def test_monotone_ramp(self):
        vals = [lambda_schedule(e, 10) for e in range(12)]
        assert vals == sorted(vals)


class TestBatchAssembly:
    def test_distinct_classes_when_enough(self):
        recs = tiny_corpus(n_classes=6, per_class=10)
        train = [r for r in recs if r.split == "train"]
        batches = assemble_batches(train, 4, np.random.default_rng(0))
        for batch in batches:
            classes = [r.assigned_class for r in batch]
            assert len(set(classes)) == len(classes)

    def test_duplicates_allowed_when_classes_scarce(self):
        recs = tiny_corpus(n_classes=2, per_class=12)
        train = [r for r in recs if r.split == "train"]
        batches = assemble_batches(train, 4, np.random.default_rng(0))
        assert batches
        for batch in batches:
            assert len(batch) == 4

    def test_deterministic_under_same_rng(self):
        recs = tiny_corpus()
        train = [r for r in recs if r.split == "train"]
        a = assemble_batches(train, 4, np.random.default_rng(5))
        b = assemble_batches(train, 4, np.random.default_rng(5))
        assert [[id(r) for r in batch] for batch in a] == [[id(r) for r in batch] for batch in b]


class TestTrainContrastive:
    def test_history_is_finite_and_schedule_applied(self):
        recs = tiny_corpus()
        cfg = TrainConfig(batch_size=4, epochs=6, t_anneal=3, seed=0)
        _, history = train_contrastive(recs, cfg, tiny_encoder_config())
        assert len(history) == 6
        for rec in history:
            for key in ("L_Em", "CE_i2t", "KL_i2t", "CE_t2i", "KL_t2i", "L_Con", "val_L_Con"):
                assert np.isfinite(rec[key])
        assert history[0]["lambda"] == 0.0
        assert history[3]["lambda"] == 1.0
        assert history[5]["lambda"] == 1.0

    def test_same_seed_bitwise_identical(self):
        recs = tiny_corpus()
        cfg = TrainConfig(batch_size=4, epochs=3, seed=7)
        enc_a, hist_a = train_contrastive(recs, cfg, tiny_encoder_config())
        enc_b, hist_b = train_contrastive(recs, cfg, tiny_encoder_config())
        for name, pa in enc_a.parameters().items():
            assert np.array_equal(pa.data, enc_b.parameters()[name].data), name
        assert hist_a == hist_b

    def test_frozen_weights_unchanged_by_training(self):
        recs = tiny_corpus()
        cfg = TrainConfig(batch_size=4, epochs=3, seed=1)
        enc = DualEncoder(tiny_encoder_config())
        before = enc.frozen_checksum()
        enc_trained, _ = train_contrastive(recs, cfg, tiny_encoder_config())
        assert enc_trained.frozen_checksum() == before

    def test_em_only_history_zeroes_dirichlet_terms(self):
        recs = tiny_corpus()
        cfg = TrainConfig(batch_size=4, epochs=2, seed=0, loss_mode="em_only")
        _, history = train_contrastive(recs, cfg, tiny_encoder_config())
        for rec in history:
            assert rec["CE_i2t"] == rec["KL_i2t"] == rec["CE_t2i"] == rec["KL_t2i"] == 0.0

    def test_loss_decreases_on_tiny_run(self):
        recs = tiny_corpus()
        cfg = TrainConfig(batch_size=4, epochs=8, learning_rate=3e-3, seed=0)
        _, history = train_contrastive(recs, cfg, tiny_encoder_config())
        assert history[-1]["L_Em"] < history[0]["L_Em"]

    def test_train_log_roundtrip(self, tmp_path):
        recs = tiny_corpus()
        cfg = TrainConfig(batch_size=4, epochs=2, seed=0)
        _, history = train_contrastive(recs, cfg, tiny_encoder_config())
        path = tmp_path / "log.jsonl"
        write_train_log(history, path)
        lines = [json.loads(l) for l in path.read_text().splitlines()]
        assert lines == json.loads(json.dumps(history))


class TestAblationPlumbing:
    def test_em_only_gradient_equals_full_minus_dirichlet(self):
        recs = tiny_corpus()
        train = [r for r in recs if r.split == "train"]
        batch = train[:4]
        lam = 0.5

        def grads_for(mode_em_only, lam_used):
            enc = DualEncoder(tiny_encoder_config())
            rng = np.random.default_rng(9)
            enc.attn.wq.B.data[:] = 0.1 * rng.normal(size=enc.attn.wq.B.shape)
            enc.attn.wv.B.data[:] = 0.1 * rng.normal(size=enc.attn.wv.B.shape)
            loss, _ = batch_loss(enc, batch, lam_used, "em_only" if mode_em_only else "full")
            backward(loss)
            return {k: p.grad.copy() for k, p in enc.parameters().items()}

        g_full = grads_for(False, lam)
        g_em = grads_for(True, lam)

        # recompute the dirichlet-only gradient through the same graph
        enc = DualEncoder(tiny_encoder_config())
        rng = np.random.default_rng(9)
        enc.attn.wq.B.data[:] = 0.1 * rng.normal(size=enc.attn.wq.B.shape)
        enc.attn.wv.B.data[:] = 0.1 * rng.normal(size=enc.attn.wv.B.shape)
        full_loss, _ = batch_loss(enc, batch, lam, "full")
        em_loss, _ = batch_loss(enc, batch, lam, "em_only")
        backward(ad.sub(full_loss, em_loss))
        g_dl = {k: p.grad.copy() for k, p in enc.parameters().items()}

        for name in g_full:
            assert np.allclose(g_full[name], g_em[name] + g_dl[name], atol=1e-11), name

    def test_both_modes_complete_under_label_noise(self):
        recs = tiny_corpus(label_noise_rate=0.2)
        for mode in ("full", "em_only"):
            cfg = TrainConfig(batch_size=4, epochs=2, seed=0, loss_mode=mode)
            _, history = train_contrastive(recs, cfg, tiny_encoder_config())
            assert np.isfinite(history[-1]["L_Con"])


class TestCheckpoints:
    def test_round_trip_bit_exact(self, tmp_path):
        recs = tiny_corpus()
        cfg = TrainConfig(batch_size=4, epochs=2, seed=0)
        enc, _ = train_contrastive(recs, cfg, tiny_encoder_config())
        path = tmp_path / "ckpt.json"
        save_checkpoint(enc, path)
        loaded = load_checkpoint(path)
        for name, t in enc.all_tensors().items():
            assert np.array_equal(t.data, loaded.all_tensors()[name].data), name

    def test_truncated_file_rejected(self, tmp_path):
        enc = DualEncoder(tiny_encoder_config())
        path = tmp_path / "ckpt.json"
        save_checkpoint(enc, path)
        path.write_text(path.read_text()[: len(path.read_text()) // 2])
        with pytest.raises(CheckpointError):
            load_checkpoint(path)

    def test_config_mismatch_reports_both_hashes(self, tmp_path):
        enc = DualEncoder(tiny_encoder_config())
        path = tmp_path / "ckpt.json"
        save_checkpoint(enc, path)
        other = tiny_encoder_config(embed_dim=16)
        with pytest.raises(CheckpointError) as exc:
            load_checkpoint(path, expected_config=other)
        msg = str(exc.value)
        assert enc.config.hash() in msg
        assert other.hash() in msg

    def test_tampered_config_detected(self, tmp_path):
        enc = DualEncoder(tiny_encoder_config())
        path = tmp_path / "ckpt.json"
        save_checkpoint(enc, path)
        payload = json.loads(path.read_text())
        payload["config"]["embed_dim"] = 999
        path.write_text(json.dumps(payload))
        with pytest.raises(CheckpointError):
            load_checkpoint(path)

    def test_checkpoints_written_during_training(self, tmp_path):
        recs = tiny_corpus()
        cfg = TrainConfig(batch_size=4, epochs=2, seed=0, checkpoint_dir=str(tmp_path))
        train_contrastive(recs, cfg, tiny_encoder_config())
        assert (tmp_path / "final.json").exists()
        assert (tmp_path / "best.json").exists()


def separable_embeddings(n_per_class=20, n_classes=3, seed=0):
    rng = np.random.default_rng(seed)
    anchors = np.eye(n_classes)
    samples = []
    idx = 0
    for c in range(n_classes):
        for split, count in (("train", n_per_class), ("test", 8)):
            for _ in range(count):
                v = anchors[c] + 0.05 * rng.normal(size=n_classes)
                samples.append(
                    EmbeddedSample(
                        sample_id=idx,
                        embedding=v / np.linalg.norm(v),
                        label=c,
                        true_label=c,
                        domain=0,
                        split=split,
                    )
                )
                idx += 1
    return samples


class TestLinearProbe:
    def test_separable_data_reaches_full_accuracy_within_50_epochs(self):
        samples = separable_embeddings()
        cfg = ProbeConfig(n_classes=3, epochs=50, learning_rate=0.2, seed=0)
        result = train_linear_probe(samples, cfg)
        assert result.train_accuracy == 1.0
        assert result.mean_auc > 0.99

    def test_few_shot_uses_exactly_k_per_class(self):
        samples = separable_embeddings()
        cfg = ProbeConfig(n_classes=3, epochs=10, few_shot_k=5, seed=0)
        result = train_linear_probe(samples, cfg)
        assert result.n_train == 5 * 3

    def test_missing_class_rejected(self):
        samples = [s for s in separable_embeddings() if not (s.label == 1 and s.split == "train")]
        cfg = ProbeConfig(n_classes=3, epochs=5)
        with pytest.raises(ContractError):
            train_linear_probe(samples, cfg)

    def test_cross_domain_eval_runs_without_retraining(self):
        base = CorpusSpec(n_classes=3, samples_per_class=12, image_dim=8, vocab_size=12, seed=2)
        d0 = generate_corpus(base)
        d1 = generate_corpus(with_domain(base, 1))
        split_corpus(d0, seed=2)
        split_corpus(d1, seed=2)
        enc = DualEncoder(tiny_encoder_config())
        emb = embed_corpus(enc, d0 + d1)
        cfg = ProbeConfig(
            n_classes=3, epochs=20, train_domains=(0,), eval_domains=(1,), seed=0
        )
        result = train_linear_probe(emb, cfg)
        assert result.n_eval > 0
        assert 0.0 <= result.mean_auc <= 1.0


class TestAdam:
    def test_quadratic_descent(self):
        from evalign.autodiff import Tensor

        x = Tensor(np.array([5.0, -3.0]), requires_grad=True)
        opt = Adam({"x": x}, lr=0.2)
        for _ in range(300):
            loss = ad.tsum(ad.mul(x, x))
            backward(loss)
            opt.step()
        assert np.max(np.abs(x.data)) < 1e-2
