"""Corpus generator tests: determinism, noise knobs, stratified splits,
domain shift, and the JSONL round trip."""

import json

import numpy as np
import pytest

from evalign.datagen import (
    CorpusSpec,
    build_vocab,
    class_names,
    generate_corpus,
    load_corpus,
    prompt_tokens,
    render_prompt,
    save_corpus,
    split_corpus,
    tokenize,
    with_domain,
)
from evalign.errors import ContractError, StratificationError, VocabularyError


def corpus_bytes(records):
    return json.dumps(
        [
            {
                "image": [float(v) for v in r.image],
                "tokens": r.tokens,
                "t": r.true_class,
                "a": r.assigned_class,
                "d": r.domain,
                "s": r.split,
            }
            for r in records
        ]
    ).encode()


class TestSpecValidation:
    def test_minimum_classes(self):
        with pytest.raises(ContractError):
            CorpusSpec(n_classes=1)

    def test_vocab_lower_bound(self):
        with pytest.raises(ContractError):
            CorpusSpec(n_classes=8, vocab_size=7)

    def test_noise_rate_range(self):
        with pytest.raises(ContractError):
            CorpusSpec(label_noise_rate=1.0)

    def test_vocab_too_small_for_template(self):
        spec = CorpusSpec(n_classes=8, vocab_size=10)  # needs 8 + 4
        with pytest.raises(VocabularyError):
            generate_corpus(spec)


class TestGeneration:
    def test_same_spec_twice_is_byte_identical(self):
        spec = CorpusSpec(n_classes=4, samples_per_class=10, seed=5)
        assert corpus_bytes(generate_corpus(spec)) == corpus_bytes(generate_corpus(spec))

    def test_zero_label_noise_keeps_assignments(self):
        recs = generate_corpus(CorpusSpec(n_classes=4, samples_per_class=20))
        assert all(r.assigned_class == r.true_class for r in recs)

    def test_zero_sigma_collapses_class_images(self):
        recs = generate_corpus(CorpusSpec(n_classes=3, samples_per_class=5, noise_sigma=0.0))
        by_class = {}
        for r in recs:
            by_class.setdefault(r.true_class, []).append(r.image)
        for images in by_class.values():
            for img in images[1:]:
                assert np.array_equal(img, images[0])

    def test_class_balance_and_token_rendering(self):
        spec = CorpusSpec(n_classes=4, samples_per_class=7, tokens_per_text=5)
        recs = generate_corpus(spec)
        assert len(recs) == 28
        for r in recs:
            assert r.tokens == [0, 1, 2, 3, 4 + r.assigned_class]
            assert len(r.tokens) == 5

    def test_label_noise_rate_within_two_percent(self):
        spec = CorpusSpec(
            n_classes=10, samples_per_class=500, label_noise_rate=0.2, vocab_size=16
        )
        recs = generate_corpus(spec)
        assert len(recs) == 5000
        flipped = sum(r.assigned_class != r.true_class for r in recs) / len(recs)
        assert abs(flipped - 0.2) <= 0.02
        # flips never land on the original class
        for r in recs:
            assert 0 <= r.assigned_class < 10

    def test_domain_shift_separates_matched_classes(self):
        base = CorpusSpec(n_classes=5, samples_per_class=12, noise_sigma=0.05)
        d0 = generate_corpus(base)
        d1 = generate_corpus(with_domain(base, 1))

        def mean_cos(a_recs, b_recs):
            vals = []
            for a in a_recs:
                for b in b_recs:
                    if a.true_class == b.true_class:
                        vals.append(
                            float(a.image @ b.image)
                            / (np.linalg.norm(a.image) * np.linalg.norm(b.image))
                        )
            return np.mean(vals)

        within = mean_cos(d0[:30], d0[30:60]) if len(d0) >= 60 else mean_cos(d0, d0)
        across = mean_cos(d0, d1)
        assert across < mean_cos(d0, d0)
        assert across < 0.9


class TestPrompts:
    def test_render_is_exactly_the_template(self):
        assert render_prompt("class_3") == "a fundus image of class_3"

    def test_tokenize_round_trip(self):
        vocab = build_vocab(6)
        ids = tokenize(render_prompt("class_2"), vocab)
        assert ids == prompt_tokens(2)

    def test_unknown_word(self):
        with pytest.raises(VocabularyError):
            tokenize("a fundus image of zebra", build_vocab(4))

    def test_short_budget_keeps_class_token(self):
        assert prompt_tokens(1, tokens_per_text=3) == [0, 1, 5]
        assert prompt_tokens(1, tokens_per_text=7) == [0, 1, 2, 3, 5, 5, 5]

    def test_class_names_shape(self):
        assert class_names(3) == ["class_0", "class_1", "class_2"]


class TestSplit:
    def test_exact_counts(self):
        recs = generate_corpus(CorpusSpec(n_classes=3, samples_per_class=10))
        train, val, test = split_corpus(recs, (0.6, 0.2, 0.2), seed=1)
        for split, want in ((train, 6), (val, 2), (test, 2)):
            per_class = {}
            for r in split:
                per_class[r.true_class] = per_class.get(r.true_class, 0) + 1
            assert per_class == {0: want, 1: want, 2: want}

    def test_partition_is_exact(self):
        recs = generate_corpus(CorpusSpec(n_classes=4, samples_per_class=9))
        train, val, test = split_corpus(recs, seed=2)
        ids = [id(r) for r in train + val + test]
        assert len(ids) == len(recs)
        assert len(set(ids)) == len(ids)
        assert all(r.split in ("train", "val", "test") for r in recs)

    def test_resplit_same_seed_identical(self):
        recs1 = generate_corpus(CorpusSpec(n_classes=3, samples_per_class=8))
        recs2 = generate_corpus(CorpusSpec(n_classes=3, samples_per_class=8))
        split_corpus(recs1, seed=7)
        split_corpus(recs2, seed=7)
        assert [r.split for r in recs1] == [r.split for r in recs2]

    def test_fraction_validation(self):
        recs = generate_corpus(CorpusSpec(n_classes=2, samples_per_class=6))
        with pytest.raises(ContractError):
            split_corpus(recs, (0.5, 0.2, 0.2))

    def test_stratification_error_when_class_too_small(self):
        recs = generate_corpus(CorpusSpec(n_classes=2, samples_per_class=2))
        with pytest.raises(StratificationError):
            split_corpus(recs)


class TestCorpusFile:
    def test_round_trip(self, tmp_path):
        recs = generate_corpus(CorpusSpec(n_classes=3, samples_per_class=5))
        split_corpus(recs, seed=0)
        path = tmp_path / "corpus.jsonl"
        save_corpus(recs, path)
        loaded = load_corpus(path)
        assert corpus_bytes(loaded) == corpus_bytes(recs)

    def test_loader_rejects_bad_json(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        path.write_text("{not json\n")
        with pytest.raises(ContractError):
            load_corpus(path)

    def test_loader_rejects_inconsistent_width(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        rec = {"image": [1.0, 2.0], "tokens": [0], "true_class": 0, "assigned_class": 0, "domain": 0, "split": None}
        lines = [json.dumps(rec), json.dumps({**rec, "image": [1.0]})]
        path.write_text("\n".join(lines) + "\n")
        with pytest.raises(ContractError):
            load_corpus(path)

    def test_loader_rejects_bad_split_tag(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        rec = {"image": [1.0], "tokens": [0], "true_class": 0, "assigned_class": 0, "domain": 0, "split": "holdout"}
        path.write_text(json.dumps(rec) + "\n")
        with pytest.raises(ContractError):
            load_corpus(path)
