"""CLI tests: pipeline wiring, exit codes, config resolution, snapshots,
and byte-identical metric reports."""

import json
from pathlib import Path

import pytest

from evalign.cli import main
from evalign.config import DEFAULTS, parse_override, resolve_config
from evalign.errors import ConfigError

FAST = [
    "--set", "corpus.n_classes=6",
    "--set", "corpus.samples_per_class=12",
    "--set", "corpus.image_dim=8",
    "--set", "corpus.vocab_size=12",
    "--set", "encoder.n_tokens=2",
    "--set", "encoder.backbone_dim=8",
    "--set", "encoder.lora_rank=1",
    "--set", "encoder.embed_dim=12",
    "--set", "train.batch_size=4",
    "--set", "train.epochs=3",
]


def run(argv, capsys):
    code = main(argv)
    out, err = capsys.readouterr()
    return code, out, err


class TestConfigResolution:
    def test_defaults_plus_file_plus_set(self, tmp_path):
        cfg_file = tmp_path / "c.json"
        cfg_file.write_text(json.dumps({"train.epochs": 9}))
        cfg = resolve_config(cfg_file, ["train.batch_size=4"], seed=5)
        assert cfg["train.epochs"] == 9
        assert cfg["train.batch_size"] == 4
        assert cfg["seed"] == 5

    def test_overrides_win_over_file(self, tmp_path):
        cfg_file = tmp_path / "c.json"
        cfg_file.write_text(json.dumps({"train.epochs": 9}))
        cfg = resolve_config(cfg_file, ["train.epochs=2"])
        assert cfg["train.epochs"] == 2

    def test_unknown_key_rejected(self, tmp_path):
        cfg_file = tmp_path / "c.json"
        cfg_file.write_text(json.dumps({"train.warp_speed": 1}))
        with pytest.raises(ConfigError):
            resolve_config(cfg_file, [])
        with pytest.raises(ConfigError):
            resolve_config(None, ["no.such.key=1"])

    def test_override_value_parsing(self):
        assert parse_override("train.epochs=7") == ("train.epochs", 7)
        assert parse_override("train.loss_mode=em_only") == ("train.loss_mode", "em_only")
        assert parse_override("probe.train_domains=[0,1]") == ("probe.train_domains", [0, 1])
        with pytest.raises(ConfigError):
            parse_override("not-a-pair")

    def test_defaults_cover_every_module(self):
        prefixes = {k.split(".")[0] for k in DEFAULTS if "." in k}
        assert {"corpus", "encoder", "train", "probe", "eval", "serve"} <= prefixes


class TestPipeline:
    def test_gen_train_zeroshot_retrieve(self, tmp_path, capsys):
        out = str(tmp_path / "run")
        code, _, err = run(["gen", "--out", out, *FAST], capsys)
        assert code == 0, err
        assert (Path(out) / "corpus.jsonl").exists()
        assert (Path(out) / "config.snapshot.json").exists()

        code, _, err = run(["train", "--out", out, *FAST], capsys)
        assert code == 0, err
        assert (Path(out) / "checkpoints" / "final.json").exists()
        assert (Path(out) / "train_log.jsonl").exists()

        code, stdout, err = run(["zeroshot", "--out", out, *FAST], capsys)
        assert code == 0, err
        metrics = json.loads((Path(out) / "metrics_zeroshot.json").read_text())
        for key in ("Top-1", "Top-3", "Top-5"):
            assert key in metrics
            assert 0.0 <= metrics[key] <= 1.0
        assert json.loads(stdout)["Top-1"] == metrics["Top-1"]

        code, _, err = run(["retrieve", "--out", out, *FAST], capsys)
        assert code == 0, err
        rmetrics = json.loads((Path(out) / "metrics_retrieval.json").read_text())
        assert "Precision@1" in rmetrics and "Top-5" in rmetrics

        code, _, err = run(["embed", "--out", out, *FAST], capsys)
        assert code == 0, err
        lines = (Path(out) / "embeddings_test.jsonl").read_text().splitlines()
        first = json.loads(lines[0])
        assert set(first) == {"id", "label", "vector"}

        code, _, err = run(["probe", "--out", out, *FAST, "--set", "probe.epochs=20"], capsys)
        assert code == 0, err
        pmetrics = json.loads((Path(out) / "metrics_probe.json").read_text())
        assert 0.0 <= pmetrics["mean_auc"] <= 1.0

        code, _, err = run(
            ["probe", "--out", out, *FAST, "--set", "probe.epochs=20", "--set", "probe.few_shot_k=3"],
            capsys,
        )
        assert code == 0, err
        fmetrics = json.loads((Path(out) / "metrics_probe.json").read_text())
        assert fmetrics["n_train"] == 3 * 6

    def test_metric_reports_are_byte_identical_across_runs(self, tmp_path, capsys):
        out_a, out_b = str(tmp_path / "a"), str(tmp_path / "b")
        for out in (out_a, out_b):
            assert run(["gen", "--out", out, *FAST], capsys)[0] == 0
            assert run(["train", "--out", out, *FAST], capsys)[0] == 0
            assert run(["zeroshot", "--out", out, *FAST], capsys)[0] == 0
        a = (Path(out_a) / "metrics_zeroshot.json").read_bytes()
        b = (Path(out_b) / "metrics_zeroshot.json").read_bytes()
        assert a == b

    def test_snapshot_reflects_overrides(self, tmp_path, capsys):
        out = str(tmp_path / "run")
        code, _, _ = run(["gen", "--out", out, *FAST, "--seed", "9"], capsys)
        assert code == 0
        snap = json.loads((Path(out) / "config.snapshot.json").read_text())
        assert snap["seed"] == 9
        assert snap["corpus.n_classes"] == 6


class TestExitCodes:
    def test_unknown_flag_exits_one_with_usage(self, capsys):
        code, _, err = run(["gen", "--out", "/tmp/x", "--frobnicate"], capsys)
        assert code == 1
        assert "usage" in err.lower()

    def test_unknown_subcommand_exits_one(self, capsys):
        code, _, err = run(["dance"], capsys)
        assert code == 1

    def test_unknown_config_key_exits_one(self, tmp_path, capsys):
        code, _, err = run(["gen", "--out", str(tmp_path), "--set", "bogus.key=1"], capsys)
        assert code == 1
        assert "unknown config key" in err

    def test_missing_corpus_exits_one(self, tmp_path, capsys):
        code, _, err = run(["train", "--out", str(tmp_path), *FAST], capsys)
        assert code == 1
        assert "corpus" in err

    def test_report_on_missing_log_exits_one(self, tmp_path, capsys):
        out = tmp_path / "run"
        out.mkdir()
        # a valid case set but no event log
        from evalign.study import StudyCase, save_case_set

        options = tuple(f"d{i}" for i in range(6))
        case = StudyCase(
            case_id="case_00000",
            image_ref="/image/case_00000",
            options=options,
            truth=options[0],
            top5=options[:5],
        )
        save_case_set([case], out / "cases.jsonl")
        code, _, err = run(["report", "--out", str(out)], capsys)
        assert code == 1
        assert "no completed readers" in err


class TestImagePoolIndexing:
    def test_reconstructed_images_match_build_output(self):
        # case ids index the eval-split pool, not the full corpus
        from evalign.cli import _images_for_cases
        from evalign.datagen import CorpusSpec, class_names, generate_corpus, split_corpus
        from evalign.encoder import DualEncoder, EncoderConfig
        from evalign.study import build_case_set

        recs = generate_corpus(CorpusSpec(n_classes=6, samples_per_class=8, image_dim=8, vocab_size=12, seed=4))
        split_corpus(recs, (0.5, 0.25, 0.25), seed=4)
        pool = [r for r in recs if r.split == "test"]
        enc = DualEncoder(EncoderConfig(image_dim=8, n_tokens=2, backbone_dim=8,
                                        lora_rank=1, embed_dim=12, vocab_size=12, seed=4))
        cases, images = build_case_set(enc, pool, class_names(6), n_per_class=1, seed=4)
        rebuilt = _images_for_cases(cases, pool)
        assert rebuilt == images
        # indexing the full corpus instead would disagree for at least one case
        wrong = _images_for_cases(cases, recs)
        assert wrong != images


class TestServeAndReport:
    def test_serve_generates_cases_then_report_flow(self, tmp_path, capsys):
        import urllib.request

        out = str(tmp_path / "run")
        assert run(["gen", "--out", out, *FAST], capsys)[0] == 0
        assert run(["train", "--out", out, *FAST], capsys)[0] == 0

        # build the case set + study service directly (serve_forever blocks)
        from evalign.config import resolve_config as rc
        from evalign.datagen import class_names, load_corpus
        from evalign.server import StudyServer
        from evalign.study import StudyService, build_case_set, save_case_set
        from evalign.trainer import load_checkpoint

        overrides = [a for a in FAST if a != "--set"]
        cfg = rc(None, overrides, seed=0)
        records = load_corpus(Path(out) / "corpus.jsonl")
        encoder = load_checkpoint(Path(out) / "checkpoints" / "final.json")
        labels = class_names(6)
        test = [r for r in records if r.split == "test"]
        cases, images = build_case_set(encoder, test, labels, n_per_class=1, seed=0)
        save_case_set(cases, Path(out) / "cases.jsonl")
        service = StudyService(cases, log_path=Path(out) / "events.jsonl")
        server = StudyServer(service, images=images).start()
        try:
            base = server.address
            for rnd in (1, 2):
                while True:
                    with urllib.request.urlopen(f"{base}/session/vi/{rnd}?seed=3&tier=senior") as r:
                        payload = json.loads(r.read())
                    case = payload["next_case"]
                    if case is None:
                        break
                    body = json.dumps(
                        {
                            "reader": "vi",
                            "case_id": case["case_id"],
                            "round": rnd,
                            "label": case["options"][0],
                            "confidence": 3,
                        }
                    ).encode()
                    req = urllib.request.Request(f"{base}/response", data=body)
                    urllib.request.urlopen(req).read()
        finally:
            server.stop()

        code, stdout, err = run(["report", "--out", out], capsys)
        assert code == 0, err
        report = json.loads(stdout)
        assert report["n_readers_completed"] == 1
        assert (Path(out) / "study_report.json").exists()
