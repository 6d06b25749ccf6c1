"""CLI workflows end to end: dataset building, training, evaluation, exit codes."""
import json

import numpy as np
import pytest

from seqmasks.cli import main
from seqmasks.synthetic import write_casia_tree, write_normalized_corpus, write_raw_corpus
from seqmasks.training import TrainConfig, build_model, save_checkpoint

pytestmark = pytest.mark.filterwarnings("ignore::UserWarning")


def run(*argv):
    return main([str(a) for a in argv])


class TestBuildDataset:
    def test_screening_ground_truth(self, tmp_path, capsys):
        counts = {"0000": [10, 9], "0001": [8, 8], "0002": [7, 6], "0003": [3, 1], "0004": [0, 5]}
        write_raw_corpus(tmp_path / "f", tmp_path / "m", effective_counts=counts)
        out = tmp_path / "out"
        code = run("build-dataset", "--frames", tmp_path / "f", "--masks", tmp_path / "m",
                   "--out", out)
        assert code == 0
        stats = json.loads((out / "stats.json").read_text())
        assert stats["sequences"] == 4  # exactly the >= 8 effective sequences
        manifest = [json.loads(l) for l in (out / "manifest.jsonl").read_text().splitlines()]
        assert len(manifest) == 4
        assert {m["id"] for m in manifest} == {"0000", "0001"}
        skip = [json.loads(l) for l in (out / "skip_report.jsonl").read_text().splitlines()]
        assert len(skip) == 6

    def test_boundary_ratio_kept(self, tmp_path):
        # fixture masks sit exactly at 15%; they must count as effective
        write_raw_corpus(tmp_path / "f", tmp_path / "m", effective_counts={"0000": [8]})
        out = tmp_path / "out"
        assert run("build-dataset", "--frames", tmp_path / "f", "--masks", tmp_path / "m",
                   "--out", out) == 0
        stats = json.loads((out / "stats.json").read_text())
        assert stats["sequences"] == 1

    def test_empty_input_ok(self, tmp_path):
        (tmp_path / "f").mkdir()
        (tmp_path / "m").mkdir()
        out = tmp_path / "out"
        assert run("build-dataset", "--frames", tmp_path / "f", "--masks", tmp_path / "m",
                   "--out", out) == 0
        assert (out / "manifest.jsonl").read_text() == ""

    def test_bad_threshold_fails_before_io(self, tmp_path):
        out = tmp_path / "out"
        code = run("build-dataset", "--frames", tmp_path / "f", "--masks", tmp_path / "m",
                   "--out", out, "--min-fg-ratio", "1.1")
        assert code == 2
        assert not out.exists()

    def test_missing_input_is_data_error(self, tmp_path):
        code = run("build-dataset", "--frames", tmp_path / "f", "--masks", tmp_path / "m",
                   "--out", tmp_path / "out")
        assert code == 3

    def test_splits_file(self, tmp_path):
        write_raw_corpus(tmp_path / "f", tmp_path / "m", n_ids=2, seqs_per_id=1)
        plan = {"0000": "query", "0001": {"split": "gallery", "camera": "c7"}}
        (tmp_path / "plan.json").write_text(json.dumps(plan))
        out = tmp_path / "out"
        assert run("build-dataset", "--frames", tmp_path / "f", "--masks", tmp_path / "m",
                   "--out", out, "--splits", tmp_path / "plan.json") == 0
        manifest = {json.loads(l)["id"]: json.loads(l)
                    for l in (out / "manifest.jsonl").read_text().splitlines()}
        assert manifest["0000"]["split"] == "query"
        assert manifest["0001"]["split"] == "gallery"
        assert manifest["0001"]["camera"] == "c7"


@pytest.fixture(scope="module")
def corpus_root(tmp_path_factory):
    root = tmp_path_factory.mktemp("corpus")
    plan = {
        "0002/T0000": "query", "0002/T0001": "gallery",
        "0003/T0000": "query", "0003/T0001": "gallery",
    }
    write_normalized_corpus(root, n_ids=4, seqs_per_id=2, frames_per_seq=10, split_plan=plan)
    return root


def write_config(path, root, out_dir, **over):
    lines = [
        "spec_version: 1",
        "seed: 0",
        "data:",
        f"  root: {root}",
        "  dataset: mars",
        "train:",
        f"  p: {over.get('p', 2)}",
        "  kseq: 2",
        "  t_frames: 2",
        "  k_sils: 2",
        "  epochs: 1",
        "  steps_per_epoch: 2",
        f"  checkpoint_dir: {out_dir}",
    ]
    path.write_text("\n".join(lines) + "\n")
    return path


@pytest.fixture(scope="module")
def trained_checkpoint(tmp_path_factory, corpus_root):
    out_dir = tmp_path_factory.mktemp("run")
    cfg = write_config(out_dir / "config.yaml", corpus_root, out_dir)
    assert main(["train", "--config", str(cfg)]) == 0
    ckpt = out_dir / "epoch_001.pt"
    assert ckpt.is_file()
    return ckpt


class TestTrainCommand:
    def test_missing_config_names_path(self, tmp_path, capsys):
        code = run("train", "--config", tmp_path / "absent.yaml")
        assert code == 2
        assert "absent.yaml" in capsys.readouterr().err

    def test_desk_scale_run_writes_checkpoint(self, trained_checkpoint):
        assert trained_checkpoint.is_file()
        assert (trained_checkpoint.parent / "train_log.csv").is_file()

    def test_resume_dim_mismatch_names_component(self, tmp_path, corpus_root, capsys):
        other = build_model(TrainConfig(bottleneck_hidden=32), num_classes=2)
        bad = save_checkpoint(tmp_path / "bad.pt", other, TrainConfig(bottleneck_hidden=32), 0)
        cfg = write_config(tmp_path / "c.yaml", corpus_root, tmp_path / "run")
        code = run("train", "--config", cfg, "--resume", bad)
        assert code == 2
        assert "global_bottleneck" in capsys.readouterr().err


class TestEvaluateCommand:
    def test_mars_protocol_report_keys(self, trained_checkpoint, corpus_root, tmp_path, capsys):
        out = tmp_path / "eval"
        code = run("evaluate", "--checkpoint", trained_checkpoint, "--data", corpus_root,
                   "--protocol", "mars", "--out", out)
        assert code == 0
        report = json.loads((out / "eval_report.json").read_text())
        for key in ("rank1", "rank5", "rank10", "rank20", "map"):
            assert key in report
        printed = capsys.readouterr().out
        assert "Rank1" in printed and "mAP" in printed

    def test_casia_protocol_on_mars_data_errors(self, trained_checkpoint, corpus_root, tmp_path, capsys):
        code = run("evaluate", "--checkpoint", trained_checkpoint, "--data", corpus_root,
                   "--protocol", "casia", "--out", tmp_path / "e")
        assert code == 2
        assert "view" in capsys.readouterr().err

    def test_casia_protocol_emits_condition_matrices(self, trained_checkpoint, tmp_path):
        tree = tmp_path / "casia"
        write_casia_tree(tree, n_ids=2, frames_per_seq=2, first_id=75, views=(0, 90))
        out = tmp_path / "eval"
        code = run("evaluate", "--checkpoint", trained_checkpoint, "--data", tree,
                   "--protocol", "casia", "--out", out)
        assert code == 0
        report = json.loads((out / "eval_report.json").read_text())
        assert set(report["casia"]) == {"NM", "BG", "CL"}
        for cond in ("nm", "bg", "cl"):
            lines = (out / f"casia_rank1_{cond}.csv").read_text().strip().splitlines()
            assert len(lines) == 12  # header + 11 probe-view rows
            assert np.asarray(report["casia"][cond.upper()]["matrix"]).shape == (11, 11)


class TestExtractCommand:
    def test_writes_feature_store(self, trained_checkpoint, corpus_root, tmp_path):
        out = tmp_path / "feat"
        code = run("extract", "--checkpoint", trained_checkpoint, "--data", corpus_root,
                   "--protocol", "mars", "--split", "query", "--out", out)
        assert code == 0
        from seqmasks.training import FeatureStore
        store = FeatureStore.load(out / "features_query.npz")
        assert store.embeddings.shape == (2, 1536)
        assert store.split == "query"


class TestReportCommand:
    def test_reprints_stored_report(self, trained_checkpoint, corpus_root, tmp_path, capsys):
        out = tmp_path / "eval"
        run("evaluate", "--checkpoint", trained_checkpoint, "--data", corpus_root,
            "--protocol", "mars", "--out", out)
        capsys.readouterr()
        assert run("report", "--out", out) == 0
        assert "Rank1" in capsys.readouterr().out

    def test_missing_report_is_data_error(self, tmp_path):
        assert run("report", "--out", tmp_path) == 3


class TestHelp:
    def test_help_lists_commands(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["--help"])
        assert exc.value.code == 0
        out = capsys.readouterr().out
        for cmd in ("build-dataset", "train", "extract", "evaluate", "report"):
            assert cmd in out

    def test_subcommand_help_lists_flags(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["build-dataset", "--help"])
        assert exc.value.code == 0
        out = capsys.readouterr().out
        for flag in ("--frames", "--masks", "--out", "--min-frames", "--min-fg-ratio"):
            assert flag in out
        assert "0.15" in out and "8" in out  # defaults visible
