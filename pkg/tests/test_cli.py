import numpy as np
import pytest

from hardshap.cli import main
from hardshap.dataset import Dataset, load_csv, save_csv
from hardshap.sim import toy_1nn_shapleys
from hardshap.valuation import load_scores_csv


@pytest.fixture(scope="module")
def blob_files(tmp_path_factory):
    root = tmp_path_factory.mktemp("blobs")
    prefix = str(root / "blob")
    assert main([
        "sim-blobs", "--seed", "3", "--out-prefix", prefix,
        "--n-train", "240", "--n-valid", "120", "--n-test", "120",
    ]) == 0
    return {part: f"{prefix}_{part}.csv" for part in ("train", "valid", "test")}


def test_value_reproduces_toy_scores(tmp_path):
    train = Dataset([[-1.0], [0.0], [1.0]], [0, 0, 1], ("x1",), [0, 1, 2])
    test = Dataset([[0.25]], [0], ("x1",), [0])
    save_csv(train, tmp_path / "train.csv", "label")
    save_csv(test, tmp_path / "test.csv", "label")
    out = tmp_path / "scores.csv"
    code = main([
        "value", "--train", str(tmp_path / "train.csv"), "--test", str(tmp_path / "test.csv"),
        "--k", "1", "--no-standardize", "--out", str(out),
    ])
    assert code == 0
    scores = load_scores_csv(out)
    expected = toy_1nn_shapleys(0.0, 0.25, 0)
    by_id = dict(zip(scores.ids.tolist(), scores.scores.tolist()))
    assert by_id[0] == pytest.approx(expected[0], abs=1e-12)
    assert by_id[1] == pytest.approx(expected[1], abs=1e-12)
    assert by_id[2] == pytest.approx(expected[2], abs=1e-12)


def test_value_rejects_nonpositive_k(tmp_path, capsys, blob_files):
    out = tmp_path / "scores.csv"
    code = main([
        "value", "--train", blob_files["train"], "--test", blob_files["test"],
        "--k", "0", "--out", str(out),
    ])
    assert code == 2
    assert "K must be positive" in capsys.readouterr().err
    assert not out.exists()


def test_value_rerun_byte_identical(tmp_path, blob_files):
    args = ["value", "--train", blob_files["train"], "--test", blob_files["test"],
            "--k", "5", "--out"]
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(args + [str(a)]) == 0
    first = a.read_bytes()
    assert main(args + [str(a)]) == 0
    assert a.read_bytes() == first
    # different out path: identical from the csv header on (the invocation
    # comment legitimately embeds the path)
    assert main(args + [str(b)]) == 0
    strip = lambda p: p.read_bytes().split(b"\n", 1)[1]
    assert strip(a) == strip(b)


def test_missing_generator_fails_fast(tmp_path, blob_files, capsys):
    scores_path = tmp_path / "scores.csv"
    assert main(["value", "--train", blob_files["train"], "--test", blob_files["test"],
                 "--k", "5", "--out", str(scores_path)]) == 0
    out = tmp_path / "aug.csv"
    code = main(["augment", "--train", blob_files["train"], "--scores", str(scores_path),
                 "--tau", "0.1", "--amount", "1.0", "--out", str(out)])
    assert code == 2
    assert "--generator" in capsys.readouterr().err
    assert not out.exists()


def test_matched_budget_row_counts(tmp_path, blob_files):
    scores_path = tmp_path / "scores.csv"
    assert main(["value", "--train", blob_files["train"], "--test", blob_files["test"],
                 "--k", "5", "--out", str(scores_path)]) == 0
    targeted, full = tmp_path / "targeted.csv", tmp_path / "full.csv"
    # k=1: the 12-row hard subset may hold very few minority rows
    base = ["augment", "--train", blob_files["train"], "--scores", str(scores_path),
            "--generator", "smote", "--k", "1", "--seed", "1"]
    assert main(base + ["--tau", "0.05", "--amount", "1.0", "--out", str(targeted)]) == 0
    assert main(base + ["--tau", "1.0", "--amount", "0.05", "--out", str(full)]) == 0
    assert load_csv(targeted, "label").n == load_csv(full, "label").n == 240 + 12


def test_rank_orders_ids(tmp_path, blob_files):
    scores_path = tmp_path / "scores.csv"
    assert main(["value", "--train", blob_files["train"], "--test", blob_files["test"],
                 "--k", "5", "--out", str(scores_path)]) == 0
    out = tmp_path / "ranking.csv"
    assert main(["rank", "--scores", str(scores_path), "--out", str(out)]) == 0
    rows = [line.split(",") for line in out.read_text().splitlines()
            if line and not line.startswith("#")][1:]
    ranks = [int(r[0]) for r in rows]
    values = [float(r[2]) for r in rows]
    assert ranks == list(range(len(rows)))
    assert values == sorted(values)


def test_dataiq_and_eval_roundtrip(tmp_path, blob_files, capsys):
    tags = tmp_path / "tags.csv"
    probs = tmp_path / "probs.csv"
    assert main(["dataiq", "--train", blob_files["train"], "--checkpoints", "4",
                 "--k", "3", "--seed", "5", "--thresholds", "0.25,0.75,0.2",
                 "--out", str(tags), "--probs-out", str(probs)]) == 0
    lines = [l for l in tags.read_text().splitlines() if not l.startswith("#")]
    assert lines[0] == "id,confidence,aleatoric,tag"
    assert len(lines) == 241
    # feed the confidence column through eval as mock probabilities
    conf = tmp_path / "conf.csv"
    body = ["id,prob"] + [f"{r.split(',')[0]},{r.split(',')[1]}" for r in lines[1:]]
    conf.write_text("\n".join(body) + "\n", encoding="utf-8")
    assert main(["eval", "--probs", str(conf), "--labels", blob_files["train"]]) == 0
    printed = capsys.readouterr().out
    assert "auc_roc=" in printed and "gini=" in printed


def test_perturb_bench_grid(tmp_path, blob_files):
    out = tmp_path / "bench.csv"
    assert main(["perturb-bench", "--train", blob_files["train"],
                 "--kinds", "mislabeling", "--proportions", "0.1,0.2",
                 "--characterizers", "knn_shapley,random", "--runs", "2",
                 "--seed", "4", "--out", str(out)]) == 0
    rows = [l for l in out.read_text().splitlines() if l and not l.startswith("#")]
    assert rows[0] == "kind,proportion,characterizer,run,auprc"
    assert len(rows) - 1 == 1 * 2 * 2 * 2
    mean_rows = [l for l in (tmp_path / "bench.csv.mean.csv").read_text().splitlines()
                 if l and not l.startswith("#")]
    assert mean_rows[0] == "kind,proportion,characterizer,mean_auprc"
    assert len(mean_rows) - 1 == 1 * 2 * 2


def test_removal_curve_cli(tmp_path, blob_files):
    scores_path = tmp_path / "scores.csv"
    assert main(["value", "--train", blob_files["train"], "--test", blob_files["test"],
                 "--k", "5", "--out", str(scores_path)]) == 0
    out = tmp_path / "curve.csv"
    assert main(["removal-curve", "--train", blob_files["train"],
                 "--valid", blob_files["valid"], "--scores", str(scores_path),
                 "--fractions", "0,0.1", "--strategies", "hardest,random",
                 "--downstream-k", "9", "--seed", "2", "--out", str(out)]) == 0
    rows = [l for l in out.read_text().splitlines() if l and not l.startswith("#")]
    assert rows[0] == "strategy,fraction,gini"
    assert len(rows) - 1 == 4


def test_eval_pipeline_with_baseline(tmp_path, blob_files):
    out = tmp_path / "report.csv"
    assert main(["eval-pipeline", "--train", blob_files["train"],
                 "--valid", blob_files["valid"], "--test", blob_files["test"],
                 "--tau", "0.2", "--amount", "1.0", "--generator", "smote",
                 "--gen-k", "2", "--replicates", "3", "--seed", "8",
                 "--with-baseline", "--out", str(out)]) == 0
    for path in (out, tmp_path / "report.csv.baseline.csv"):
        rows = [l for l in path.read_text().splitlines() if l and not l.startswith("#")]
        assert rows[0] == "replicate,gini"
        assert len(rows) == 1 + 3 + 3  # replicates + mean/ci_low/ci_high


def test_sim_toy_prints_expected_value(capsys):
    assert main(["sim-toy", "--x-train", "0"]) == 0
    printed = capsys.readouterr().out
    value = float(next(l for l in printed.splitlines()
                       if l.startswith("expected_shapley=")).split("=")[1])
    assert value == pytest.approx(0.209, abs=2e-3)
    assert len([l for l in printed.splitlines() if "," in l]) >= 8


def test_config_file_with_flag_override(tmp_path, blob_files):
    cfg = tmp_path / "run.cfg"
    cfg.write_text(
        f"train={blob_files['train']}\ntest={blob_files['test']}\nk=3\n"
        f"out={tmp_path / 'from_config.csv'}\n",
        encoding="utf-8",
    )
    assert main(["value", "--config", str(cfg)]) == 0
    assert load_scores_csv(tmp_path / "from_config.csv").params["k"] == "3"
    override = tmp_path / "override.csv"
    assert main(["value", "--config", str(cfg), "--k", "7", "--out", str(override)]) == 0
    assert load_scores_csv(override).params["k"] == "7"


def test_unknown_config_key(tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("frobnicate=1\n", encoding="utf-8")
    assert main(["rank", "--scores", "x.csv", "--out", "y.csv", "--config", str(cfg)]) == 2
    assert "unknown config key" in capsys.readouterr().err


def test_runtime_error_exit_code(tmp_path, capsys):
    assert main(["rank", "--scores", str(tmp_path / "missing.csv"),
                 "--out", str(tmp_path / "out.csv")]) == 1
    assert "error" in capsys.readouterr().err


def test_help_for_every_subcommand(capsys):
    for command in ("value", "rank", "augment", "eval", "eval-pipeline", "perturb-bench",
                    "dataiq", "removal-curve", "sim-toy", "sim-blobs"):
        assert main([command, "--help"]) == 0
        assert "--" in capsys.readouterr().out


def test_value_method_variants_agree(tmp_path):
    train = Dataset([[-1.0], [0.0], [1.0]], [0, 0, 1], ("x1",), [0, 1, 2])
    test = Dataset([[0.25]], [0], ("x1",), [0])
    save_csv(train, tmp_path / "train.csv", "label")
    save_csv(test, tmp_path / "test.csv", "label")
    base = ["value", "--train", str(tmp_path / "train.csv"),
            "--test", str(tmp_path / "test.csv"), "--k", "1", "--no-standardize"]
    outs = {}
    for method in ("knn_shapley", "exact_shapley", "tmc_shapley"):
        out = tmp_path / f"{method}.csv"
        # truncation would skip the post-saturation negative marginals here
        extra = (["--permutations", "4000", "--seed", "3", "--truncation-tol", "0"]
                 if method == "tmc_shapley" else [])
        assert main(base + ["--method", method, "--out", str(out)] + extra) == 0
        outs[method] = load_scores_csv(out)
    exact = outs["exact_shapley"].scores
    assert outs["knn_shapley"].scores == pytest.approx(exact, abs=1e-12)
    assert outs["tmc_shapley"].scores == pytest.approx(exact, abs=0.05)


def test_dataiq_accepts_external_probability_matrix(tmp_path):
    probs = tmp_path / "external_probs.csv"
    probs.write_text(
        "id,p_1,p_2\n0,0.9,0.95\n1,0.1,0.2\n2,0.5,0.6\n", encoding="utf-8"
    )
    tags = tmp_path / "tags.csv"
    assert main(["dataiq", "--train", "unused.csv", "--probs-in", str(probs),
                 "--out", str(tags)]) == 0
    rows = [l for l in tags.read_text().splitlines() if not l.startswith("#")][1:]
    assert [r.rsplit(",", 1)[1] for r in rows] == ["Easy", "Hard", "Ambiguous"]


def test_augment_external_generator_handshake(tmp_path, blob_files):
    scores_path = tmp_path / "scores.csv"
    assert main(["value", "--train", blob_files["train"], "--test", blob_files["test"],
                 "--k", "5", "--out", str(scores_path)]) == 0
    exec_in = tmp_path / "hard.csv"
    exec_out = tmp_path / "synth.csv"
    out = tmp_path / "aug.csv"
    args = ["augment", "--train", blob_files["train"], "--scores", str(scores_path),
            "--tau", "0.25", "--amount", "0.5", "--generator", "external",
            "--exec-in", str(exec_in), "--exec-out", str(exec_out), "--out", str(out)]
    # first call: the external tool has not produced anything yet
    assert main(args) == 1
    assert exec_in.exists()
    hard = load_csv(exec_in, "label")
    assert hard.n == 60
    # "external tool": echo the hard subset back with jitter-free copies
    save_csv(Dataset(hard.features, hard.labels, hard.feature_names,
                     np.arange(hard.n)), exec_out, "label")
    assert main(args) == 0
    assert load_csv(out, "label").n == 240 + 30


def test_sim_toy_custom_grid(capsys):
    # the = form keeps argparse from reading the leading -9 as a flag
    assert main(["sim-toy", "--x-train", "0", "--grid=-9,9,0.002"]) == 0
    printed = capsys.readouterr().out
    value = float(next(l for l in printed.splitlines()
                       if l.startswith("expected_shapley=")).split("=")[1])
    assert value == pytest.approx(0.209, abs=2e-3)
