import csv
import io
import json

import pytest

from discoref.cli import main, read_config


def run(*argv):
    out = io.StringIO()
    code = main(list(map(str, argv)), out=out)
    return code, out.getvalue()


@pytest.fixture(scope="module")
def data(tmp_path_factory):
    root = tmp_path_factory.mktemp("synth")
    code, _ = run("synth", "--out", root, "--splits", "train=6,dev=3,test=3", "--seed", 2)
    assert code == 0
    return root


def test_validate_synth_output(data):
    code, text = run("validate", "--corpus", data / "train")
    assert code == 0 and text.startswith("ok documents=6")


def test_score_identity(data):
    code, text = run("score", "--gold", data / "test", "--pred", data / "test")
    assert code == 0
    lines = text.splitlines()
    assert lines[:3] == ["MUC P=1.0000 R=1.0000 F1=1.0000", "B3 P=1.0000 R=1.0000 F1=1.0000",
                         "CEAFe P=1.0000 R=1.0000 F1=1.0000"]
    assert lines[-1] == "AVG_F1=1.0000"


def test_usage_errors(data):
    assert run("frobnicate")[0] == 1
    assert run("validate")[0] == 1
    assert run("validate", "--corpus", data, "--nope")[0] == 1
    assert run("experiment", "--out", data / "x", "--presets", "bogus")[0] == 1


def test_validation_errors(tmp_path, data):
    assert run("validate", "--corpus", tmp_path / "missing")[0] == 2
    bad = tmp_path / "bad.conll"
    bad.write_text("#begin document (x); part 000\nx\t000\t0\tA\t(0\n\n#end document\n")
    assert run("validate", "--corpus", bad)[0] == 2
    # trees are looked up next to the corpus; none there
    (tmp_path / "ok").mkdir()
    (tmp_path / "ok" / "d.conll").write_text((data / "train" / "synth_0000.conll").read_text())
    assert run("validate", "--corpus", tmp_path / "ok")[0] == 2


def test_featurize(data, tmp_path):
    code, _ = run("featurize", "--corpus", data / "dev", "--out", tmp_path / "f.csv")
    assert code == 0
    rows = list(csv.DictReader(open(tmp_path / "f.csv")))
    assert rows and set(rows[0]) == {"doc_id", "i", "j", "d_m", "d_s", "d_lca", "lc_lca", "wc_lca", "type_j"}
    assert (tmp_path / "f.csv.manifest.json").exists()


def test_analyze(data, tmp_path):
    code, text = run("analyze", "--corpus", data / "train", "--out", tmp_path)
    assert code == 0 and text.startswith("max_tree_depth=")
    header = (tmp_path / "dlca_hist.csv").read_text().splitlines()[0]
    assert header == "category,d_lca,count,fraction,cum_fraction"


def test_config_file_and_flag_override(data, tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text(f"# tiny\ntrain = {data / 'train'}\ndev = {data / 'dev'}\nmax-epochs = 1\n"
                   f"hidden = 8\nseed = 4\nout = {tmp_path / 'm'}\n")
    assert read_config(cfg)["max_epochs"] == "1"
    code, _ = run("train", "--config", cfg, "--seed", 9)
    assert code == 0
    manifest = json.loads((tmp_path / "m" / "manifest.json").read_text())
    assert manifest["seeds"] == [9]
    assert manifest["train_config"]["hidden"] == 8
    assert set(manifest["versions"]) >= {"discoref", "numpy", "scipy", "python"}
    assert len(manifest["config_hash"]) == 64
    cfg.write_text(cfg.read_text() + "colour = blue\n")
    assert run("train", "--config", cfg)[0] == 1


def test_train_predict_score_round(data, tmp_path):
    code, _ = run("train", "--train", data / "train", "--dev", data / "dev", "--max-epochs", 2,
                  "--hidden", 8, "--out", tmp_path / "m")
    assert code == 0
    for keep in ("false", "true"):
        pred = tmp_path / f"pred_{keep}.conll"
        code, _ = run("predict", "--corpus", data / "test", "--checkpoint", tmp_path / "m" / "model.npz",
                      "--out", pred, "--keep-singletons", keep)
        assert code == 0
        code, text = run("score", "--gold", data / "test", "--pred", pred)
        assert code == 0 and text.splitlines()[-1].startswith("AVG_F1=")
    # mismatched embedding width is a validation error
    code, _ = run("predict", "--corpus", data / "test", "--checkpoint", tmp_path / "m" / "model.npz",
                  "--out", tmp_path / "p.conll", "--embedding-dim", 8)
    assert code == 2


def test_experiment_table(data, tmp_path):
    out = tmp_path / "exp"
    code, text = run("experiment", "--data", data, "--presets", "baseline,+disc+type",
                     "--seeds", "0,1,2,3,4", "--max-epochs", 1, "--hidden", 8, "--out", out)
    assert code == 0
    lines = text.splitlines()
    assert lines[0].split() == ["preset", "seed0", "seed1", "seed2", "seed3", "seed4", "mean", "p_vs_baseline", "sig"]
    assert [l.split()[0] for l in lines[1:]] == ["baseline", "+disc+type"]
    rows = list(csv.DictReader(open(out / "results.csv")))
    assert len(rows) == 2 and rows[0]["p_value"] == "" and rows[1]["p_value"] != ""
    assert (out / "results.txt").read_text() == text
    assert (out / "runs" / "+disc+type" / "seed4" / "history.csv").exists()


def test_experiment_deterministic(data, tmp_path):
    args = ["experiment", "--data", data, "--presets", "+disc", "--seeds", "0,1",
            "--max-epochs", 1, "--hidden", 8]
    _, a = run(*args, "--out", tmp_path / "a")
    _, b = run(*args, "--out", tmp_path / "b")
    assert a == b
    assert (tmp_path / "a" / "runs" / "+disc" / "seed1" / "model.npz").read_bytes() == \
        (tmp_path / "b" / "runs" / "+disc" / "seed1" / "model.npz").read_bytes()
