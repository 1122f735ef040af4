import json

import pytest

from swiftnorm.cli import main


@pytest.fixture(scope="module")
def data_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("cli")
    assert main(["synth", "--out", str(out), "--n-entities", "80", "--seed", "4", "--mt"]) == 0
    return out


def test_missing_input_exit_code(tmp_path, capsys):
    missing = tmp_path / "absent.txt"
    assert main(["run", "--input", str(missing)]) == 2
    assert str(missing) in capsys.readouterr().err


def test_run_and_eval(data_dir, tmp_path, capsys):
    out = tmp_path / "run"
    code = main(["run", "--input", str(data_dir / "entities.txt"), "--gold", str(data_dir / "gold.csv"),
                 "--families", "similarity,lsa", "--lsa-variance", "0.9",
                 "--weights", "similarity=1,lsa=0.5", "--out", str(out)])
    assert code == 0
    metrics = json.loads((out / "metrics.json").read_text())
    capsys.readouterr()
    assert main(["eval", "--gold", str(data_dir / "gold.csv"), "--labels", str(out / "clusters.csv")]) == 0
    printed = json.loads(capsys.readouterr().out)
    assert printed["ami"] == pytest.approx(metrics["ami"], abs=1e-12)


def test_mt_input(data_dir, tmp_path):
    out = tmp_path / "mt"
    assert main(["run", "--input", str(data_dir / "entities.mt"), "--format", "mt",
                 "--tags", "50K,59", "--out", str(out)]) == 0
    plain = tmp_path / "plain"
    assert main(["run", "--input", str(data_dir / "entities.txt"), "--out", str(plain)]) == 0
    assert (out / "clusters.csv").read_text() == (plain / "clusters.csv").read_text()


def test_rerun_from_manifest(data_dir, tmp_path):
    a = tmp_path / "a"
    assert main(["chunked-run", "--input", str(data_dir / "entities.txt"), "--out", str(a)]) == 0
    manifest = json.loads((a / "manifest.json").read_text())
    assert manifest["command"] == "chunked-run"
    b = tmp_path / "b"
    assert main(["run", "--config", str(a / "manifest.json"), "--out", str(b)]) == 0
    assert (a / "clusters.csv").read_bytes() == (b / "clusters.csv").read_bytes()


def test_sweep_command(data_dir, tmp_path):
    grid = tmp_path / "grid.json"
    grid.write_text(json.dumps({"families": [["similarity"], ["similarity", "lsa"]],
                                "lsa_variance": [0.5, 0.9]}))
    out = tmp_path / "sweep"
    assert main(["sweep", "--input", str(data_dir / "entities.txt"), "--gold", str(data_dir / "gold.csv"),
                 "--grid", str(grid), "--out", str(out), "--reference-rows",
                 "--cache-dir", str(tmp_path / "cache")]) == 0
    lines = (out / "sweep.csv").read_text().splitlines()
    assert len(lines) == 1 + 3 + 3


def test_bad_flags(data_dir, tmp_path, capsys):
    assert main(["run", "--input", str(data_dir / "entities.txt"), "--threshold", "0"]) == 2
    assert main(["run", "--input", str(data_dir / "entities.txt"), "--families", "lda"]) == 2
    with pytest.raises(SystemExit):
        main(["run", "--weights", "similarity"])
    assert main(["synth", "--out", str(tmp_path), "--operators", "bogus"]) == 2


def test_empty_corpus_exit_code(tmp_path):
    p = tmp_path / "digits.txt"
    p.write_text("123\n456\n")
    assert main(["run", "--input", str(p)]) == 1
