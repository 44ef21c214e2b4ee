import json

import numpy as np
import pytest

from sharedspace import EmbeddingSet, center_and_normalize, load_embeddings, save_embeddings
from sharedspace.cli import build_parser, main, strip_volatile
from sharedspace.synthetic import SynthConfig, generate_ensemble


@pytest.fixture
def base_set(rng):
    return EmbeddingSet([f"w{t}" for t in range(40)], rng.standard_normal((40, 5)))


def write_sets(tmp_path, sets, prefix="in"):
    paths = []
    for i, s in enumerate(sets):
        p = tmp_path / f"{prefix}{i}.vec"
        save_embeddings(s, p)
        paths.append(str(p))
    return paths


def synthetic_files(tmp_path, k=4, n=200, d=6, sigma=0.05, draw=0, prefix="syn"):
    ens = generate_ensemble(SynthConfig(n=n, d=d, k=k, sigma=sigma, seed=1), draw).ensemble
    return write_sets(tmp_path, list(ens), prefix=f"{prefix}{draw}_")


# --- fuse -------------------------------------------------------------------

def test_fuse_identical_inputs(tmp_path, base_set, capsys):
    paths = write_sets(tmp_path, [base_set, base_set])
    out = tmp_path / "fused.vec"
    assert main(["fuse", *paths, "-o", str(out)]) == 0
    fused = load_embeddings(out)
    # inputs are normalized before fusion and the fused output again after
    expected = center_and_normalize(center_and_normalize(base_set))
    assert fused.words == base_set.words
    np.testing.assert_allclose(fused.vectors, expected.vectors, atol=1e-9)
    transforms = json.loads((tmp_path / "fused.vec.transforms.json").read_text())
    assert transforms["k"] == 2 and transforms["d"] == 5
    assert transforms["manifest"] == "fused.vec.manifest.json"
    assert np.array(transforms["transforms"]).shape == (2, 5, 5)
    manifest = json.loads((tmp_path / "fused.vec.manifest.json").read_text())
    assert manifest["subcommand"] == "fuse"
    assert manifest["config"]["gpa"] == {"max_sweeps": 300, "rel_tolerance": 1e-7, "record_history": True}
    assert manifest["config"]["normalization"] == {"prenorm": True, "postnorm": True}
    assert "fit" in manifest["timings"]
    assert "fused k=2" in capsys.readouterr().out


def test_fuse_many_large_dimension_files_converges(tmp_path):
    paths = synthetic_files(tmp_path, k=30, n=300, d=200, sigma=0.1)
    out = tmp_path / "fused.vec"
    assert main(["fuse", *paths, "-o", str(out)]) == 0
    manifest = json.loads((tmp_path / "fused.vec.manifest.json").read_text())
    assert manifest["converged"] and manifest["k"] == 30 and manifest["dimension"] == 200


def test_fuse_malformed_input_writes_nothing(tmp_path, base_set, capsys):
    good = write_sets(tmp_path, [base_set])[0]
    bad = tmp_path / "bad.vec"
    bad.write_text("2 5\nw0 1 2 3 4 5\nw1 1 2 x 4 5\n")
    out = tmp_path / "fused.vec"
    assert main(["fuse", good, str(bad), "-o", str(out)]) == 1
    assert not out.exists()
    assert not (tmp_path / "fused.vec.manifest.json").exists()
    assert "bad.vec:3" in capsys.readouterr().err


def test_fuse_flags_and_precision(tmp_path):
    paths = synthetic_files(tmp_path)
    out = tmp_path / "fused.vec"
    args = ["fuse", *paths, "-o", str(out), "--no-prenorm", "--no-postnorm",
            "--max-sweeps", "2", "--tolerance", "1e-30", "--precision", "6", "--threads", "1"]
    assert main(args) == 0
    manifest = json.loads((tmp_path / "fused.vec.manifest.json").read_text())
    assert manifest["sweeps_run"] <= 2
    assert manifest["config"]["normalization"] == {"prenorm": False, "postnorm": False}
    first_row = out.read_text().splitlines()[1].split()[1:]
    assert all(len(v.lstrip("-").replace(".", "").split("e")[0].lstrip("0")) <= 6 for v in first_row)


def test_fuse_headerless_format(tmp_path, base_set):
    paths = []
    for i in range(2):
        p = tmp_path / f"g{i}.txt"
        save_embeddings(base_set, p, format="headerless")
        paths.append(str(p))
    out = tmp_path / "fused.txt"
    assert main(["fuse", *paths, "-o", str(out), "--format", "headerless"]) == 0
    assert load_embeddings(out, format="headerless").n == 40


def test_fuse_needs_two_inputs(tmp_path, base_set):
    paths = write_sets(tmp_path, [base_set])
    assert main(["fuse", *paths, "-o", str(tmp_path / "x.vec")]) == 1


def test_io_error_exit_code(tmp_path, base_set):
    paths = write_sets(tmp_path, [base_set, base_set])
    assert main(["fuse", *paths, "-o", str(tmp_path / "no-such-dir" / "x.vec")]) == 2
    assert main(["fuse", paths[0], str(tmp_path / "missing.vec"), "-o", str(tmp_path / "x.vec")]) == 2


# --- average ----------------------------------------------------------------

def test_average_identical_inputs(tmp_path, base_set):
    paths = write_sets(tmp_path, [base_set, base_set, base_set])
    out = tmp_path / "avg.vec"
    assert main(["average", *paths, "-o", str(out)]) == 0
    expected = center_and_normalize(center_and_normalize(base_set))
    np.testing.assert_allclose(load_embeddings(out).vectors, expected.vectors, atol=1e-9)


def test_average_of_cancelling_copies_is_flagged(tmp_path, base_set):
    flipped = EmbeddingSet(base_set.words, -base_set.vectors)
    paths = write_sets(tmp_path, [base_set, flipped])
    out = tmp_path / "avg.vec"
    assert main(["average", *paths, "-o", str(out), "--no-prenorm"]) == 0
    np.testing.assert_array_equal(load_embeddings(out).vectors, 0.0)
    manifest = json.loads((tmp_path / "avg.vec.manifest.json").read_text())
    assert manifest["zero_rows"] == 40


def test_average_dimension_mismatch(tmp_path, base_set, rng):
    other = EmbeddingSet(base_set.words, rng.standard_normal((40, 3)))
    paths = write_sets(tmp_path, [base_set, other])
    assert main(["average", *paths, "-o", str(tmp_path / "avg.vec")]) == 1
    assert not (tmp_path / "avg.vec").exists()


# --- stability --------------------------------------------------------------

def test_stability_identical_inputs(tmp_path, base_set):
    paths = write_sets(tmp_path, [base_set, base_set])
    out = tmp_path / "stab.json"
    assert main(["stability", *paths, "-o", str(out)]) == 0
    report = json.loads(out.read_text())
    assert report["reports"]["raw"]["mean_mse"] < 1e-24
    assert report["curves"] == {}
    manifest = json.loads((tmp_path / "stab.json.manifest.json").read_text())
    assert any("no frequency table" in note for note in manifest["notes"])


def test_stability_defaults():
    args = build_parser().parse_args(["stability", "a", "b", "-o", "r.json"])
    assert args.num_pairs == 10 and args.bin_width == 50 and args.seed == 0 and not args.no_prenorm
    assert build_parser().parse_args(["stability", "a", "b", "-o", "r", "--raw"]).no_prenorm


def test_stability_with_fused_and_curve(tmp_path):
    raw = synthetic_files(tmp_path, k=4, draw=0) + synthetic_files(tmp_path, k=4, draw=1)
    fused = []
    for draw in (0, 1):
        members = [p for p in raw if f"syn{draw}_" in p]
        out = tmp_path / f"fused{draw}.vec"
        assert main(["fuse", *members, "-o", str(out)]) == 0
        fused.append(str(out))
    freq = tmp_path / "freq.tsv"
    freq.write_text("".join(f"w{t}\t{(t * 37) % 260}\n" for t in range(190)))
    out = tmp_path / "stab.json"
    assert main(["stability", *raw, "--fused", *fused, "--freq", str(freq), "-o", str(out)]) == 0
    report = json.loads(out.read_text())
    assert report["reports"]["raw"]["num_pairs"] == 10
    assert report["reports"]["fused"]["num_pairs"] == 1
    assert report["reports"]["fused"]["mean_mse"] < report["reports"]["raw"]["mean_mse"]
    assert report["curves"]["raw"]["missing_words"] == 10
    tsv = (tmp_path / "stab.json.raw.curve.tsv").read_text().splitlines()
    assert tsv[0] == "bin_lower\tmean_mse\tn_words"
    assert sum(int(line.split("\t")[2]) for line in tsv[1:]) == 190


def test_stability_usage_errors(tmp_path, base_set):
    paths = write_sets(tmp_path, [base_set, base_set])
    assert main(["stability", paths[0], "-o", str(tmp_path / "s.json")]) == 1
    assert main(["stability", *paths, "--fused", paths[0], "-o", str(tmp_path / "s.json")]) == 1


# --- eval -------------------------------------------------------------------

@pytest.fixture
def eval_files(tmp_path, base_set):
    emb_path = write_sets(tmp_path, [base_set], prefix="emb")[0]
    unit = base_set.vectors / np.linalg.norm(base_set.vectors, axis=1, keepdims=True)
    sim = tmp_path / "sim.txt"
    sim.write_text("".join(f"w{i}\tw{i + 1}\t{10 * unit[i] @ unit[i + 1]:.17g}\n" for i in range(20)))
    toy = EmbeddingSet(list("abcde"), [[1, 0, 0, 0], [1, 1, 0, 0], [0, 0, 1, 0], [0, 1, 1, 0], [0, 0, 0, -1]])
    toy_path = tmp_path / "toy.vec"
    save_embeddings(toy, toy_path)
    analogy = tmp_path / "analogy.txt"
    analogy.write_text(": toy\na b c d\n")
    oov = tmp_path / "oov.txt"
    oov.write_text("zz\tyy\t1\nxx\tww\t2\n")
    return {"emb": emb_path, "sim": sim, "toy": toy_path, "analogy": analogy, "oov": oov}


def read_tsv(path):
    lines = path.read_text().splitlines()
    header = lines[0].split("\t")
    return [dict(zip(header, line.split("\t"))) for line in lines[1:]]


def test_eval_similarity_row(tmp_path, eval_files, capsys):
    out = tmp_path / "res.tsv"
    assert main(["eval", eval_files["emb"], "--dataset", f"similarity:{eval_files['sim']}",
                 "--method", "D-test", "-o", str(out)]) == 0
    (row,) = read_tsv(out)
    assert row["method"] == "D-test" and row["dataset"] == "sim" and row["metric"] == "spearman"
    assert float(row["value"]) == pytest.approx(1.0, abs=1e-12)
    assert (row["evaluated"], row["skipped"]) == ("20", "0")
    assert "spearman" in capsys.readouterr().out


def test_eval_analogy_row(tmp_path, eval_files):
    out = tmp_path / "res.tsv"
    assert main(["eval", str(eval_files["toy"]), "--dataset", f"analogy:{eval_files['analogy']}",
                 "-o", str(out)]) == 0
    (row,) = read_tsv(out)
    assert row["metric"] == "accuracy" and float(row["value"]) == 1.0
    assert row["method"] == "toy"


def test_eval_all_oov_dataset(tmp_path, eval_files):
    out = tmp_path / "res.tsv"
    code = main(["eval", eval_files["emb"], "--dataset", f"sim:{eval_files['sim']}",
                 "--dataset", f"similarity:{eval_files['oov']}", "-o", str(out)])
    assert code == 1
    rows = read_tsv(out)
    assert float(rows[0]["value"]) == pytest.approx(1.0)
    assert rows[1]["value"] == "NA" and rows[1]["evaluated"] == "0" and rows[1]["skipped"] == "2"


def test_eval_unknown_dataset_type(tmp_path, eval_files):
    out = tmp_path / "res.tsv"
    assert main(["eval", eval_files["emb"], "--dataset", f"bless:{eval_files['sim']}", "-o", str(out)]) == 1
    assert not out.exists()


# --- synth-check ------------------------------------------------------------

def test_synth_check_default_passes(tmp_path):
    out = tmp_path / "verdict.json"
    assert main(["synth-check", "-o", str(out)]) == 0
    verdict = json.loads(out.read_text())
    assert verdict["passed"] and verdict["manifest"] == "verdict.json.manifest.json"
    assert {c["name"] for c in verdict["checks"]} >= {"noise_averaging", "stability_ratio", "naive_average_fails"}


def test_synth_check_noise_free(capsys):
    assert main(["synth-check", "--sigma", "0", "--n", "500"]) == 0
    verdict = json.loads(capsys.readouterr().out)
    assert "exact_recovery" in {c["name"] for c in verdict["checks"]}


def test_synth_check_needs_two_sets(capsys):
    assert main(["synth-check", "--k", "1"]) == 1


def test_synth_check_failure_exit_code(capsys):
    # one sweep from a zero start cannot reach the noise-averaging optimum for
    # heavy noise and few words, so a tight sweep budget makes the oracle fail
    code = main(["synth-check", "--n", "30", "--d", "25", "--k", "10", "--sigma", "3", "--max-sweeps", "1"])
    assert code == 3
    assert "oracle failure" in capsys.readouterr().err


def test_argparse_usage_errors_exit_one(capsys):
    assert pytest.raises(SystemExit, main, ["fuse"]).value.code == 1
    assert pytest.raises(SystemExit, main, ["nonsense"]).value.code == 1


def test_strip_volatile():
    doc = {"a": 1, "timings": {"x": 1.0}, "nested": [{"created": "now", "b": 2}]}
    assert strip_volatile(doc) == {"a": 1, "nested": [{"b": 2}]}
