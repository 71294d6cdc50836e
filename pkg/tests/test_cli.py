import csv
import io
import json
import math

import pytest

from fsgenome import allocsim, cli
from fsgenome.matcher import EnrolledSet
from fsgenome.model import Corpus, Fsg, load_corpus, load_fsg, save_corpus, save_fsg

from conftest import fixture_manifest, fixture_truth


def read_csv(path):
    with open(path, newline="", encoding="utf-8") as f:
        return list(csv.reader(f))


@pytest.fixture
def toy_corpus_dir(tmp_path):
    corpus = Corpus((
        Fsg("i0", 4096, {"/a": [10], "/b": [1, 2], "/c": [7]}),
        Fsg("i1", 4096, {"/a": [10], "/b": [3, 4], "/c": [7]}),
        Fsg("i2", 4096, {"/a": [12], "/b": [5, 6], "/c": [7], "/d": [9]}),
    ))
    save_corpus(corpus, tmp_path / "corpus")
    return tmp_path / "corpus"


def test_extract_matches_debugfs(small_image, tmp_path):
    out = tmp_path / "a.fsg"
    assert cli.run(["extract", str(small_image), "-o", str(out)]) == 0
    fsg = load_fsg(out)
    assert {p: list(b) for p, b in fsg.entries.items()} == fixture_truth("ext4_small")
    assert fsg.device_label == fixture_manifest("ext4_small")["superblock"]["volume_uuid"]


def test_extract_to_stdout_is_idempotent(small_image, capsysbinary):
    assert cli.run(["extract", str(small_image), "--first-block", "--label", "dev"]) == 0
    first = capsysbinary.readouterr().out
    assert cli.run(["extract", str(small_image), "--first-block", "--label", "dev"]) == 0
    assert capsysbinary.readouterr().out == first
    assert first.startswith(b'{"block_size":4096,"device_label":"dev"')


def test_extract_missing_image(tmp_path, capsys):
    assert cli.run(["extract", str(tmp_path / "missing.img")]) == 1
    assert "file not found" in capsys.readouterr().err


def test_extract_legacy_image_is_domain_error(image_dir, capsys):
    assert cli.run(["extract", str(image_dir / "ext4_legacy.img")]) == 1
    assert "unsupported legacy block map" in capsys.readouterr().err


@pytest.mark.parametrize("argv", [[], ["frobnicate"], ["extract"], ["analyze", "--corpus", "x", "--metric", "bogus"],
                                  ["extract", "img", "--bogus-flag"]])
def test_usage_errors(argv, capsys):
    assert cli.run(argv) == 2
    assert "usage:" in capsys.readouterr().err


def test_analyze_min_entropy_hand_values(toy_corpus_dir, tmp_path):
    out = tmp_path / "h.csv"
    assert cli.run(["analyze", "--corpus", str(toy_corpus_dir), "--metric", "min-entropy", "-o", str(out)]) == 0
    rows = read_csv(out)
    assert rows[0] == ["path", "min_entropy_bits"]
    got = {p: float(v) for p, v in rows[1:]}
    assert got == pytest.approx({"/a": -math.log2(2 / 3), "/b": math.log2(3), "/c": 0.0}, abs=1e-12)


def test_analyze_entropy_union(toy_corpus_dir, capsys):
    assert cli.run(["analyze", "--corpus", str(toy_corpus_dir), "--metric", "entropy", "--universe", "union"]) == 0
    rows = list(csv.reader(io.StringIO(capsys.readouterr().out)))
    assert rows[0] == ["path", "shannon_bits", "min_entropy_bits"]
    got = {r[0]: (float(r[1]), float(r[2])) for r in rows[1:]}
    assert got["/d"] == (0.0, 0.0)
    assert got["/b"][0] == pytest.approx(math.log2(6))


def test_analyze_other_metrics(toy_corpus_dir, capsys):
    assert cli.run(["analyze", "--corpus", str(toy_corpus_dir), "--metric", "cdf", "--first-block"]) == 0
    assert "/a,10,0.6666666666666666" in capsys.readouterr().out
    assert cli.run(["analyze", "--corpus", str(toy_corpus_dir), "--metric", "hamming"]) == 0
    assert capsys.readouterr().out.splitlines() == ["a,b,distance", "i0,i1,2", "i0,i2,3", "i1,i2,3"]
    assert cli.run(["analyze", "--corpus", str(toy_corpus_dir), "--metric", "summary"]) == 0
    assert capsys.readouterr().out.splitlines()[1:] == ["i0,3,4,16384", "i1,3,4,16384", "i2,4,5,20480"]
    assert cli.run(["analyze", "--corpus", str(toy_corpus_dir), "--metric", "histogram"]) == 0
    rows = capsys.readouterr().out.splitlines()
    assert rows[0] == "label,bucket,count,percent" and rows[1] == "i0,[0-9],3,100.0000"


def test_analyze_empty_corpus_dir(tmp_path):
    assert cli.run(["analyze", "--corpus", str(tmp_path), "--metric", "entropy"]) == 1


def test_ingest(tmp_path):
    tsv = tmp_path / "dump.tsv"
    tsv.write_text("/etc/hosts\t8193,8194\n/etc/empty\t\n")
    out = tmp_path / "d.fsg"
    assert cli.run(["ingest", str(tsv), "--label", "dev", "--block-size", "4096", "-o", str(out)]) == 0
    assert dict(load_fsg(out).entries) == {"/etc/empty": (), "/etc/hosts": (8193, 8194)}
    tsv.write_text("/etc/hosts\t81x\n")
    assert cli.run(["ingest", str(tsv), "--label", "dev", "--block-size", "4096"]) == 1


def test_simulate_default_and_match(tmp_path, capsys):
    cfg = allocsim.SimConfig(disk_blocks=4096, group_size=512, file_plan=allocsim.standard_mix_plan(100, seed=1))
    (tmp_path / "cfg.json").write_text(cfg.to_json())
    assert cli.run(["simulate", "--config", str(tmp_path / "cfg.json"), "--count", "3", "--seed", "8",
                    "-o", str(tmp_path / "sim")]) == 0
    corpus = load_corpus(tmp_path / "sim")
    assert [f.device_label for f in corpus] == ["install-0", "install-1", "install-2"]
    EnrolledSet.enroll(corpus, corpus.installations[0].paths).save(tmp_path / "enr")
    assert cli.run(["match", "--candidate", str(tmp_path / "sim" / "install-1.fsg"),
                    "--enrolled", str(tmp_path / "enr")]) == 0
    rows = list(csv.reader(io.StringIO(capsys.readouterr().out)))
    assert rows[1][:3] == ["matched", "install-1", "1.0"]


def test_simulate_default_config(tmp_path):
    assert cli.run(["simulate", "--config", "default", "--count", "1", "--seed", "1", "-o", str(tmp_path)]) == 0
    assert len(load_fsg(tmp_path / "install-0.fsg")) == 1000


def test_simulate_bad_config(tmp_path):
    (tmp_path / "cfg.json").write_text(json.dumps({"disk_blocks": 10, "group_size": 3}))
    assert cli.run(["simulate", "--config", str(tmp_path / "cfg.json"), "--count", "1", "--seed", "1",
                    "-o", str(tmp_path / "o")]) == 1


def test_verify(tmp_path, capsys):
    ref = Fsg("r", 4096, {"/bin/a": [1, 2], "/bin/b": [3], "/home/x": [4]})
    cand = ref.replace(entries={**ref.entries, "/home/x": [99]})
    save_fsg(ref, tmp_path / "r.fsg")
    save_fsg(cand, tmp_path / "c.fsg")
    (tmp_path / "ro.txt").write_text("/bin/a\n/bin/b\n\n")
    assert cli.run(["verify", "--candidate", str(tmp_path / "c.fsg"), "--reference", str(tmp_path / "r.fsg"),
                    "--readonly", str(tmp_path / "ro.txt")]) == 0
    assert capsys.readouterr().out.splitlines() == ["decision,similarity,raw_distance,slots", "accept,1.0,0,3"]
    (tmp_path / "ro.txt").write_text("")
    assert cli.run(["verify", "--candidate", str(tmp_path / "c.fsg"), "--reference", str(tmp_path / "r.fsg"),
                    "--readonly", str(tmp_path / "ro.txt")]) == 1
    assert "empty reference universe" in capsys.readouterr().err


def test_scatter_rows():
    assert cli.render_genome_scatter(Fsg("g", 4096, {"/etc/a": [9]})) == [(0, 9, "etc")]
    assert cli.render_genome_scatter(Fsg("g", 4096)) == []
    rows = cli.render_genome_scatter(Fsg("g", 4096, {"/etc/a": [], "/home/b": [3, 4], "/usr/c": [1]}))
    assert rows == [(0, 3, "other"), (1, 1, "usr")]


def test_scatter_of_simulated_genome(tmp_path):
    cfg = allocsim.default_config()
    fsg = allocsim.simulate_installation(cfg, 3)
    rows = cli.render_genome_scatter(fsg)
    assert len(rows) == 1000
    assert [r[0] for r in rows] == list(range(1000))
    assert all(0 <= r[1] < cfg.disk_blocks for r in rows)
    save_fsg(fsg, tmp_path / "g.fsg")
    assert cli.run(["scatter", str(tmp_path / "g.fsg"), "-o", str(tmp_path / "s.csv")]) == 0
    assert len(read_csv(tmp_path / "s.csv")) == 1001


def test_extract_never_modifies_image(small_image):
    before = small_image.read_bytes()
    cli.run(["extract", str(small_image)])
    assert small_image.read_bytes() == before
