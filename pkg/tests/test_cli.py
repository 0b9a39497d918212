import json

import numpy as np
import pytest

from sfpro import data
from sfpro.checks import desk_config
from sfpro.cli import main


def _tree(root):
    return {p.relative_to(root).as_posix(): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def test_synth_corpus_deterministic(tmp_path, capsys):
    args = ["synth-corpus", "--speakers", "4", "--utts", "5", "--seed", "7", "--duration", "0.2"]
    assert main(args + ["--out", str(tmp_path / "a")]) == 0
    assert main(args + ["--out", str(tmp_path / "b")]) == 0
    a, b = _tree(tmp_path / "a"), _tree(tmp_path / "b")
    assert a == b
    assert sum(k.endswith(".wav") for k in a) == 20


def test_evaluate_checkpoint_none(tmp_path, capsys):
    manifest = tmp_path / "m.jsonl"
    manifest.write_text("")
    code = main(["evaluate", "--manifest", str(manifest), "--checkpoint", "none"])
    err = capsys.readouterr().err
    assert code == 1
    assert "--checkpoint" in err and "none" in err


def test_gradcheck_all(capsys):
    assert main(["gradcheck", "--module", "all", "--seed", "3"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert len(lines) >= 18
    for line in lines:
        name, err, verdict = line.split()
        assert float(err) < 1e-5 and verdict == "ok"


@pytest.mark.parametrize("argv", [
    ["frobnicate"],
    ["synth-corpus", "--speakers", "2", "--utts", "1", "--out", "x", "--bogus"],
    [],
    ["gradcheck", "--module", "nope"],
    ["train", "--manifest", "missing.jsonl", "--out", "x.ckpt"],
])
def test_usage_errors(argv, capsys, tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    assert main(argv) == 1
    assert capsys.readouterr().err
    assert not any(tmp_path.iterdir())


def test_mix_roundtrip(small_corpus, tmp_path, capsys):
    spk = data.scan_corpus(small_corpus)
    a, b = sorted(spk)[:2]
    out, scaled = tmp_path / "m.wav", tmp_path / "s.wav"
    assert main(["mix", "--target", str(spk[a][0]), "--interferer", str(spk[b][0]), "--snr", "3",
                 "--out", str(out), "--scaled-out", str(scaled)]) == 0
    t = data.read_wav(spk[a][0]).samples
    m, s = data.read_wav(out).samples, data.read_wav(scaled).samples
    n = len(m)
    assert abs(data.snr_db(t[:n], m - t[:n]) - 3) < 0.05  # 16-bit files quantize the mixture


def test_runtime_failure_exit_code(tmp_path, capsys):
    bad = tmp_path / "bad.ckpt"
    bad.write_bytes(b"SFPRO1garbage")
    wav = tmp_path / "x.wav"
    data.write_wav(wav, data.Waveform(np.zeros(2048)))
    code = main(["extract", "--mixture", str(wav), "--anchor", str(wav), "--checkpoint", str(bad),
                 "--out", str(tmp_path / "o.wav")])
    assert code == 2
    assert "corrupt checkpoint" in capsys.readouterr().err


@pytest.fixture(scope="module")
def workflow(tmp_path_factory):
    root = tmp_path_factory.mktemp("flow")
    cfg = root / "cfg.json"
    cfg.write_text(json.dumps(desk_config().to_dict()))
    assert main(["synth-corpus", "--speakers", "4", "--utts", "2", "--duration", "0.3",
                 "--seed", "1", "--out", str(root / "corpus")]) == 0
    assert main(["build-manifest", "--corpus", str(root / "corpus"), "--count", "3", "--seed", "2",
                 "--out", str(root / "m.jsonl")]) == 0
    assert main(["train", "--manifest", str(root / "m.jsonl"), "--config", str(cfg), "--steps", "3",
                 "--out", str(root / "a.ckpt"), "--quiet"]) == 0
    return root


def test_workflow_outputs(workflow):
    entries = data.read_manifest(workflow / "m.jsonl")
    assert len(entries) == 3
    assert all((workflow / "m_mixtures").glob("*.wav"))


def test_train_is_seed_deterministic(workflow):
    again = workflow / "again.ckpt"
    assert main(["train", "--manifest", str(workflow / "m.jsonl"), "--config", str(workflow / "cfg.json"),
                 "--steps", "3", "--out", str(again), "--quiet"]) == 0
    assert again.read_bytes() == (workflow / "a.ckpt").read_bytes()


def test_resume_continues(workflow):
    a = workflow / "resume.ckpt"
    assert main(["train", "--manifest", str(workflow / "m.jsonl"), "--resume", str(workflow / "a.ckpt"),
                 "--steps", "2", "--out", str(a), "--quiet"]) == 0
    from sfpro.pipeline import load_checkpoint
    assert load_checkpoint(a).step == 5


def test_resume_config_mismatch(workflow, capsys):
    code = main(["train", "--manifest", str(workflow / "m.jsonl"), "--resume", str(workflow / "a.ckpt"),
                 "--steps", "1", "--out", str(workflow / "x.ckpt"), "--quiet"] + ["--variant", "mag-plain"])
    assert code == 2
    assert "config mismatch" in capsys.readouterr().err


def test_extract_and_evaluate(workflow, capsys):
    e = data.read_manifest(workflow / "m.jsonl")[0]
    out = workflow / "est.wav"
    assert main(["extract", "--mixture", e.mixture_path, "--anchor", e.anchor_path,
                 "--checkpoint", str(workflow / "a.ckpt"), "--out", str(out)]) == 0
    assert len(data.read_wav(out)) == len(data.read_wav(e.mixture_path))
    report = workflow / "r.json"
    assert main(["evaluate", "--manifest", str(workflow / "m.jsonl"), "--checkpoint", str(workflow / "a.ckpt"),
                 "--report", str(report)]) == 0
    table = capsys.readouterr().out
    assert "unprocessed" in table and "Average" in table
    assert len(json.loads(report.read_text())["entries"]) == 3


def test_evaluate_estimates_dir(workflow, capsys):
    est = workflow / "oracle"
    est.mkdir()
    for e in data.read_manifest(workflow / "m.jsonl"):
        data.write_wav(est / f"{e.id}.wav", data.read_wav(e.target_path))
    report = workflow / "oracle.json"
    assert main(["evaluate", "--manifest", str(workflow / "m.jsonl"), "--estimates-dir", str(est),
                 "--report", str(report)]) == 0
    assert json.loads(report.read_text())["overall"]["mean_extracted"] == 60.0


def test_spectrogram_command(workflow):
    e = data.read_manifest(workflow / "m.jsonl")[0]
    assert main(["spectrogram", "--input", e.mixture_path, "--out", str(workflow / "spec")]) == 0
    assert (workflow / "spec.png").is_file() and (workflow / "spec.sfspec").is_file()
