import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from sfpro import data, dsp
from sfpro.data import Waveform
from sfpro.metrics import (SDR_NOTE, EvalReport, aggregate, evaluate_manifest, export_spectrogram,
                           format_table, sdr, spectrogram_image)


# --------------------------------------------------------------------------- sdr

def test_identity_hits_cap(rng):
    x = rng.standard_normal(500)
    assert sdr(x, x) == 60.0


def test_orthogonal_noise_is_20db():
    ref = np.zeros(8)
    ref[0] = 10.0
    est = ref.copy()
    est[1] = 1.0
    assert sdr(ref, est) == 20.0


def test_orthogonal_noise_random(rng):
    ref = rng.standard_normal(1000)
    e = rng.standard_normal(1000)
    e -= (e @ ref) / (ref @ ref) * ref
    e *= math.sqrt((ref @ ref) / 100 / (e @ e))
    assert abs(sdr(ref, ref + e) - 20.0) < 1e-9


def test_scaled_reference_hits_cap(rng):
    x = rng.standard_normal(300)
    assert sdr(x, 2 * x) == 60.0


@given(st.integers(0, 2 ** 32 - 1), st.sampled_from([0.5, 2.0, 4.0, 0.25, 1024.0]))
def test_scale_invariance(seed, c):
    r = np.random.default_rng(seed)
    ref, est = r.standard_normal(64), r.standard_normal(64)
    assert sdr(ref, c * est) == sdr(ref, est)


def test_zero_estimate_floor(rng):
    assert sdr(rng.standard_normal(10), np.zeros(10)) == -60.0


def test_sdr_errors(rng):
    with pytest.raises(ValueError, match="length"):
        sdr(np.ones(4), np.ones(5))
    with pytest.raises(ValueError, match="zero reference"):
        sdr(np.zeros(4), np.ones(4))
    with pytest.raises(ValueError, match="sample-rate"):
        sdr(Waveform(np.ones(4), 8000), Waveform(np.ones(4), 16000))


@given(st.integers(0, 2 ** 32 - 1))
def test_mixture_scores_below_target(seed):
    r = np.random.default_rng(seed)
    t, i = r.standard_normal(256), r.standard_normal(256)
    assert sdr(t, t + 0.5 * i) < sdr(t, t)


# --------------------------------------------------------------------------- reports

@pytest.fixture(scope="module")
def manifest(tmp_path_factory, small_corpus):
    root = tmp_path_factory.mktemp("eval")
    entries = data.build_manifest(small_corpus, 6, 0.0, 5.0, 3, root / "mix")
    path = root / "m.jsonl"
    data.write_manifest(path, entries)
    return path, entries


def test_copied_targets_score_cap(manifest):
    path, entries = manifest
    est = {e.id: data.read_wav(e.target_path) for e in entries}
    report = evaluate_manifest(path, estimates=est)
    assert [r["sdr_extracted_db"] for r in report.entries] == [60.0] * len(entries)
    assert report.overall["mean_extracted"] == 60.0
    assert not report.failed


def test_estimate_directory(manifest, tmp_path):
    path, entries = manifest
    for e in entries:
        data.write_wav(tmp_path / f"{e.id}.wav", data.read_wav(e.target_path))
    report = evaluate_manifest(path, estimates=tmp_path)
    assert report.overall["mean_extracted"] == 60.0


def test_two_entry_mean(manifest):
    _, entries = manifest
    pair = entries[:2]
    est = {}
    expected = []
    for k, e in enumerate(pair):
        t = data.read_wav(e.target_path).samples
        noisy = t + (0.1 + 0.2 * k) * np.roll(t, 37)
        est[e.id] = Waveform(noisy)
        m = data.read_wav(e.mixture_path).samples
        n = min(len(t), len(m))
        expected.append(sdr(t[:n], noisy[:n]))
    report = evaluate_manifest(pair, estimates=est, group_by="none")
    assert report.overall["mean_extracted"] == (expected[0] + expected[1]) / 2
    assert report.groups == {"all": report.overall["mean_extracted"]}


def test_regrouping_oracle(manifest):
    path, entries = manifest

    def est(e):
        t = data.read_wav(e.target_path).samples
        return Waveform(t + 0.3 * data.read_wav(e.mixture_path).samples[:len(t)])
    report = evaluate_manifest(path, estimates=est, group_by="pair")
    for group, mean in report.groups.items():
        ids = {e.id for e in entries
               if data.pair_category(e.target_speaker_id, e.interferer_speaker_id) == group}
        vals = [r["sdr_extracted_db"] for r in report.entries if r["id"] in ids]
        assert math.isclose(mean, sum(vals) / len(vals), rel_tol=0, abs_tol=1e-12)
    assert len(report.entries) == len(entries)


def test_failed_entries_are_recorded(manifest):
    path, entries = manifest
    est = {e.id: data.read_wav(e.target_path) for e in entries[1:]}
    report = evaluate_manifest(path, estimates=est)
    assert [f["id"] for f in report.failed] == [entries[0].id]
    assert len(report.entries) == len(entries) - 1
    assert "failed entries" in report.table()


def test_report_json_fields(manifest):
    path, entries = manifest
    est = {e.id: data.read_wav(e.target_path) for e in entries}
    d = json.loads(evaluate_manifest(path, estimates=est).to_json())
    assert set(d["entries"][0]) == {"id", "sdr_unprocessed_db", "sdr_extracted_db", "group"}
    assert set(d["overall"]) == {"mean_unprocessed", "mean_extracted"}
    assert d["note"] == SDR_NOTE


def test_aggregate_matches_brute_force(rng):
    rows = [{"id": str(i), "group": "ab"[i % 2], "sdr_unprocessed_db": float(rng.normal()),
             "sdr_extracted_db": float(rng.normal())} for i in range(9)]
    groups, unproc, overall = aggregate(rows)
    for g in "ab":
        sel = [r["sdr_extracted_db"] for r in rows if r["group"] == g]
        assert math.isclose(groups[g], sum(sel) / len(sel), abs_tol=1e-12)
    assert math.isclose(overall["mean_unprocessed"],
                        sum(r["sdr_unprocessed_db"] for r in rows) / 9, abs_tol=1e-12)


def test_table_layout():
    r = EvalReport(groups={"M&M": 3.0, "F&M": 1.0, "F&F": 2.0},
                   group_unprocessed={"M&M": 0.5, "F&M": 0.1, "F&F": 0.2},
                   overall={"mean_unprocessed": 0.3, "mean_extracted": 2.0}, label="ri-waveunet")
    lines = format_table([r]).splitlines()
    assert lines[0].startswith("# ")
    assert lines[1].split() == ["F&M", "F&F", "M&M", "Average"]
    assert lines[2].split() == ["unprocessed", "0.10", "0.20", "0.50", "0.30"]
    assert lines[3].split() == ["ri-waveunet", "1.00", "2.00", "3.00", "2.00"]


# --------------------------------------------------------------------------- spectrograms

def test_zero_signal_uniform_image():
    img = spectrogram_image(dsp.stft(np.zeros(1024)))
    assert img.shape == (129, 7)
    assert (img == img[0, 0]).all() and img[0, 0] == 0


def test_tone_row():
    n = np.arange(2048)
    spec = dsp.stft(np.cos(2 * np.pi * 16 * n / 256))
    img = spectrogram_image(spec)
    k = img.shape[0]
    assert (img[k - 1 - 16] == 255).all()
    assert (img.argmax(axis=0) == k - 1 - 16).all()
    assert (np.delete(img, k - 1 - 16, axis=0) < 255).all()


def test_export_files_and_dims(tmp_path, rng):
    from PIL import Image

    w = Waveform(0.1 * rng.standard_normal(3000))
    png, dump = export_spectrogram(w, dsp.StftConfig(), tmp_path / "spec")
    spec = dsp.read_spectrogram_dump(dump)
    n, k = spec.shape
    with Image.open(png) as im:
        assert im.size == (n, k)  # width = frames, height = bins
        assert im.mode == "L"
    np.testing.assert_array_equal(spec, dsp.stft(w.samples))
