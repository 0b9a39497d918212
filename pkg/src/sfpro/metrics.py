"""SDR scoring, manifest evaluation reports and spectrogram export."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import dsp
from .data import Waveform, pair_category, read_manifest, read_wav
from .dsp import StftConfig

SDR_CAP_DB = 60.0
SDR_FLOOR_DB = -60.0
LOG_FLOOR = 1e-8
SDR_NOTE = ("SDR here is the scaling-projection variant "
            "(est projected onto the reference), not the 512-tap BSS-Eval SDR.")


def sdr(reference, estimate) -> float:
    """Scaling-projection SDR in dB.

    ``s_target = (<est, ref> / <ref, ref>) * ref`` and ``e = est - s_target``.
    Returns +60 when ``|e|^2 < 1e-12 |s_target|^2`` and -60 for a zero projection.
    """
    ref = np.asarray(getattr(reference, "samples", reference), dtype=np.float64)
    est = np.asarray(getattr(estimate, "samples", estimate), dtype=np.float64)
    if isinstance(reference, Waveform) and isinstance(estimate, Waveform):
        if reference.sample_rate_hz != estimate.sample_rate_hz:
            raise ValueError("sample-rate mismatch")
    if ref.shape != est.shape:
        raise ValueError(f"length mismatch: {ref.shape} vs {est.shape}")
    ref_energy = float(np.dot(ref, ref))
    if ref_energy == 0.0:
        raise ValueError("zero reference")
    alpha = float(np.dot(est, ref)) / ref_energy
    if alpha == 0.0:
        return SDR_FLOOR_DB
    s_target = alpha * ref
    e = est - s_target
    target_energy = float(np.dot(s_target, s_target))
    err_energy = float(np.dot(e, e))
    if err_energy < 1e-12 * target_energy:
        return SDR_CAP_DB
    return 10.0 * math.log10(target_energy / err_energy)


# --------------------------------------------------------------------------- reports

@dataclass
class EvalReport:
    entries: list = field(default_factory=list)
    groups: dict = field(default_factory=dict)
    group_unprocessed: dict = field(default_factory=dict)
    overall: dict = field(default_factory=dict)
    failed: list = field(default_factory=list)
    label: str = "extracted"

    def to_dict(self):
        return {
            "note": SDR_NOTE,
            "entries": self.entries,
            "groups": self.groups,
            "overall": self.overall,
            "failed": self.failed,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def table(self) -> str:
        return format_table([self])


PAIR_ORDER = ("F&M", "F&F", "M&M")


def _column_order(names):
    known = [g for g in PAIR_ORDER if g in names]
    return known + sorted(n for n in names if n not in PAIR_ORDER)


def format_table(reports) -> str:
    """Plain-text table with groups as columns plus Average.

    The first row is the unprocessed mixture (taken from the first report),
    followed by one row per report labelled with ``report.label``.
    """
    reports = list(reports)
    if not reports:
        raise ValueError("no reports to tabulate")
    names = _column_order(set().union(*(r.groups for r in reports)))
    nan = float("nan")
    first = reports[0]
    rows = [["unprocessed", *(first.group_unprocessed.get(g, nan) for g in names),
             first.overall.get("mean_unprocessed", nan)]]
    for r in reports:
        rows.append([r.label, *(r.groups.get(g, nan) for g in names),
                     r.overall.get("mean_extracted", nan)])
    width = max(14, max(len(r[0]) for r in rows) + 2)
    lines = [f"# {SDR_NOTE}",
             f"{'':<{width}}" + "".join(f"{h:>10}" for h in [*names, "Average"])]
    for r in rows:
        lines.append(f"{r[0]:<{width}}" + "".join(f"{v:>10.2f}" for v in r[1:]))
    for r in reports:
        if r.failed:
            lines.append(f"failed entries ({r.label}): {', '.join(str(f['id']) for f in r.failed)}")
    return "\n".join(lines) + "\n"


def _group_key(entry, group_by):
    if group_by in (None, "none"):
        return "all"
    if group_by == "pair":
        return pair_category(entry.target_speaker_id, entry.interferer_speaker_id)
    if group_by == "speakers":
        return "&".join(sorted((entry.target_speaker_id, entry.interferer_speaker_id)))
    if callable(group_by):
        return group_by(entry)
    raise ValueError(f"unknown grouping {group_by!r}")


def _mean(values):
    return math.fsum(values) / len(values) if values else float("nan")


def aggregate(rows) -> tuple[dict, dict, dict]:
    """Per-group means of extracted and unprocessed SDR plus overall means."""
    groups, unproc = {}, {}
    for name in sorted({r["group"] for r in rows}):
        sel = [r for r in rows if r["group"] == name]
        groups[name] = _mean([r["sdr_extracted_db"] for r in sel])
        unproc[name] = _mean([r["sdr_unprocessed_db"] for r in sel])
    overall = {"mean_unprocessed": _mean([r["sdr_unprocessed_db"] for r in rows]),
               "mean_extracted": _mean([r["sdr_extracted_db"] for r in rows])}
    return groups, unproc, overall


def evaluate_manifest(manifest, checkpoint=None, group_by="pair", estimates=None,
                      label="extracted") -> EvalReport:
    """Score every manifest entry; failures are recorded rather than raised.

    Estimates come from ``estimates`` (a directory of ``<id>.wav`` files, a
    mapping id -> Waveform, or a callable entry -> Waveform) or, when absent,
    from running the extractor stored in ``checkpoint``.
    """
    from .pipeline import TrainState, extract, load_checkpoint

    entries = read_manifest(manifest) if isinstance(manifest, (str, Path)) else list(manifest)
    state = None
    if estimates is None:
        if checkpoint is None:
            raise ValueError("need a checkpoint or precomputed estimates")
        state = checkpoint if isinstance(checkpoint, TrainState) else load_checkpoint(checkpoint)

    rows, failed = [], []
    for entry in entries:
        try:
            target = read_wav(entry.target_path)
            mixture = read_wav(entry.mixture_path)
            n = min(len(target), len(mixture))
            if estimates is None:
                est = extract(mixture, read_wav(entry.anchor_path), state)
            elif callable(estimates):
                est = estimates(entry)
            elif isinstance(estimates, dict):
                est = estimates[entry.id]
            else:
                est = read_wav(Path(estimates) / f"{entry.id}.wav")
            ref = target.samples[:n]
            rows.append({
                "id": entry.id,
                "sdr_unprocessed_db": sdr(ref, mixture.samples[:n]),
                "sdr_extracted_db": sdr(ref, est.samples[:n]),
                "group": _group_key(entry, group_by),
            })
        except Exception as exc:  # noqa: BLE001 - per-entry failures are reported
            failed.append({"id": entry.id, "error": f"{type(exc).__name__}: {exc}"})
    groups, unproc, overall = aggregate(rows)
    return EvalReport(entries=rows, groups=groups, group_unprocessed=unproc, overall=overall,
                      failed=failed, label=label)


# --------------------------------------------------------------------------- spectrograms

def log_magnitude(spec) -> np.ndarray:
    return 20.0 * np.log10(dsp.magnitude(spec) + LOG_FLOOR)


def spectrogram_image(spec) -> np.ndarray:
    """uint8 image ``[K, N]``: time left to right, bin 0 on the bottom row.

    Levels map linearly from the log floor (black) to the maximum (white).
    """
    db = log_magnitude(spec)
    floor = 20.0 * np.log10(LOG_FLOOR)
    top = float(db.max())
    if top <= floor:
        scaled = np.zeros_like(db)
    else:
        scaled = (db - floor) / (top - floor)
    img = np.round(np.clip(scaled, 0.0, 1.0) * 255.0).astype(np.uint8)
    return np.ascontiguousarray(img.T[::-1])


def export_spectrogram(w: Waveform, cfg: StftConfig, path):
    """Write ``<path>.png`` and ``<path>.sfspec``; returns both paths."""
    from PIL import Image

    spec = dsp.stft(w.samples, cfg)
    base = Path(path)
    if base.suffix in (".png", ".sfspec"):
        base = base.with_suffix("")
    png, dump = base.with_suffix(".png"), base.with_suffix(".sfspec")
    Image.fromarray(spectrogram_image(spec), mode="L").save(png)
    dsp.write_spectrogram_dump(dump, spec)
    return png, dump
