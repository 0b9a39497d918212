"""WAV I/O, SNR-controlled mixing, a synthetic speaker corpus and mixture manifests."""
from __future__ import annotations

import json
import struct
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .errors import (CorpusError, MixingError, MultiChannelError, TruncatedWavError,
                     UnsupportedEncodingError, WavError, WavMissingError)

DEFAULT_SAMPLE_RATE = 8000

_PCM = 1
_IEEE_FLOAT = 3
_EXTENSIBLE = 0xFFFE


@dataclass
class Waveform:
    samples: np.ndarray
    sample_rate_hz: int = DEFAULT_SAMPLE_RATE

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1:
            raise ValueError("waveform must be mono (1-D)")
        if self.sample_rate_hz <= 0:
            raise ValueError("sample rate must be positive")

    def __len__(self):
        return self.samples.shape[0]


@dataclass
class ManifestEntry:
    mixture_path: str
    target_path: str
    interferer_path: str
    anchor_path: str
    snr_db: float
    target_speaker_id: str
    interferer_speaker_id: str

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=False)

    @property
    def id(self) -> str:
        return Path(self.mixture_path).stem


# --------------------------------------------------------------------------- WAV

def read_wav(path) -> Waveform:
    path = Path(path)
    if not path.is_file():
        raise WavMissingError(f"no such file: {path}")
    blob = path.read_bytes()
    if len(blob) < 12:
        raise TruncatedWavError(f"{path}: truncated container (no RIFF header)")
    if blob[:4] != b"RIFF" or blob[8:12] != b"WAVE":
        raise UnsupportedEncodingError(f"{path}: not a RIFF/WAVE file")

    fmt = None
    data = None
    off = 12
    while off < len(blob):
        if off + 8 > len(blob):
            raise TruncatedWavError(f"{path}: truncated chunk header")
        cid = blob[off:off + 4]
        (size,) = struct.unpack_from("<I", blob, off + 4)
        body = blob[off + 8: off + 8 + size]
        if len(body) < size:
            raise TruncatedWavError(f"{path}: truncated {cid.decode('latin-1')!r} chunk")
        if cid == b"fmt ":
            fmt = body
        elif cid == b"data":
            data = body
        off += 8 + size + (size & 1)

    if fmt is None or len(fmt) < 16:
        raise TruncatedWavError(f"{path}: missing fmt chunk")
    if data is None:
        raise TruncatedWavError(f"{path}: missing data chunk")
    tag, channels, rate, _, _, bits = struct.unpack_from("<HHIIHH", fmt)
    if tag == _EXTENSIBLE and len(fmt) >= 26:
        (tag,) = struct.unpack_from("<H", fmt, 24)
    if channels != 1:
        raise MultiChannelError(f"{path}: multi-channel unsupported ({channels} channels)")
    if tag == _PCM and bits == 16:
        if len(data) % 2:
            raise TruncatedWavError(f"{path}: odd-sized 16-bit data chunk")
        samples = np.frombuffer(data, dtype="<i2").astype(np.float64) / 32768.0
    elif tag == _IEEE_FLOAT and bits == 32:
        if len(data) % 4:
            raise TruncatedWavError(f"{path}: data chunk not a multiple of 4 bytes")
        samples = np.frombuffer(data, dtype="<f4").astype(np.float64)
    else:
        raise UnsupportedEncodingError(
            f"{path}: unsupported encoding (format tag {tag}, {bits} bits)")
    if not np.all(np.isfinite(samples)):
        raise WavError(f"{path}: non-finite samples")
    return Waveform(samples, rate)


def _quantize(samples: np.ndarray) -> np.ndarray:
    clipped = np.clip(np.asarray(samples, dtype=np.float64), -1.0, 1.0)
    return np.clip(np.round(clipped * 32768.0), -32768, 32767).astype("<i2")


def write_wav(path, w: Waveform) -> None:
    if not np.all(np.isfinite(w.samples)):
        raise ValueError("cannot write non-finite samples")
    pcm = _quantize(w.samples).tobytes()
    rate = int(w.sample_rate_hz)
    header = b"RIFF" + struct.pack("<I", 36 + len(pcm)) + b"WAVE"
    fmt = b"fmt " + struct.pack("<IHHIIHH", 16, _PCM, 1, rate, rate * 2, 2, 16)
    with open(path, "wb") as fh:
        fh.write(header + fmt + b"data" + struct.pack("<I", len(pcm)) + pcm)


# --------------------------------------------------------------------------- mixing

def energy(x: np.ndarray) -> float:
    return float(np.dot(x, x))


def _snap(scaled: np.ndarray, target: np.ndarray) -> np.ndarray:
    """Round ``scaled`` onto a power-of-two grid fine enough to keep 52 bits of the sum.

    If ``target`` lies on the same grid (true for 16-bit or float32 audio),
    ``target + scaled`` is computed without rounding, so subtracting the
    scaled interferer from the mixture gives back the target bit for bit.
    """
    peak = float(np.max(np.abs(target))) + float(np.max(np.abs(scaled)))
    if peak == 0.0:
        return scaled
    grid = 2.0 ** (int(np.ceil(np.log2(peak))) - 52)
    return np.round(scaled / grid) * grid


def mix_at_snr(target: Waveform, interferer: Waveform, snr_db: float):
    """Scale ``interferer`` so that target/interferer energy ratio equals ``snr_db``.

    Both sources are truncated to the shorter length first. Returns
    ``(mixture, scaled_interferer)``. The scaled interferer is snapped to a
    grid of about 2^-52 of the peak so that the sum is exact (see ``_snap``).
    """
    if target.sample_rate_hz != interferer.sample_rate_hz:
        raise MixingError(
            f"sample-rate mismatch: {target.sample_rate_hz} vs {interferer.sample_rate_hz}")
    n = min(len(target), len(interferer))
    if n < 1:
        raise MixingError("empty source")
    s_t = target.samples[:n]
    s_i = interferer.samples[:n]
    e_t, e_i = energy(s_t), energy(s_i)
    if e_t == 0.0:
        raise MixingError("zero-energy target")
    if e_i == 0.0:
        raise MixingError("zero-energy interferer")
    gain = np.sqrt(e_t / (e_i * 10.0 ** (snr_db / 10.0)))
    scaled = _snap(gain * s_i, s_t)
    rate = target.sample_rate_hz
    return Waveform(s_t + scaled, rate), Waveform(scaled, rate)


def snr_db(target: np.ndarray, interferer: np.ndarray) -> float:
    return float(10.0 * np.log10(energy(target) / energy(interferer)))


# --------------------------------------------------------------------------- corpus

def _speaker_profile(rng: np.random.Generator, index: int, num_speakers: int):
    # alternate genders; spread f0 evenly inside each gender band so speakers stay distinct
    female = index % 2 == 1
    slot = index // 2
    per_gender = (num_speakers + 1) // 2
    lo, hi = (175.0, 265.0) if female else (95.0, 155.0)
    f0 = lo + (hi - lo) * (slot + 0.5 + 0.3 * rng.uniform(-1, 1)) / per_gender
    scale = 1.12 if female else 1.0
    formants = np.sort(np.array([
        rng.uniform(400, 900), rng.uniform(1000, 2000), rng.uniform(2200, 3400)]) * scale)
    widths = rng.uniform(120, 280, size=3)
    gains = np.array([1.0, rng.uniform(0.4, 0.8), rng.uniform(0.15, 0.4)])
    return {
        "id": f"{'F' if female else 'M'}{index:02d}",
        "gender": "F" if female else "M",
        "f0_hz": float(f0),
        "formants_hz": formants.tolist(),
        "bandwidths_hz": widths.tolist(),
        "formant_gains": gains.tolist(),
    }


def _formant_response(freqs: np.ndarray, profile) -> np.ndarray:
    resp = np.full_like(freqs, 0.02)
    for fc, bw, g in zip(profile["formants_hz"], profile["bandwidths_hz"],
                         profile["formant_gains"]):
        resp += g * np.exp(-0.5 * ((freqs - fc) / bw) ** 2)
    return resp


def _smooth_envelope(rng, n: int, rate: int, syllable_hz: float) -> np.ndarray:
    knots = max(2, int(np.ceil(n / rate * syllable_hz)) + 2)
    values = rng.uniform(0.15, 1.0, size=knots)
    t = np.linspace(0, knots - 1, n)
    # raised-cosine interpolation between knots
    idx = np.minimum(np.floor(t).astype(int), knots - 2)
    frac = t - idx
    w = 0.5 - 0.5 * np.cos(np.pi * frac)
    return values[idx] * (1 - w) + values[idx + 1] * w


def synth_utterance(profile, rng: np.random.Generator, duration_s: float,
                    sample_rate: int = DEFAULT_SAMPLE_RATE) -> np.ndarray:
    """Harmonic source at the speaker's f0, shaped by its formants, amplitude-modulated."""
    n = int(round(duration_s * sample_rate))
    t = np.arange(n) / sample_rate
    f0 = profile["f0_hz"] * (1.0 + rng.uniform(-0.01, 0.01))
    n_harm = int((sample_rate / 2 - 50) // f0)
    harm_freqs = f0 * np.arange(1, n_harm + 1)
    amps = _formant_response(harm_freqs, profile) / np.sqrt(np.arange(1, n_harm + 1))
    phases = rng.uniform(0, 2 * np.pi, size=n_harm)
    voiced = (amps[:, None] * np.sin(2 * np.pi * harm_freqs[:, None] * t + phases[:, None])).sum(0)

    # band-pass (formant-shaped) noise
    noise = rng.standard_normal(n)
    spec = np.fft.rfft(noise)
    spec *= _formant_response(np.fft.rfftfreq(n, 1.0 / sample_rate), profile)
    breath = np.fft.irfft(spec, n=n)
    breath *= 0.05 * np.std(voiced) / (np.std(breath) + 1e-12)

    x = (voiced + breath) * _smooth_envelope(rng, n, sample_rate, rng.uniform(3.0, 5.0))
    return 0.5 * x / np.max(np.abs(x))


def synth_corpus(num_speakers: int, utterances_per_speaker: int, duration_s: float,
                 seed: int, out_dir, sample_rate: int = DEFAULT_SAMPLE_RATE) -> Path:
    """Write ``out_dir/<speaker_id>/<utt_id>.wav`` plus ``speakers.json``."""
    if num_speakers < 2:
        raise CorpusError("need at least 2 speakers")
    if utterances_per_speaker < 1:
        raise CorpusError("need at least 1 utterance per speaker")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    root_rng = np.random.default_rng(seed)
    speaker_seeds = root_rng.integers(0, 2**63 - 1, size=num_speakers)
    profiles = []
    for s in range(num_speakers):
        rng = np.random.default_rng(int(speaker_seeds[s]))
        prof = _speaker_profile(rng, s, num_speakers)
        profiles.append(prof)
        spk_dir = out / prof["id"]
        spk_dir.mkdir(exist_ok=True)
        for u in range(utterances_per_speaker):
            x = synth_utterance(prof, rng, duration_s, sample_rate)
            write_wav(spk_dir / f"{prof['id']}_u{u:03d}.wav", Waveform(x, sample_rate))
    (out / "speakers.json").write_text(json.dumps(profiles, indent=2, sort_keys=True) + "\n")
    return out


def scan_corpus(corpus_dir) -> dict[str, list[Path]]:
    """Map speaker id to its sorted utterance paths."""
    root = Path(corpus_dir)
    if not root.is_dir():
        raise CorpusError(f"corpus directory not found: {root}")
    speakers = {}
    for d in sorted(p for p in root.iterdir() if p.is_dir()):
        utts = sorted(d.glob("*.wav"))
        if utts:
            speakers[d.name] = utts
    return speakers


# --------------------------------------------------------------------------- manifest

def build_manifest(corpus_dir, count: int, snr_min: float, snr_max: float, seed: int,
                   out_dir=None) -> list[ManifestEntry]:
    """Draw ``count`` two-speaker mixtures, writing them under ``out_dir`` when given.

    The anchor is another utterance of the target speaker. Without ``out_dir``
    mixture paths are placeholders and nothing is written.
    """
    if snr_min > snr_max:
        raise CorpusError("snr_min exceeds snr_max")
    speakers = scan_corpus(corpus_dir)
    eligible = [s for s, utts in speakers.items() if len(utts) >= 2]
    if len(speakers) < 2:
        raise CorpusError(f"need at least 2 speakers, found {len(speakers)}")
    if not eligible:
        raise CorpusError("no speaker has the 2 utterances needed for a distinct anchor")
    ids = sorted(speakers)
    rng = np.random.default_rng(seed)
    if out_dir is not None:
        Path(out_dir).mkdir(parents=True, exist_ok=True)

    entries = []
    for j in range(count):
        tgt = eligible[rng.integers(len(eligible))]
        others = [s for s in ids if s != tgt]
        itf = others[rng.integers(len(others))]
        t_idx, a_idx = rng.choice(len(speakers[tgt]), size=2, replace=False)
        i_idx = rng.integers(len(speakers[itf]))
        snr = float(rng.uniform(snr_min, snr_max)) if snr_max > snr_min else float(snr_min)
        t_path = speakers[tgt][t_idx]
        i_path = speakers[itf][i_idx]
        name = f"mix{j:05d}_{t_path.stem}_{i_path.stem}.wav"
        m_path = Path(out_dir) / name if out_dir is not None else Path(name)
        if out_dir is not None:
            mixture, _ = mix_at_snr(read_wav(t_path), read_wav(i_path), snr)
            write_wav(m_path, mixture)
        entries.append(ManifestEntry(
            mixture_path=str(m_path), target_path=str(t_path), interferer_path=str(i_path),
            anchor_path=str(speakers[tgt][a_idx]), snr_db=snr,
            target_speaker_id=tgt, interferer_speaker_id=itf))
    return entries


def write_manifest(path, entries) -> None:
    with open(path, "w") as fh:
        for e in entries:
            fh.write(e.to_json() + "\n")


def read_manifest(path) -> list[ManifestEntry]:
    entries = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line:
                entries.append(ManifestEntry(**json.loads(line)))
    return entries


def speaker_gender(speaker_id: str) -> str:
    head = speaker_id[:1].upper()
    return head if head in ("F", "M") else "?"


def pair_category(a: str, b: str) -> str:
    """Table-style pair label: F&M, F&F or M&M."""
    ga, gb = sorted((speaker_gender(a), speaker_gender(b)))
    return f"{ga}&{gb}"


__all__ = [
    "Waveform", "ManifestEntry", "read_wav", "write_wav", "mix_at_snr", "snr_db",
    "synth_corpus", "synth_utterance", "scan_corpus", "build_manifest", "write_manifest",
    "read_manifest", "pair_category", "speaker_gender", "DEFAULT_SAMPLE_RATE",
]
