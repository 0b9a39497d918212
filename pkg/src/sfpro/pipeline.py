"""Full extractor, spectral MSE loss, training step and checkpoint persistence."""
from __future__ import annotations

import json
import math
import struct
import zlib
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from . import dsp
from .data import Waveform
from .deep_filter import deep_filter
from .dsp import StftConfig
from .errors import (CheckpointVersionError, ConfigMismatchError, CorruptCheckpointError,
                     NonFiniteLossError, ShapeError)
from .gcrn import Gcrn, GcrnConfig
from .nn import ops, spectral
from .nn.autograd import Tape, Tensor, as_tensor, no_grad, record
from .nn.module import Module
from .nn.optim import AdamState, adam_step
from .speaker import SpeakerEncoder
from .waveunet import WaveUNet, WaveUNetConfig

CHECKPOINT_MAGIC = b"SFPRO1"
CHECKPOINT_VERSION = 1

VARIANTS = {
    "ri-waveunet": ("ri", True),
    "ri-plain": ("ri", False),
    "mag-waveunet": ("magnitude", True),
    "mag-plain": ("magnitude", False),
}


@dataclass(frozen=True)
class TrainingConfig:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    batch_size: int = 4
    chunk_length: int = 8192
    anchor_length: int = 8192
    seed: int = 0


@dataclass(frozen=True)
class ModelConfig:
    stft: StftConfig = field(default_factory=StftConfig)
    waveunet_pre: WaveUNetConfig = field(default_factory=WaveUNetConfig)
    waveunet_post: WaveUNetConfig = field(default_factory=WaveUNetConfig)
    gcrn: GcrnConfig = field(default_factory=GcrnConfig)
    input: str = "ri"
    use_waveunet: bool = True
    loss_after_post: bool = True
    training: TrainingConfig = field(default_factory=TrainingConfig)

    def __post_init__(self):
        if self.input not in ("ri", "magnitude"):
            raise ValueError(f"input must be 'ri' or 'magnitude', not {self.input!r}")
        if self.gcrn.input_mode != self.input:
            object.__setattr__(self, "gcrn", replace(self.gcrn, input_mode=self.input))
        self.check_chunk(self.training.chunk_length)

    def check_chunk(self, length: int):
        if length % self.stft.hop or length < self.stft.fft_size:
            raise ShapeError(f"chunk length {length} must be a multiple of the hop "
                             f"{self.stft.hop} and at least one frame")
        if self.use_waveunet:
            for name in ("waveunet_pre", "waveunet_post"):
                factor = getattr(self, name).factor
                if length % factor:
                    raise ShapeError(f"chunk length {length} not divisible by {factor} ({name})")

    @property
    def variant(self) -> str:
        return f"{'ri' if self.input == 'ri' else 'mag'}-{'waveunet' if self.use_waveunet else 'plain'}"

    def to_dict(self):
        return {
            "stft": self.stft.to_dict(),
            "waveunet_pre": self.waveunet_pre.to_dict(),
            "waveunet_post": self.waveunet_post.to_dict(),
            "gcrn": self.gcrn.to_dict(),
            "variant": {"input": self.input, "use_waveunet": self.use_waveunet,
                        "loss_after_post": self.loss_after_post},
            "training": asdict(self.training),
        }

    @classmethod
    def from_dict(cls, d):
        d = d or {}
        known = {"stft", "waveunet_pre", "waveunet_post", "gcrn", "variant", "training"}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config sections: {sorted(unknown)}")

        def build(klass, section):
            values = d.get(section, {}) or {}
            names = {f.name for f in fields(klass)}
            bad = set(values) - names
            if bad:
                raise ValueError(f"unknown fields in [{section}]: {sorted(bad)}")
            return klass(**values)

        variant = d.get("variant", {}) or {}
        bad = set(variant) - {"input", "use_waveunet", "loss_after_post"}
        if bad:
            raise ValueError(f"unknown fields in [variant]: {sorted(bad)}")
        return cls(stft=build(StftConfig, "stft"),
                   waveunet_pre=build(WaveUNetConfig, "waveunet_pre"),
                   waveunet_post=build(WaveUNetConfig, "waveunet_post"),
                   gcrn=build(GcrnConfig, "gcrn"),
                   input=variant.get("input", "ri"),
                   use_waveunet=bool(variant.get("use_waveunet", True)),
                   loss_after_post=bool(variant.get("loss_after_post", True)),
                   training=build(TrainingConfig, "training"))

    def with_variant(self, name: str) -> "ModelConfig":
        if name not in VARIANTS:
            raise ValueError(f"unknown variant {name!r}; choose from {sorted(VARIANTS)}")
        inp, wun = VARIANTS[name]
        return replace(self, input=inp, use_waveunet=wun, gcrn=replace(self.gcrn, input_mode=inp))


def first_difference(a, b, prefix=""):
    """Dotted path of the first differing leaf between two nested dicts, or None."""
    if isinstance(a, dict) and isinstance(b, dict):
        for key in sorted(set(a) | set(b)):
            if key not in a or key not in b:
                return prefix + key
            found = first_difference(a[key], b[key], prefix + key + ".")
            if found:
                return found
        return None
    if a != b:
        return prefix.rstrip(".")
    return None


# --------------------------------------------------------------------------- model

class TargetExtractor(Module):
    def __init__(self, cfg: ModelConfig, seed: int = 0):
        super().__init__()
        self.cfg = cfg
        rng = np.random.default_rng(seed)
        self.speaker = SpeakerEncoder(rng, bins=cfg.stft.bins)
        if cfg.use_waveunet:
            self.waveunet_pre = WaveUNet(cfg.waveunet_pre, rng)
        self.gcrn = Gcrn(cfg.gcrn, rng, bins=cfg.stft.bins)
        if cfg.use_waveunet:
            self.waveunet_post = WaveUNet(cfg.waveunet_post, rng)
        self.calls = []

    def _wave(self, net, x):
        b, t = x.shape
        return ops.reshape(net(ops.reshape(x, (b, 1, t))), (b, t))

    def anchor_vector(self, anchor):
        """``anchor[B, Ta]`` waveforms -> ``[B, 129]`` (anchor audio is data, not trained)."""
        a = np.asarray(anchor.data if isinstance(anchor, Tensor) else anchor, dtype=np.float64)
        mag = dsp.magnitude(dsp.stft(a, self.cfg.stft))
        self.calls.append("encode_anchor")
        return self.speaker(mag)

    def forward(self, mixture, anchor):
        """``mixture[B, T]``, ``anchor[B, Ta]`` -> estimated target ``[B, T]``."""
        cfg = self.cfg
        self.calls = []
        y = as_tensor(mixture)
        t = y.shape[-1]
        cfg.check_chunk(t)
        if cfg.use_waveunet:
            self.calls.append("waveunet_pre")
            y = self._wave(self.waveunet_pre, y)
        self.calls.append("stft")
        xr, xi = spectral.stft(y, cfg.stft)
        b, n, k = xr.shape
        if cfg.input == "ri":
            spec_in = ops.concat([ops.reshape(xr, (b, 1, n, k)), ops.reshape(xi, (b, 1, n, k))], axis=1)
        else:
            spec_in = ops.reshape(ops.complex_abs(xr, xi), (b, 1, n, k))
        anchor_vec = self.anchor_vector(anchor)
        self.calls.append("gcrn")
        hr, hi = self.gcrn(spec_in, anchor_vec)
        self.calls.append("deep_filter")
        half_t, half_f = cfg.gcrn.half_taps
        yr, yi = deep_filter(hr, hi, xr, xi, half_t, half_f)
        self.calls.append("istft")
        s = spectral.istft(yr, yi, cfg.stft, out_length=t)
        self.pre_post = s
        if cfg.use_waveunet:
            self.calls.append("waveunet_post")
            s = self._wave(self.waveunet_post, s)
        return s


# --------------------------------------------------------------------------- loss

def spectral_mse(est_re, est_im, clean_re, clean_im):
    """Per-example ``mean_{n,k} |X - X_hat|^2``, averaged over the batch.

    Per-example terms are combined with ``math.fsum`` so the value does not
    depend on batch order.
    """
    est_re, est_im = as_tensor(est_re), as_tensor(est_im)
    cr = np.asarray(clean_re.data if isinstance(clean_re, Tensor) else clean_re)
    ci = np.asarray(clean_im.data if isinstance(clean_im, Tensor) else clean_im)
    if est_re.shape != cr.shape or est_im.shape != ci.shape:
        raise ShapeError(f"loss: estimate {est_re.shape} vs clean {cr.shape}")
    dr = est_re.data - cr
    di = est_im.data - ci
    b = dr.shape[0]
    units = dr[0].size
    per = (dr * dr + di * di).reshape(b, -1).sum(axis=1) / units
    value = math.fsum(per.tolist()) / b

    def backward(g):
        c = 2.0 * float(g) / (units * b)
        return c * dr, c * di

    return record("spectral_mse", (est_re, est_im), Tensor(value), backward)


def loss_mse(clean, est) -> float:
    """``(1/(N*K)) * sum |clean - est|^2`` for two complex ``[N, K]`` spectrograms."""
    clean = np.asarray(clean)
    est = np.asarray(est)
    if clean.shape != est.shape:
        raise ShapeError(f"loss: shape mismatch {clean.shape} vs {est.shape}")
    d = clean - est
    return float((d.real ** 2 + d.imag ** 2).sum() / d.size)


def model_loss(model: TargetExtractor, mixture, target, anchor):
    est = model(mixture, anchor)
    if not model.cfg.loss_after_post:
        est = model.pre_post
    er, ei = spectral.stft(est, model.cfg.stft)
    clean = dsp.stft(np.asarray(target, dtype=np.float64), model.cfg.stft)
    return spectral_mse(er, ei, clean.real, clean.imag)


# --------------------------------------------------------------------------- training

@dataclass
class TrainState:
    model: TargetExtractor
    optimizer: AdamState
    rng: np.random.Generator
    step: int = 0

    @property
    def config(self) -> ModelConfig:
        return self.model.cfg


def init_state(cfg: ModelConfig, seed: int | None = None) -> TrainState:
    seed = cfg.training.seed if seed is None else seed
    model = TargetExtractor(cfg, seed=seed)
    return TrainState(model=model, optimizer=AdamState(model.named_parameters()),
                      rng=np.random.default_rng([seed, 1]), step=0)


def train_step(batch, state: TrainState, lr: float | None = None, batch_id=None):
    """One forward/backward/Adam update on ``batch = (mixture, target, anchor)`` arrays."""
    mixture, target, anchor = (np.asarray(a, dtype=np.float64) for a in batch)
    tc = state.config.training
    model = state.model
    model.zero_grad()
    with Tape() as tape:
        loss = model_loss(model, mixture, target, anchor)
    value = float(loss.data)
    if not np.isfinite(value):
        raise NonFiniteLossError(batch_id if batch_id is not None else state.step, value)
    tape.backward(loss)
    adam_step(model.named_parameters(), state.optimizer, lr=tc.lr if lr is None else lr,
              beta1=tc.beta1, beta2=tc.beta2, eps_opt=tc.eps)
    state.step += 1
    return value, state


def evaluate_loss(model: TargetExtractor, batch) -> float:
    with no_grad():
        return float(model_loss(model, *batch).data)


def _crop(x: np.ndarray, length: int, rng) -> np.ndarray:
    if x.shape[0] <= length:
        return np.pad(x, (0, length - x.shape[0]))
    start = int(rng.integers(0, x.shape[0] - length + 1))
    return x[start:start + length]


def sample_batch(examples, state: TrainState):
    """Draw ``batch_size`` (mixture, target, anchor) crops using the state's RNG.

    Mixture and target share one crop offset; the anchor is cropped
    independently. Short signals are zero-padded.
    """
    tc = state.config.training
    rng = state.rng
    mix, tgt, anc = [], [], []
    for _ in range(tc.batch_size):
        m, t, a = examples[int(rng.integers(len(examples)))]
        n = min(len(m), len(t))
        if n > tc.chunk_length:
            start = int(rng.integers(0, n - tc.chunk_length + 1))
            m, t = m[start:start + tc.chunk_length], t[start:start + tc.chunk_length]
        else:
            m = np.pad(m[:n], (0, tc.chunk_length - n))
            t = np.pad(t[:n], (0, tc.chunk_length - n))
        mix.append(m)
        tgt.append(t)
        anc.append(_crop(np.asarray(a), tc.anchor_length, rng))
    return np.stack(mix), np.stack(tgt), np.stack(anc)


def manifest_examples(entries):
    """Load (mixture, target, anchor) sample arrays for each manifest entry."""
    from .data import read_wav

    out = []
    for e in entries:
        out.append((read_wav(e.mixture_path).samples, read_wav(e.target_path).samples,
                    read_wav(e.anchor_path).samples))
    return out


def train(state: TrainState, examples, steps: int, log=None, log_every: int = 50) -> TrainState:
    """Run ``steps`` updates on batches sampled from ``examples``."""
    if not examples:
        raise ValueError("no training examples")
    for _ in range(steps):
        batch = sample_batch(examples, state)
        loss, state = train_step(batch, state)
        if log is not None and (state.step % log_every == 0):
            log(state.step, loss)
    return state


# --------------------------------------------------------------------------- extraction

def _prepare_anchor(anchor: np.ndarray, cfg: ModelConfig) -> np.ndarray:
    if anchor.shape[0] < cfg.stft.fft_size:
        raise ShapeError(f"anchor shorter than one frame ({cfg.stft.fft_size} samples)")
    return anchor


def extract_array(model: TargetExtractor, mixture: np.ndarray, anchor: np.ndarray,
                  chunk_length: int | None = None) -> np.ndarray:
    """Run the extractor over ``mixture`` in fixed-size chunks; output has the input length."""
    cfg = model.cfg
    chunk = chunk_length or cfg.training.chunk_length
    cfg.check_chunk(chunk)
    mixture = np.asarray(mixture, dtype=np.float64)
    anchor = _prepare_anchor(np.asarray(anchor, dtype=np.float64), cfg)
    total = mixture.shape[0]
    if total < chunk:
        raise ShapeError(f"mixture of {total} samples is shorter than one chunk ({chunk})")
    starts = list(range(0, total - chunk + 1, chunk))
    if starts[-1] + chunk < total:
        starts.append(total - chunk)
    out = np.zeros(total)
    with no_grad():
        for s in starts:
            est = model(mixture[None, s:s + chunk], anchor[None]).data[0]
            # a final overlapping chunk only fills samples not yet written
            lo = s if s % chunk == 0 else starts[-2] + chunk
            out[lo:s + chunk] = est[lo - s:]
    return out


def extract(mixture: Waveform, anchor: Waveform, checkpoint) -> Waveform:
    """Estimate the anchor speaker's speech in ``mixture`` using a checkpoint path or state."""
    if mixture.sample_rate_hz != anchor.sample_rate_hz:
        raise ShapeError("mixture and anchor sample rates differ")
    state = checkpoint if isinstance(checkpoint, TrainState) else load_checkpoint(checkpoint)
    out = extract_array(state.model, mixture.samples, anchor.samples)
    return Waveform(out, mixture.sample_rate_hz)


# --------------------------------------------------------------------------- checkpoints

def _encode_records(named_arrays) -> bytes:
    parts = [struct.pack("<I", len(named_arrays))]
    for name, arr in named_arrays:
        arr = np.asarray(arr, dtype="<f8")
        raw = name.encode("utf-8")
        parts.append(struct.pack("<H", len(raw)) + raw)
        parts.append(struct.pack("<B", arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(arr.tobytes())
    return b"".join(parts)


class _Reader:
    def __init__(self, blob: bytes):
        self.blob = blob
        self.off = 0

    def take(self, n: int) -> bytes:
        if self.off + n > len(self.blob):
            raise CorruptCheckpointError("corrupt checkpoint: unexpected end of data")
        out = self.blob[self.off:self.off + n]
        self.off += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def records(self):
        (count,) = self.unpack("<I")
        out = []
        for _ in range(count):
            (nlen,) = self.unpack("<H")
            name = self.take(nlen).decode("utf-8")
            (rank,) = self.unpack("<B")
            dims = self.unpack(f"<{rank}I") if rank else ()
            size = int(np.prod(dims)) if rank else 1
            data = np.frombuffer(self.take(8 * size), dtype="<f8").astype(np.float64)
            out.append((name, data.reshape(dims)))
        return out


def checkpoint_bytes(state: TrainState) -> bytes:
    header = {
        "model_config": state.config.to_dict(),
        "training_state": {"step": state.step, "adam_step": state.optimizer.step,
                           "rng": state.rng.bit_generator.state},
    }
    js = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    params = [(k, p.data) for k, p in state.model.named_parameters()]
    moments = [(f"m/{k}", v) for k, v in state.optimizer.m.items()]
    moments += [(f"v/{k}", v) for k, v in state.optimizer.v.items()]
    body = (CHECKPOINT_MAGIC + struct.pack("<H", CHECKPOINT_VERSION)
            + struct.pack("<I", len(js)) + js + _encode_records(params) + _encode_records(moments))
    return body + struct.pack("<I", zlib.crc32(body) & 0xFFFFFFFF)


def save_checkpoint(state: TrainState, path) -> None:
    Path(path).write_bytes(checkpoint_bytes(state))


def parse_checkpoint(blob: bytes, expected_config: ModelConfig | None = None) -> TrainState:
    if len(blob) < len(CHECKPOINT_MAGIC) + 6 or not blob.startswith(CHECKPOINT_MAGIC):
        raise CorruptCheckpointError("corrupt checkpoint: bad magic or truncated header")
    (crc,) = struct.unpack("<I", blob[-4:])
    if zlib.crc32(blob[:-4]) & 0xFFFFFFFF != crc:
        raise CorruptCheckpointError("corrupt checkpoint: checksum mismatch")
    r = _Reader(blob[:-4])
    r.take(len(CHECKPOINT_MAGIC))
    (version,) = r.unpack("<H")
    if version != CHECKPOINT_VERSION:
        raise CheckpointVersionError(
            f"checkpoint format version {version} unsupported (expected {CHECKPOINT_VERSION})")
    (jlen,) = r.unpack("<I")
    header = json.loads(r.take(jlen).decode("utf-8"))
    cfg_dict = header["model_config"]
    if expected_config is not None:
        diff = first_difference(expected_config.to_dict(), cfg_dict)
        if diff is not None:
            exp_v, got_v = _lookup(expected_config.to_dict(), diff), _lookup(cfg_dict, diff)
            raise ConfigMismatchError(diff, exp_v, got_v)
    cfg = ModelConfig.from_dict(cfg_dict)
    params = r.records()
    moments = r.records()
    if r.off != len(r.blob):
        raise CorruptCheckpointError("corrupt checkpoint: trailing bytes")

    state = init_state(cfg)
    state.model.load_state_dict(dict(params))
    mom = dict(moments)
    for k in state.optimizer.m:
        state.optimizer.m[k] = mom[f"m/{k}"].copy()
        state.optimizer.v[k] = mom[f"v/{k}"].copy()
    ts = header["training_state"]
    state.step = int(ts["step"])
    state.optimizer.step = int(ts["adam_step"])
    state.rng.bit_generator.state = ts["rng"]
    return state


def _lookup(d, dotted):
    cur = d
    for part in dotted.split("."):
        if not isinstance(cur, dict) or part not in cur:
            return None
        cur = cur[part]
    return cur


def load_checkpoint(path, expected_config: ModelConfig | None = None) -> TrainState:
    p = Path(path)
    if not p.is_file():
        raise FileNotFoundError(f"checkpoint not found: {p}")
    return parse_checkpoint(p.read_bytes(), expected_config)
