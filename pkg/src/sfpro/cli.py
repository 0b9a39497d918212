"""Command-line entry point: ``sfpro <subcommand> [flags]``.

Exit codes: 0 success, 1 usage error (bad flag, missing or invalid path),
2 runtime failure.
"""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_RUNTIME = 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}\n{self.format_usage()}")


# --------------------------------------------------------------------------- validation

def _existing_file(flag, value):
    if value is None:
        raise UsageError(f"missing value for {flag}")
    p = Path(value)
    if not p.is_file():
        raise UsageError(f"{flag}: no such file: {value}")
    return p


def _existing_dir(flag, value):
    p = Path(value)
    if not p.is_dir():
        raise UsageError(f"{flag}: no such directory: {value}")
    return p


def _output_file(flag, value):
    p = Path(value)
    if p.exists() and p.is_dir():
        raise UsageError(f"{flag}: is a directory: {value}")
    if not p.parent.exists():
        raise UsageError(f"{flag}: parent directory does not exist: {p.parent}")
    return p


def _positive(flag, value):
    if value < 1:
        raise UsageError(f"{flag} must be a positive integer, got {value}")
    return value


def _load_config(path):
    from .pipeline import ModelConfig

    if path is None:
        return ModelConfig()
    p = _existing_file("--config", path)
    try:
        raw = json.loads(p.read_text() or "{}")
        if not isinstance(raw, dict):
            raise ValueError("top level must be an object")
        return ModelConfig.from_dict(raw)
    except (ValueError, TypeError) as exc:
        raise UsageError(f"--config: {exc}") from exc


# --------------------------------------------------------------------------- subcommands

def cmd_synth_corpus(args):
    from .data import synth_corpus

    _positive("--speakers", args.speakers)
    _positive("--utts", args.utts)
    if args.speakers < 2:
        raise UsageError("--speakers must be at least 2")
    if args.duration <= 0:
        raise UsageError("--duration must be positive")
    out = Path(args.out)
    if out.exists() and not out.is_dir():
        raise UsageError(f"--out: not a directory: {out}")
    synth_corpus(args.speakers, args.utts, args.duration, args.seed, out)
    print(f"wrote {args.speakers} speakers x {args.utts} utterances to {out}")


def cmd_mix(args):
    from .data import mix_at_snr, read_wav, write_wav

    t = _existing_file("--target", args.target)
    i = _existing_file("--interferer", args.interferer)
    out = _output_file("--out", args.out)
    scaled = _output_file("--scaled-out", args.scaled_out) if args.scaled_out else None
    mixture, interferer = mix_at_snr(read_wav(t), read_wav(i), args.snr)
    write_wav(out, mixture)
    if scaled is not None:
        write_wav(scaled, interferer)
    print(f"wrote {out} ({len(mixture)} samples at {args.snr:g} dB)")


def cmd_build_manifest(args):
    from .data import build_manifest, write_manifest

    corpus = _existing_dir("--corpus", args.corpus)
    _positive("--count", args.count)
    if args.snr_min > args.snr_max:
        raise UsageError("--snr-min exceeds --snr-max")
    manifest = _output_file("--out", args.out)
    mix_dir = Path(args.mix_dir) if args.mix_dir else manifest.parent / (manifest.stem + "_mixtures")
    if mix_dir.exists() and not mix_dir.is_dir():
        raise UsageError(f"--mix-dir: not a directory: {mix_dir}")
    entries = build_manifest(corpus, args.count, args.snr_min, args.snr_max, args.seed, mix_dir)
    write_manifest(manifest, entries)
    print(f"wrote {len(entries)} entries to {manifest}")


def cmd_train(args):
    from .data import read_manifest
    from .pipeline import (VARIANTS, init_state, load_checkpoint, manifest_examples,
                           save_checkpoint, train)

    cfg = _load_config(args.config)
    if args.variant is not None:
        if args.variant not in VARIANTS:
            raise UsageError(f"--variant must be one of {sorted(VARIANTS)}")
        cfg = cfg.with_variant(args.variant)
    if args.seed is not None:
        cfg = replace(cfg, training=replace(cfg.training, seed=args.seed))
    if args.steps < 0:
        raise UsageError("--steps must be non-negative")
    manifest = _existing_file("--manifest", args.manifest)
    out = _output_file("--out", args.out)
    resume = _existing_file("--resume", args.resume) if args.resume else None

    entries = read_manifest(manifest)
    examples = manifest_examples(entries)
    if resume:
        # without explicit config flags the checkpoint's own config is used
        explicit = args.config is not None or args.variant is not None or args.seed is not None
        state = load_checkpoint(resume, expected_config=cfg if explicit else None)
    else:
        state = init_state(cfg)

    def log(step, loss):
        print(f"step {step} loss {loss:.6f}", file=sys.stderr)
    state = train(state, examples, args.steps, log=None if args.quiet else log,
                  log_every=args.log_every)
    save_checkpoint(state, out)
    print(f"saved {out} after {state.step} steps ({state.config.variant})")


def cmd_extract(args):
    from .data import read_wav, write_wav
    from .pipeline import extract, load_checkpoint

    mixture = _existing_file("--mixture", args.mixture)
    anchor = _existing_file("--anchor", args.anchor)
    ckpt = _existing_file("--checkpoint", args.checkpoint)
    out = _output_file("--out", args.out)
    est = extract(read_wav(mixture), read_wav(anchor), load_checkpoint(ckpt))
    write_wav(out, est)
    print(f"wrote {out}")


def cmd_evaluate(args):
    from .metrics import evaluate_manifest, format_table

    manifest = _existing_file("--manifest", args.manifest)
    if (args.checkpoint is None) == (args.estimates_dir is None):
        raise UsageError("give exactly one of --checkpoint or --estimates-dir")
    ckpts = [_existing_file("--checkpoint", c) for c in args.checkpoint or []]
    est = _existing_dir("--estimates-dir", args.estimates_dir) if args.estimates_dir else None
    report_path = _output_file("--report", args.report) if args.report else None
    table_path = _output_file("--table", args.table) if args.table else None

    if ckpts:
        from .pipeline import load_checkpoint
        reports = []
        for c in ckpts:
            state = load_checkpoint(c)
            label = state.config.variant
            if len(ckpts) > 1 and c.stem != label:
                label = f"{label} ({c.stem})"
            reports.append(evaluate_manifest(manifest, checkpoint=state, group_by=args.group_by,
                                             label=label))
    else:
        reports = [evaluate_manifest(manifest, estimates=est, group_by=args.group_by)]
    text = format_table(reports)
    sys.stdout.write(text)
    if report_path is not None:
        payload = reports[0].to_dict() if len(reports) == 1 else \
            {"reports": [dict(r.to_dict(), label=r.label) for r in reports]}
        report_path.write_text(json.dumps(payload, indent=2) + "\n")
    if table_path is not None:
        table_path.write_text(text)
    failed = sum(len(r.failed) for r in reports)
    if failed:
        print(f"{failed} entries failed", file=sys.stderr)
        if not any(r.entries for r in reports):
            return EXIT_RUNTIME
    return EXIT_OK


def cmd_gradcheck(args):
    from . import checks

    names = list(checks.KERNEL_CHECKS) if args.module == "all" else [args.module]
    if args.module not in ("all", "composed") and args.module not in checks.KERNEL_CHECKS:
        raise UsageError(f"--module must be 'all', 'composed' or one of {sorted(checks.KERNEL_CHECKS)}")
    ok = True
    if args.module != "composed":
        for name, err in checks.run_kernel_checks(names, seed=args.seed).items():
            passed = err < checks.KERNEL_TOLERANCE
            ok &= passed
            print(f"{name:<18} {err:.3e} {'ok' if passed else 'FAIL'}")
    if args.module == "composed" or args.composed:
        err = checks.check_composed(seed=args.seed)
        passed = err < checks.COMPOSED_TOLERANCE
        ok &= passed
        print(f"{'composed':<18} {err:.3e} {'ok' if passed else 'FAIL'}")
    return EXIT_OK if ok else EXIT_RUNTIME


def cmd_spectrogram(args):
    from .data import read_wav
    from .metrics import export_spectrogram

    cfg = _load_config(args.config).stft
    w = _existing_file("--input", args.input)
    out = _output_file("--out", args.out)
    png, dump = export_spectrogram(read_wav(w), cfg, out)
    print(f"wrote {png} and {dump}")


# --------------------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="sfpro", description="Anchor-guided target speaker extraction toolkit.")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    s = sub.add_parser("synth-corpus", help="write a synthetic multi-speaker corpus")
    s.add_argument("--speakers", type=int, required=True)
    s.add_argument("--utts", type=int, required=True)
    s.add_argument("--duration", type=float, default=1.024, help="seconds per utterance")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_synth_corpus)

    s = sub.add_parser("mix", help="mix two utterances at a given SNR")
    s.add_argument("--target", required=True)
    s.add_argument("--interferer", required=True)
    s.add_argument("--snr", type=float, required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--scaled-out", help="also write the scaled interferer")
    s.add_argument("--seed", type=int, default=0, help="accepted for uniformity; mixing is deterministic")
    s.set_defaults(func=cmd_mix)

    s = sub.add_parser("build-manifest", help="draw random mixtures from a corpus")
    s.add_argument("--corpus", required=True)
    s.add_argument("--count", type=int, required=True)
    s.add_argument("--snr-min", type=float, default=0.0)
    s.add_argument("--snr-max", type=float, default=5.0)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True, help="manifest path (JSON lines)")
    s.add_argument("--mix-dir", help="where mixtures are written (default: next to the manifest)")
    s.set_defaults(func=cmd_build_manifest)

    s = sub.add_parser("train", help="train an extractor on a manifest")
    s.add_argument("--manifest", required=True)
    s.add_argument("--out", required=True, help="checkpoint path")
    s.add_argument("--config")
    s.add_argument("--steps", type=int, default=100)
    s.add_argument("--variant", help="ri-waveunet, ri-plain, mag-waveunet or mag-plain")
    s.add_argument("--resume")
    s.add_argument("--seed", type=int)
    s.add_argument("--log-every", type=int, default=50)
    s.add_argument("--quiet", action="store_true")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("extract", help="extract the anchor speaker from a mixture")
    s.add_argument("--mixture", required=True)
    s.add_argument("--anchor", required=True)
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_extract)

    s = sub.add_parser("evaluate", help="SDR report over a manifest")
    s.add_argument("--manifest", required=True)
    s.add_argument("--checkpoint", nargs="+", help="one or more checkpoints (one table row each)")
    s.add_argument("--estimates-dir", help="directory of <mixture-stem>.wav estimates")
    s.add_argument("--group-by", choices=["pair", "speakers", "none"], default="pair")
    s.add_argument("--report", help="write the JSON report here")
    s.add_argument("--table", help="write the text table here")
    s.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("gradcheck", help="central-difference gradient checks")
    s.add_argument("--module", default="all")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--composed", action="store_true", help="also check the composed model")
    s.set_defaults(func=cmd_gradcheck)

    s = sub.add_parser("spectrogram", help="PNG and SFSPEC1 dump of a waveform")
    s.add_argument("--input", required=True)
    s.add_argument("--out", required=True, help="output base path")
    s.add_argument("--config")
    s.set_defaults(func=cmd_spectrogram)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError(parser.format_usage())
        code = args.func(args)
    except UsageError as exc:
        print(str(exc).rstrip(), file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:  # noqa: BLE001 - any runtime failure maps to exit 2
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK if code is None else code


if __name__ == "__main__":
    sys.exit(main())
