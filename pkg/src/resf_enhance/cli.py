"""Command-line entry point.

Exit codes: 0 success, 1 validation error, 2 I/O error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import platform
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, PipelineConfig, load_config
from .dsp import Waveform, padded_stft
from .enhance import MaskEnhancer, enhance_signal, oracle_enhance
from .evaluation import AsrError, EvalError, evaluate, read_transcripts, run_asr
from .simulate import NINE_SNRS_DB, SimulationError, band_energy_ratio, global_snr_db, make_triplet
from .stream import IdentityEnhancer, StreamError
from .synth import ego_voice, harmonic_utterance
from .twomask import MaskError, ModelFormatError, ToyGenerator, ToyTrainingError, load_model, save_model, toy_train
from .wavio import WavFormatError, read_wav, write_wav

log = logging.getLogger("resf_enhance")

EXIT_OK, EXIT_VALIDATION, EXIT_IO, EXIT_NUMERIC = 0, 1, 2, 3

TRIPLET_SUFFIXES = (".distortion.wav", ".target.wav", ".mixture.wav")


class CliError(Exception):
    def __init__(self, message: str, code: int = EXIT_VALIDATION):
        super().__init__(message)
        self.code = code


def _sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_run_manifest(path, command: str, cfg: PipelineConfig, inputs, outputs, extra=None) -> None:
    """Sidecar JSON recording what produced an output, for reproducibility."""
    manifest = {
        "command": command,
        "config_sha256": cfg.digest(),
        "config": cfg.model_dump(mode="json"),
        "inputs": {str(p): _sha256(p) for p in inputs},
        "outputs": {str(p): _sha256(p) for p in outputs},
        "versions": {
            "resf_enhance": __version__,
            "numpy": np.__version__,
            "python": platform.python_version(),
        },
    }
    if extra:
        manifest.update(extra)
    Path(path).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _load_cfg(args) -> PipelineConfig:
    cfg = load_config(args.config)
    if getattr(args, "seed", None) is not None:
        cfg = cfg.model_copy(update={"toy": cfg.toy.model_copy(update={"seed": args.seed})})
    return cfg


def _read(path, cfg: PipelineConfig) -> Waveform:
    path = Path(path)
    if not path.is_file():
        raise CliError(f"cannot read {path}: no such file", EXIT_IO)
    try:
        return read_wav(path, cfg.sample_rate)
    except WavFormatError as exc:
        raise CliError(str(exc), EXIT_IO) from None


def _write(path, wav: Waveform) -> None:
    try:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        write_wav(path, wav)
    except OSError as exc:
        raise CliError(f"cannot write {path}: {exc}", EXIT_IO) from None


# -- simulate -------------------------------------------------------------------


def read_manifest(path, snr_sweep: bool) -> list[tuple[int, Path, Path, list[float]]]:
    """Rows of ``human_path,ego_path,snr_db`` (CSV with header). Relative
    paths resolve against the manifest's directory."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise CliError(f"cannot read manifest {path}: {exc}", EXIT_IO) from None
    rows = []
    reader = csv.reader(text.splitlines())
    header = next(reader, None)
    if header is None:
        return rows
    if [h.strip() for h in header] != ["human_path", "ego_path", "snr_db"]:
        raise CliError(f"{path}:1: header must be 'human_path,ego_path,snr_db'")
    for lineno, row in enumerate(reader, 2):
        if not row or not "".join(row).strip():
            continue
        if len(row) != 3:
            raise CliError(f"{path}:{lineno}: expected 3 fields, got {len(row)}")
        human, ego, snr = (field.strip() for field in row)
        if not human or not ego:
            raise CliError(f"{path}:{lineno}: empty path")
        if snr_sweep and not snr:
            snrs = list(NINE_SNRS_DB)
        else:
            try:
                value = float(snr)
            except ValueError:
                raise CliError(f"{path}:{lineno}: snr_db {snr!r} is not a number") from None
            if not np.isfinite(value):
                raise CliError(f"{path}:{lineno}: snr_db must be finite")
            snrs = list(NINE_SNRS_DB) if snr_sweep else [value]
        rows.append((lineno, path.parent / human, path.parent / ego, snrs))
    return rows


def cmd_simulate(args) -> int:
    cfg = _load_cfg(args)
    rows = read_manifest(args.manifest, args.snr_sweep)
    out_dir = Path(args.out)
    if not rows:
        log.warning("manifest %s has no rows; nothing written", args.manifest)
        return EXIT_OK
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise CliError(f"cannot create {out_dir}: {exc}", EXIT_IO) from None
    band = cfg.ffr.bin_mask(cfg.stft.n_fft, cfg.sample_rate)
    inputs, outputs = set(), []
    for lineno, human_path, ego_path, snrs in rows:
        human = _read(human_path, cfg)
        ego = _read(ego_path, cfg)
        inputs.update([human_path, ego_path])
        for snr in snrs:
            try:
                triplet = make_triplet(human, ego, snr, cfg.subtraction, cfg.ffr, cfg.stft)
            except SimulationError as exc:
                raise CliError(f"{args.manifest}:{lineno}: {exc}") from None
            stem = out_dir / f"{lineno - 1:04d}_{human_path.stem}_snr{snr:g}"
            members = (triplet.distortion, triplet.target, triplet.mixture)
            for suffix, wav in zip(TRIPLET_SUFFIXES, members):
                _write(f"{stem}{suffix}", wav)
                outputs.append(Path(f"{stem}{suffix}"))
            noise = triplet.mixture.samples - human.samples
            achieved = global_snr_db(human.samples, noise) if np.any(noise) else float("inf")
            try:
                ratio = band_energy_ratio(triplet.distortion.samples, human.samples, band, cfg.stft)
            except SimulationError:
                ratio = float("nan")
            print(f"row {lineno}\t{stem.name}\tsnr_target={snr:g}\tsnr_achieved={achieved:.4f}\tffr_energy_ratio={ratio:.4f}")
    write_run_manifest(out_dir / "run-manifest.json", "simulate", cfg, sorted(inputs), outputs)
    return EXIT_OK


# -- enhance ----------------------------------------------------------------------


def cmd_enhance(args) -> int:
    cfg = _load_cfg(args)
    noisy = _read(args.input, cfg)
    kind, _, arg = args.generator.partition(":")
    inputs = [Path(args.input)]
    if kind == "identity":
        y = enhance_signal(noisy.samples, IdentityEnhancer(), cfg.geometry, args.streaming)
    elif kind == "oracle":
        if not arg:
            raise CliError("oracle generator needs a target: --generator oracle:<target.wav>")
        target = _read(arg, cfg)
        inputs.append(Path(arg))
        if len(target) != len(noisy):
            raise CliError(f"length mismatch: input has {len(noisy)} samples, target {len(target)}")
        y = oracle_enhance(noisy.samples, target.samples, cfg.geometry, args.streaming, cfg.stft, cfg.ffr)
    elif kind == "toy":
        model_path = Path(arg or cfg.model.path)
        if not arg and not cfg.model.path:
            raise CliError("toy generator needs a model: --generator toy:<model.bin>")
        if not model_path.is_file():
            raise CliError(f"model file not found: {model_path}", EXIT_IO)
        try:
            model = load_model(model_path)
        except ModelFormatError as exc:
            raise CliError(str(exc), EXIT_IO) from None
        inputs.append(model_path)
        enhancer = MaskEnhancer(ToyGenerator(model), cfg.stft, cfg.ffr, cfg.sample_rate)
        y = enhance_signal(noisy.samples, enhancer, cfg.geometry, args.streaming)
    else:
        raise CliError(f"unknown generator {args.generator!r}; use identity, oracle:<wav> or toy:<model>")
    if not np.all(np.isfinite(y)):
        raise CliError("enhancement produced non-finite samples", EXIT_NUMERIC)
    out = Path(args.output)
    _write(out, Waveform(y, noisy.sample_rate))
    write_run_manifest(
        out.with_name(out.name + ".run.json"), "enhance", cfg, inputs, [out],
        {"generator": kind, "streaming": bool(args.streaming)},
    )
    return EXIT_OK


# -- train-toy --------------------------------------------------------------------


def find_triplets(directory) -> list[tuple[Path, Path]]:
    directory = Path(directory)
    if not directory.is_dir():
        raise CliError(f"not a directory: {directory}", EXIT_IO)
    pairs = []
    for dist in sorted(directory.glob("*.distortion.wav")):
        target = dist.with_name(dist.name[: -len(".distortion.wav")] + ".target.wav")
        if target.is_file():
            pairs.append((dist, target))
    return pairs


def cmd_train_toy(args) -> int:
    cfg = _load_cfg(args)
    hyper = cfg.toy
    if args.epochs is not None:
        hyper = hyper.model_copy(update={"epochs": args.epochs})
    files = find_triplets(args.triplet_dir)
    if not files:
        raise CliError(f"no *.distortion.wav / *.target.wav pairs in {args.triplet_dir}")
    p = cfg.stft.magnitude_exponent
    pairs = []
    for dist_path, target_path in files:
        dist, target = _read(dist_path, cfg), _read(target_path, cfg)
        if len(dist) != len(target):
            raise CliError(f"{dist_path}: length differs from its target")
        if len(dist) < cfg.stft.n_fft:
            raise CliError(f"{dist_path}: shorter than one STFT frame")
        pairs.append((np.abs(padded_stft(dist.samples, cfg.stft)) ** p, np.abs(padded_stft(target.samples, cfg.stft)) ** p))

    def report(epoch, loss):
        print(f"{epoch}\t{loss:.12e}", flush=True)

    try:
        model, losses = toy_train(pairs, cfg.ffr, hyper, cfg.sample_rate, on_epoch=report)
    except ToyTrainingError as exc:
        raise CliError(str(exc), EXIT_NUMERIC) from None
    out = Path(args.model_out)
    try:
        out.parent.mkdir(parents=True, exist_ok=True)
        save_model(model, out)
    except OSError as exc:
        raise CliError(f"cannot write {out}: {exc}", EXIT_IO) from None
    inputs = [p for pair in files for p in pair]
    write_run_manifest(out.with_name(out.name + ".run.json"), "train-toy", cfg, inputs, [out], {"losses": losses})
    return EXIT_OK


# -- eval -------------------------------------------------------------------------


def cmd_eval(args) -> int:
    cfg = _load_cfg(args)
    try:
        refs = read_transcripts(args.reference)
    except OSError as exc:
        raise CliError(f"cannot read {args.reference}: {exc}", EXIT_IO) from None
    inputs = [Path(args.reference)]
    if args.hypothesis:
        try:
            hyps = read_transcripts(args.hypothesis)
        except OSError as exc:
            raise CliError(f"cannot read {args.hypothesis}: {exc}", EXIT_IO) from None
        inputs.append(Path(args.hypothesis))
    else:
        template = args.asr_command or cfg.asr.command
        if not template or not args.wav_dir:
            raise CliError("give a hypothesis file, or --wav-dir with --asr-command (or asr.command in config)")
        wav_dir = Path(args.wav_dir)
        hyps = {}
        for uid in sorted(refs):
            wav = wav_dir / f"{uid}.wav"
            if not wav.is_file():
                continue
            try:
                hyps[uid] = run_asr(wav, template, uid)
            except AsrError as exc:
                raise CliError(str(exc), EXIT_IO) from None
            inputs.append(wav)
    report = evaluate(refs, hyps)
    print(report.format_table())
    if args.report:
        out = Path(args.report)
        try:
            out.parent.mkdir(parents=True, exist_ok=True)
            report.write_csv(out)
        except OSError as exc:
            raise CliError(f"cannot write {out}: {exc}", EXIT_IO) from None
        write_run_manifest(out.with_name(out.name + ".run.json"), "eval", cfg, inputs, [out], {"summary": report.summary()})
    return EXIT_OK


# -- utilities ----------------------------------------------------------------------


def cmd_dump_config(args) -> int:
    text = _load_cfg(args).to_toml()
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_synth(args) -> int:
    """Write a small synthetic human/ego corpus plus a simulate manifest."""
    cfg = _load_cfg(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(args.seed if args.seed is not None else cfg.toy.seed)
    lines = ["human_path,ego_path,snr_db"]
    for i in range(args.count):
        human = harmonic_utterance(rng, args.duration, cfg.sample_rate)
        ego = ego_voice(rng, args.duration, cfg.sample_rate)
        _write(out / f"human_{i:03d}.wav", human)
        _write(out / f"ego_{i:03d}.wav", ego)
        lines.append(f"human_{i:03d}.wav,ego_{i:03d}.wav,{args.snr:g}")
    (out / "manifest.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    print(f"wrote {args.count} pairs and {out / 'manifest.csv'}")
    return EXIT_OK


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    uvicorn.run(create_app(_load_cfg(args)), host=args.host, port=args.port)
    return EXIT_OK


def cmd_stream_remote(args) -> int:
    """Stream a WAV file through a running service session, buffer by buffer."""
    import httpx

    cfg = _load_cfg(args)
    wav = _read(args.input, cfg)
    try:
        with httpx.Client(base_url=args.url, timeout=60.0) as client:
            body = {"generator": "toy" if args.model else "identity", "model_path": args.model}
            info = client.post("/sessions", json=body).raise_for_status().json()
            n = info["buffer_len"]
            x = wav.samples
            tail = (-len(x)) % n
            x = np.concatenate([x, np.zeros(tail)])
            chunks = []
            for start in range(0, len(x), n):
                r = client.post(f"/sessions/{info['session_id']}/buffers", json={"samples": x[start : start + n].tolist()})
                block = r.raise_for_status().json()
                if block["emitted"]:
                    chunks.append(np.asarray(block["samples"]))
            last = client.post(f"/sessions/{info['session_id']}/flush").raise_for_status().json()
            if last["emitted"]:
                chunks.append(np.asarray(last["samples"]))
            client.delete(f"/sessions/{info['session_id']}")
    except httpx.HTTPError as exc:
        raise CliError(f"service request failed: {exc}", EXIT_IO) from None
    y = np.concatenate(chunks) if chunks else np.zeros(0)
    _write(args.output, Waveform(y[: len(wav)], wav.sample_rate))
    return EXIT_OK


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on usage errors, which here means I/O failure
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_VALIDATION, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="resf-enhance",
        description="Simulate, enhance, train and evaluate two-mask restoration of oversubtracted speech.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    common = _Parser(add_help=False)
    common.add_argument("--config", help="TOML pipeline config")
    common.add_argument("--seed", type=int, help="override toy.seed")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", parents=[common], help="generate distortion/target/mixture trios from a manifest")
    p.add_argument("manifest")
    p.add_argument("--out", required=True, help="directory for the generated WAV trios")
    p.add_argument("--snr-sweep", action="store_true", help="mix every row at the nine SNRs 40..0 dB")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("enhance", parents=[common], help="enhance one WAV file")
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("--generator", default="identity", help="identity | oracle:<target.wav> | toy:<model.bin>")
    p.add_argument("--streaming", action="store_true", help="incremental processing, buffer by buffer")
    p.set_defaults(func=cmd_enhance)

    p = sub.add_parser("train-toy", parents=[common], help="train the linear FFR compensation model")
    p.add_argument("triplet_dir")
    p.add_argument("model_out")
    p.add_argument("--epochs", type=int, help="override toy.epochs")
    p.set_defaults(func=cmd_train_toy)

    p = sub.add_parser("eval", parents=[common], help="WER report against reference transcripts")
    p.add_argument("reference", help="transcript file, one <id><TAB><text> per line")
    p.add_argument("hypothesis", nargs="?", help="hypothesis transcripts (omit when using --asr-command)")
    p.add_argument("--asr-command", help="external ASR, e.g. 'whisper-cli {audio}'")
    p.add_argument("--wav-dir", help="directory of <utterance_id>.wav files for --asr-command")
    p.add_argument("--report", help="write the per-file table as CSV here")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("dump-config", parents=[common], help="print the effective config as TOML")
    p.add_argument("--out", help="write to this file instead of stdout")
    p.set_defaults(func=cmd_dump_config)

    p = sub.add_parser("synth", parents=[common], help="write a synthetic human/ego corpus")
    p.add_argument("--out", required=True, help="corpus directory (WAVs plus manifest.csv)")
    p.add_argument("--count", type=int, default=4, help="number of human/ego pairs")
    p.add_argument("--duration", type=float, default=2.04, help="seconds per utterance")
    p.add_argument("--snr", type=float, default=0.0, help="SNR written to the manifest, in dB")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("serve", parents=[common], help="run the HTTP service")
    p.add_argument("--host", default="127.0.0.1", help="bind address")
    p.add_argument("--port", type=int, default=8000, help="bind port")
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("stream-remote", parents=[common], help="stream a WAV through a running service")
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("--url", default="http://127.0.0.1:8000", help="base URL of the service")
    p.add_argument("--model", help="server-side toy model path")
    p.set_defaults(func=cmd_stream_remote)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        log.error("%s", exc)
        return exc.code
    except (ConfigError, EvalError, MaskError, SimulationError, StreamError) as exc:
        log.error("%s", exc)
        return EXIT_VALIDATION
    except OSError as exc:
        log.error("%s", exc)
        return EXIT_IO
    except FloatingPointError as exc:
        log.error("numeric failure: %s", exc)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
