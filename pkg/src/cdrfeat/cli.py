"""Command-line front end: ``cdrfeat {extract,enhance,synth,stream,report}``.

Exit codes: 0 success, 1 configuration error, 2 I/O error, 3 numerical failure.
"""
import argparse
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path
import sys

import numpy as np

from . import config as cfgfile
from .coherence import diffuse_coherence_model, long_term_coherence
from .io import WavError, read_wav, write_features, write_heatmap, write_wav
from .pipeline import (FEATURES, PRESETS, ConfigError, FeatureStream, NumericalError, PipelineConfig,
                       enhance_signal, extract_frames, postprocess)
from .stft import analyze_array
from .synth import SynthConfig, broadband_power, diffuse_noise_pair, mix_at_cdr, plane_wave_pair, white_source

EXIT_OK, EXIT_CONFIG, EXIT_IO, EXIT_NUMERIC = 0, 1, 2, 3

_SUFFIX = {"binary": ".cdrfeat", "csv": ".csv"}


def _add_pipeline_flags(p, with_post=True):
    p.add_argument("--config", help="key=value config file (default: $CDRFEAT_CONFIG)")
    p.add_argument("--preset", choices=sorted(PRESETS))
    p.add_argument("--features", help=f"comma list from {','.join(FEATURES)}")
    p.add_argument("--deltas", type=int, choices=(0, 1, 2))
    if with_post:
        p.add_argument("--mvn", action=argparse.BooleanOptionalAction, default=None)
        p.add_argument("--splice", type=int)
    p.add_argument("--d", type=float, help="microphone spacing in metres")
    p.add_argument("--lambda", dest="lambda", type=float, help="recursive averaging forgetting factor")
    p.add_argument("--gmin", type=float, help="gain floor")
    p.add_argument("--mu", type=float, help="overestimation factor")
    p.add_argument("--sample-rate", dest="sample_rate", type=int)
    p.add_argument("--n-mel", dest="n_mel", type=int)
    p.add_argument("--fmin", type=float)
    p.add_argument("--fmax", type=float)
    p.add_argument("--format", choices=("binary", "csv"))


def _settings(args) -> dict:
    file_settings = cfgfile.load_config_file(getattr(args, "config", None))
    flags = {k: getattr(args, k) for k in cfgfile.KEYS if hasattr(args, k)}
    return cfgfile.merge(file_settings, flags)


def _out_path(inp: Path, out: str, fmt: str, many: bool) -> Path:
    if many or (out and Path(out).is_dir()):
        return Path(out) / (inp.stem + _SUFFIX[fmt])
    return Path(out) if out else inp.with_suffix(_SUFFIX[fmt])


def _check_channels(cfg: PipelineConfig, channels: int):
    if cfg.needs_two_channels and channels != 2:
        spatial = [f for f in cfg.features if f != "logmelspec"]
        raise ConfigError(f"features {spatial} require a two-channel (stereo) input; "
                          f"got {channels} channel(s)")


def extract_file(inp, out, cfg: PipelineConfig, fmt: str, heatmap=None):
    spec, x = read_wav(inp, expected_rate=cfg.analysis.sample_rate_hz)
    _check_channels(cfg, spec.channels)
    frames = extract_frames(x, cfg)
    if heatmap:
        stem = Path(heatmap)
        for name, _ in frames.layout:
            write_heatmap(frames.block(name), stem.with_name(f"{stem.stem}_{name}.pgm"))
    matrix = postprocess(frames, cfg)
    if not np.all(np.isfinite(matrix.data)):
        raise NumericalError(f"{inp}: non-finite feature value")
    write_features(matrix, out, fmt, cfg.digest())
    return matrix.n_frames, matrix.total_dim


def _run(fn, *a):
    try:
        fn(*a)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (WavError, OSError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


def _extract_job(job):
    inp, out, cfg, fmt, heatmap = job
    return _run(extract_file, inp, out, cfg, fmt, heatmap)


def cmd_extract(args) -> int:
    try:
        s = _settings(args)
        cfg = cfgfile.build_pipeline_config(s)
        inputs = args.inputs or ([s["in"]] if "in" in s else [])
        if not inputs:
            raise ConfigError("no input given (--in)")
        fmt = s.get("format", "binary")
        out = s.get("out", args.out)
        many = len(inputs) > 1
        if many and not out:
            raise ConfigError("--out must name a directory when several inputs are given")
        if many:
            Path(out).mkdir(parents=True, exist_ok=True)
        jobs = [(p, _out_path(Path(p), out, fmt, many), cfg, fmt,
                 None if many else s.get("heatmap")) for p in inputs]
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    n_jobs = s.get("jobs", 1)
    if n_jobs > 1 and many:
        with ProcessPoolExecutor(max_workers=n_jobs) as pool:
            codes = list(pool.map(_extract_job, jobs))
    else:
        codes = [_extract_job(j) for j in jobs]
    return max(codes)


def cmd_enhance(args) -> int:
    def work():
        s = _settings(args)
        cfg = cfgfile.build_pipeline_config(s)
        spec, x = read_wav(args.inputs[0] if args.inputs else s["in"],
                           expected_rate=cfg.analysis.sample_rate_hz)
        if spec.channels != 2:
            raise ConfigError("enhancement requires a two-channel (stereo) input")
        y, mean_d = enhance_signal(x, cfg)
        if not np.all(np.isfinite(y)):
            raise NumericalError("non-finite output sample")
        write_wav(s.get("out", args.out), y, spec.sample_rate_hz, "float32")
        if args.diffuseness_csv:
            period = cfg.analysis.frame_period_s
            lines = ["frame,time_s,mean_diffuseness"]
            lines += [f"{i},{i * period:.6f},{v:.9g}" for i, v in enumerate(mean_d)]
            Path(args.diffuseness_csv).write_text("\n".join(lines) + "\n")
    return _run(work)


def cmd_synth(args) -> int:
    def work():
        try:
            cfg = SynthConfig(duration_s=args.duration, snr_db=args.snr_db, doa_deg=args.doa,
                              n_diffuse_waves=args.waves, seed=args.seed,
                              mic_spacing_m=args.d, sound_speed_mps=args.sound_speed,
                              sample_rate_hz=args.sample_rate)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        if args.coherent_only and args.diffuse_only:
            raise ConfigError("--coherent-only and --diffuse-only are exclusive")
        coherent = diffuse = None
        if not args.diffuse_only:
            coherent = plane_wave_pair(white_source(cfg), cfg)
        if not args.coherent_only:
            diffuse = diffuse_noise_pair(cfg)
        if coherent is None:
            x = diffuse
        elif diffuse is None:
            x = coherent
        else:
            x = mix_at_cdr(coherent, diffuse, cfg.snr_db)
            diffuse = x - coherent
        x = x * args.gain
        peak = np.max(np.abs(x)) if x.size else 0.0
        if args.wav_format != "float32" and peak >= 1.0:
            raise NumericalError(f"peak {peak:.3f} would clip in {args.wav_format}; lower --gain")
        write_wav(args.out, x, cfg.sample_rate_hz, args.wav_format)
        p_c = broadband_power(coherent * args.gain) if coherent is not None else 0.0
        p_d = broadband_power(diffuse * args.gain) if diffuse is not None else 0.0
        print(f"coherent_power={p_c:.6g} diffuse_power={p_d:.6g}")
    return _run(work)


def _open_stdin():
    return sys.stdin.buffer


def cmd_stream(args) -> int:
    try:
        s = _settings(args)
        cfg = cfgfile.build_pipeline_config(s)
        if cfg.mvn or cfg.splice:
            # utterance-level steps have no streaming equivalent
            print("note: mvn/splice are ignored in stream mode", file=sys.stderr)
            cfg = replace(cfg, mvn=False, splice=0)
        if args.channels not in (1, 2):
            raise ConfigError("--channels must be 1 or 2")
        fs = FeatureStream(cfg, args.channels)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    fmt = s.get("format", "binary")
    out = sys.stdout.buffer
    frame_bytes = 2 * args.channels
    chunk_bytes = frame_bytes * cfg.analysis.hop_samples
    stdin = _open_stdin()
    leftover = b""

    def emit(rows):
        for row in rows:
            if not np.all(np.isfinite(row)):
                raise NumericalError("non-finite feature value")
            if fmt == "binary":
                out.write(row.astype("<f4").tobytes())
            else:
                out.write((",".join(f"{v:.9g}" for v in row.astype(np.float32).astype(np.float64))
                           + "\n").encode())
        if rows:
            out.flush()

    try:
        while True:
            data = stdin.read(chunk_bytes)
            if not data:
                break
            data = leftover + data
            usable = len(data) - len(data) % frame_bytes
            leftover = data[usable:]
            if usable:
                pcm = np.frombuffer(data[:usable], dtype="<i2").reshape(-1, args.channels).T
                emit(fs.push(pcm.astype(np.float64) / 32768.0))
        if leftover:
            print("I/O error: stream ended inside a sample frame", file=sys.stderr)
            return EXIT_IO
        emit(fs.finish())
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


def cmd_report(args) -> int:
    def work():
        from . import plotting

        s = _settings(args)
        base = cfgfile.build_pipeline_config(s)
        cfg = replace(base, features=FEATURES, deltas=0, mvn=False, splice=0)
        spec, x = read_wav(args.inputs[0] if args.inputs else s["in"],
                           expected_rate=cfg.analysis.sample_rate_hz)
        if spec.channels != 2:
            raise ConfigError("report requires a two-channel (stereo) input")
        outdir = Path(args.outdir)
        outdir.mkdir(parents=True, exist_ok=True)
        frames = extract_frames(x, cfg)
        write_features(frames, outdir / "features.csv", "csv", cfg.digest())
        plotting.plot_feature_panels(frames, outdir / "features.png")
        for name, _ in frames.layout:
            write_heatmap(frames.block(name), outdir / f"{name}.pgm")

        freqs = cfg.analysis.bin_freqs()
        gamma = long_term_coherence(analyze_array(x, cfg.analysis))
        model = diffuse_coherence_model(freqs, cfg.coherence)
        rows = ["freq_hz,coherence_re,coherence_im,diffuse_model"]
        rows += [f"{f:.6g},{g.real:.9g},{g.imag:.9g},{m:.9g}" for f, g, m in zip(freqs, gamma, model)]
        (outdir / "coherence.csv").write_text("\n".join(rows) + "\n")
        plotting.plot_coherence(freqs, gamma, model, outdir / "coherence.png")

        mean_d = frames.block("meldiffuseness").mean(axis=1)
        plotting.plot_diffuseness_trace(frames.frame_period_s, mean_d, outdir / "diffuseness.png")
        print(f"wrote report for {frames.n_frames} frames to {outdir}")
    return _run(work)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cdrfeat", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("extract", help="compute feature files from WAV input")
    p.add_argument("--in", dest="inputs", nargs="+", metavar="WAV")
    p.add_argument("--out", help="feature file, or directory for several inputs")
    p.add_argument("--heatmap", help="write one PGM per feature block, named <stem>_<feature>.pgm")
    p.add_argument("--jobs", type=int, help="parallel files")
    _add_pipeline_flags(p)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("enhance", help="coherence-based spectral subtraction of a stereo WAV")
    p.add_argument("--in", dest="inputs", nargs=1, metavar="WAV")
    p.add_argument("--out", required=True)
    p.add_argument("--diffuseness-csv", help="also write the per-frame mean diffuseness")
    _add_pipeline_flags(p, with_post=False)
    p.set_defaults(func=cmd_enhance)

    p = sub.add_parser("synth", help="generate a synthetic plane-wave / diffuse WAV")
    p.add_argument("--out", required=True)
    p.add_argument("--duration", type=float, default=10.0)
    p.add_argument("--snr-db", type=float, default=0.0)
    p.add_argument("--doa", type=float, default=90.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--waves", type=int, default=128)
    p.add_argument("--d", type=float, default=0.08)
    p.add_argument("--sound-speed", type=float, default=343.0)
    p.add_argument("--sample-rate", type=int, default=16000)
    p.add_argument("--gain", type=float, default=0.1, help="output scale (keeps PCM16 from clipping)")
    p.add_argument("--wav-format", choices=("pcm16", "pcm32", "float32"), default="pcm16")
    group = p.add_mutually_exclusive_group()
    group.add_argument("--diffuse-only", action="store_true")
    group.add_argument("--coherent-only", action="store_true")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("stream", help="features from raw PCM16 on stdin, one frame per hop on stdout")
    p.add_argument("--channels", type=int, default=2)
    _add_pipeline_flags(p, with_post=False)
    p.set_defaults(func=cmd_stream)

    p = sub.add_parser("report", help="features CSV plus figures for one stereo WAV")
    p.add_argument("--in", dest="inputs", nargs=1, metavar="WAV")
    p.add_argument("--outdir", required=True)
    _add_pipeline_flags(p, with_post=False)
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
