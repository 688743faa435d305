"""Command-line frontend: offline rendering, the live service, benchmarks."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import bench as bench_mod
from .engine import Engine, EngineConfig, render_offline
from .eventlog import write_event_log
from .notes import SCALES, ConfigError, parse_pitch_class
from .service import AudioUnavailableError, SessionServer
from .video_io import SourceDescriptor, SourceError, open_source
from .wavefile import WavSpec, write_wav


def _add_engine_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=0, help="session seed (default 0)")
    p.add_argument("--sample-rate", type=int, default=48000)
    p.add_argument("--root", default="C", help="scale root, e.g. C, F#, Bb")
    p.add_argument("--scale", choices=sorted(SCALES), default="major")
    p.add_argument("--attack", type=float, default=0.08, metavar="S")
    p.add_argument("--release", type=float, default=0.6, metavar="S")
    p.add_argument("--q-max", type=float, default=1000.0)


def _config_from_args(args, fps: float) -> EngineConfig:
    return EngineConfig(
        sample_rate=float(args.sample_rate),
        fps=fps,
        session_seed=args.seed,
        root_pitch_class=parse_pitch_class(args.root),
        scale_intervals=SCALES[args.scale],
        q_max=args.q_max,
        attack_s=args.attack,
        release_s=args.release,
    )


def _open_input(path: Path, fps: float):
    if path.is_dir():
        desc = SourceDescriptor(kind="images", path=path, declared_fps=fps)
    elif path.suffix.lower() == ".y4m":
        desc = SourceDescriptor(kind="y4m", path=path, declared_fps=fps)
    else:
        raise SourceError(f"{path}: expected a frame directory or a .y4m file")
    return open_source(desc)


def cmd_render(args) -> int:
    stream = _open_input(Path(args.input), args.fps or 30.0)
    fps = args.fps or getattr(stream, "fps", 30.0)
    engine = Engine(_config_from_args(args, fps), record_env_trace=True)
    output = render_offline(engine, stream)
    write_wav(args.out, output.audio, WavSpec(sample_rate=args.sample_rate,
                                              format=args.format))
    print(f"wrote {args.out}: {len(output.audio)} samples @ {args.sample_rate} Hz, "
          f"{len(output.events)} events, {output.clip_count} clipped")
    if args.events:
        write_event_log(args.events, output.events)
        print(f"wrote {args.events}")
    if args.report:
        from .report import render_report

        for p in render_report(output, fps, args.report):
            print(f"wrote {p}")
    return 0


def cmd_serve(args) -> int:
    host, _, port = args.listen.rpartition(":")
    if not host or not port.isdigit():
        raise ConfigError(f"--listen expects host:port, got {args.listen!r}")
    config = _config_from_args(args, fps=30.0)
    server = SessionServer(host, int(port), config,
                           audio="none" if args.no_audio else "default")
    print(f"listening on {server.host}:{server.port} "
          f"({'silent' if args.no_audio else 'audio on default device'})")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        print("bye")
    return 0


def cmd_bench(args) -> int:
    result = bench_mod.run_benchmark(frames=args.frames, voices=args.voices)
    print(bench_mod.format_result(result))
    if args.json:
        Path(args.json).write_text(json.dumps(result.__dict__, indent=2) + "\n")
    ok = result.within_budget()
    print("budget: " + ("PASS" if ok else "FAIL") + " (mean < 33 ms, p99 < 50 ms, 0 buffer allocs)")
    return 0 if ok else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="motiontone",
        description="Video-driven noise synth: render video to audio offline "
                    "or serve a live motion-controlled session.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    render = sub.add_parser("render", help="render a video source to WAV")
    render.add_argument("--input", required=True, help="frame directory or .y4m file")
    render.add_argument("--fps", type=float, default=None,
                        help="frame rate (default: from source, else 30)")
    render.add_argument("--out", required=True, help="output WAV path")
    render.add_argument("--events", default=None, help="write JSONL note events here")
    render.add_argument("--format", choices=("pcm16", "float32"), default="pcm16")
    render.add_argument("--report", default=None, metavar="DIR",
                        help="write waveform/spectrogram/event figures here")
    _add_engine_flags(render)
    render.set_defaults(func=cmd_render)

    serve = sub.add_parser("serve", help="run the live session service")
    serve.add_argument("--listen", default="127.0.0.1:9473", metavar="ADDR:PORT")
    serve.add_argument("--no-audio", action="store_true",
                       help="run silent (no output device needed)")
    _add_engine_flags(serve)
    serve.set_defaults(func=cmd_serve)

    bench = sub.add_parser("bench", help="measure the per-frame latency budget")
    bench.add_argument("--frames", type=int, default=300)
    bench.add_argument("--voices", type=int, default=8)
    bench.add_argument("--json", default=None, help="dump the result as JSON")
    bench.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (SourceError, ConfigError, AudioUnavailableError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
