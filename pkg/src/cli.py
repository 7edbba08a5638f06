"""
Command-line entry point

    generate  write a seeded task stream CSV
    run       replay a stream (or drive a live cloud service) and write a trace CSV
    sweep     evaluate a list of window sizes on a stream and write the report CSV
    serve     run the loopback cloud service

All randomness comes from --seed. Exit status is 0 only when the requested
file was completely written (or, for serve, on a clean shutdown).
"""
from __future__ import annotations

import argparse
import logging
import os
import signal
import sys
import threading
from typing import List, Optional, Sequence

import config
from engine import EngineConfig, EngineError, OffloadEngine, SimulatedExecutor, Target, replay_engine, write_trace_csv
from logging_config import set_console_level, setup_logging
from metrics import MetricsError, decision_accuracy, format_report_table, residual_report, sweep, write_report_csv
from transport import CloudClient, RemoteExecutor, ServerConfig, parse_address, serve
from workload import (
    CostProfile,
    Disturbance,
    StreamFormatError,
    TargetProfile,
    calibrated_profile,
    generate_stream,
    read_stream_csv,
    summarize_stream,
    write_stream_csv,
)

logger = logging.getLogger('offload.cli')


def positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {value}")
    return value


def window_size(text: str) -> int:
    value = int(text)
    if value < 2:
        raise argparse.ArgumentTypeError(f"window sizes must be >= 2, got {value}")
    return value


def window_list(text: str) -> List[int]:
    try:
        return [window_size(part) for part in text.split(',') if part.strip()]
    except ValueError as e:
        raise argparse.ArgumentTypeError(str(e))


def address(text: str) -> str:
    try:
        parse_address(text)
    except ValueError as e:
        raise argparse.ArgumentTypeError(str(e))
    return text


def writable_path(text: str) -> str:
    directory = os.path.dirname(os.path.abspath(text))
    if not os.path.isdir(directory):
        raise argparse.ArgumentTypeError(f"no such directory: {directory}")
    return text


def disturbance(text: str) -> Disturbance:
    """START:END[:ADD[:FACTOR]], task ids inclusive."""
    parts = text.split(':')
    if not 2 <= len(parts) <= 4:
        raise argparse.ArgumentTypeError(f"expected START:END[:ADD[:FACTOR]], got {text!r}")
    try:
        start, end = int(parts[0]), int(parts[1])
        add = float(parts[2]) if len(parts) > 2 and parts[2] else 0.0
        factor = float(parts[3]) if len(parts) > 3 and parts[3] else 1.0
        return Disturbance(start, end, add=add, factor=factor)
    except ValueError as e:
        raise argparse.ArgumentTypeError(str(e))


def add_profile_args(parser: argparse.ArgumentParser, targets: Sequence[str]) -> None:
    defaults = calibrated_profile()
    for target in targets:
        profile = getattr(defaults, target)
        group = parser.add_argument_group(f'{target} cost profile')
        group.add_argument(f'--{target}-slope', type=float, default=profile.slope,
                           help=f'{target} seconds per unit of input size (default: %(default)s)')
        group.add_argument(f'--{target}-intercept', type=float, default=profile.intercept,
                           help=f'{target} fixed seconds per task (default: %(default)s)')
        group.add_argument(f'--{target}-noise', type=float, default=profile.noise_std,
                           help=f'{target} Gaussian noise std in seconds (default: %(default)s)')
        group.add_argument(f'--{target}-disturbance', type=disturbance, action='append', default=[],
                           metavar='START:END[:ADD[:FACTOR]]',
                           help=f'slow {target} tasks START..END to t * FACTOR + ADD (repeatable)')


def target_profile(args, target: str) -> TargetProfile:
    return TargetProfile(
        slope=getattr(args, f'{target}_slope'),
        intercept=getattr(args, f'{target}_intercept'),
        noise_std=getattr(args, f'{target}_noise'),
        disturbances=tuple(getattr(args, f'{target}_disturbance')),
    )


def cmd_generate(args) -> int:
    profile = CostProfile(local=target_profile(args, 'local'), cloud=target_profile(args, 'cloud'))
    stream = generate_stream(profile, args.count, args.seed)
    write_stream_csv(stream, args.out)

    stats = summarize_stream(stream)
    print(f"Wrote {stats['tasks']} tasks to {args.out}: "
          f"mean t_local={stats['mean_t_local']:.5f}s mean t_cloud={stats['mean_t_cloud']:.5f}s "
          f"r(t_local,d)={stats['corr_local']:.5f} r(t_cloud,d)={stats['corr_cloud']:.5f}")
    return 0


def cmd_run(args) -> int:
    engine_config = EngineConfig(
        window_capacity=args.window,
        clamp_negative_predictions=not args.no_clamp,
        concurrent_warmup=args.concurrent_warmup,
    )

    if not args.live:
        stream = read_stream_csv(args.data)
        trace = replay_engine(stream, engine_config).run(stream)
        write_trace_csv(trace, args.trace)
        print(f"Wrote {len(trace)} records to {args.trace}")
        try:
            cloud = residual_report(trace, Target.CLOUD)
            local = residual_report(trace, Target.LOCAL)
            print(f"accuracy={decision_accuracy(trace):.2%} "
                  f"residual_cloud={cloud.residual:+.5f}s ({cloud.error_rate:.2%}) "
                  f"residual_local={local.residual:+.5f}s ({local.error_rate:.2%})")
        except MetricsError as e:
            print(f"No steady-phase summary: {e}")
        return 0

    tasks = generate_stream(calibrated_profile(), args.count, args.seed)
    with CloudClient(args.server, timeout=args.timeout) as client:
        engine_config.executors = {
            Target.LOCAL: SimulatedExecutor(target_profile(args, 'local'), args.seed, sleep=True),
            Target.CLOUD: RemoteExecutor(client),
        }
        trace = OffloadEngine(engine_config).run((task.task_id, task.d) for task in tasks)
    write_trace_csv(trace, args.trace)
    offloaded = sum(record.executed is Target.CLOUD for record in trace)
    print(f"Wrote {len(trace)} live records to {args.trace}; {offloaded} steady tasks offloaded")
    return 0


def cmd_sweep(args) -> int:
    stream = read_stream_csv(args.data)
    windows = args.windows or list(config.DEFAULT_WINDOWS)
    include_full = args.full or args.windows is None
    report = sweep(stream, windows, include_full=include_full, workers=args.workers,
                   clamp=not args.no_clamp, oracle_baseline=args.oracle_baseline)
    write_report_csv(report, args.out)
    print(format_report_table(report))
    return 0


def cmd_serve(args) -> int:
    settings = ServerConfig(
        bind_address=args.bind,
        profile=target_profile(args, 'cloud'),
        injected_rtt=args.rtt_ms / 1000.0,
        seed=args.seed,
    )

    def interrupt(signum, frame):
        raise KeyboardInterrupt

    if threading.current_thread() is threading.main_thread():
        signal.signal(signal.SIGTERM, interrupt)

    try:
        serve(settings)
    except OSError as e:
        print(f"Cannot bind {args.bind}: {e}", file=sys.stderr)
        return 1
    except KeyboardInterrupt:
        pass
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog='offload', description='Sliding-window predictive offloading toolkit')
    parser.add_argument('-v', '--verbose', action='store_true', help='debug output on the console')
    subparsers = parser.add_subparsers(dest='command', required=True)

    generate = subparsers.add_parser('generate', help='write a seeded task stream CSV')
    generate.add_argument('--count', type=positive_int, default=config.DEFAULT_STREAM_SIZE,
                          help='number of tasks (default: %(default)s)')
    generate.add_argument('--seed', type=int, default=config.DEFAULT_SEED, help='random seed (default: %(default)s)')
    generate.add_argument('--out', type=writable_path, required=True, help='stream CSV to write')
    add_profile_args(generate, ('local', 'cloud'))
    generate.set_defaults(handler=cmd_generate)

    run = subparsers.add_parser('run', help='replay a stream or drive a live cloud service')
    run.add_argument('--data', help='stream CSV to replay (required unless --live)')
    run.add_argument('--window', type=window_size, default=50, help='window size N (default: %(default)s)')
    run.add_argument('--trace', type=writable_path, required=True, help='trace CSV to write')
    run.add_argument('--no-clamp', action='store_true', help='keep negative predictions')
    run.add_argument('--live', action='store_true', help='execute against a running cloud service')
    run.add_argument('--server', type=address, default=config.SERVER_ADDR,
                     help='cloud service HOST:PORT (default: %(default)s, env OFFLOAD_SERVER_ADDR)')
    run.add_argument('--count', type=positive_int, default=100, help='live tasks to run (default: %(default)s)')
    run.add_argument('--seed', type=int, default=config.DEFAULT_SEED, help='random seed (default: %(default)s)')
    run.add_argument('--timeout', type=float, default=config.CLIENT_TIMEOUT,
                     help='seconds to wait for a cloud response (default: %(default)s)')
    run.add_argument('--concurrent-warmup', action='store_true',
                     help='run both warm-up executions at the same time')
    add_profile_args(run, ('local',))
    run.set_defaults(handler=cmd_run)

    sweep_parser = subparsers.add_parser('sweep', help='evaluate window sizes on a stream')
    sweep_parser.add_argument('--data', required=True, help='stream CSV to evaluate')
    sweep_parser.add_argument('--out', type=writable_path, required=True, help='report CSV to write')
    sweep_parser.add_argument('--windows', type=window_list, default=None,
                              help='comma-separated window sizes (default: %s plus the full-dataset row)'
                                   % ','.join(str(n) for n in config.DEFAULT_WINDOWS))
    sweep_parser.add_argument('--full', action='store_true', help='add the 80:20 full-dataset row to --windows')
    sweep_parser.add_argument('--workers', type=positive_int, default=1, help='parallel replays (default: %(default)s)')
    sweep_parser.add_argument('--no-clamp', action='store_true', help='keep negative predictions')
    sweep_parser.add_argument('--oracle-baseline', action='store_true',
                              help='also report the accuracy of a predictor that knows the recorded times')
    sweep_parser.set_defaults(handler=cmd_sweep)

    serve = subparsers.add_parser('serve', help='run the loopback cloud service')
    serve.add_argument('--bind', type=address, default=config.BIND_ADDR,
                       help='HOST:PORT to listen on (default: %(default)s, env OFFLOAD_BIND_ADDR)')
    serve.add_argument('--rtt-ms', type=float, default=config.INJECTED_RTT * 1000,
                       help='injected round-trip latency in ms (default: %(default)s)')
    serve.add_argument('--seed', type=int, default=config.DEFAULT_SEED, help='random seed (default: %(default)s)')
    add_profile_args(serve, ('cloud',))
    serve.set_defaults(handler=cmd_serve)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else 2

    if args.command == 'run' and not args.live and not args.data:
        print("run: --data is required unless --live is given", file=sys.stderr)
        return 2

    setup_logging()
    if args.verbose:
        set_console_level(logging.DEBUG)

    try:
        return args.handler(args)
    except FileNotFoundError as e:
        print(f"No such file: {e.filename}", file=sys.stderr)
    except (StreamFormatError, MetricsError, EngineError, ValueError) as e:
        print(f"Error: {e}", file=sys.stderr)
    except Exception as e:
        logger.error(f"{args.command} failed: {e}")
        print(f"Error: {e}", file=sys.stderr)
    return 1


if __name__ == '__main__':
    sys.exit(main())
