"""Command-line front end: run missions, replay logs, score detections.

Exit codes are uniform across subcommands: 0 for success, 1 when a
mission (or replay check) fails, 2 when inputs do not validate.
"""

from __future__ import annotations

import argparse
import asyncio
import contextlib
import signal
import sys
from pathlib import Path

from .arm import JointState
from .chassis import (
    ChassisState,
    check_climbable,
    compute_stability,
    passive_conform,
    tip_over_angle,
)
from .detection import (
    DetectionLogFormatError,
    EmptyLogError,
    evaluate,
    format_odmlog,
    parse_odmlog,
    render_report,
)
from .protocol import DEFAULT_TELEMETRY_HZ, DEFAULT_TIMEOUT_MS
from .scenario import Scenario, ScenarioError, load_scenario
from .service import RobotService, parse_listen_addr
from .sim import (
    CommandStreamError,
    ReplayMismatchError,
    Simulation,
    TickLog,
    mission_status_text,
    parse_command_stream,
    replay,
    run_mission,
)

EXIT_OK = 0
EXIT_MISSION_FAIL = 1
EXIT_INVALID = 2


def _fail(message: str) -> int:
    print(f"error: {message}", file=sys.stderr)
    return EXIT_INVALID


def _write_outputs(args, log: TickLog, detections) -> None:
    if args.record:
        Path(args.record).write_bytes(log.to_bytes())
    if args.odmlog:
        Path(args.odmlog).write_text(format_odmlog("mission", detections),
                                     encoding="utf-8")


def cmd_run(args) -> int:
    scenario = load_scenario(args.scenario)
    if bool(args.listen) == bool(args.commands):
        return _fail("run needs exactly one of --listen or --commands")

    if args.commands:
        pairs = parse_command_stream(
            Path(args.commands).read_text(encoding="utf-8"))
        result = run_mission(scenario, pairs, seed=args.seed,
                             timeout_ms=args.cmd_timeout_ms)
        _write_outputs(args, result.log, result.detections)
        reason = f" ({result.reason})" if result.reason else ""
        print(f"mission {result.outcome}{reason} at tick {result.tick}")
        return EXIT_OK if result.outcome == "success" else EXIT_MISSION_FAIL

    try:
        host, port = parse_listen_addr(args.listen)
    except ValueError as exc:
        return _fail(str(exc))
    return asyncio.run(_serve(scenario, args, host, port))


async def _serve(scenario: Scenario, args, host: str, port: int) -> int:
    sim = Simulation(scenario, seed=args.seed, timeout_ms=args.cmd_timeout_ms)
    service = RobotService(sim, telemetry_hz=args.telemetry_hz, pace=args.pace)
    try:
        bound_host, bound_port = await service.start(host, port)
    except OSError as exc:
        return _fail(f"cannot bind {host}:{port}: {exc}")
    print(f"listening on ws://{bound_host}:{bound_port}", flush=True)

    stop = asyncio.Event()
    loop = asyncio.get_running_loop()
    for sig in (signal.SIGINT, signal.SIGTERM):
        with contextlib.suppress(NotImplementedError):
            loop.add_signal_handler(sig, stop.set)
    with contextlib.suppress(asyncio.CancelledError, KeyboardInterrupt):
        await stop.wait()
    await service.stop()

    _write_outputs(args, sim.log, sim.detections)
    print(f"mission {mission_status_text(sim.world, scenario)} "
          f"after {sim.world.tick} ticks")
    return EXIT_OK if sim.world.status == "success" else EXIT_MISSION_FAIL


def cmd_replay(args) -> int:
    scenario = load_scenario(args.scenario)
    log = TickLog.from_bytes(Path(args.log).read_bytes())
    try:
        replay(log, scenario)
    except ReplayMismatchError as exc:
        print(f"replay mismatch at tick {exc.tick}: {exc}", file=sys.stderr)
        return EXIT_MISSION_FAIL
    print(f"replay ok: {len(log.entries)} ticks byte-identical")
    return EXIT_OK


def cmd_eval(args) -> int:
    logs = {}
    for path in args.odmlog:
        dataset_id, records = parse_odmlog(
            Path(path).read_text(encoding="utf-8"))
        if dataset_id in logs:
            return _fail(f"dataset {dataset_id} appears twice")
        logs[dataset_id] = records
    report = evaluate(logs)
    print(render_report(report), end="")
    return EXIT_OK


def cmd_check(args) -> int:
    scenario = load_scenario(args.scenario)    # full static validation
    terrain = scenario.build_terrain()
    config = scenario.build_config()
    start = passive_conform(
        ChassisState(position=scenario.start[:2], heading=scenario.start[2],
                     payload_mass=scenario.payload), terrain, config)
    margin = compute_stability(start, config, terrain,
                               JointState((0.0,) * 6)).margin

    print(f"scenario {scenario.name}: valid")
    print(f"terrain {scenario.terrain_kind} "
          f"{tuple(scenario.terrain_params)}, "
          f"{len(scenario.objects)} objects, {len(scenario.goals)} goals")
    print(f"start margin: {margin:.3f} m at ({start.position[0]:g}, "
          f"{start.position[1]:g})")
    print(f"tip-over pitch: {tip_over_angle(config):.1f} deg, "
          f"roll: {tip_over_angle(config, 'roll'):.1f} deg")
    feature = scenario.feature()
    if feature is None:
        print("no climb feature")
    else:
        ok = check_climbable(min(feature.slope_deg, 90.0), config.flipper_max,
                             scenario.payload, config)
        print(f"climb feature: {feature.slope_deg:.1f} deg effective slope, "
              f"x {feature.x_start:g}..{feature.x_end:g}")
        print(f"climbable at payload {scenario.payload:g} kg: "
              f"{'yes' if ok else 'NO'}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sim", description="tracked rescue-robot mission simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a scenario, live or scripted")
    run.add_argument("--scenario", required=True)
    run.add_argument("--listen", help="host:port to serve operator consoles on")
    run.add_argument("--commands", help="recorded cmdstream file to execute")
    run.add_argument("--seed", type=int, default=None)
    run.add_argument("--record", help="write the tick log here")
    run.add_argument("--odmlog", help="write the detection log here")
    run.add_argument("--telemetry-hz", type=float, default=DEFAULT_TELEMETRY_HZ)
    run.add_argument("--cmd-timeout-ms", type=int, default=DEFAULT_TIMEOUT_MS)
    run.add_argument("--pace", type=float, default=1.0,
                     help="sim speed vs wall clock; 0 = unthrottled")
    run.set_defaults(func=cmd_run)

    rep = sub.add_parser("replay", help="verify a tick log reproduces")
    rep.add_argument("--log", required=True)
    rep.add_argument("--scenario", required=True)
    rep.set_defaults(func=cmd_replay)

    ev = sub.add_parser("eval", help="score detection logs")
    ev.add_argument("--odmlog", action="append", required=True,
                    help="repeatable: one detection log per dataset")
    ev.set_defaults(func=cmd_eval)

    chk = sub.add_parser("check", help="validate a scenario and summarize it")
    chk.add_argument("--scenario", required=True)
    chk.set_defaults(func=cmd_check)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ScenarioError, CommandStreamError, DetectionLogFormatError,
            EmptyLogError, ValueError, OSError) as exc:
        return _fail(str(exc))


if __name__ == "__main__":
    sys.exit(main())
