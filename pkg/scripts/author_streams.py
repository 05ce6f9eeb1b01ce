#!/usr/bin/env python3
"""Regenerate the recorded command streams shipped next to the scenarios.

Each stream is produced by a small closed-loop driving policy run against
the simulation, then frozen to a `cmdstream v1` file. The files are
deterministic: re-running this script must reproduce them byte-for-byte.
"""

import pathlib
import sys

sys.path.insert(0, str(pathlib.Path(__file__).resolve().parents[1] / "src"))

from rescuesim.protocol import CommandMessage
from rescuesim.scenario import load_scenario
from rescuesim.sim import Simulation, format_command_stream, gripper_point

SCENARIO_DIR = pathlib.Path(__file__).resolve().parents[1] / "scenarios"


def record(scenario_path, policy, limit_ticks):
    scn = load_scenario(scenario_path)
    sim = Simulation(scn)
    stream = []
    seq = 0
    while sim.world.status == "running" and sim.world.tick < limit_ticks:
        tick = sim.world.tick
        channels = policy(sim)
        cmd = CommandMessage(seq=seq, timestamp_ms=int(round(tick * 1000 * sim.dt)),
                             channels=channels)
        stream.append((tick, cmd))
        seq += 1
        sim.step(cmd)
    return scn, sim, stream


def grab_policy(obj_x):
    """Drive forward, park the flipper, close the jaws."""
    def policy(sim):
        w = sim.world
        gx = float(gripper_point(w, sim.terrain, sim.config)[0])
        if gx < obj_x - 0.03:
            return (1.0, 0.0, 0.0, 0.0, 0.0, 0.0)
        if w.chassis.flipper_angle > 0.0:
            return (0.0, 0.0, -1.0, 0.0, 0.0, 0.0)
        return (0.0, 0.0, 0.0, 0.0, 0.0, 1.0)
    return policy


def grab_and_return_policy(obj_x):
    """Like grab_policy, then back straight out with the prop held."""
    forward = grab_policy(obj_x)

    def policy(sim):
        if sim.world.held_object is None:
            return forward(sim)
        return (-1.0, 0.0, 0.0, 0.0, 0.0, 0.0)
    return policy


def approach_policy():
    """Full throttle at the feature; only useful when the gate rejects it."""
    def policy(sim):
        return (1.0, 0.0, 0.0, 0.0, 0.0, 0.0)
    return policy


def freeze(name, policy, limit_ticks, expect):
    scn_path = SCENARIO_DIR / f"{name}.scn"
    scn, sim, stream = record(scn_path, policy, limit_ticks)
    out = SCENARIO_DIR / f"{name}.cmds"
    out.write_text(format_command_stream(stream), encoding="utf-8")
    w = sim.world
    status = w.status if w.status != "fail" else f"fail:{w.fail_reason}"
    print(f"{name}: {len(stream)} commands, {w.tick} ticks, {status}")
    if status != expect:
        raise SystemExit(f"{name}: expected {expect}, got {status}")


def main():
    # Stair survivor sits at gripper x = robot x + 0.1; see the scenario
    # files for the prop placement that pairs with these stop points.
    freeze("stair_rescue", grab_policy(obj_x=4.6), limit_ticks=3000,
           expect="success")
    freeze("flat_room", grab_and_return_policy(obj_x=3.8), limit_ticks=3000,
           expect="success")
    freeze("stair_steep", approach_policy(), limit_ticks=1000,
           expect="fail:climb-limit")


if __name__ == "__main__":
    main()
