"""Service semantics: authority, latest-wins hand-off, telemetry fan-out."""

import asyncio
import socket

import pytest
import websockets

from rescuesim.protocol import (
    AuthorityNotice,
    CommandMessage,
    CommandRejected,
    Heartbeat,
    TelemetryMessage,
    decode,
    encode,
)
from rescuesim.scenario import MissionGoal, Scenario
from rescuesim.service import RobotService, parse_listen_addr
from rescuesim.sim import Simulation


def scn(**kw):
    base = dict(terrain_kind="flat", terrain_params=(10.0, 4.0),
                start=(1.0, 2.0, 0.0),
                goals=(MissionGoal("reach", x=9.0, y=2.0, radius=0.1),))
    base.update(kw)
    return Scenario(**base)


def cmd(t, *channels):
    return CommandMessage(seq=t, timestamp_ms=t * 20, channels=channels)


def fwd(t):
    return cmd(t, 1.0, 0, 0, 0, 0, 0)


def service(**kw):
    return RobotService(Simulation(scn()), **kw)


# --- synchronous core ---

def test_authority_follows_connect_order():
    svc = service()
    a, b, c = object(), object(), object()
    assert svc.register(a) == AuthorityNotice("authoritative")
    assert svc.register(b) == AuthorityNotice("observer")
    assert svc.register(c) == AuthorityNotice("observer")
    assert svc.unregister(b) is None          # observer leaves: no handover
    assert svc.unregister(a) is c             # driver leaves: oldest promoted
    assert svc.unregister(a) is None          # double-leave is harmless
    assert svc.unregister(c) is None          # room empties out


def test_latest_command_wins_within_a_tick():
    svc = service()
    a = object()
    svc.register(a)
    for t in range(3):
        assert svc.submit(a, encode(cmd(t, 0.1 * (t + 1), 0, 0, 0, 0, 0))) is None
    entry = svc.tick_once()
    assert entry["command"]["seq"] == 2
    assert svc.pending is None                # mailbox drained
    assert svc.tick_once()["command"] is None


def test_observer_commands_are_rejected():
    svc = service()
    a, b = object(), object()
    svc.register(a)
    svc.register(b)
    reply = svc.submit(b, encode(fwd(7)))
    assert decode(reply) == CommandRejected(seq=7, reason="not authoritative")
    assert svc.pending is None
    assert svc.submit(a, encode(fwd(8))) is None
    assert svc.pending == fwd(8)


def test_heartbeats_and_garbage_do_not_actuate():
    svc = service()
    a = object()
    svc.register(a)
    assert svc.submit(a, encode(Heartbeat(seq=1, timestamp_ms=0))) is None
    assert svc.submit(a, b"{not a frame") is None
    assert svc.submit(a, encode(AuthorityNotice("observer"))) is None
    assert svc.pending is None
    assert svc.dropped_frames == 2


def test_telemetry_cadence_in_sim_time():
    svc = service()                            # 50 Hz sim, 10 Hz telemetry
    due = [svc.telemetry_due(svc.tick_once()) for _ in range(50)]
    assert sum(due) == 10
    assert due[0] and due[5] and not due[1]
    assert RobotService(Simulation(scn()), telemetry_hz=25.0).telemetry_every == 2
    with pytest.raises(ValueError):
        RobotService(Simulation(scn()), telemetry_hz=0.0)


def test_telemetry_frame_is_wire_exact():
    svc = service()
    entry = svc.tick_once()
    msg = decode(svc.telemetry_frame(entry))
    assert isinstance(msg, TelemetryMessage)
    assert msg.tick == 0
    assert msg.chassis.x == entry["world"]["position"][0]
    assert encode(msg) == svc.telemetry_frame(entry)


def test_parse_listen_addr():
    assert parse_listen_addr("0.0.0.0:8765") == ("0.0.0.0", 8765)
    assert parse_listen_addr(":9000") == ("127.0.0.1", 9000)
    for bad in ("nope", "host:", "host:abc"):
        with pytest.raises(ValueError):
            parse_listen_addr(bad)


# --- live socket behavior ---

def run(coro, timeout=20.0):
    asyncio.run(asyncio.wait_for(coro, timeout))


async def next_of(ws, kind, limit=400):
    for _ in range(limit):
        msg = decode(await ws.recv())
        if isinstance(msg, kind):
            return msg
    raise AssertionError(f"no {kind.__name__} frame within {limit} frames")


def test_live_telemetry_and_authority_rule():
    async def main():
        svc = service(pace=0.0)
        host, port = await svc.start(port=0)
        uri = f"ws://{host}:{port}"
        try:
            async with websockets.connect(uri) as a:
                assert decode(await a.recv()) == AuthorityNotice("authoritative")
                t0 = await next_of(a, TelemetryMessage)
                assert t0.chassis.x == 1.0     # nothing commanded yet

                async with websockets.connect(uri) as b:
                    assert decode(await b.recv()) == AuthorityNotice("observer")
                    await b.send(encode(fwd(1)).decode())
                    rej = await next_of(b, CommandRejected)
                    assert rej.seq == 1 and "authorit" in rej.reason

                    await a.send(encode(fwd(2)).decode())
                    moved = await next_of(a, TelemetryMessage)
                    while moved.chassis.x <= 1.0:
                        moved = await next_of(a, TelemetryMessage)
                    assert moved.chassis.x > 1.0
        finally:
            await svc.stop()

    run(main())


def test_live_observer_promotion():
    async def main():
        svc = service(pace=0.0)
        host, port = await svc.start(port=0)
        uri = f"ws://{host}:{port}"
        try:
            a = await websockets.connect(uri)
            assert decode(await a.recv()) == AuthorityNotice("authoritative")
            async with websockets.connect(uri) as b:
                assert decode(await b.recv()) == AuthorityNotice("observer")
                await a.close()
                promo = await next_of(b, AuthorityNotice)
                assert promo.role == "authoritative"
                await b.send(encode(fwd(5)).decode())
                moved = await next_of(b, TelemetryMessage)
                while moved.chassis.x <= 1.0:
                    moved = await next_of(b, TelemetryMessage)
        finally:
            await svc.stop()

    run(main())


def test_identical_fanout_to_all_clients():
    async def main():
        svc = service(pace=0.0)
        host, port = await svc.start(port=0)
        uri = f"ws://{host}:{port}"
        try:
            async with websockets.connect(uri) as a, websockets.connect(uri) as b:
                await a.recv()
                await b.recv()
                seen_a, seen_b = {}, {}
                for _ in range(5):
                    ta = await next_of(a, TelemetryMessage)
                    tb = await next_of(b, TelemetryMessage)
                    seen_a[ta.tick] = ta
                    seen_b[tb.tick] = tb
                shared = sorted(set(seen_a) & set(seen_b))
                assert shared
                for tick in shared:
                    assert seen_a[tick] == seen_b[tick]
        finally:
            await svc.stop()

    run(main())


def test_bind_failure_is_a_startup_error():
    async def main():
        blocker = socket.socket()
        blocker.bind(("127.0.0.1", 0))
        blocker.listen(1)
        port = blocker.getsockname()[1]
        svc = service(pace=0.0)
        try:
            with pytest.raises(OSError):
                await svc.start(port=port)
        finally:
            blocker.close()
            await svc.stop()

    run(main())
