"""Robot-side teleoperation endpoint: one simulation behind a socket.

Operator consoles connect over the browser-standard socket upgrade and
exchange v1 frames. The earliest connection holds command authority and
everyone receives the same telemetry. Inbound commands land in a
single-slot mailbox that the tick loop drains once per tick (latest
wins), so the simulation itself never observes concurrency.
"""

from __future__ import annotations

import asyncio
import contextlib
import json

import websockets

from .protocol import (
    DEFAULT_TELEMETRY_HZ,
    AuthorityNotice,
    CommandMessage,
    CommandRejected,
    FrameParseError,
    Heartbeat,
    decode,
    encode,
)
from .sim import Simulation


class RobotService:
    """Fans one Simulation out to any number of console connections.

    `pace` scales sim time against wall time: 1.0 runs ticks at the
    scenario tick rate, larger values run faster, 0 runs unthrottled
    (tests). The tick loop keeps running after a terminal status so
    consoles can still see the final mission state.
    """

    def __init__(self, sim: Simulation,
                 telemetry_hz: float = DEFAULT_TELEMETRY_HZ, pace: float = 1.0):
        if telemetry_hz <= 0:
            raise ValueError("telemetry rate must be > 0")
        if pace < 0:
            raise ValueError("pace must be >= 0")
        self.sim = sim
        self.telemetry_every = max(1, round(sim.scenario.tick_rate / telemetry_hz))
        self.pace = float(pace)
        self.pending: CommandMessage | None = None
        self.clients: list = []          # connect order; [0] drives
        self.dropped_frames = 0
        self._server = None
        self._ticker: asyncio.Task | None = None

    # -- connection bookkeeping (synchronous, event-loop serialized) --

    def register(self, client) -> AuthorityNotice:
        self.clients.append(client)
        role = "authoritative" if self.clients[0] is client else "observer"
        return AuthorityNotice(role)

    def unregister(self, client):
        """Drop a client; returns the newly promoted driver, if any."""
        if client not in self.clients:
            return None
        had_authority = self.clients[0] is client
        self.clients.remove(client)
        if had_authority and self.clients:
            return self.clients[0]
        return None

    def submit(self, client, frame) -> bytes | None:
        """Take one inbound frame; returns the reply frame, if one is due.

        Commands from the driver go to the mailbox, commands from
        observers come back rejected, heartbeats only prove the link is
        alive, and anything unreadable is dropped and counted.
        """
        try:
            msg = decode(frame)
        except FrameParseError:
            self.dropped_frames += 1
            return None
        if isinstance(msg, Heartbeat):
            return None
        if not isinstance(msg, CommandMessage):
            self.dropped_frames += 1
            return None
        if not self.clients or self.clients[0] is not client:
            return encode(CommandRejected(seq=msg.seq, reason="not authoritative"))
        self.pending = msg
        return None

    # -- tick plumbing --

    def tick_once(self) -> dict:
        cmd, self.pending = self.pending, None
        return self.sim.step(cmd)

    def telemetry_due(self, entry: dict) -> bool:
        return entry["tick"] % self.telemetry_every == 0

    @staticmethod
    def telemetry_frame(entry: dict) -> bytes:
        # same canonical form encode() used when the entry was logged
        return (json.dumps(entry["telemetry"], sort_keys=True, allow_nan=False,
                           separators=(",", ":")) + "\n").encode("utf-8")

    async def _run_ticks(self):
        loop = asyncio.get_running_loop()
        next_at = loop.time()
        while True:
            entry = self.tick_once()
            if self.telemetry_due(entry):
                await self._broadcast(self.telemetry_frame(entry))
            if self.pace > 0:
                next_at += self.sim.dt / self.pace
                delay = next_at - loop.time()
                if delay > 0:
                    await asyncio.sleep(delay)
                else:
                    next_at = loop.time()    # fell behind; do not burst
            else:
                await asyncio.sleep(0)

    async def _broadcast(self, frame: bytes):
        text = frame.decode("utf-8")
        for ws in list(self.clients):
            with contextlib.suppress(Exception):
                await ws.send(text)          # dead links reap themselves

    async def _handle(self, ws):
        await ws.send(encode(self.register(ws)).decode("utf-8"))
        try:
            async for raw in ws:
                reply = self.submit(ws, raw)
                if reply is not None:
                    await ws.send(reply.decode("utf-8"))
        except websockets.ConnectionClosed:
            pass    # vanished mid-recv (killed tab, dropped link): not an error
        finally:
            promoted = self.unregister(ws)
            if promoted is not None:
                with contextlib.suppress(Exception):
                    await promoted.send(
                        encode(AuthorityNotice("authoritative")).decode("utf-8"))

    # -- lifecycle --

    async def start(self, host: str = "127.0.0.1", port: int = 8765):
        """Bind and start ticking; returns the bound (host, port).

        A bind failure (port taken, bad address) raises OSError before
        any tick runs.
        """
        self._server = await websockets.serve(self._handle, host, port)
        bound = self._server.sockets[0].getsockname()
        self._ticker = asyncio.create_task(self._run_ticks())
        return bound[0], bound[1]

    async def stop(self):
        if self._ticker is not None:
            self._ticker.cancel()
            with contextlib.suppress(asyncio.CancelledError):
                await self._ticker
            self._ticker = None
        if self._server is not None:
            self._server.close()
            await self._server.wait_closed()
            self._server = None


def parse_listen_addr(text: str) -> tuple[str, int]:
    """Split a host:port listen address; the host part may be empty."""
    host, sep, port = text.rpartition(":")
    if not sep or not port.isdigit():
        raise ValueError(f"listen address must be host:port, got {text!r}")
    return host or "127.0.0.1", int(port)
