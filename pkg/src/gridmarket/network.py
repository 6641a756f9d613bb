"""Pluggable transport under the consensus nodes.

Two implementations of the same duty - moving node effects to peer inboxes:

* :class:`SimNetwork` executes every node on one seeded logical-time
  scheduler. Per-link delays, message drops, crash faults and partition
  windows are all drawn from the seed, so a scenario replays bit-identically.
* :class:`TcpTransport` frames canonical-serialized messages over TCP for
  live multi-process deployments, one connection per peer pair.
"""

from __future__ import annotations

import heapq
import json
import random
import socket
import struct
import threading
from dataclasses import dataclass
from typing import Callable

from .canonical import canonical_serialize
from .consensus import (
    Broadcast,
    CommitMessage,
    Committed,
    ConsensusMessage,
    Schedule,
    Send,
    TimeoutEvent,
    TxMessage,
)

__all__ = ["Partition", "SimNetwork", "TcpTransport", "encode_message", "decode_message"]


def encode_message(message) -> bytes:
    return canonical_serialize(message.to_wire())


def decode_message(data: bytes):
    wire = json.loads(data)
    kind = wire.get("kind")
    if kind in ("PROPOSAL", "PREVOTE", "PRECOMMIT"):
        return ConsensusMessage.from_wire(wire)
    if kind == "COMMIT":
        return CommitMessage.from_wire(wire)
    if kind == "TX":
        return TxMessage.from_wire(wire)
    raise ValueError(f"unknown wire kind {kind!r}")


@dataclass(frozen=True)
class Partition:
    """During [start, end), messages between different groups are lost."""

    start: float
    end: float
    groups: tuple[frozenset[str], ...]

    def severs(self, now: float, a: str, b: str) -> bool:
        if not self.start <= now < self.end:
            return False
        group_of = {}
        for i, group in enumerate(self.groups):
            for member in group:
                group_of[member] = i
        ga, gb = group_of.get(a), group_of.get(b)
        return ga is not None and gb is not None and ga != gb


class SimNetwork:
    """Deterministic discrete-event message fabric for in-process nodes.

    Events are (time, seq) ordered, RNG draws happen in event order, and
    node handlers are plain functions of their inputs, so one seed fixes the
    entire execution.
    """

    def __init__(
        self,
        seed: int,
        min_delay: float = 0.01,
        max_delay: float = 0.05,
        drop_probability: float = 0.0,
        partitions: list[Partition] | None = None,
    ):
        self.rng = random.Random(seed)
        self.min_delay = min_delay
        self.max_delay = max_delay
        self.drop_probability = drop_probability
        self.partitions = partitions or []
        self.now = 0.0
        self._seq = 0
        self._queue: list[tuple[float, int, str, object]] = []
        self.nodes: dict[str, object] = {}
        self.crashed: set[str] = set()
        self.delivered_messages = 0
        self.observers: list[Callable[[str, object], None]] = []

    # -- topology -------------------------------------------------------

    def join(self, node) -> None:
        self.nodes[node.address] = node

    def crash(self, address: str) -> None:
        """Silence a node: nothing in, nothing out, timers dead."""
        self.crashed.add(address)

    def peers_of(self, address: str) -> list[str]:
        return [n for n in self.nodes if n != address]

    # -- scheduling -------------------------------------------------------

    def _push(self, at: float, target: str, event) -> None:
        heapq.heappush(self._queue, (at, self._seq, target, event))
        self._seq += 1

    def _link_delay(self) -> float:
        return self.rng.uniform(self.min_delay, self.max_delay)

    def _deliverable(self, sender: str, target: str) -> bool:
        if sender in self.crashed or target in self.crashed:
            return False
        if self.drop_probability and self.rng.random() < self.drop_probability:
            return False
        return not any(p.severs(self.now, sender, target) for p in self.partitions)

    def _dispatch(self, sender: str, effects: list) -> None:
        for effect in effects:
            if isinstance(effect, Broadcast):
                for peer in self.peers_of(sender):
                    if self._deliverable(sender, peer):
                        self._push(self.now + self._link_delay(), peer, effect.message)
            elif isinstance(effect, Send):
                if effect.target in self.nodes and self._deliverable(sender, effect.target):
                    self._push(self.now + self._link_delay(), effect.target, effect.message)
            elif isinstance(effect, Schedule):
                self._push(self.now + effect.delay, sender, effect.timeout)
            elif isinstance(effect, Committed):
                for observer in self.observers:
                    observer(sender, effect.block)
            else:
                raise TypeError(f"unknown effect {effect!r}")

    # -- external injection ------------------------------------------------

    def start_all(self) -> None:
        for address, node in self.nodes.items():
            if address in self.crashed:
                continue
            self._dispatch(address, node.start())

    def inject(self, address: str, thunk: Callable[[], list], delay: float = 0.0) -> None:
        """Run ``thunk`` at now+delay as if node ``address`` acted spontaneously."""
        self._push(self.now + delay, address, thunk)

    # -- the loop -----------------------------------------------------------

    def run_until(self, t_end: float, stop: Callable[[], bool] | None = None) -> None:
        while self._queue:
            at, _, target, event = self._queue[0]
            if at > t_end:
                break
            heapq.heappop(self._queue)
            self.now = at
            if target in self.crashed:
                continue
            node = self.nodes.get(target)
            if node is None:
                continue
            if callable(event):
                effects = event()
            else:
                if isinstance(event, TimeoutEvent) and event.node != target:
                    continue
                self.delivered_messages += 1
                effects = node.step(event)
            if effects:
                self._dispatch(target, effects)
            if stop is not None and stop():
                return
        self.now = max(self.now, t_end)


class TcpTransport:
    """Length-prefixed canonical messages over TCP, one link per peer pair.

    Incoming messages are handed to ``on_message`` on the reader thread;
    callers serialize into their own consensus loop.
    """

    def __init__(
        self,
        address: str,
        listen: tuple[str, int],
        peers: dict[str, tuple[str, int]],
        on_message: Callable[[object], None],
    ):
        self.address = address
        self.listen_addr = listen
        self.peers = dict(peers)
        self.on_message = on_message
        self._server = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        self._server.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        self._server.bind(listen)
        self._server.listen(16)
        self._out: dict[str, socket.socket] = {}
        self._lock = threading.Lock()
        self._closing = threading.Event()
        self._threads: list[threading.Thread] = []
        acceptor = threading.Thread(target=self._accept_loop, daemon=True)
        acceptor.start()
        self._threads.append(acceptor)

    @property
    def port(self) -> int:
        return self._server.getsockname()[1]

    def _accept_loop(self) -> None:
        while not self._closing.is_set():
            try:
                conn, _ = self._server.accept()
            except OSError:
                return
            reader = threading.Thread(target=self._read_loop, args=(conn,), daemon=True)
            reader.start()
            self._threads.append(reader)

    def _read_loop(self, conn: socket.socket) -> None:
        try:
            while not self._closing.is_set():
                header = self._read_exact(conn, 4)
                if header is None:
                    return
                (length,) = struct.unpack(">I", header)
                frame = self._read_exact(conn, length)
                if frame is None:
                    return
                try:
                    message = decode_message(frame)
                except (ValueError, KeyError):
                    continue
                self.on_message(message)
        finally:
            conn.close()

    @staticmethod
    def _read_exact(conn: socket.socket, n: int) -> bytes | None:
        data = b""
        while len(data) < n:
            try:
                chunk = conn.recv(n - len(data))
            except OSError:
                return None
            if not chunk:
                return None
            data += chunk
        return data

    def _connection(self, peer: str) -> socket.socket | None:
        with self._lock:
            conn = self._out.get(peer)
            if conn is not None:
                return conn
            target = self.peers.get(peer)
            if target is None:
                return None
            try:
                conn = socket.create_connection(target, timeout=2.0)
            except OSError:
                return None
            self._out[peer] = conn
            return conn

    def send(self, peer: str, message) -> None:
        conn = self._connection(peer)
        if conn is None:
            return
        frame = encode_message(message)
        try:
            conn.sendall(struct.pack(">I", len(frame)) + frame)
        except OSError:
            with self._lock:
                self._out.pop(peer, None)

    def broadcast(self, message) -> None:
        for peer in self.peers:
            self.send(peer, message)

    def close(self) -> None:
        self._closing.set()
        try:
            self._server.close()
        except OSError:
            pass
        with self._lock:
            for conn in self._out.values():
                try:
                    conn.close()
                except OSError:
                    pass
            self._out.clear()
