"""Live (wall-clock, multi-process) node runner.

The consensus state machine is I/O-free; this module gives it a real inbox:
TCP transport readers push decoded messages into a queue, a deadline list
turns Schedule effects into timer events, and one sequential loop feeds
everything through ``node.step`` exactly like the simulator does.
"""

from __future__ import annotations

import heapq
import queue
import threading
import time
from typing import Callable

from .consensus import Broadcast, Committed, Schedule, Send, TimeoutEvent
from .ledger import Transaction
from .network import TcpTransport

__all__ = ["LiveRunner"]


class LiveRunner:
    """Owns one node's sequential consensus loop over a TCP transport."""

    def __init__(self, node, transport: TcpTransport):
        self.node = node
        self.transport = transport
        self.inbox: queue.Queue = queue.Queue()
        self._timers: list[tuple[float, int, TimeoutEvent]] = []
        self._timer_seq = 0
        self._stop = threading.Event()
        self.on_commit: list[Callable] = []
        self._thread: threading.Thread | None = None
        transport.on_message = self.inbox.put

    def submit_tx(self, tx: Transaction) -> None:
        """Thread-safe client entry: enqueue a local transaction."""
        self.inbox.put(("__tx__", tx))

    def start(self) -> None:
        self._dispatch(self.node.start())
        self._thread = threading.Thread(target=self._loop, daemon=True)
        self._thread.start()

    def stop(self) -> None:
        self._stop.set()
        if self._thread is not None:
            self._thread.join(timeout=2.0)
        self.transport.close()

    def _arm(self, delay: float, timeout: TimeoutEvent) -> None:
        heapq.heappush(self._timers, (time.monotonic() + delay, self._timer_seq, timeout))
        self._timer_seq += 1

    def _dispatch(self, effects: list) -> None:
        for effect in effects:
            if isinstance(effect, Broadcast):
                self.transport.broadcast(effect.message)
            elif isinstance(effect, Send):
                self.transport.send(effect.target, effect.message)
            elif isinstance(effect, Schedule):
                self._arm(effect.delay, effect.timeout)
            elif isinstance(effect, Committed):
                for hook in self.on_commit:
                    hook(self.node, effect.block)

    def _loop(self) -> None:
        while not self._stop.is_set():
            now = time.monotonic()
            while self._timers and self._timers[0][0] <= now:
                _, _, timeout = heapq.heappop(self._timers)
                self._dispatch(self.node.step(timeout))
            wait = 0.05
            if self._timers:
                wait = min(wait, max(0.0, self._timers[0][0] - now))
            try:
                item = self.inbox.get(timeout=wait)
            except queue.Empty:
                continue
            if isinstance(item, tuple) and item and item[0] == "__tx__":
                self._dispatch(self.node.submit_tx(item[1]))
            else:
                self._dispatch(self.node.step(item))
