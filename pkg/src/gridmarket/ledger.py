"""Replicated application state: transactions, blocks, and deterministic replay.

A transaction carries the sender's public key, their address, an order
payload, a per-sender nonce, and a signature over the canonical bytes of all
of that. Blocks are ordered transaction lists plus the hash of the
application state reached after applying them, so replicas can cross-check
each other byte for byte.

Interval clearing is self-triggering: the first block whose timestamp enters
a new 15-minute interval clears the open book before a fresh one is opened.
Sparse block production therefore still clears every crossed interval, one
(possibly empty) result per interval.
"""

from __future__ import annotations

import functools
import hashlib
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping

from .canonical import canonical_serialize
from .identity import (
    InvalidPublicKeyError,
    KeyPair,
    derive_address,
    sign,
    verify_bytes,
)
from .market import (
    GRID_OPERATOR,
    UTILITY,
    ClearingResult,
    Order,
    OrderBook,
    OrderRejected,
    Side,
    TariffConfig,
    clear_interval,
    insert_order,
)

__all__ = [
    "TransactionRejected",
    "InvalidBlock",
    "OrderPayload",
    "Transaction",
    "Block",
    "Account",
    "AppState",
    "GenesisConfig",
    "Chain",
    "verify_transaction",
    "apply_transaction",
    "apply_block",
    "state_hash",
    "write_block_log",
    "append_block_log",
    "read_block_log",
]


class TransactionRejected(Exception):
    """Transaction failed verification; ``code`` is the machine-readable reason."""

    def __init__(self, code: str, message: str):
        super().__init__(f"{code}: {message}")
        self.code = code


class InvalidBlock(Exception):
    """Block failed validation; the whole block is discarded."""


@dataclass(frozen=True)
class OrderPayload:
    side: Side
    energy_wh: int
    limit_price_mct: int
    interval_id: int

    def to_wire(self) -> dict:
        return {
            "kind": "ORDER",
            "side": self.side.value,
            "energy_wh": self.energy_wh,
            "limit_price_mct": self.limit_price_mct,
            "interval_id": self.interval_id,
        }

    @classmethod
    def from_wire(cls, data: Mapping) -> "OrderPayload":
        if data.get("kind") != "ORDER":
            raise TransactionRejected(
                "INVALID_ORDER", f"unknown payload kind {data.get('kind')!r}"
            )
        return cls(
            side=Side(data["side"]),
            energy_wh=data["energy_wh"],
            limit_price_mct=data["limit_price_mct"],
            interval_id=data["interval_id"],
        )


@dataclass(frozen=True)
class Transaction:
    sender_pubkey: bytes
    sender_address: str
    payload: OrderPayload
    nonce: int
    signature: bytes

    def signing_body(self) -> dict:
        # bytes render as lowercase hex: identical canonical bytes, and the
        # dict stays plain-JSON for the HTTP layer
        return {
            "sender_pubkey": self.sender_pubkey.hex(),
            "sender_address": self.sender_address,
            "payload": self.payload.to_wire(),
            "nonce": self.nonce,
        }

    @functools.cached_property
    def signing_bytes(self) -> bytes:
        # every replica re-verifies the same shared tx object; encode once
        return canonical_serialize(self.signing_body())

    def to_wire(self) -> dict:
        body = self.signing_body()
        body["signature"] = self.signature.hex()
        return body

    @classmethod
    def from_wire(cls, data: Mapping) -> "Transaction":
        return cls(
            sender_pubkey=bytes.fromhex(data["sender_pubkey"]),
            sender_address=data["sender_address"],
            payload=OrderPayload.from_wire(data["payload"]),
            nonce=data["nonce"],
            signature=bytes.fromhex(data["signature"]),
        )

    @functools.cached_property
    def tx_hash(self) -> bytes:
        return hashlib.sha256(canonical_serialize(self.to_wire())).digest()

    @classmethod
    def create(cls, keypair: KeyPair, payload: OrderPayload, nonce: int) -> "Transaction":
        unsigned = cls(
            sender_pubkey=keypair.public_key,
            sender_address=keypair.address.hex,
            payload=payload,
            nonce=nonce,
            signature=b"",
        )
        signature = sign(keypair.private_key, unsigned.signing_body())
        return cls(
            sender_pubkey=unsigned.sender_pubkey,
            sender_address=unsigned.sender_address,
            payload=payload,
            nonce=nonce,
            signature=signature,
        )


@dataclass(frozen=True)
class Block:
    height: int
    timestamp: int
    prev_hash: bytes
    transactions: tuple[Transaction, ...]
    app_state_hash: bytes
    proposer: str

    def to_wire(self) -> dict:
        return {
            "height": self.height,
            "timestamp": self.timestamp,
            "prev_hash": self.prev_hash.hex(),
            "transactions": [tx.to_wire() for tx in self.transactions],
            "app_state_hash": self.app_state_hash.hex(),
            "proposer": self.proposer,
        }

    @classmethod
    def from_wire(cls, data: Mapping) -> "Block":
        return cls(
            height=data["height"],
            timestamp=data["timestamp"],
            prev_hash=bytes.fromhex(data["prev_hash"]),
            transactions=tuple(
                Transaction.from_wire(tx) for tx in data["transactions"]
            ),
            app_state_hash=bytes.fromhex(data["app_state_hash"]),
            proposer=data["proposer"],
        )

    @functools.cached_property
    def block_hash(self) -> bytes:
        return hashlib.sha256(canonical_serialize(self.to_wire())).digest()


@dataclass
class Account:
    balance_uct: int = 0
    nonce: int = 0

    def to_wire(self) -> dict:
        return {"balance_uct": self.balance_uct, "nonce": self.nonce}


class AppState:
    """The state every replica must agree on, hash-for-hash.

    ``clearing_history`` keeps each interval's result together with the book
    it cleared from; both are consensus data (the agent's probability
    estimator replays old books, the explorer serves them). Canonical bytes
    of history entries are memoised since they never change once appended.
    """

    def __init__(self, current_interval_id: int, accounts: dict[str, Account] | None = None):
        self.accounts: dict[str, Account] = accounts if accounts is not None else {}
        self.open_book = OrderBook(interval_id=current_interval_id)
        self.clearing_history: list[ClearingResult] = []
        self.book_history: list[OrderBook] = []
        self.current_interval_id = current_interval_id
        self._history_parts: list[bytes] = []

    def account(self, address: str) -> Account:
        acct = self.accounts.get(address)
        if acct is None:
            acct = Account()
            self.accounts[address] = acct
        return acct

    def clone(self) -> "AppState":
        other = AppState.__new__(AppState)
        other.accounts = {k: Account(v.balance_uct, v.nonce) for k, v in self.accounts.items()}
        other.open_book = self.open_book.clone()
        other.clearing_history = list(self.clearing_history)
        other.book_history = list(self.book_history)
        other.current_interval_id = self.current_interval_id
        other._history_parts = list(self._history_parts)
        return other

    def record_clearing(self, result: ClearingResult, book: OrderBook) -> None:
        self.clearing_history.append(result)
        self.book_history.append(book)
        self._history_parts.append(
            canonical_serialize({"book": book.to_wire(), "result": result.to_wire()})
        )

    def to_wire(self) -> dict:
        return {
            "accounts": {k: v.to_wire() for k, v in self.accounts.items()},
            "clearing_history": [
                {"book": book.to_wire(), "result": result.to_wire()}
                for result, book in zip(self.clearing_history, self.book_history)
            ],
            "current_interval_id": self.current_interval_id,
            "open_book": self.open_book.to_wire(),
        }

    def canonical_bytes(self) -> bytes:
        # assembled from memoised history parts; bit-identical to
        # canonical_serialize(self.to_wire()), which tests assert
        head = canonical_serialize({k: v.to_wire() for k, v in self.accounts.items()})
        return b"".join(
            [
                b'{"accounts":',
                head,
                b',"clearing_history":[',
                b",".join(self._history_parts),
                b'],"current_interval_id":',
                str(self.current_interval_id).encode(),
                b',"open_book":',
                canonical_serialize(self.open_book.to_wire()),
                b"}",
            ]
        )


def state_hash(state: AppState) -> bytes:
    """SHA256 over the canonical serialization of the full application state."""
    return hashlib.sha256(state.canonical_bytes()).digest()


def verify_transaction(state: AppState, tx: Transaction, tariff: TariffConfig) -> None:
    """Raise :class:`TransactionRejected` unless ``tx`` is applicable now.

    Checks, in order: the address matches the public key, the signature
    verifies, the nonce continues the sender's sequence, and the order
    payload is admissible for the currently open book.
    """
    try:
        derived = derive_address(tx.sender_pubkey).hex
    except InvalidPublicKeyError as exc:
        raise TransactionRejected("ADDRESS_MISMATCH", f"unusable public key: {exc}")
    if derived != tx.sender_address:
        raise TransactionRejected(
            "ADDRESS_MISMATCH",
            f"address {tx.sender_address} does not match key-derived {derived}",
        )
    if not verify_bytes(tx.sender_pubkey, tx.signing_bytes, tx.signature):
        raise TransactionRejected("BAD_SIGNATURE", "signature does not verify")
    expected = state.accounts.get(tx.sender_address, Account()).nonce + 1
    if tx.nonce != expected:
        raise TransactionRejected(
            "BAD_NONCE", f"nonce {tx.nonce}, expected {expected}"
        )
    payload = tx.payload
    if payload.energy_wh <= 0:
        raise TransactionRejected("INVALID_ORDER", "energy must be positive")
    if not tariff.floor_mct <= payload.limit_price_mct <= tariff.ceiling_mct:
        raise TransactionRejected(
            "INVALID_ORDER",
            f"limit {payload.limit_price_mct} outside "
            f"[{tariff.floor_mct}, {tariff.ceiling_mct}]",
        )
    if payload.interval_id != state.current_interval_id:
        raise TransactionRejected(
            "STALE_ORDER",
            f"order targets interval {payload.interval_id}, "
            f"current is {state.current_interval_id}",
        )
    if tx.sender_address in state.open_book.accounts():
        raise TransactionRejected(
            "DUPLICATE_ORDER", f"{tx.sender_address} already bid this interval"
        )


def apply_transaction(
    state: AppState,
    tx: Transaction,
    tariff: TariffConfig,
    arrival_seq: tuple[int, int] = (0, 0),
) -> AppState:
    """Verify and apply ``tx``: insert the order, bump the nonce."""
    verify_transaction(state, tx, tariff)
    order = Order(
        account=tx.sender_address,
        side=tx.payload.side,
        energy_wh=tx.payload.energy_wh,
        limit_price_mct=tx.payload.limit_price_mct,
        interval_id=tx.payload.interval_id,
        arrival_seq=arrival_seq,
    )
    try:
        insert_order(state.open_book, order)
    except OrderRejected as exc:  # pre-checked above; reject without mutating
        raise TransactionRejected(exc.code, str(exc))
    state.account(tx.sender_address).nonce = tx.nonce
    return state


def _run_clearing(state: AppState, tariff: TariffConfig) -> None:
    book = state.open_book
    result = clear_interval(book, tariff)
    for entry in result.settlements:
        state.account(entry.account).balance_uct += entry.amount_uct
    state.record_clearing(result, book)
    state.current_interval_id += 1
    state.open_book = OrderBook(interval_id=state.current_interval_id)


def apply_block(
    state: AppState,
    block: Block,
    tariff: TariffConfig,
    interval_seconds: int = 900,
) -> AppState:
    """Apply all transactions in order, then any interval clearings due.

    Any invalid transaction invalidates the whole block; honest proposers
    pre-validate. Linkage (height, prev_hash, timestamp monotonicity) is the
    chain's concern and checked there.
    """
    for index, tx in enumerate(block.transactions):
        try:
            apply_transaction(state, tx, tariff, arrival_seq=(block.height, index))
        except TransactionRejected as exc:
            raise InvalidBlock(
                f"block {block.height} tx {index} rejected: {exc}"
            ) from exc
    target_interval = block.timestamp // interval_seconds
    while state.current_interval_id < target_interval:
        _run_clearing(state, tariff)
    return state


@dataclass(frozen=True)
class GenesisConfig:
    """Everything replicas must agree on before the first block."""

    genesis_time: int
    interval_seconds: int
    block_interval_seconds: int
    tariff: TariffConfig
    validators: tuple[tuple[str, bytes], ...]  # (address, pubkey), order fixed
    accounts: tuple[str, ...] = ()

    def to_wire(self) -> dict:
        return {
            "genesis_time": self.genesis_time,
            "interval_seconds": self.interval_seconds,
            "block_interval_seconds": self.block_interval_seconds,
            "tariff": self.tariff.to_wire(),
            "validators": [[addr, pk.hex()] for addr, pk in self.validators],
            "accounts": list(self.accounts),
        }

    @classmethod
    def from_wire(cls, data: Mapping) -> "GenesisConfig":
        return cls(
            genesis_time=data["genesis_time"],
            interval_seconds=data["interval_seconds"],
            block_interval_seconds=data["block_interval_seconds"],
            tariff=TariffConfig.from_wire(data["tariff"]),
            validators=tuple(
                (addr, pk if isinstance(pk, bytes) else bytes.fromhex(pk))
                for addr, pk in data["validators"]
            ),
            accounts=tuple(data["accounts"]),
        )

    @property
    def genesis_hash(self) -> bytes:
        return hashlib.sha256(canonical_serialize(self.to_wire())).digest()

    def validator_addresses(self) -> list[str]:
        return [addr for addr, _ in self.validators]

    def validator_pubkey(self, address: str) -> bytes | None:
        for addr, pk in self.validators:
            if addr == address:
                return pk
        return None

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_wire(), indent=2, sort_keys=True))

    @classmethod
    def load(cls, path: str | Path) -> "GenesisConfig":
        return cls.from_wire(json.loads(Path(path).read_text()))

    def initial_state(self) -> AppState:
        state = AppState(current_interval_id=self.genesis_time // self.interval_seconds)
        for address in self.accounts:
            state.accounts[address] = Account()
        # settlement roles always exist so balance sums stay visible
        state.accounts.setdefault(UTILITY, Account())
        state.accounts.setdefault(GRID_OPERATOR, Account())
        return state


class Chain:
    """A node's copy of the block log plus the state it deterministically implies."""

    def __init__(self, genesis: GenesisConfig):
        self.genesis = genesis
        self.blocks: list[Block] = []
        self.state = genesis.initial_state()
        self.state_hashes: list[bytes] = []
        self._tx_index: dict[bytes, tuple[int, int]] = {}

    @property
    def height(self) -> int:
        return len(self.blocks)

    @property
    def tip_hash(self) -> bytes:
        return self.blocks[-1].block_hash if self.blocks else self.genesis.genesis_hash

    @property
    def tip_timestamp(self) -> int:
        return self.blocks[-1].timestamp if self.blocks else self.genesis.genesis_time

    def next_timestamp(self) -> int:
        """Logical block time: genesis plus one block interval per height."""
        return self.genesis.genesis_time + (self.height + 1) * self.genesis.block_interval_seconds

    def build_block(
        self, proposer: str, candidate_txs: Iterable[Transaction], timestamp: int | None = None
    ) -> tuple[Block, AppState]:
        """Assemble a valid block from whatever candidate transactions fit.

        Invalid or no-longer-applicable candidates are silently excluded (an
        honest proposer never ships a tx that would invalidate its block).
        Returns the block and the post-state it commits to.
        """
        ts = timestamp if timestamp is not None else self.next_timestamp()
        if ts <= self.tip_timestamp:
            ts = self.tip_timestamp + 1
        trial = self.state.clone()
        included: list[Transaction] = []
        height = self.height + 1
        for tx in candidate_txs:
            try:
                apply_transaction(
                    trial, tx, self.genesis.tariff, arrival_seq=(height, len(included))
                )
            except TransactionRejected:
                continue
            included.append(tx)
        target_interval = ts // self.genesis.interval_seconds
        while trial.current_interval_id < target_interval:
            _run_clearing(trial, self.genesis.tariff)
        block = Block(
            height=height,
            timestamp=ts,
            prev_hash=self.tip_hash,
            transactions=tuple(included),
            app_state_hash=state_hash(trial),
            proposer=proposer,
        )
        return block, trial

    def validate_block(self, block: Block) -> AppState:
        """Full check of a proposed block; returns the post-state on success."""
        if block.height != self.height + 1:
            raise InvalidBlock(f"height {block.height}, expected {self.height + 1}")
        if block.prev_hash != self.tip_hash:
            raise InvalidBlock("prev_hash does not match chain tip")
        if block.timestamp <= self.tip_timestamp:
            raise InvalidBlock("timestamp not strictly increasing")
        trial = apply_block(
            self.state.clone(), block, self.genesis.tariff, self.genesis.interval_seconds
        )
        if state_hash(trial) != block.app_state_hash:
            raise InvalidBlock("app_state_hash mismatch")
        return trial

    def commit_block(self, block: Block, post_state: AppState | None = None) -> None:
        if post_state is None:
            post_state = self.validate_block(block)
        self.blocks.append(block)
        self.state = post_state
        self.state_hashes.append(block.app_state_hash)
        for index, tx in enumerate(block.transactions):
            self._tx_index[tx.tx_hash] = (block.height, index)

    def find_tx(self, tx_hash: bytes) -> tuple[Transaction, int, int] | None:
        located = self._tx_index.get(tx_hash)
        if located is None:
            return None
        height, index = located
        return self.blocks[height - 1].transactions[index], height, index


def write_block_log(path: str | Path, blocks: Iterable[Block]) -> None:
    """Write a whole log: one hex-wrapped canonical-serialized block per line."""
    with open(path, "w") as fh:
        for block in blocks:
            fh.write(canonical_serialize(block.to_wire()).hex() + "\n")


def append_block_log(path: str | Path, block: Block) -> None:
    """Append one committed block to the append-only log."""
    with open(path, "a") as fh:
        fh.write(canonical_serialize(block.to_wire()).hex() + "\n")


def read_block_log(path: str | Path) -> list[Block]:
    blocks = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            blocks.append(Block.from_wire(json.loads(bytes.fromhex(line))))
    return blocks
