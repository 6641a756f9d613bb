"""BFT replication among validator nodes, in the Tendermint style.

Validators (the prosumer households plus the utility) take turns proposing
blocks; a block commits once strictly more than two thirds of the equal-power
validator set precommits its hash, which tolerates crashed or Byzantine
minorities. Consumer households run light nodes: they submit transactions and
replay committed blocks but never vote.

The node is a pure state machine: :meth:`ConsensusNode.step` consumes one
message or timeout and returns the effects (messages to send, timers to
arm, blocks committed). All I/O lives in the network layer, which makes the
protocol drivable by the deterministic simulator and by the TCP transport
alike.

Simplifications versus full Tendermint, acceptable at neighborhood scale:
validators lock on a prevote quorum and re-lock only on a later one, but
proof-of-lock-change messages are omitted; commits are propagated to
lagging/light nodes as a certificate bundling the quorum of precommit
signatures, which they verify before adopting the block.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Callable, Mapping

import functools

from .canonical import canonical_serialize
from .identity import KeyPair, sign, verify, verify_bytes
from .ledger import (
    Block,
    Chain,
    GenesisConfig,
    InvalidBlock,
    Transaction,
    TransactionRejected,
    verify_transaction,
)

__all__ = [
    "NIL",
    "Step",
    "ValidatorSet",
    "ConsensusMessage",
    "CommitCertificate",
    "CommitMessage",
    "TxMessage",
    "TimeoutEvent",
    "Broadcast",
    "Send",
    "Schedule",
    "Committed",
    "Timeouts",
    "RoundState",
    "proposer_for",
    "quorum_reached",
    "ConsensusNode",
    "LightNode",
    "EquivocatingNode",
]

NIL = ""  # vote target when no acceptable proposal was seen


class Step(enum.Enum):
    PROPOSE = "PROPOSE"
    PREVOTE = "PREVOTE"
    PRECOMMIT = "PRECOMMIT"


@dataclass(frozen=True)
class ValidatorSet:
    """Fixed, deduplicated validator list; every member has equal power."""

    validators: tuple[str, ...]

    def __post_init__(self) -> None:
        if len(set(self.validators)) != len(self.validators):
            raise ValueError("validator set contains duplicates")
        if not self.validators:
            raise ValueError("validator set is empty")

    def __len__(self) -> int:
        return len(self.validators)

    def __contains__(self, address: str) -> bool:
        return address in self.validators

    def quorum_count(self, count: int) -> bool:
        # strictly more than 2/3 of total power, in exact integer arithmetic
        return 3 * count > 2 * len(self.validators)


def proposer_for(validator_set: ValidatorSet, height: int, round_: int) -> str:
    """Deterministic rotation: validators[(height + round) mod n]."""
    n = len(validator_set)
    return validator_set.validators[(height + round_) % n]


def quorum_reached(
    votes: Mapping[str, str], validator_set: ValidatorSet, target: str | None = None
) -> bool:
    """True iff one vote value is carried by > 2/3 of the validator power.

    ``votes`` maps validator address to voted block hash (or NIL); votes from
    outside the set are ignored, and the mapping itself deduplicates voters.
    """
    counts: dict[str, int] = {}
    for sender, value in votes.items():
        if sender in validator_set:
            counts[value] = counts.get(value, 0) + 1
    if target is not None:
        return validator_set.quorum_count(counts.get(target, 0))
    return any(validator_set.quorum_count(c) for c in counts.values())


# ---------------------------------------------------------------------------
# Wire messages


@dataclass(frozen=True)
class ConsensusMessage:
    """PROPOSAL / PREVOTE / PRECOMMIT, signed by a validator."""

    kind: str
    height: int
    round: int
    block_hash: str  # lowercase hex, or "" for NIL votes
    sender: str
    signature: bytes
    block: Block | None = None  # proposals carry the body

    def signing_body(self) -> dict:
        return {
            "kind": self.kind,
            "height": self.height,
            "round": self.round,
            "block_hash": self.block_hash,
            "sender": self.sender,
        }

    @functools.cached_property
    def signing_bytes(self) -> bytes:
        return canonical_serialize(self.signing_body())

    def to_wire(self) -> dict:
        data = self.signing_body()
        data["signature"] = self.signature.hex()
        if self.block is not None:
            data["block"] = self.block.to_wire()
        return data

    @classmethod
    def from_wire(cls, data: Mapping) -> "ConsensusMessage":
        return cls(
            kind=data["kind"],
            height=data["height"],
            round=data["round"],
            block_hash=data["block_hash"],
            sender=data["sender"],
            signature=bytes.fromhex(data["signature"]),
            block=Block.from_wire(data["block"]) if "block" in data else None,
        )

    @classmethod
    def create(
        cls,
        keypair: KeyPair,
        kind: str,
        height: int,
        round_: int,
        block_hash: str,
        block: Block | None = None,
    ) -> "ConsensusMessage":
        unsigned = cls(kind, height, round_, block_hash, keypair.address.hex, b"", block)
        return cls(
            kind,
            height,
            round_,
            block_hash,
            keypair.address.hex,
            sign(keypair.private_key, unsigned.signing_body()),
            block,
        )


@dataclass(frozen=True)
class CommitCertificate:
    """Proof that a block committed: a quorum of precommit signatures.

    Anyone holding the validator pubkeys can check it, so light nodes and
    lagging validators can adopt the block without having followed the votes.
    """

    height: int
    round: int
    block_hash: str
    precommits: tuple[tuple[str, bytes], ...]  # (validator address, signature)

    def to_wire(self) -> dict:
        return {
            "height": self.height,
            "round": self.round,
            "block_hash": self.block_hash,
            "precommits": [[addr, sig.hex()] for addr, sig in self.precommits],
        }

    @classmethod
    def from_wire(cls, data: Mapping) -> "CommitCertificate":
        return cls(
            height=data["height"],
            round=data["round"],
            block_hash=data["block_hash"],
            precommits=tuple(
                (addr, sig if isinstance(sig, bytes) else bytes.fromhex(sig))
                for addr, sig in data["precommits"]
            ),
        )

    def verify(self, genesis: GenesisConfig, validator_set: ValidatorSet) -> bool:
        voters: set[str] = set()
        for address, signature in self.precommits:
            if address not in validator_set or address in voters:
                continue
            pubkey = genesis.validator_pubkey(address)
            if pubkey is None:
                continue
            body = {
                "kind": "PRECOMMIT",
                "height": self.height,
                "round": self.round,
                "block_hash": self.block_hash,
                "sender": address,
            }
            if verify(pubkey, body, signature):
                voters.add(address)
        return validator_set.quorum_count(len(voters))


@dataclass(frozen=True)
class CommitMessage:
    """A committed block plus its certificate, gossiped to everyone."""

    sender: str
    block: Block
    certificate: CommitCertificate

    def to_wire(self) -> dict:
        return {
            "kind": "COMMIT",
            "sender": self.sender,
            "block": self.block.to_wire(),
            "certificate": self.certificate.to_wire(),
        }

    @classmethod
    def from_wire(cls, data: Mapping) -> "CommitMessage":
        return cls(
            sender=data["sender"],
            block=Block.from_wire(data["block"]),
            certificate=CommitCertificate.from_wire(data["certificate"]),
        )


@dataclass(frozen=True)
class TxMessage:
    """A client transaction on its way to the validators' mempools."""

    tx: Transaction

    def to_wire(self) -> dict:
        return {"kind": "TX", "tx": self.tx.to_wire()}

    @classmethod
    def from_wire(cls, data: Mapping) -> "TxMessage":
        return cls(tx=Transaction.from_wire(data["tx"]))


@dataclass(frozen=True)
class TimeoutEvent:
    node: str
    height: int
    round: int
    phase: Step


# ---------------------------------------------------------------------------
# Effects returned by the state machine


@dataclass(frozen=True)
class Broadcast:
    message: object


@dataclass(frozen=True)
class Send:
    target: str
    message: object


@dataclass(frozen=True)
class Schedule:
    delay: float
    timeout: TimeoutEvent


@dataclass(frozen=True)
class Committed:
    block: Block


@dataclass(frozen=True)
class Timeouts:
    propose: float = 1.0
    prevote: float = 0.5
    precommit: float = 0.5
    commit_pause: float = 0.3  # breathing room between commit and next height
    live_block_interval: float = 5.0  # wall-clock pacing between live blocks


@dataclass
class RoundState:
    """Vote bookkeeping for the height currently being decided."""

    height: int
    round: int = 0
    step: Step = Step.PROPOSE
    started: bool = False
    locked_hash: str | None = None
    locked_round: int = -1
    # round -> sender -> voted hash (first vote per sender counts)
    prevotes: dict[int, dict[str, str]] = field(default_factory=dict)
    precommits: dict[int, dict[str, str]] = field(default_factory=dict)
    # block_hash -> body, collected from proposals (and gossip)
    proposals: dict[str, Block] = field(default_factory=dict)
    # round -> the block hash its proposer offered (first one seen)
    round_proposals: dict[int, str] = field(default_factory=dict)
    prevote_sent: set[int] = field(default_factory=set)
    precommit_sent: set[int] = field(default_factory=set)
    # precommit signatures by (round, hash) for commit certificates
    precommit_sigs: dict[tuple[int, str], dict[str, bytes]] = field(default_factory=dict)

    def votes(self, kind: str, round_: int) -> dict[str, str]:
        table = self.prevotes if kind == "PREVOTE" else self.precommits
        return table.setdefault(round_, {})


class ConsensusNode:
    """One validator: consensus loop, mempool, and its copy of the chain."""

    is_validator = True

    def __init__(
        self,
        keypair: KeyPair,
        genesis: GenesisConfig,
        timeouts: Timeouts | None = None,
        use_wall_clock: bool = False,
    ):
        self.keypair = keypair
        self.address = keypair.address.hex
        self.genesis = genesis
        self.chain = Chain(genesis)
        self.validator_set = ValidatorSet(tuple(genesis.validator_addresses()))
        if self.address not in self.validator_set:
            raise ValueError(f"{self.address} is not in the validator set")
        self.timeouts = timeouts or Timeouts()
        self.use_wall_clock = use_wall_clock
        self.mempool: dict[bytes, Transaction] = {}
        self.round_state = RoundState(height=self.chain.height + 1)
        # post-states of validated proposals, reused at commit time
        self._candidates: dict[str, object] = {}
        self.dropped_messages = 0
        self.equivocations_seen = 0
        self._commit_buffer: dict[int, CommitMessage] = {}
        self.on_commit: list[Callable[[ConsensusNode, Block], None]] = []

    # -- public API ---------------------------------------------------------

    def start(self) -> list:
        """Arm the first height. The initial proposal waits one commit pause
        so that client transactions already in flight reach mempools first."""
        return [
            Schedule(
                self.timeouts.commit_pause,
                TimeoutEvent(self.address, self.round_state.height, -1, Step.PROPOSE),
            )
        ]

    def submit_tx(self, tx: Transaction) -> list:
        """Accept a local client transaction and gossip it."""
        if not self._admit_tx(tx):
            return []
        return [Broadcast(TxMessage(tx))]

    def step(self, event) -> list:
        """Feed one message or timeout; returns resulting effects."""
        if isinstance(event, TimeoutEvent):
            return self._on_timeout(event)
        if isinstance(event, TxMessage):
            self._admit_tx(event.tx)
            return []
        if isinstance(event, CommitMessage):
            return self._on_commit_message(event)
        if isinstance(event, ConsensusMessage):
            return self._on_consensus_message(event)
        raise TypeError(f"unknown event {event!r}")

    # -- mempool ------------------------------------------------------------

    def _admit_tx(self, tx: Transaction) -> bool:
        tx_hash = tx.tx_hash
        if tx_hash in self.mempool:
            return False
        try:
            verify_transaction(self.chain.state, tx, self.genesis.tariff)
        except TransactionRejected:
            return False
        self.mempool[tx_hash] = tx
        return True

    def _prune_mempool(self) -> None:
        kept: dict[bytes, Transaction] = {}
        for tx_hash, tx in self.mempool.items():
            try:
                verify_transaction(self.chain.state, tx, self.genesis.tariff)
            except TransactionRejected:
                continue
            kept[tx_hash] = tx
        self.mempool = kept

    def _mempool_candidates(self) -> list[Transaction]:
        # sorted so proposal content does not depend on gossip arrival order
        return sorted(
            self.mempool.values(), key=lambda tx: (tx.sender_address, tx.nonce)
        )

    # -- round lifecycle ----------------------------------------------------

    def _enter_round(self, height: int, round_: int) -> list:
        state = self.round_state
        state.round = round_
        state.step = Step.PROPOSE
        state.started = True
        effects: list = [
            Schedule(
                self._propose_timeout(round_),
                TimeoutEvent(self.address, height, round_, Step.PROPOSE),
            )
        ]
        if proposer_for(self.validator_set, height, round_) == self.address:
            block = self._block_to_propose()
            if block is not None:
                proposal = ConsensusMessage.create(
                    self.keypair,
                    "PROPOSAL",
                    height,
                    round_,
                    block.block_hash.hex(),
                    block,
                )
                effects.append(Broadcast(proposal))
                effects.extend(self._on_consensus_message(proposal))
        elif round_ in state.round_proposals and round_ not in state.prevote_sent:
            # the proposal raced ahead of our round entry; act on it now
            effects.extend(self._prevote_for_block(state.round_proposals[round_]))
            effects.extend(self._maybe_transition())
        return effects

    def _propose_timeout(self, round_: int) -> float:
        # grow per round so a healthy quorum eventually outwaits stragglers
        return self.timeouts.propose * (1 + 0.5 * round_)

    def _block_to_propose(self) -> Block | None:
        state = self.round_state
        if state.locked_hash and state.locked_hash in state.proposals:
            return state.proposals[state.locked_hash]
        timestamp = None
        if self.use_wall_clock:
            import time

            timestamp = max(int(time.time()), self.chain.tip_timestamp + 1)
        block, post_state = self.chain.build_block(
            self.address, self._mempool_candidates(), timestamp=timestamp
        )
        self._candidates[block.block_hash.hex()] = post_state
        return block

    # -- message handling ---------------------------------------------------

    def _validator_signature_ok(self, message: ConsensusMessage) -> bool:
        if message.sender not in self.validator_set:
            return False
        pubkey = self.genesis.validator_pubkey(message.sender)
        if pubkey is None:
            return False
        return verify_bytes(pubkey, message.signing_bytes, message.signature)

    def _on_consensus_message(self, message: ConsensusMessage) -> list:
        if not self._validator_signature_ok(message):
            self.dropped_messages += 1
            return []
        if message.height != self.round_state.height:
            # old heights are done; future heights arrive via COMMIT gossip
            return []
        if message.kind == "PROPOSAL":
            return self._on_proposal(message)
        if message.kind in ("PREVOTE", "PRECOMMIT"):
            return self._on_vote(message)
        self.dropped_messages += 1
        return []

    def _on_proposal(self, message: ConsensusMessage) -> list:
        state = self.round_state
        block = message.block
        if block is None or block.block_hash.hex() != message.block_hash:
            self.dropped_messages += 1
            return []
        if proposer_for(self.validator_set, message.height, message.round) != message.sender:
            self.dropped_messages += 1
            return []
        effects: list = []
        first_sighting = message.block_hash not in state.proposals
        if first_sighting:
            state.proposals[message.block_hash] = block
            # gossip the body so selective senders cannot split the vote
            effects.append(Broadcast(message))
        state.round_proposals.setdefault(message.round, message.block_hash)
        if message.round == state.round and state.round not in state.prevote_sent:
            effects.extend(self._prevote_for_block(message.block_hash))
        effects.extend(self._maybe_transition())
        return effects

    def _prevote_for_block(self, block_hash: str) -> list:
        state = self.round_state
        if state.locked_hash is not None:
            return self._cast_prevote(state.locked_hash)
        block = state.proposals.get(block_hash)
        if block is None:
            return self._cast_prevote(NIL)
        if block_hash not in self._candidates:
            try:
                self._candidates[block_hash] = self.chain.validate_block(block)
            except InvalidBlock:
                return self._cast_prevote(NIL)
        return self._cast_prevote(block_hash)

    def _cast_prevote(self, vote_hash: str) -> list:
        state = self.round_state
        if state.round in state.prevote_sent:
            return []
        state.prevote_sent.add(state.round)
        state.started = True  # a message may pull us in before the begin timer
        state.step = Step.PREVOTE
        vote = ConsensusMessage.create(
            self.keypair, "PREVOTE", state.height, state.round, vote_hash
        )
        effects = [
            Broadcast(vote),
            Schedule(
                self.timeouts.prevote,
                TimeoutEvent(self.address, state.height, state.round, Step.PREVOTE),
            ),
        ]
        effects.extend(self._record_vote(vote))
        return effects

    def _cast_precommit(self, vote_hash: str) -> list:
        state = self.round_state
        if state.round in state.precommit_sent:
            return []
        state.precommit_sent.add(state.round)
        state.started = True
        state.step = Step.PRECOMMIT
        vote = ConsensusMessage.create(
            self.keypair, "PRECOMMIT", state.height, state.round, vote_hash
        )
        effects = [
            Broadcast(vote),
            Schedule(
                self.timeouts.precommit,
                TimeoutEvent(self.address, state.height, state.round, Step.PRECOMMIT),
            ),
        ]
        effects.extend(self._record_vote(vote))
        return effects

    def _on_vote(self, message: ConsensusMessage) -> list:
        effects = self._record_vote(message)
        effects.extend(self._maybe_transition())
        return effects

    def _record_vote(self, message: ConsensusMessage) -> list:
        state = self.round_state
        votes = state.votes(message.kind, message.round)
        existing = votes.get(message.sender)
        if existing is not None:
            if existing != message.block_hash:
                self.equivocations_seen += 1
            return []
        votes[message.sender] = message.block_hash
        if message.kind == "PRECOMMIT":
            sigs = state.precommit_sigs.setdefault(
                (message.round, message.block_hash), {}
            )
            sigs[message.sender] = message.signature
        return []

    # -- transitions --------------------------------------------------------

    def _maybe_transition(self) -> list:
        effects: list = []
        state = self.round_state

        # commit as soon as any round of this height has a precommit quorum
        for (round_, block_hash), sigs in list(state.precommit_sigs.items()):
            if block_hash == NIL:
                continue
            if not self.validator_set.quorum_count(len(sigs)):
                continue
            block = state.proposals.get(block_hash)
            if block is None:
                continue  # wait for the body to arrive via gossip
            certificate = CommitCertificate(
                height=state.height,
                round=round_,
                block_hash=block_hash,
                precommits=tuple(sorted(sigs.items())),
            )
            effects.extend(self._commit(block, certificate))
            return effects

        # react to prevote quorums
        if state.step == Step.PREVOTE and state.round not in state.precommit_sent:
            prevotes = state.votes("PREVOTE", state.round)
            winner = self._quorum_value(prevotes)
            if winner is not None:
                if winner == NIL:
                    effects.extend(self._cast_precommit(NIL))
                elif winner in self._candidates or winner in state.proposals:
                    if state.round >= state.locked_round:
                        state.locked_hash = winner
                        state.locked_round = state.round
                    effects.extend(self._cast_precommit(winner))
                else:
                    effects.extend(self._cast_precommit(NIL))
        # a full round of nil precommits means this round is dead
        if state.step == Step.PRECOMMIT:
            precommits = state.votes("PRECOMMIT", state.round)
            if quorum_reached(precommits, self.validator_set, target=NIL):
                effects.extend(self._advance_round())
        return effects

    def _quorum_value(self, votes: Mapping[str, str]) -> str | None:
        counts: dict[str, int] = {}
        for sender, value in votes.items():
            if sender in self.validator_set:
                counts[value] = counts.get(value, 0) + 1
        for value, count in counts.items():
            if self.validator_set.quorum_count(count):
                return value
        return None

    def _advance_round(self) -> list:
        state = self.round_state
        return self._enter_round(state.height, state.round + 1)

    def _on_timeout(self, event: TimeoutEvent) -> list:
        state = self.round_state
        if event.height != state.height:
            return []
        if event.round == -1:
            # pause after commit elapsed: enter the new height unless a
            # message already pulled us in
            if not state.started:
                return self._enter_round(state.height, 0)
            return []
        if event.round != state.round:
            return []
        if event.phase == Step.PROPOSE and state.step == Step.PROPOSE:
            # nothing proposable arrived in time: prevote lock or NIL
            return self._cast_prevote(state.locked_hash or NIL)
        if event.phase == Step.PREVOTE and state.step == Step.PREVOTE:
            return self._cast_precommit(NIL)
        if event.phase == Step.PRECOMMIT and state.step == Step.PRECOMMIT:
            return self._advance_round()
        return []

    # -- committing ---------------------------------------------------------

    def _commit(self, block: Block, certificate: CommitCertificate) -> list:
        block_hash = block.block_hash.hex()
        post_state = self._candidates.pop(block_hash, None)
        if post_state is None:
            try:
                post_state = self.chain.validate_block(block)
            except InvalidBlock:
                # a quorum committed a block this node cannot validate: its
                # state has diverged and halting is the only safe behavior
                raise
        self.chain.commit_block(block, post_state)
        self._candidates.clear()
        self._prune_mempool()
        for hook in self.on_commit:
            hook(self, block)
        effects: list = [
            Committed(block),
            Broadcast(CommitMessage(self.address, block, certificate)),
        ]
        self.round_state = RoundState(height=self.chain.height + 1)
        effects.append(
            Schedule(
                self._height_pause(),
                TimeoutEvent(self.address, self.round_state.height, -1, Step.PROPOSE),
            )
        )
        return effects

    def _height_pause(self) -> float:
        if self.use_wall_clock:
            return max(self.timeouts.commit_pause, self.timeouts.live_block_interval)
        return self.timeouts.commit_pause

    def _on_commit_message(self, message: CommitMessage) -> list:
        """Adopt a certified commit (used to catch up after crashes/partitions)."""
        block = message.block
        if block.height > self.chain.height + 1:
            # can't validate against a missing parent yet; hold a bounded
            # buffer and drain once the gap closes
            if len(self._commit_buffer) < 64:
                self._commit_buffer.setdefault(block.height, message)
            return []
        if block.height != self.chain.height + 1:
            return []
        if block.block_hash.hex() != message.certificate.block_hash:
            self.dropped_messages += 1
            return []
        if not message.certificate.verify(self.genesis, self.validator_set):
            self.dropped_messages += 1
            return []
        if message.certificate.height != block.height:
            self.dropped_messages += 1
            return []
        try:
            post_state = self.chain.validate_block(block)
        except InvalidBlock:
            self.dropped_messages += 1
            return []
        self.chain.commit_block(block, post_state)
        self._candidates.clear()
        self._prune_mempool()
        for hook in self.on_commit:
            hook(self, block)
        effects: list = [Committed(block)]
        self.round_state = RoundState(height=self.chain.height + 1)
        effects.append(
            Schedule(
                self._height_pause(),
                TimeoutEvent(self.address, self.round_state.height, -1, Step.PROPOSE),
            )
        )
        buffered = self._commit_buffer.pop(self.chain.height + 1, None)
        if buffered is not None:
            effects.extend(self._on_commit_message(buffered))
        return effects


class LightNode:
    """Consumer node: submits transactions, replays certified blocks, never votes."""

    is_validator = False

    def __init__(self, keypair: KeyPair, genesis: GenesisConfig):
        self.keypair = keypair
        self.address = keypair.address.hex
        self.genesis = genesis
        self.chain = Chain(genesis)
        self.validator_set = ValidatorSet(tuple(genesis.validator_addresses()))
        self.dropped_messages = 0
        self.on_commit: list[Callable[[LightNode, Block], None]] = []

    def start(self) -> list:
        return []

    def submit_tx(self, tx: Transaction) -> list:
        return [Broadcast(TxMessage(tx))]

    def step(self, event) -> list:
        if isinstance(event, CommitMessage):
            return self._on_commit_message(event)
        # votes, proposals and tx gossip are not a light node's business
        return []

    def _on_commit_message(self, message: CommitMessage) -> list:
        block = message.block
        if block.height != self.chain.height + 1:
            return []
        if block.block_hash.hex() != message.certificate.block_hash:
            self.dropped_messages += 1
            return []
        if message.certificate.height != block.height or not message.certificate.verify(
            self.genesis, self.validator_set
        ):
            self.dropped_messages += 1
            return []
        try:
            post_state = self.chain.validate_block(block)
        except InvalidBlock:
            self.dropped_messages += 1
            return []
        self.chain.commit_block(block, post_state)
        for hook in self.on_commit:
            hook(self, block)
        return [Committed(block)]


class EquivocatingNode(ConsensusNode):
    """Byzantine validator for fault-injection tests.

    When proposing, it builds two different valid blocks and shows one to
    each half of the network; it splits its votes the same way. Honest nodes
    must never commit conflicting blocks despite this.
    """

    def __init__(self, *args, peers: list[str], **kwargs):
        super().__init__(*args, **kwargs)
        others = [p for p in peers if p != self.address]
        half = len(others) // 2
        # ordered, so effect emission order is independent of hash seeds
        self._group_a = tuple(others[:half])
        self._group_b = tuple(others[half:])

    def _enter_round(self, height: int, round_: int) -> list:
        state = self.round_state
        state.round = round_
        state.step = Step.PROPOSE
        state.started = True
        effects: list = [
            Schedule(
                self._propose_timeout(round_),
                TimeoutEvent(self.address, height, round_, Step.PROPOSE),
            )
        ]
        if proposer_for(self.validator_set, height, round_) == self.address:
            block_a, post_a = self.chain.build_block(
                self.address, self._mempool_candidates()
            )
            block_b, post_b = self.chain.build_block(
                self.address, [], timestamp=block_a.timestamp + 1
            )
            self._candidates[block_a.block_hash.hex()] = post_a
            self._candidates[block_b.block_hash.hex()] = post_b
            state.proposals[block_a.block_hash.hex()] = block_a
            state.proposals[block_b.block_hash.hex()] = block_b
            for group, block in ((self._group_a, block_a), (self._group_b, block_b)):
                proposal = ConsensusMessage.create(
                    self.keypair,
                    "PROPOSAL",
                    height,
                    round_,
                    block.block_hash.hex(),
                    block,
                )
                for peer in group:
                    effects.append(Send(peer, proposal))
            # vote for both, one per group
            for group, block in ((self._group_a, block_a), (self._group_b, block_b)):
                for kind in ("PREVOTE", "PRECOMMIT"):
                    vote = ConsensusMessage.create(
                        self.keypair, kind, height, round_, block.block_hash.hex()
                    )
                    for peer in group:
                        effects.append(Send(peer, vote))
            state.prevote_sent.add(round_)
            state.precommit_sent.add(round_)
        return effects
