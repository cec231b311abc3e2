"""Per-node membership state machine: insertion, access control, proofs of
life, deletion, and the Sybil checks that guard them.

Each node keeps a replica of the shared instance plus a bounded FIFO of
recent update records.  All mutation goes through the handlers here, one at a
time per node; replicas that apply the same record stream end up with
byte-identical canonical state, which is the property everything else leans
on.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from enum import Enum
from random import Random
from typing import Iterable, Optional, Union

from . import zkp
from .graph import (
    Graph,
    GraphError,
    HamiltonianCycle,
    NodeId,
    assign_new_id,
    encode_cycle,
    encode_graph,
    neighbor_set_for_insert,
    splice_delete,
    splice_insert,
)
from .zkp import Commitment, Prover, Response, digest, run_proof


class ProtocolError(ValueError):
    """Base class for membership-protocol violations."""


class DuplicateIdError(ProtocolError):
    """An id that is already assigned was claimed or proposed."""


class NodeStatus(Enum):
    ONLINE = "online"
    OFFLINE = "offline"
    DELETED = "deleted"


#: Slack added to the deletion window so a member is only removed once a full
#: period T plus the answer-collection latency has passed with no sign of
#: life; without it a node silent for barely one window would already be cut.
DELETION_GRACE = 0.5


# ---------------------------------------------------------------------------
# Update records (the FIFO catch-up queue contents)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class InsertionRecord:
    stage: int
    node: NodeId
    neighbors: frozenset[NodeId]
    author: NodeId
    timestamp: float


@dataclass(frozen=True)
class DeletionRecord:
    stage: int
    node: NodeId
    author: NodeId
    timestamp: float


@dataclass(frozen=True)
class PolRecord:
    """A witnessed proof-of-life summary; does not advance the stage."""

    stage: int
    alive: frozenset[NodeId]
    author: NodeId
    timestamp: float


UpdateRecord = Union[InsertionRecord, DeletionRecord, PolRecord]

_RECORD_TAGS = {InsertionRecord: 0x01, DeletionRecord: 0x02, PolRecord: 0x03}


def encode_record(rec: UpdateRecord) -> bytes:
    head = struct.pack(">BId", _RECORD_TAGS[type(rec)], rec.stage, rec.timestamp)
    if isinstance(rec, InsertionRecord):
        body = struct.pack(">II", rec.node, rec.author) + _pack_id_set(rec.neighbors)
    elif isinstance(rec, DeletionRecord):
        body = struct.pack(">II", rec.node, rec.author)
    else:
        body = struct.pack(">I", rec.author) + _pack_id_set(rec.alive)
    return head + body


def _pack_id_set(ids: frozenset[NodeId]) -> bytes:
    seq = sorted(ids)
    return struct.pack(f">I{len(seq)}I", len(seq), *seq)


# ---------------------------------------------------------------------------
# Wire messages
# ---------------------------------------------------------------------------

#: Fixed per-message framing overhead added on top of the payload.
MESSAGE_HEADER_BYTES = 16


@dataclass(frozen=True, kw_only=True)
class Message:
    """Common envelope: transport sender, stage, and a network-clock stamp."""

    sender: NodeId
    stage: int
    sent_at: float = 0.0

    traffic_class = "insertion"
    secure_channel = False

    def payload_bytes(self) -> bytes:
        return b""

    def size(self) -> int:
        return MESSAGE_HEADER_BYTES + len(self.payload_bytes())


@dataclass(frozen=True, kw_only=True)
class InsertionAnnounce(Message):
    proposed_id: NodeId

    def payload_bytes(self) -> bytes:
        return struct.pack(">I", self.proposed_id)


@dataclass(frozen=True, kw_only=True)
class InsertionAck(Message):
    proposed_id: NodeId

    def payload_bytes(self) -> bytes:
        return struct.pack(">I", self.proposed_id)


@dataclass(frozen=True, kw_only=True)
class NeighborSetBroadcast(Message):
    node: NodeId
    neighbors: frozenset[NodeId]

    def payload_bytes(self) -> bytes:
        return struct.pack(">I", self.node) + _pack_id_set(self.neighbors)


@dataclass(frozen=True, kw_only=True)
class GraphTransfer(Message):
    """Open-channel transfer of the public graph to a new member."""

    graph: Graph
    traffic_class = "graph_transfer"

    def payload_bytes(self) -> bytes:
        return encode_graph(self.graph)


@dataclass(frozen=True, kw_only=True)
class CycleTransfer(Message):
    """The secret cycle; may only travel on the secure channel class."""

    cycle: HamiltonianCycle
    traffic_class = "cycle_transfer"
    secure_channel = True

    def payload_bytes(self) -> bytes:
        return encode_cycle(self.cycle)


@dataclass(frozen=True, kw_only=True)
class PolInitiate(Message):
    window: int
    traffic_class = "proof_of_life"

    def payload_bytes(self) -> bytes:
        return struct.pack(">I", self.window)


@dataclass(frozen=True, kw_only=True)
class PolAnswer(Message):
    claimed_id: NodeId
    window: int
    traffic_class = "proof_of_life"

    def payload_bytes(self) -> bytes:
        return struct.pack(">II", self.claimed_id, self.window)


@dataclass(frozen=True, kw_only=True)
class PolSummary(Message):
    """Second-step broadcast: the window's living set plus announced deletions."""

    window: int
    alive: frozenset[NodeId]
    deletions: frozenset[NodeId]
    traffic_class = "proof_of_life"

    def payload_bytes(self) -> bytes:
        return struct.pack(">I", self.window) + _pack_id_set(self.alive) + _pack_id_set(self.deletions)

    def deletion_payload_bytes(self) -> bytes:
        """The portion of the payload that carries deletion announcements."""
        return _pack_id_set(self.deletions)


@dataclass(frozen=True, kw_only=True)
class AccessRequest(Message):
    claimed_id: NodeId
    claimed_graph: Graph
    traffic_class = "zkp"

    def payload_bytes(self) -> bytes:
        return struct.pack(">I", self.claimed_id) + encode_graph(self.claimed_graph)


@dataclass(frozen=True, kw_only=True)
class ZkpCommit(Message):
    commitment: Commitment
    traffic_class = "zkp"

    def payload_bytes(self) -> bytes:
        return self.commitment.graph_digest + self.commitment.cycle_digest


@dataclass(frozen=True, kw_only=True)
class ZkpChallenge(Message):
    bit: int
    traffic_class = "zkp"

    def payload_bytes(self) -> bytes:
        return bytes([self.bit])


@dataclass(frozen=True, kw_only=True)
class ZkpResponse(Message):
    response: Response
    traffic_class = "zkp"

    def payload_bytes(self) -> bytes:
        return zkp.encode_response(self.response)


@dataclass(frozen=True, kw_only=True)
class AccessGrant(Message):
    """Everything a returning member needs to converge: catch-up records,
    the current stage, and the proof-of-life window id."""

    records: tuple[UpdateRecord, ...]
    current_stage: int
    window: int
    traffic_class = "zkp"

    def payload_bytes(self) -> bytes:
        body = struct.pack(">III", self.current_stage, self.window, len(self.records))
        return body + b"".join(encode_record(r) for r in self.records)


MESSAGE_TYPES = (
    InsertionAnnounce,
    InsertionAck,
    NeighborSetBroadcast,
    GraphTransfer,
    CycleTransfer,
    PolInitiate,
    PolAnswer,
    PolSummary,
    AccessRequest,
    ZkpCommit,
    ZkpChallenge,
    ZkpResponse,
    AccessGrant,
)

ProtocolMessage = Message


# ---------------------------------------------------------------------------
# Node state and configuration
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ProtocolConfig:
    """Network-wide parameters agreed before the life-cycle starts.

    ``T`` is both the maximum tolerated off-line period and the proof-of-life
    cadence, in simulated seconds.  Quorums compare against
    ``quorum_fraction`` of the currently legitimate (non-deleted) node count
    as recorded in the responder's own replica; "less than quorum" aborts.
    """

    T: float
    l: int = zkp.DEFAULT_ROUNDS
    termination_threshold: int = 3
    quorum_fraction: float = 0.5

    def __post_init__(self) -> None:
        if self.T <= 0:
            raise ProtocolError("threshold period T must be positive")
        if self.l < 1:
            raise ProtocolError("round count must be at least 1")
        if self.termination_threshold < 3:
            raise ProtocolError("termination threshold must be at least 3")

    @property
    def retention(self) -> float:
        """FIFO retention window: maximum staleness plus one full window."""
        return 2 * self.T

    def quorum_met(self, answers: int, legitimate: int) -> bool:
        return answers >= self.quorum_fraction * legitimate

    def window_of(self, now: float) -> int:
        return int(now // self.T)


@dataclass
class NodeState:
    """One node's replica, clocks, and bounded update queue."""

    id: NodeId
    status: NodeStatus
    graph: Graph
    cycle: Optional[HamiltonianCycle]
    stage: int = 0
    last_seen_stage: int = 0
    pol_clock: float = 0.0
    fifo: list[UpdateRecord] = field(default_factory=list)
    last_update_time: float = 0.0
    online_view: set[NodeId] = field(default_factory=set)
    sybil_flags: set[NodeId] = field(default_factory=set)
    # stage -> (graph digest, time the stage was reached); bounded like the fifo
    stage_history: dict[int, tuple[bytes, float]] = field(default_factory=dict)

    @classmethod
    def initial(
        cls,
        node_id: NodeId,
        graph: Graph,
        cycle: HamiltonianCycle,
        now: float = 0.0,
        stage: int = 0,
    ) -> "NodeState":
        state = cls(id=node_id, status=NodeStatus.ONLINE, graph=graph, cycle=cycle, stage=stage)
        state.online_view = set(graph.vertices)
        state.last_update_time = now
        state.stage_history[stage] = (digest(encode_graph(graph)), now)
        # Setup itself is everyone's first sign of life; without this record a
        # member could be judged silent before the first window even closes.
        state.fifo.append(
            PolRecord(stage, frozenset(graph.vertices), min(graph.vertices), now)
        )
        return state

    def fingerprint(self) -> bytes:
        """Canonical byte image of the replicated instance."""
        cycle_bytes = encode_cycle(self.cycle) if self.cycle is not None else b""
        return encode_graph(self.graph) + cycle_bytes


def prune_fifo(state: NodeState, now: float, cfg: ProtocolConfig) -> None:
    horizon = now - cfg.retention
    state.fifo = [r for r in state.fifo if r.timestamp >= horizon]
    stale = [s for s, (_, t) in state.stage_history.items() if t < horizon and s != state.stage]
    for s in stale:
        del state.stage_history[s]


def apply_update_record(state: NodeState, rec: UpdateRecord, cfg: ProtocolConfig) -> None:
    """Apply one record to a replica; the single mutation path for the
    shared instance, used identically by live handlers and catch-up replay."""
    if isinstance(rec, InsertionRecord):
        if rec.stage != state.stage + 1:
            raise ProtocolError(f"update out of order: have stage {state.stage}, got {rec.stage}")
        state.graph, state.cycle = splice_insert(state.graph, state.cycle, rec.node, rec.neighbors)
        state.stage = rec.stage
        state.online_view.add(rec.node)
        state.online_view.add(rec.author)
        state.stage_history[rec.stage] = (digest(encode_graph(state.graph)), rec.timestamp)
    elif isinstance(rec, DeletionRecord):
        if rec.stage != state.stage + 1:
            raise ProtocolError(f"update out of order: have stage {state.stage}, got {rec.stage}")
        state.graph, state.cycle = splice_delete(state.graph, state.cycle, rec.node)
        state.stage = rec.stage
        state.online_view.discard(rec.node)
        state.stage_history[rec.stage] = (digest(encode_graph(state.graph)), rec.timestamp)
    state.fifo.append(rec)
    state.last_update_time = rec.timestamp
    prune_fifo(state, rec.timestamp, cfg)


# ---------------------------------------------------------------------------
# Insertion
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class InsertCommitted:
    broadcast: NeighborSetBroadcast
    graph_transfer: GraphTransfer
    cycle_transfer: CycleTransfer


@dataclass(frozen=True)
class Aborted:
    reason: str


def insert_degree(graph: Graph) -> int:
    """Neighbor-group size handed to joining nodes: the replica's current
    average degree, floored at the two cycle neighbors."""
    return max(2, (2 * graph.size) // graph.order)


def authenticator_insert(
    auth: NodeState,
    acks_received: int,
    rng: Random,
    now: float,
    cfg: ProtocolConfig,
    forced_id: Optional[NodeId] = None,
    forced_neighbors: Optional[frozenset[NodeId]] = None,
) -> Union[InsertCommitted, Aborted]:
    """Run the authenticator's side of an insertion after the announce round.

    Below quorum the procedure stops with no state change.  Otherwise the
    authenticator picks the neighbor group, splices its own replica, and
    returns the three outbound messages: the group broadcast, the open-channel
    graph transfer, and the secure-channel cycle transfer.

    ``forced_id``/``forced_neighbors`` exist for scripted scenario replay and
    bypass the id and group draws, never the quorum or splice rules.
    """
    legitimate = auth.graph.order
    if not cfg.quorum_met(acks_received, legitimate):
        return Aborted(f"quorum not met ({acks_received} of {legitimate})")
    new_id = forced_id if forced_id is not None else assign_new_id(auth.graph)
    try:
        if forced_neighbors is not None:
            neighbors = frozenset(forced_neighbors)
        else:
            neighbors = neighbor_set_for_insert(auth.graph, auth.cycle, insert_degree(auth.graph), rng)
        record = InsertionRecord(auth.stage + 1, new_id, neighbors, auth.id, now)
        apply_update_record(auth, record, cfg)
    except GraphError as exc:
        return Aborted(str(exc))
    return InsertCommitted(
        NeighborSetBroadcast(sender=auth.id, stage=auth.stage, sent_at=now, node=new_id, neighbors=neighbors),
        GraphTransfer(sender=auth.id, stage=auth.stage, sent_at=now, graph=auth.graph),
        CycleTransfer(sender=auth.id, stage=auth.stage, sent_at=now, cycle=auth.cycle),
    )


def apply_insertion_update(
    state: NodeState, broadcast: NeighborSetBroadcast, cfg: ProtocolConfig, now: float
) -> None:
    """Splice a broadcast insertion into a replica.

    A proposed id that is already a vertex is the duplicate-id attack from
    the Sybil analysis: the update is rejected and the sender flagged.
    """
    if broadcast.node in state.graph.vertices:
        state.sybil_flags.add(broadcast.sender)
        raise DuplicateIdError("ID already assigned")
    record = InsertionRecord(state.stage + 1, broadcast.node, broadcast.neighbors, broadcast.sender, now)
    apply_update_record(state, record, cfg)


# ---------------------------------------------------------------------------
# Access control
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Granted:
    grant: AccessGrant


@dataclass(frozen=True)
class Denied:
    reason: str


def access_control(
    verifier: NodeState,
    req: AccessRequest,
    transport: Prover,
    cfg: ProtocolConfig,
    rng: Random,
    now: float,
) -> Union[Granted, Denied]:
    """Authenticate a returning member and hand it the catch-up records.

    Denials, in order of checking: the claimed id is currently in use
    on-line ("duplicate identity"; whether that is an attack or a member
    returning faster than the on-line view refreshes is for
    :func:`detect_sybil` to judge over the evidence stream); the id is no
    longer a member or its staleness exceeds T ("expired membership"); the
    claimed historical graph does not match this replica's record for that
    stage ("graph mismatch"); a proof round fails ("zkp failed"); the
    transport dies mid-proof ("protocol aborted").  Staleness exactly T
    still proceeds.
    """
    if req.claimed_id in verifier.online_view:
        return Denied("duplicate identity")
    if req.claimed_id not in verifier.graph.vertices:
        return Denied("expired membership")
    history = verifier.stage_history.get(req.stage)
    if history is None:
        return Denied("expired membership")
    recorded_digest, stage_time = history
    if now - stage_time > cfg.T:
        return Denied("expired membership")
    if digest(encode_graph(req.claimed_graph)) != recorded_digest:
        # Fabricated instance, or a replica from the far side of a partition:
        # either way the proof would be meaningless, so refuse to run it.
        return Denied("graph mismatch")
    try:
        result = run_proof(req.claimed_graph, transport, cfg.l, rng)
    except Exception:
        return Denied("protocol aborted")
    if not result.accepted:
        verifier.sybil_flags.add(req.sender)
        return Denied("zkp failed")
    catch_up = tuple(
        r for r in verifier.fifo
        if r.stage > req.stage or (isinstance(r, PolRecord) and r.timestamp > now - cfg.T)
    )
    verifier.online_view.add(req.claimed_id)
    return Granted(
        AccessGrant(
            sender=verifier.id,
            stage=verifier.stage,
            sent_at=now,
            records=catch_up,
            current_stage=verifier.stage,
            window=cfg.window_of(now),
        )
    )


def apply_catch_up(state: NodeState, grant: AccessGrant, cfg: ProtocolConfig) -> None:
    """Replay a grant's records onto a returning replica and bring it on-line."""
    for rec in grant.records:
        if isinstance(rec, PolRecord):
            state.fifo.append(rec)
            state.online_view |= rec.alive
            state.last_update_time = rec.timestamp
            if rec.stage == state.stage and state.stage in state.stage_history:
                stage_digest, _ = state.stage_history[state.stage]
                state.stage_history[state.stage] = (stage_digest, rec.timestamp)
        else:
            apply_update_record(state, rec, cfg)
    if state.stage != grant.current_stage:
        raise ProtocolError(
            f"catch-up incomplete: reached stage {state.stage}, expected {grant.current_stage}"
        )
    state.status = NodeStatus.ONLINE
    state.online_view.add(state.id)
    state.pol_clock = 0.0


# ---------------------------------------------------------------------------
# Proofs of life and deletion
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PolCompleted:
    summary: PolSummary


@dataclass(frozen=True)
class PolAbortedOutcome:
    answers: int


def proof_of_life_cycle(
    initiator: NodeState,
    answers: Iterable[PolAnswer],
    cfg: ProtocolConfig,
    now: float,
    window: Optional[int] = None,
) -> Union[PolCompleted, PolAbortedOutcome]:
    """Close one proof-of-life window from the initiator's point of view.

    Short of quorum the initiator stops and puts its clock back.  Otherwise
    it emits the second-step broadcast carrying every collected proof plus
    the ids it found silent across the whole window (the deletion list that
    every replica will apply).  ``window`` labels the summary; it defaults to
    the current one but collection may finish just past the boundary, so
    drivers pass the window they actually collected.
    """
    collected = list(answers)
    initiator.pol_clock = 0.0
    if not cfg.quorum_met(len(collected), initiator.graph.order):
        return PolAbortedOutcome(len(collected))
    alive = frozenset(a.claimed_id for a in collected) | {initiator.id}
    deletions = deletion_candidates(initiator, alive, cfg, now)
    return PolCompleted(
        PolSummary(
            sender=initiator.id,
            stage=initiator.stage,
            sent_at=now,
            window=cfg.window_of(now) if window is None else window,
            alive=alive,
            deletions=deletions,
        )
    )


def deletion_candidates(
    state: NodeState,
    alive: frozenset[NodeId],
    cfg: ProtocolConfig,
    now: float,
) -> frozenset[NodeId]:
    """Members with no sign of life anywhere in the last full window.

    Evidence, checked against the FIFO queue: answering the current window,
    appearing in a witnessed summary, authoring any update, or being the
    subject of an insertion (broadcasters and authenticators are exempt from
    separate proofs).
    """
    evidence = set(alive)
    evidence.add(state.id)
    horizon = now - cfg.T - DELETION_GRACE
    for rec in state.fifo:
        if rec.timestamp <= horizon:
            continue
        evidence.add(rec.author)
        if isinstance(rec, InsertionRecord):
            evidence.add(rec.node)
        elif isinstance(rec, PolRecord):
            evidence |= rec.alive
    return frozenset(v for v in state.graph.vertices if v not in evidence)


def apply_deletion_update(
    state: NodeState, summary: PolSummary, cfg: ProtocolConfig, now: float
) -> list[NodeId]:
    """Apply a witnessed summary: record it, then splice out its deletions.

    The deletion list travels in the summary so that every replica applies
    the identical set, including members who joined mid-window and hold no
    earlier records.  Returns the ids actually removed.  A shrink below a
    valid cycle raises ``BelowMinimumOrder``; callers run the termination
    check.
    """
    state.fifo.append(
        PolRecord(state.stage, summary.alive, summary.sender, now)
    )
    state.last_update_time = now
    # Each witnessed summary confirms the current stage is still live, so a
    # member leaving now is measured stale from this confirmation, not from
    # however long ago the stage was first reached.
    stage_digest, _ = state.stage_history[state.stage]
    state.stage_history[state.stage] = (stage_digest, now)
    state.online_view = set(summary.alive) | {summary.sender}
    removed: list[NodeId] = []
    for victim in sorted(summary.deletions):
        if victim == state.id:
            state.status = NodeStatus.DELETED
        if victim not in state.graph.vertices:
            continue
        record = DeletionRecord(state.stage + 1, victim, summary.sender, now)
        apply_update_record(state, record, cfg)
        removed.append(victim)
    prune_fifo(state, now, cfg)
    return removed


def check_termination(online_count: int, cfg: ProtocolConfig) -> bool:
    """True when the life-cycle must end: too few on-line members remain."""
    return online_count < cfg.termination_threshold


# ---------------------------------------------------------------------------
# Sybil detection
# ---------------------------------------------------------------------------

def detect_sybil(state: NodeState, evidence: Iterable[Message]) -> set[NodeId]:
    """Flag senders showing duplicate-identity behavior in a message stream.

    Rules: requesting access with an id currently in use on-line; announcing
    an insertion under an id already assigned; or answering proofs of life
    for two or more distinct ids within one window.
    """
    flagged: set[NodeId] = set()
    answers_by_sender: dict[tuple[NodeId, int], set[NodeId]] = {}
    for msg in evidence:
        if isinstance(msg, AccessRequest) and msg.claimed_id in state.online_view:
            flagged.add(msg.sender)
        elif isinstance(msg, InsertionAnnounce) and msg.proposed_id in state.graph.vertices:
            flagged.add(msg.sender)
        elif isinstance(msg, PolAnswer):
            ids = answers_by_sender.setdefault((msg.sender, msg.window), set())
            ids.add(msg.claimed_id)
            if len(ids) >= 2:
                flagged.add(msg.sender)
    state.sybil_flags |= flagged
    return flagged
