"""Deterministic discrete-event simulation of a churning membership network.

The engine schedules node churn, mobility, message delivery, and the
membership flows, producing a human-readable trace (time / event / cycle
snapshot) and per-class traffic metrics.  Identical configurations and seeds
yield byte-identical outputs: time is fixed-point microseconds, every draw
comes from one seeded generator, and all iteration over node sets is sorted.

Connectivity is modeled abstractly.  ``full_mesh`` reaches everyone in one
hop; ``geometric`` places nodes on a square, moves them with a random
waypoint walk, and floods broadcasts over the resulting disk graph.  Traffic
is accounted per delivery: each node forwards a broadcast at most once and
every copy a receiver hears is counted at the message's encoded size plus a
fixed header.
"""

from __future__ import annotations

import heapq
import json
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from random import Random
from typing import Optional, Union

from .graph import (
    BelowMinimumOrder,
    Graph,
    HamiltonianCycle,
    NodeId,
    assign_new_id,
    build_initial_graph,
    complete_edges_from_cycle,
)
from .protocol import (
    AccessRequest,
    Aborted,
    DuplicateIdError,
    Granted,
    InsertCommitted,
    InsertionAck,
    InsertionAnnounce,
    Message,
    NeighborSetBroadcast,
    NodeState,
    NodeStatus,
    PolAnswer,
    PolCompleted,
    PolInitiate,
    PolSummary,
    ProtocolConfig,
    ZkpChallenge,
    ZkpCommit,
    ZkpResponse,
    access_control,
    apply_catch_up,
    apply_deletion_update,
    apply_insertion_update,
    authenticator_insert,
    check_termination,
    proof_of_life_cycle,
)
from .zkp import HonestProver

TRAFFIC_CLASSES = (
    "zkp",
    "proof_of_life",
    "insertion",
    "deletion",
    "graph_transfer",
    "cycle_transfer",
)

#: One simulated broadcast/unicast hop, in microseconds.
HOP_US = 1_000
#: Answers to a two-step broadcast arrive within this window.
ANSWER_LATENCY_US = 300_000
#: When the initiator of a two-step broadcast stops collecting answers.
COLLECT_CLOSE_US = ANSWER_LATENCY_US + 3 * HOP_US
#: Mobility update step.
MOVE_DT_US = 500_000


class ScenarioError(ValueError):
    """The scenario configuration is invalid; nothing was simulated."""


class Reach(Enum):
    NONE = "none"
    DATA = "data"
    DATA_AND_SECURE = "data_and_secure"


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ChurnConfig:
    """Per-second probabilities of one network-wide churn event each."""

    insertion_request: float = 0.0
    node_turn_off: float = 0.0
    node_turn_on: float = 0.0


@dataclass(frozen=True)
class GeometricConfig:
    area_side: float
    speed_max: float
    pause: float
    data_range: float
    secure_range: float


@dataclass(frozen=True)
class ScriptedOp:
    """A deterministic event injected at a fixed time.

    ``insert`` may force an explicit id and neighbor group (needed to replay
    externally recorded traces); ``delete``, ``turn_off`` and ``turn_on``
    name the affected node.
    """

    time: float
    op: str
    node: Optional[NodeId] = None
    neighbors: Optional[tuple[NodeId, ...]] = None
    author: Optional[NodeId] = None


@dataclass(frozen=True)
class ScenarioConfig:
    n_initial: int
    m: int
    T: float
    l: int
    duration: float
    seed: int
    churn: ChurnConfig = ChurnConfig()
    connectivity: Union[str, GeometricConfig] = "full_mesh"
    termination_threshold: int = 3
    admission_deny_prob: float = 0.0
    initial_cycle: Optional[tuple[NodeId, ...]] = None
    script: tuple[ScriptedOp, ...] = ()

    def validate(self) -> None:
        if self.n_initial < 4 or self.m < self.n_initial:
            raise ScenarioError("invalid scenario: need n_initial >= 4 and m >= n_initial")
        if (2 * self.m) % self.n_initial != 0:
            raise ScenarioError("invalid scenario: 2m/n must be an integer")
        if self.T <= 0 or self.duration <= 0 or self.l < 1:
            raise ScenarioError("invalid scenario: T, duration and l must be positive")
        if self.termination_threshold < 3:
            raise ScenarioError("invalid scenario: termination threshold below 3")
        for name, p in (
            ("insertion_request", self.churn.insertion_request),
            ("node_turn_off", self.churn.node_turn_off),
            ("node_turn_on", self.churn.node_turn_on),
            ("admission_deny_prob", self.admission_deny_prob),
        ):
            if not 0.0 <= p <= 1.0:
                raise ScenarioError(f"invalid scenario: probability {name} out of range")
        if isinstance(self.connectivity, GeometricConfig):
            geo = self.connectivity
            if min(geo.area_side, geo.speed_max, geo.data_range, geo.secure_range) <= 0:
                raise ScenarioError("invalid scenario: geometric ranges must be positive")
            if geo.pause < 0:
                raise ScenarioError("invalid scenario: pause must be non-negative")
        elif self.connectivity != "full_mesh":
            raise ScenarioError("invalid scenario: unknown connectivity mode")
        if self.initial_cycle is not None:
            ids = tuple(self.initial_cycle)
            if len(ids) != self.n_initial or len(set(ids)) != len(ids):
                raise ScenarioError("invalid scenario: initial_cycle must list n_initial distinct ids")
        for op in self.script:
            if op.op not in ("insert", "delete", "turn_off", "turn_on"):
                raise ScenarioError(f"invalid scenario: unknown scripted op {op.op!r}")
            if op.time < 0:
                raise ScenarioError("invalid scenario: scripted op before time 0")

    def to_json(self) -> str:
        doc = {
            "n_initial": self.n_initial,
            "m": self.m,
            "T": self.T,
            "l": self.l,
            "duration": self.duration,
            "seed": self.seed,
            "churn": {
                "insertion_request": self.churn.insertion_request,
                "node_turn_off": self.churn.node_turn_off,
                "node_turn_on": self.churn.node_turn_on,
            },
            "termination_threshold": self.termination_threshold,
            "admission_deny_prob": self.admission_deny_prob,
        }
        if isinstance(self.connectivity, GeometricConfig):
            doc["connectivity"] = {
                "mode": "geometric",
                "area_side": self.connectivity.area_side,
                "speed_max": self.connectivity.speed_max,
                "pause": self.connectivity.pause,
                "data_range": self.connectivity.data_range,
                "secure_range": self.connectivity.secure_range,
            }
        else:
            doc["connectivity"] = {"mode": "full_mesh"}
        if self.initial_cycle is not None:
            doc["initial_cycle"] = list(self.initial_cycle)
        if self.script:
            doc["script"] = [
                {
                    k: v
                    for k, v in (
                        ("time", op.time),
                        ("op", op.op),
                        ("node", op.node),
                        ("neighbors", list(op.neighbors) if op.neighbors else None),
                        ("author", op.author),
                    )
                    if v is not None
                }
                for op in self.script
            ]
        return json.dumps(doc, sort_keys=True, indent=2) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "ScenarioConfig":
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ScenarioError(f"invalid scenario: not valid JSON ({exc})") from exc
        if not isinstance(doc, dict):
            raise ScenarioError("invalid scenario: top level must be an object")
        try:
            churn = ChurnConfig(**doc.get("churn", {}))
            conn_doc = doc.get("connectivity", {"mode": "full_mesh"})
            if conn_doc.get("mode") == "geometric":
                connectivity: Union[str, GeometricConfig] = GeometricConfig(
                    area_side=conn_doc["area_side"],
                    speed_max=conn_doc["speed_max"],
                    pause=conn_doc["pause"],
                    data_range=conn_doc["data_range"],
                    secure_range=conn_doc["secure_range"],
                )
            else:
                connectivity = conn_doc.get("mode", "full_mesh")
            script = tuple(
                ScriptedOp(
                    time=entry["time"],
                    op=entry["op"],
                    node=entry.get("node"),
                    neighbors=tuple(entry["neighbors"]) if entry.get("neighbors") else None,
                    author=entry.get("author"),
                )
                for entry in doc.get("script", [])
            )
            initial_cycle = tuple(doc["initial_cycle"]) if doc.get("initial_cycle") else None
            cfg = cls(
                n_initial=doc["n_initial"],
                m=doc["m"],
                T=doc["T"],
                l=doc["l"],
                duration=doc["duration"],
                seed=doc["seed"],
                churn=churn,
                connectivity=connectivity,
                termination_threshold=doc.get("termination_threshold", 3),
                admission_deny_prob=doc.get("admission_deny_prob", 0.0),
                initial_cycle=initial_cycle,
                script=script,
            )
        except (KeyError, TypeError) as exc:
            raise ScenarioError(f"invalid scenario: {exc}") from exc
        cfg.validate()
        return cfg


# ---------------------------------------------------------------------------
# Outputs
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TraceEvent:
    time: float
    description: str
    hc_snapshot: Optional[tuple[NodeId, ...]] = None

    def to_line(self) -> str:
        hc = ",".join(str(v) for v in self.hc_snapshot) if self.hc_snapshot else ""
        return f"{self.time:.2f}\t{self.description}\t{hc}"


@dataclass
class TrafficMetrics:
    counts: dict[str, int] = field(default_factory=lambda: dict.fromkeys(TRAFFIC_CLASSES, 0))
    bytes: dict[str, int] = field(default_factory=lambda: dict.fromkeys(TRAFFIC_CLASSES, 0))

    def record(self, traffic_class: str, size: int, deliveries: int = 1) -> None:
        self.counts[traffic_class] += deliveries
        self.bytes[traffic_class] += size * deliveries

    @property
    def total_bytes(self) -> int:
        return sum(self.bytes.values())

    def shares(self) -> dict[str, float]:
        total = self.total_bytes
        if total == 0:
            return dict.fromkeys(TRAFFIC_CLASSES, 0.0)
        return {cls: self.bytes[cls] / total for cls in TRAFFIC_CLASSES}

    def to_json(self) -> str:
        shares = self.shares()
        doc = {
            "classes": {
                cls: {
                    "count": self.counts[cls],
                    "bytes": self.bytes[cls],
                    "share": shares[cls],
                }
                for cls in TRAFFIC_CLASSES
            },
            "total_bytes": self.total_bytes,
        }
        return json.dumps(doc, sort_keys=True, indent=2) + "\n"


@dataclass
class ScenarioResult:
    trace: list[TraceEvent]
    metrics: TrafficMetrics
    outcome: str  # "completed" | "terminated"
    terminated_at: Optional[float] = None

    def trace_text(self) -> str:
        return "".join(event.to_line() + "\n" for event in self.trace)


# ---------------------------------------------------------------------------
# Mobility and reachability
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class WaypointState:
    x: float
    y: float
    dest_x: Optional[float] = None
    dest_y: Optional[float] = None
    speed: float = 0.0
    pause_until: float = 0.0


def step_mobility(
    positions: dict[NodeId, WaypointState],
    geo: GeometricConfig,
    rng: Random,
    dt: float,
    now: float,
) -> dict[NodeId, WaypointState]:
    """Advance every node one random-waypoint step of ``dt`` seconds."""
    out: dict[NodeId, WaypointState] = {}
    for node in sorted(positions):
        out[node] = _step_one(positions[node], geo, rng, dt, now)
    return out


def _step_one(
    st: WaypointState, geo: GeometricConfig, rng: Random, dt: float, now: float
) -> WaypointState:
    if now < st.pause_until:
        return st
    if st.dest_x is None or st.dest_y is None:
        # Pause over: pick the next waypoint and a fresh speed in (0, max].
        dest_x = rng.uniform(0.0, geo.area_side)
        dest_y = rng.uniform(0.0, geo.area_side)
        speed = geo.speed_max * (1.0 - rng.random())
        st = replace(st, dest_x=dest_x, dest_y=dest_y, speed=speed)
    dx = st.dest_x - st.x
    dy = st.dest_y - st.y
    dist = math.hypot(dx, dy)
    step = st.speed * dt
    if dist <= step:
        return replace(
            st, x=st.dest_x, y=st.dest_y, dest_x=None, dest_y=None,
            speed=0.0, pause_until=now + geo.pause,
        )
    return replace(st, x=st.x + step * dx / dist, y=st.y + step * dy / dist)


def reachable(
    a: NodeId,
    b: NodeId,
    positions: dict[NodeId, WaypointState],
    cfg: ScenarioConfig,
) -> Reach:
    """Channel classes available between two nodes right now."""
    if not isinstance(cfg.connectivity, GeometricConfig):
        return Reach.DATA_AND_SECURE
    geo = cfg.connectivity
    pa, pb = positions[a], positions[b]
    dist = math.hypot(pa.x - pb.x, pa.y - pb.y)
    if dist <= geo.secure_range:
        return Reach.DATA_AND_SECURE
    if dist <= geo.data_range:
        return Reach.DATA
    return Reach.NONE


@dataclass(frozen=True)
class FloodResult:
    recipients: frozenset[NodeId]
    forwarders: frozenset[NodeId]
    deliveries: int


def broadcast_deliver(
    sender: NodeId,
    online: set[NodeId],
    positions: dict[NodeId, WaypointState],
    cfg: ScenarioConfig,
) -> FloodResult:
    """Flood one broadcast over the data-range graph with duplicate suppression.

    Every reached node (the sender included) forwards the broadcast exactly
    once; each transmission is heard by all of the transmitter's in-range
    on-line neighbors, and every such copy counts as a delivery.  The
    recipient set is the sender's connected component, minus itself.
    """
    members = sorted(online | {sender})
    if not isinstance(cfg.connectivity, GeometricConfig):
        n = len(members)
        reached = frozenset(members)
        return FloodResult(reached - {sender}, reached, n * (n - 1))
    neighbor_sets: dict[NodeId, list[NodeId]] = {}
    for i, u in enumerate(members):
        for v in members[i + 1:]:
            if reachable(u, v, positions, cfg) is not Reach.NONE:
                neighbor_sets.setdefault(u, []).append(v)
                neighbor_sets.setdefault(v, []).append(u)
    seen = {sender}
    frontier = [sender]
    while frontier:
        nxt = []
        for u in frontier:
            for v in neighbor_sets.get(u, ()):
                if v not in seen:
                    seen.add(v)
                    nxt.append(v)
        frontier = sorted(nxt)
    deliveries = sum(len(neighbor_sets.get(u, ())) for u in seen)
    return FloodResult(frozenset(seen - {sender}), frozenset(seen), deliveries)


# ---------------------------------------------------------------------------
# The event engine
# ---------------------------------------------------------------------------

def _sec(us: int) -> float:
    return us / 1_000_000


def _us(seconds: float) -> int:
    return round(seconds * 1_000_000)


def _stagger_us(node: NodeId) -> int:
    # Fixed per-id offset so proof-of-life checks never collide exactly.
    return ((node * 9973) % 97 + 1) * 1_000


class _Engine:
    def __init__(self, cfg: ScenarioConfig):
        cfg.validate()
        self.cfg = cfg
        self.pcfg = ProtocolConfig(
            T=cfg.T, l=cfg.l, termination_threshold=cfg.termination_threshold
        )
        self.rng = Random(cfg.seed)
        self.now_us = 0
        self._seq = 0
        self._heap: list[tuple[int, int, str, tuple]] = []
        self.trace: list[TraceEvent] = []
        self.metrics = TrafficMetrics()
        self.message_log: list[Message] = []
        self.terminated_at: Optional[float] = None
        self.secure_blocked: list[tuple[NodeId, NodeId]] = []

        graph, cycle = self._dealer_setup()
        self.nodes: dict[NodeId, NodeState] = {
            v: NodeState.initial(v, graph, cycle) for v in sorted(graph.vertices)
        }
        self.last_proof_us: dict[NodeId, int] = {v: 0 for v in self.nodes}
        self.handled_window: dict[NodeId, int] = {}
        self.answered_window: dict[NodeId, int] = {}
        self.summary_seen: dict[NodeId, set[int]] = {}
        self.awaiting_reentry: set[NodeId] = set()
        self.turn_off_us: dict[NodeId, int] = {}
        self.last_summary_us: int = -1
        self.last_summary_alive: frozenset[NodeId] = frozenset()
        self.pending_pol: dict[NodeId, dict] = {}
        self.pending_insert: Optional[dict] = None
        self.positions: dict[NodeId, WaypointState] = {}
        if isinstance(cfg.connectivity, GeometricConfig):
            side = cfg.connectivity.area_side
            for v in sorted(self.nodes):
                self.positions[v] = WaypointState(
                    x=self.rng.uniform(0.0, side), y=self.rng.uniform(0.0, side)
                )
            for tick in range(1, int(_us(cfg.duration) // MOVE_DT_US) + 1):
                self._push(tick * MOVE_DT_US, "move", ())

        members = ", ".join(str(v) for v in sorted(self.nodes))
        self._trace(f"{members} are legitimate", snapshot=cycle)

        duration_us = _us(cfg.duration)
        for second in range(1, int(cfg.duration) + 1):
            if second * 1_000_000 <= duration_us:
                self._push(second * 1_000_000, "churn", ())
        for v in sorted(self.nodes):
            self._schedule_pol_check(v)
        for i, op in enumerate(sorted(cfg.script, key=lambda o: (o.time, o.op))):
            self._push(_us(op.time), "script", (i, op))

    # -- plumbing ----------------------------------------------------------

    def _dealer_setup(self) -> tuple[Graph, HamiltonianCycle]:
        if self.cfg.initial_cycle is not None:
            order = tuple(self.cfg.initial_cycle)
            group_size = (2 * self.cfg.m) // self.cfg.n_initial
            edges = complete_edges_from_cycle(order, group_size, self.rng)
            return Graph(frozenset(order), edges), HamiltonianCycle(order)
        return build_initial_graph(self.cfg.n_initial, self.cfg.m, self.rng)

    def _push(self, t_us: int, kind: str, payload: tuple) -> None:
        self._seq += 1
        heapq.heappush(self._heap, (t_us, self._seq, kind, payload))

    def _trace(self, description: str, snapshot: Optional[HamiltonianCycle] = None) -> None:
        self.trace.append(
            TraceEvent(
                _sec(self.now_us),
                description,
                snapshot.order if snapshot is not None else None,
            )
        )

    @property
    def now_s(self) -> float:
        return _sec(self.now_us)

    def _online_ids(self) -> list[NodeId]:
        return sorted(
            v for v, s in self.nodes.items() if s.status is NodeStatus.ONLINE
        )

    def _check_termination(self) -> None:
        if self.terminated_at is not None:
            return
        online = len(self._online_ids())
        if check_termination(online, self.pcfg):
            self.terminated_at = self.now_s
            self._trace(f"Network terminated: {online} nodes on-line")

    # -- traffic accounting ------------------------------------------------

    def _meter_unicast(self, msg: Message, src: NodeId, dst: NodeId) -> bool:
        reach = reachable(src, dst, self.positions, self.cfg)
        if msg.secure_channel and reach is not Reach.DATA_AND_SECURE:
            if reach is not Reach.NONE:
                self.secure_blocked.append((src, dst))  # blocked, never delivered
            return False
        if reach is Reach.NONE:
            return False
        self.metrics.record(msg.traffic_class, msg.size())
        self.message_log.append(msg)
        return True

    def _broadcast(self, msg: Message, sender: NodeId) -> list[NodeId]:
        """Flood a broadcast, meter every delivered copy, schedule handlers."""
        flood = broadcast_deliver(sender, set(self._online_ids()), self.positions, self.cfg)
        if flood.deliveries:
            if isinstance(msg, PolSummary) and msg.deletions:
                deletion_part = len(msg.deletion_payload_bytes())
                self.metrics.record("deletion", deletion_part, flood.deliveries)
                self.metrics.record(msg.traffic_class, msg.size() - deletion_part, flood.deliveries)
            else:
                self.metrics.record(msg.traffic_class, msg.size(), flood.deliveries)
        self.message_log.append(msg)
        recipients = sorted(flood.recipients)
        for r in recipients:
            self._push(self.now_us + HOP_US, "deliver", (msg, r))
        return recipients

    # -- scheduling --------------------------------------------------------

    def _schedule_pol_check(self, node: NodeId) -> None:
        t = self.last_proof_us[node] + _us(self.cfg.T) + _stagger_us(node)
        self._push(max(t, self.now_us + 1), "pol_check", (node,))

    # -- main loop ---------------------------------------------------------

    def run(self) -> ScenarioResult:
        duration_us = _us(self.cfg.duration)
        while self._heap and self.terminated_at is None:
            t_us, _, kind, payload = heapq.heappop(self._heap)
            if t_us > duration_us:
                break
            self.now_us = t_us
            getattr(self, f"_on_{kind}")(*payload)
        outcome = "terminated" if self.terminated_at is not None else "completed"
        return ScenarioResult(self.trace, self.metrics, outcome, self.terminated_at)

    # -- event handlers ----------------------------------------------------

    def _on_move(self) -> None:
        if isinstance(self.cfg.connectivity, GeometricConfig):
            self.positions = step_mobility(
                self.positions, self.cfg.connectivity, self.rng,
                _sec(MOVE_DT_US), self.now_s,
            )

    def _on_churn(self) -> None:
        churn = self.cfg.churn
        if self.rng.random() < churn.insertion_request:
            self._start_insertion()
        if self.rng.random() < churn.node_turn_off:
            self._turn_off_random()
        if self.rng.random() < churn.node_turn_on:
            self._turn_on_random()

    def _on_script(self, index: int, op: ScriptedOp) -> None:
        if op.op == "insert":
            forced = frozenset(op.neighbors) if op.neighbors else None
            self._start_insertion(forced_id=op.node, forced_neighbors=forced, author=op.author)
        elif op.op == "delete":
            self._scripted_delete(op.node)
        elif op.op == "turn_off":
            self._turn_off(op.node)
        elif op.op == "turn_on":
            self._turn_on(op.node)

    def _on_deliver(self, msg: Message, recipient: NodeId) -> None:
        state = self.nodes.get(recipient)
        if state is None or state.status is not NodeStatus.ONLINE:
            return
        if isinstance(msg, PolInitiate):
            self._handle_pol_initiate(state, msg)
        elif isinstance(msg, PolAnswer):
            self._handle_pol_answer(state, msg)
        elif isinstance(msg, PolSummary):
            self._handle_pol_summary(state, msg)
        elif isinstance(msg, InsertionAnnounce):
            self._handle_insertion_announce(state, msg)
        elif isinstance(msg, InsertionAck):
            self._handle_insertion_ack(state, msg)
        elif isinstance(msg, NeighborSetBroadcast):
            self._handle_neighbor_set(state, msg)

    # -- proofs of life ----------------------------------------------------

    def _on_pol_check(self, node: NodeId) -> None:
        state = self.nodes.get(node)
        if state is None or state.status is not NodeStatus.ONLINE:
            return
        T_us = _us(self.cfg.T)
        clock_us = self.now_us - self.last_proof_us[node]
        if clock_us <= T_us:
            self._schedule_pol_check(node)
            return
        window = self.now_us // T_us
        if self.handled_window.get(node, -1) >= window:
            # Someone else is running this window; check again next window.
            self._push((window + 1) * T_us + _stagger_us(node), "pol_check", (node,))
            return
        self.handled_window[node] = window
        state.pol_clock = _sec(clock_us)
        self._trace(f"Proof of life started by Node {node}")
        self.pending_pol[node] = {
            "window": window, "sent_at": self.now_us, "answers": {}, "by_sender": {},
        }
        msg = PolInitiate(
            sender=node, stage=state.stage, sent_at=self.now_s, window=window
        )
        self._broadcast(msg, node)
        self._push(self.now_us + COLLECT_CLOSE_US, "pol_close", (node, window))

    def _handle_pol_initiate(self, state: NodeState, msg: PolInitiate) -> None:
        self.handled_window[state.id] = max(
            self.handled_window.get(state.id, -1), msg.window
        )
        pending = self.pending_pol.get(state.id)
        if pending is not None and pending["window"] == msg.window:
            # Two initiators raced within a hop: the earlier broadcast wins
            # (ties break on id), the other concedes and answers like anyone.
            if (msg.sent_at, msg.sender) < (_sec(pending["sent_at"]), state.id):
                self.pending_pol.pop(state.id)
            else:
                return
        if self.answered_window.get(state.id, -1) >= msg.window:
            return
        self.answered_window[state.id] = msg.window
        latency = self.rng.randrange(ANSWER_LATENCY_US)
        self._push(self.now_us + latency, "pol_answer_send", (state.id, msg.window))

    def _on_pol_answer_send(self, node: NodeId, window: int) -> None:
        state = self.nodes.get(node)
        if state is None or state.status is not NodeStatus.ONLINE:
            return
        self.last_proof_us[node] = self.now_us
        answer = PolAnswer(
            sender=node, stage=state.stage, sent_at=self.now_s,
            claimed_id=node, window=window,
        )
        self._broadcast(answer, node)

    def _handle_pol_answer(self, state: NodeState, msg: PolAnswer) -> None:
        pending = self.pending_pol.get(state.id)
        if pending is None or pending["window"] != msg.window:
            return
        ids = pending["by_sender"].setdefault(msg.sender, set())
        ids.add(msg.claimed_id)
        if len(ids) >= 2:
            state.sybil_flags.add(msg.sender)
            pending["answers"].pop(msg.sender, None)
            return
        if msg.sender not in state.sybil_flags and msg.sender not in pending["answers"]:
            pending["answers"][msg.sender] = msg

    def _on_pol_close(self, node: NodeId, window: int) -> None:
        state = self.nodes.get(node)
        pending = self.pending_pol.pop(node, None)
        if state is None or pending is None or state.status is not NodeStatus.ONLINE:
            return
        state.pol_clock = _sec(self.now_us - self.last_proof_us[node])
        self.last_proof_us[node] = self.now_us
        outcome = proof_of_life_cycle(
            state, pending["answers"].values(), self.pcfg, self.now_s, window=window
        )
        if not isinstance(outcome, PolCompleted):
            self._trace(
                f"Proof of life by Node {node} aborted ({outcome.answers} answers)"
            )
            return
        summary = outcome.summary
        silent = sorted(state.graph.vertices - set(summary.alive))
        if silent:
            names = ", ".join(str(v) for v in silent)
            label = "Node" if len(silent) == 1 else "Nodes"
            verb = "does" if len(silent) == 1 else "do"
            self._trace(f"{label} {names} {verb} not answer to the proof of life")
        self._broadcast(summary, node)
        self.last_summary_us = self.now_us
        self.last_summary_alive = frozenset(summary.alive)
        self._apply_summary(state, summary, traced=True)
        self._schedule_pol_check(node)
        self._schedule_reentries()

    def _handle_pol_summary(self, state: NodeState, msg: PolSummary) -> None:
        if msg.window in self.summary_seen.setdefault(state.id, set()):
            return
        self._apply_summary(state, msg, traced=False)

    def _apply_summary(self, state: NodeState, summary: PolSummary, traced: bool) -> None:
        before = state.cycle
        try:
            removed = apply_deletion_update(state, summary, self.pcfg, self.now_s)
        except BelowMinimumOrder:
            self.terminated_at = self.now_s
            self._trace("Network terminated: graph below minimum order")
            return
        self.summary_seen.setdefault(state.id, set()).add(summary.window)
        snapshot = before
        for victim in removed:
            victim_state = self.nodes.get(victim)
            if victim_state is not None:
                victim_state.status = NodeStatus.DELETED
                self.awaiting_reentry.discard(victim)
            if traced:
                snapshot = HamiltonianCycle(
                    tuple(v for v in snapshot.order if v != victim)
                )
                self._trace(f"Node {victim} is deleted", snapshot=snapshot)
        if removed:
            self._check_termination()

    # -- insertion ---------------------------------------------------------

    def _start_insertion(
        self,
        forced_id: Optional[NodeId] = None,
        forced_neighbors: Optional[frozenset[NodeId]] = None,
        author: Optional[NodeId] = None,
    ) -> None:
        online = self._online_ids()
        if not online or self.pending_insert is not None:
            return  # first announce wins; overlapping requests abort
        if author is not None and author in online:
            auth_id = author
        else:
            auth_id = online[self.rng.randrange(len(online))]
        if self.rng.random() < self.cfg.admission_deny_prob:
            self._trace(f"Node {auth_id} denies membership to a supplicant")
            return
        auth = self.nodes[auth_id]
        proposed = forced_id if forced_id is not None else assign_new_id(auth.graph)
        announce = InsertionAnnounce(
            sender=auth_id, stage=auth.stage, sent_at=self.now_s, proposed_id=proposed
        )
        self.pending_insert = {
            "author": auth_id,
            "proposed": proposed,
            "acks": set(),
            "forced_id": forced_id,
            "forced_neighbors": forced_neighbors,
        }
        self._broadcast(announce, auth_id)
        self._push(self.now_us + COLLECT_CLOSE_US, "ack_close", (auth_id,))

    def _handle_insertion_announce(self, state: NodeState, msg: InsertionAnnounce) -> None:
        if msg.proposed_id in state.graph.vertices:
            state.sybil_flags.add(msg.sender)  # duplicate-id insertion attempt
            return
        latency = self.rng.randrange(ANSWER_LATENCY_US)
        self._push(self.now_us + latency, "insertion_ack_send", (state.id, msg.sender, msg.proposed_id))

    def _on_insertion_ack_send(self, node: NodeId, author: NodeId, proposed: NodeId) -> None:
        state = self.nodes.get(node)
        if state is None or state.status is not NodeStatus.ONLINE:
            return
        ack = InsertionAck(
            sender=node, stage=state.stage, sent_at=self.now_s, proposed_id=proposed
        )
        if self._meter_unicast(ack, node, author):
            self._push(self.now_us + HOP_US, "deliver", (ack, author))

    def _handle_insertion_ack(self, state: NodeState, msg: InsertionAck) -> None:
        pending = self.pending_insert
        if pending and pending["author"] == state.id and pending["proposed"] == msg.proposed_id:
            pending["acks"].add(msg.sender)

    def _on_ack_close(self, author_id: NodeId) -> None:
        pending, self.pending_insert = self.pending_insert, None
        if pending is None or pending["author"] != author_id:
            return
        auth = self.nodes.get(author_id)
        if auth is None or auth.status is not NodeStatus.ONLINE:
            return
        outcome = authenticator_insert(
            auth,
            len(pending["acks"]),
            self.rng,
            self.now_s,
            self.pcfg,
            forced_id=pending["forced_id"],
            forced_neighbors=pending["forced_neighbors"],
        )
        if isinstance(outcome, Aborted):
            self._trace(f"Insertion by Node {author_id} aborted ({outcome.reason})")
            return
        new_id = outcome.broadcast.node
        self._trace(
            f"Insertion of Node {new_id} is broadcast by Node {author_id}",
            snapshot=auth.cycle,
        )
        self._broadcast(outcome.broadcast, author_id)
        self._spawn_member(auth, outcome, new_id)

    def _handle_neighbor_set(self, state: NodeState, msg: NeighborSetBroadcast) -> None:
        try:
            apply_insertion_update(state, msg, self.pcfg, self.now_s)
        except (DuplicateIdError, ValueError):
            return  # rejected; flag already set where applicable

    def _spawn_member(self, auth: NodeState, outcome: InsertCommitted, new_id: NodeId) -> None:
        if isinstance(self.cfg.connectivity, GeometricConfig):
            # Insertion requires physical contact: the newcomer stands next
            # to its authenticator, inside secure-channel range.
            self.positions[new_id] = replace(self.positions[auth.id])
        if not self._meter_unicast(outcome.graph_transfer, auth.id, new_id):
            self._trace(f"Node {new_id} unreachable; graph transfer dropped")
            return
        if not self._meter_unicast(outcome.cycle_transfer, auth.id, new_id):
            self._trace(f"Node {new_id} out of secure range; cycle transfer dropped")
            return
        member = NodeState.initial(
            new_id, outcome.graph_transfer.graph, outcome.cycle_transfer.cycle, self.now_s
        )
        member.stage = auth.stage
        member.stage_history = {auth.stage: auth.stage_history[auth.stage]}
        member.online_view = set(auth.online_view)
        self.nodes[new_id] = member
        self.last_proof_us[new_id] = self.now_us
        self._schedule_pol_check(new_id)

    # -- churn -------------------------------------------------------------

    def _turn_off_random(self) -> None:
        candidates = self._online_ids()
        if not candidates:
            return
        self._turn_off(candidates[self.rng.randrange(len(candidates))])

    def _turn_off(self, node: Optional[NodeId]) -> None:
        state = self.nodes.get(node)
        if state is None or state.status is not NodeStatus.ONLINE:
            return
        state.status = NodeStatus.OFFLINE
        state.last_seen_stage = state.stage
        self.turn_off_us[node] = self.now_us
        self._trace(f"Node {node} turns off")
        self._check_termination()

    def _turn_on_random(self) -> None:
        candidates = sorted(
            v for v, s in self.nodes.items()
            if s.status is NodeStatus.OFFLINE and v not in self.awaiting_reentry
        )
        if not candidates:
            return
        self._turn_on(candidates[self.rng.randrange(len(candidates))])

    def _turn_on(self, node: Optional[NodeId]) -> None:
        state = self.nodes.get(node)
        if state is None or state.status is not NodeStatus.OFFLINE:
            return
        self._trace(f"Node {node} turns on")
        if self._absence_witnessed(node):
            self._push(self.now_us + HOP_US + _stagger_us(node), "reentry", (node,))
        else:
            # Peers may still list us on-line; wait out a summary that saw
            # our silence so the request is not mistaken for a duplicate.
            self.awaiting_reentry.add(node)

    def _absence_witnessed(self, node: NodeId) -> bool:
        """True once a summary taken after the node fell silent excluded it."""
        return (
            self.last_summary_us > self.turn_off_us.get(node, 0)
            and node not in self.last_summary_alive
        )

    def _schedule_reentries(self) -> None:
        ready = [v for v in sorted(self.awaiting_reentry) if self._absence_witnessed(v)]
        for node in ready:
            self.awaiting_reentry.discard(node)
            self._push(self.now_us + 2 * HOP_US + _stagger_us(node), "reentry", (node,))

    def _on_reentry(self, node: NodeId) -> None:
        state = self.nodes.get(node)
        if state is None or state.status is not NodeStatus.OFFLINE:
            return
        online = [v for v in self._online_ids() if v != node]
        if not online:
            self.awaiting_reentry.add(node)
            return
        verifier_id = online[self.rng.randrange(len(online))]
        verifier = self.nodes[verifier_id]
        if reachable(node, verifier_id, self.positions, self.cfg) is Reach.NONE:
            self.awaiting_reentry.add(node)
            return
        self._trace(f"Node {node} reaches {verifier_id} and starts a ZKP for re-insertion")
        request = AccessRequest(
            sender=node, stage=state.stage, sent_at=self.now_s,
            claimed_id=node, claimed_graph=state.graph,
        )
        self._meter_unicast(request, node, verifier_id)
        prover = _MeteredProver(self, node, verifier_id, state)
        decision = access_control(verifier, request, prover, self.pcfg, self.rng, self.now_s)
        if isinstance(decision, Granted):
            self._meter_unicast(decision.grant, verifier_id, node)
            apply_catch_up(state, decision.grant, self.pcfg)
            self.last_proof_us[node] = self.now_us
            self._schedule_pol_check(node)
            self._trace(f"Node {node} re-enters the network")
        elif decision.reason == "duplicate identity":
            # Benign race: some replica's view has not registered our absence
            # yet.  Retry after the next summary that witnesses it.
            self.awaiting_reentry.add(node)
        else:
            self._trace(f"Node {node} is denied access ({decision.reason})")
            if decision.reason == "expired membership":
                state.status = NodeStatus.DELETED
                # The returning user must be re-inserted as a new member.
                self._push(self.now_us + HOP_US, "expired_rejoin", ())

    def _on_expired_rejoin(self) -> None:
        self._start_insertion()

    # -- scripted deletion ---------------------------------------------------

    def _scripted_delete(self, victim: Optional[NodeId]) -> None:
        online = self._online_ids()
        if victim is None or not online:
            return
        author = next((v for v in online if v != victim), None)
        if author is None:
            return
        summary = PolSummary(
            sender=author,
            stage=self.nodes[author].stage,
            sent_at=self.now_s,
            window=self.now_us // _us(self.cfg.T),
            alive=frozenset(v for v in online if v != victim),
            deletions=frozenset({victim}),
        )
        self._broadcast(summary, author)
        self._apply_summary(self.nodes[author], summary, traced=True)


class _MeteredProver:
    """Honest prover whose round messages are metered over the simulated wire."""

    def __init__(self, engine: _Engine, supplicant: NodeId, verifier: NodeId, state: NodeState):
        self._engine = engine
        self._supplicant = supplicant
        self._verifier = verifier
        self._inner = HonestProver(state.graph, state.cycle, engine.rng)
        self._stage = state.stage

    def next_commitment(self):
        com = self._inner.next_commitment()
        msg = ZkpCommit(
            sender=self._supplicant, stage=self._stage,
            sent_at=self._engine.now_s, commitment=com,
        )
        if not self._engine._meter_unicast(msg, self._supplicant, self._verifier):
            raise ConnectionError("supplicant out of range")
        return com

    def answer(self, challenge: int):
        challenge_msg = ZkpChallenge(
            sender=self._verifier, stage=self._stage,
            sent_at=self._engine.now_s, bit=challenge,
        )
        if not self._engine._meter_unicast(challenge_msg, self._verifier, self._supplicant):
            raise ConnectionError("verifier out of range")
        response = self._inner.answer(challenge)
        msg = ZkpResponse(
            sender=self._supplicant, stage=self._stage,
            sent_at=self._engine.now_s, response=response,
        )
        if not self._engine._meter_unicast(msg, self._supplicant, self._verifier):
            raise ConnectionError("supplicant out of range")
        return response


def run_scenario(cfg: ScenarioConfig) -> ScenarioResult:
    """Simulate one scenario to completion or termination.

    Deterministic: the same configuration and seed produce byte-identical
    trace and metrics serializations.
    """
    return _Engine(cfg).run()
