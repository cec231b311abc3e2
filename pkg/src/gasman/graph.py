"""Shared-graph key material: the public graph and its secret Hamiltonian cycle.

The group's public key material is an undirected graph; the group secret is a
Hamiltonian cycle in it.  Membership changes are local splice edits on both,
so every operation in this module is a pure function from old values to new
values.  All randomness enters through an explicit ``random.Random`` so that
callers stay reproducible.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from random import Random
from typing import Iterable

NodeId = int

#: Version byte prefixed to every canonical encoding.
ENCODING_VERSION = 0x01

#: Random-draw budget for the unambiguous-neighbor-set construction.
NEIGHBOR_SET_RETRY_BUDGET = 1000


class GraphError(ValueError):
    """Base class for graph/cycle consistency failures."""


class InvalidParameters(GraphError):
    """Initialization parameters violate the generator's preconditions."""


class PermutationDomainMismatch(GraphError):
    """A permutation was applied to a graph over a different vertex set."""


class AmbiguousBroadcast(GraphError):
    """A neighbor-set broadcast does not pin down a unique splice position."""


class UnsatisfiableNeighborSet(GraphError):
    """No neighbor set with a unique cycle-adjacent pair exists."""


class InvalidSplice(GraphError):
    """Splice preconditions violated (id collision, foreign neighbors, ...)."""


class UnknownNode(GraphError):
    """The named node is not a vertex of the graph."""


class BelowMinimumOrder(GraphError):
    """The graph is too small for the operation to leave a valid cycle."""


def _norm_edge(u: NodeId, v: NodeId) -> tuple[NodeId, NodeId]:
    return (u, v) if u < v else (v, u)


def _shuffle(items: list, rng: Random) -> None:
    """In-place Fisher-Yates driven only by ``rng.randrange``."""
    for i in range(len(items) - 1, 0, -1):
        j = rng.randrange(i + 1)
        items[i], items[j] = items[j], items[i]


@dataclass(frozen=True)
class Graph:
    """Undirected simple graph over integer node ids.

    Edges are stored with the smaller endpoint first, so membership tests are
    order-insensitive and two equal graphs always compare and hash equal.
    """

    vertices: frozenset[NodeId]
    edges: frozenset[tuple[NodeId, NodeId]]

    def __post_init__(self) -> None:
        vertices = frozenset(self.vertices)
        normalized = set()
        for edge in self.edges:
            u, v = edge
            if u == v:
                raise GraphError(f"self-loop on vertex {u}")
            if u not in vertices or v not in vertices:
                raise GraphError(f"edge {edge!r} has an endpoint outside the vertex set")
            normalized.add(_norm_edge(u, v))
        object.__setattr__(self, "vertices", vertices)
        object.__setattr__(self, "edges", frozenset(normalized))

    @property
    def order(self) -> int:
        return len(self.vertices)

    @property
    def size(self) -> int:
        return len(self.edges)

    def has_edge(self, u: NodeId, v: NodeId) -> bool:
        return _norm_edge(u, v) in self.edges if u != v else False

    def degree(self, v: NodeId) -> int:
        return sum(1 for edge in self.edges if v in edge)


@dataclass(frozen=True)
class HamiltonianCycle:
    """A cyclic vertex ordering, held in canonical form.

    Canonical form rotates the sequence so the smallest id comes first and
    orients it so the second element is the smaller of the first element's two
    cycle neighbors.  Any rotation or reflection of the same cycle therefore
    constructs an identical value, which keeps hashing byte-exact.
    """

    order: tuple[NodeId, ...]
    _pos: dict = field(init=False, repr=False, compare=False, default=None)

    def __post_init__(self) -> None:
        canonical = _canonical_rotation(tuple(self.order))
        object.__setattr__(self, "order", canonical)
        object.__setattr__(self, "_pos", {v: i for i, v in enumerate(canonical)})

    def __len__(self) -> int:
        return len(self.order)

    @property
    def vertices(self) -> frozenset[NodeId]:
        return frozenset(self.order)

    def successor(self, v: NodeId) -> NodeId:
        i = self._pos[v]
        return self.order[(i + 1) % len(self.order)]

    def neighbors_of(self, v: NodeId) -> tuple[NodeId, NodeId]:
        """The two cycle neighbors of ``v`` (predecessor, successor)."""
        i = self._pos[v]
        n = len(self.order)
        return self.order[(i - 1) % n], self.order[(i + 1) % n]

    def adjacent(self, u: NodeId, v: NodeId) -> bool:
        """True iff ``u`` and ``v`` are consecutive somewhere on the cycle."""
        i = self._pos.get(u)
        j = self._pos.get(v)
        if i is None or j is None or u == v:
            return False
        n = len(self.order)
        return (i - j) % n == 1 or (j - i) % n == 1


def _canonical_rotation(seq: tuple[NodeId, ...]) -> tuple[NodeId, ...]:
    if len(seq) <= 1:
        return seq
    start = seq.index(min(seq))
    rotated = seq[start:] + seq[:start]
    if len(rotated) >= 3 and rotated[-1] < rotated[1]:
        rotated = (rotated[0],) + tuple(reversed(rotated[1:]))
    return rotated


@dataclass(frozen=True)
class Permutation:
    """A bijection of a vertex set onto itself.

    Stored as the image sequence of the sorted domain; ``image[i]`` is the
    image of ``domain[i]``.
    """

    domain: tuple[NodeId, ...]
    image: tuple[NodeId, ...]

    def __post_init__(self) -> None:
        pairs = sorted(zip(self.domain, self.image))
        domain = tuple(p[0] for p in pairs)
        image = tuple(p[1] for p in pairs)
        if len(set(domain)) != len(domain):
            raise GraphError("permutation domain contains duplicates")
        if sorted(image) != list(domain):
            raise GraphError("permutation is not a bijection of its domain")
        object.__setattr__(self, "domain", domain)
        object.__setattr__(self, "image", image)

    @classmethod
    def identity(cls, vertices: Iterable[NodeId]) -> "Permutation":
        domain = tuple(sorted(vertices))
        return cls(domain, domain)

    @classmethod
    def random(cls, vertices: Iterable[NodeId], rng: Random) -> "Permutation":
        domain = sorted(vertices)
        image = list(domain)
        _shuffle(image, rng)
        return cls(tuple(domain), tuple(image))

    def as_dict(self) -> dict[NodeId, NodeId]:
        return dict(zip(self.domain, self.image))

    def apply(self, v: NodeId) -> NodeId:
        return self.as_dict()[v]

    def inverse(self) -> "Permutation":
        return Permutation(self.image, self.domain)


# ---------------------------------------------------------------------------
# Canonical byte encodings (version-prefixed; consumed by the proof hashing)
# ---------------------------------------------------------------------------

def _pack_ids(ids: Iterable[NodeId]) -> bytes:
    seq = list(ids)
    try:
        return struct.pack(f">I{len(seq)}I", len(seq), *seq)
    except struct.error as exc:
        raise GraphError(f"node id out of encodable range: {exc}") from exc


def encode_graph(g: Graph) -> bytes:
    """Sorted vertex list, then sorted edge list, smaller endpoint first."""
    edges = sorted(g.edges)
    head = bytes([ENCODING_VERSION]) + _pack_ids(sorted(g.vertices))
    try:
        body = struct.pack(f">I{2 * len(edges)}I", len(edges), *(x for e in edges for x in e))
    except struct.error as exc:
        raise GraphError(f"node id out of encodable range: {exc}") from exc
    return head + body


def encode_cycle(hc: HamiltonianCycle) -> bytes:
    """The canonical-form vertex sequence."""
    return bytes([ENCODING_VERSION]) + _pack_ids(hc.order)


def encode_permutation(p: Permutation) -> bytes:
    """The image sequence of the sorted domain."""
    return bytes([ENCODING_VERSION]) + _pack_ids(p.image)


# ---------------------------------------------------------------------------
# Verification and relabeling
# ---------------------------------------------------------------------------

def is_hamiltonian_cycle(g: Graph, hc: HamiltonianCycle) -> bool:
    """True iff ``hc`` visits every vertex of ``g`` exactly once along edges of ``g``.

    Malformed inputs (wrong vertex set, duplicates, too short) return False
    rather than raising; hostile data is expected here.
    """
    order = hc.order
    n = len(order)
    if n < 3 or n != len(g.vertices):
        return False
    if len(set(order)) != n or set(order) != g.vertices:
        return False
    return all(g.has_edge(order[i], order[(i + 1) % n]) for i in range(n))


def permute_graph(g: Graph, p: Permutation) -> Graph:
    """Relabel every vertex and edge endpoint of ``g`` through ``p``."""
    if frozenset(p.domain) != g.vertices:
        raise PermutationDomainMismatch("permutation domain mismatch")
    mapping = p.as_dict()
    return Graph(
        frozenset(mapping[v] for v in g.vertices),
        frozenset(_norm_edge(mapping[u], mapping[v]) for u, v in g.edges),
    )


def apply_permutation(
    g: Graph, hc: HamiltonianCycle, p: Permutation
) -> tuple[Graph, HamiltonianCycle]:
    """Build the isomorphic graph and the relabeled cycle, both canonical."""
    relabeled = permute_graph(g, p)
    mapping = p.as_dict()
    try:
        cycle = HamiltonianCycle(tuple(mapping[v] for v in hc.order))
    except KeyError as exc:
        raise PermutationDomainMismatch("permutation domain mismatch") from exc
    return relabeled, cycle


# ---------------------------------------------------------------------------
# Generation and splice rules
# ---------------------------------------------------------------------------

def build_initial_graph(n: int, m: int, rng: Random) -> tuple[Graph, HamiltonianCycle]:
    """Generate the initial shared instance: a secret cycle hidden in a graph.

    The cycle is a uniformly random ordering of ``{0..n-1}``.  Each vertex
    then tops its neighbor group up to ``2m/n`` members (its two cycle
    neighbors plus random partners), with groups kept mutual and capped so the
    union never exceeds ``m`` edges.  Exact ``2m/n``-regularity is not always
    reachable; the guarantees are: the cycle is contained, minimum degree is
    at least 2, and ``n <= |E| <= m``.
    """
    if n < 4 or m < n or (2 * m) % n != 0 or (2 * m) // n < 2:
        raise InvalidParameters("invalid initialization parameters")
    group_size = (2 * m) // n

    order = list(range(n))
    _shuffle(order, rng)
    cycle = HamiltonianCycle(tuple(order))
    edges = complete_edges_from_cycle(tuple(order), group_size, rng)
    return Graph(frozenset(range(n)), edges), cycle


def complete_edges_from_cycle(
    order: tuple[NodeId, ...], group_size: int, rng: Random
) -> frozenset[tuple[NodeId, NodeId]]:
    """Top every vertex's neighbor group up to ``group_size`` around a cycle.

    Groups stay mutual and degree-capped, so the union holds at most
    ``group_size * n / 2`` edges and always contains the cycle.
    """
    n = len(order)
    edges: set[tuple[NodeId, NodeId]] = set()
    degree = dict.fromkeys(order, 0)
    for i in range(n):
        e = _norm_edge(order[i], order[(i + 1) % n])
        edges.add(e)
    for u, v in edges:
        degree[u] += 1
        degree[v] += 1

    for i in sorted(order):
        while degree[i] < group_size:
            partner = _draw_partner(i, degree, group_size, edges, sorted(order), rng)
            if partner is None:
                break
            edges.add(_norm_edge(i, partner))
            degree[i] += 1
            degree[partner] += 1
    return frozenset(edges)


def _draw_partner(
    i: NodeId,
    degree: dict[NodeId, int],
    cap: int,
    edges: set[tuple[NodeId, NodeId]],
    vertices: list[NodeId],
    rng: Random,
) -> NodeId | None:
    # A handful of rejection draws is almost always enough on sparse graphs;
    # fall back to an exhaustive scan before giving up on this vertex.
    n = len(vertices)
    for _ in range(32):
        j = vertices[rng.randrange(n)]
        if j != i and degree[j] < cap and _norm_edge(i, j) not in edges:
            return j
    eligible = [
        j for j in vertices
        if j != i and degree[j] < cap and _norm_edge(i, j) not in edges
    ]
    if not eligible:
        return None
    return eligible[rng.randrange(len(eligible))]


def assign_new_id(g: Graph) -> NodeId:
    """The lowest non-negative id not currently assigned as a vertex."""
    candidate = 0
    while candidate in g.vertices:
        candidate += 1
    return candidate


def neighbor_set_for_insert(
    g: Graph,
    hc: HamiltonianCycle,
    degree: int,
    rng: Random,
    retry_budget: int = NEIGHBOR_SET_RETRY_BUDGET,
) -> frozenset[NodeId]:
    """Choose a neighbor group for a joining node.

    The group is one cycle-adjacent pair plus ``degree - 2`` fillers picked so
    that no other two members of the group are cycle-adjacent.  Receivers can
    then recover the splice position from the group alone, which is what
    :func:`locate_insertion_pair` does.
    """
    if degree < 2 or len(g.vertices) < degree + 2:
        raise UnsatisfiableNeighborSet("cannot construct unambiguous neighbor set")
    order = hc.order
    n = len(order)
    for _ in range(retry_budget):
        k = rng.randrange(n)
        v_j, v_k = order[k], order[(k + 1) % n]
        chosen = [v_j, v_k]
        pool = [v for v in order if v != v_j and v != v_k]
        _shuffle(pool, rng)
        for w in pool:
            if len(chosen) == degree:
                break
            if any(hc.adjacent(w, x) for x in chosen):
                continue
            chosen.append(w)
        if len(chosen) == degree:
            return frozenset(chosen)
    raise UnsatisfiableNeighborSet("cannot construct unambiguous neighbor set")


def locate_insertion_pair(
    hc: HamiltonianCycle, neighbors: Iterable[NodeId]
) -> tuple[NodeId, NodeId]:
    """Recover the unique cycle-adjacent pair from a broadcast neighbor set.

    Returns the pair oriented along the canonical cycle (second element is the
    successor of the first).  Zero or multiple adjacent pairs mean the
    broadcast is malformed or hostile.
    """
    members = sorted(set(neighbors))
    pairs = [
        (u, v)
        for i, u in enumerate(members)
        for v in members[i + 1:]
        if hc.adjacent(u, v)
    ]
    if len(pairs) != 1:
        raise AmbiguousBroadcast(
            f"ambiguous or invalid insertion broadcast ({len(pairs)} adjacent pairs)"
        )
    u, v = pairs[0]
    return (u, v) if hc.successor(u) == v else (v, u)


def splice_insert(
    g: Graph,
    hc: HamiltonianCycle,
    new_id: NodeId,
    neighbors: Iterable[NodeId],
) -> tuple[Graph, HamiltonianCycle]:
    """Insert ``new_id`` between the unique adjacent pair of ``neighbors``.

    The displaced cycle edge stays in the graph; only the cycle routes around
    the newcomer.
    """
    neighbor_set = frozenset(neighbors)
    if new_id < 0 or new_id in g.vertices or not neighbor_set <= g.vertices:
        raise InvalidSplice("invalid splice")
    v_j, v_k = locate_insertion_pair(hc, neighbor_set)
    i = hc.order.index(v_j)
    new_order = hc.order[: i + 1] + (new_id,) + hc.order[i + 1:]
    new_graph = Graph(
        g.vertices | {new_id},
        g.edges | {_norm_edge(new_id, w) for w in neighbor_set},
    )
    return new_graph, HamiltonianCycle(new_order)


def splice_delete(
    g: Graph, hc: HamiltonianCycle, victim: NodeId
) -> tuple[Graph, HamiltonianCycle]:
    """Remove ``victim``, bridging its two cycle neighbors with a new edge.

    Every edge incident to the victim leaves the graph; the bridge edge joins
    its former cycle neighbors so the cycle stays closed.
    """
    if victim not in g.vertices or victim not in hc.vertices:
        raise UnknownNode("unknown node")
    if len(g.vertices) < 4:
        raise BelowMinimumOrder("below minimum order")
    v_j, v_k = hc.neighbors_of(victim)
    new_edges = {e for e in g.edges if victim not in e}
    new_edges.add(_norm_edge(v_j, v_k))
    new_graph = Graph(g.vertices - {victim}, frozenset(new_edges))
    new_order = tuple(v for v in hc.order if v != victim)
    return new_graph, HamiltonianCycle(new_order)
