"""The shared instance: a public graph hiding a secret cycle.

Walks through the life of the group's key material: dealing an initial
instance, splicing a newcomer into the secret cycle, and splicing a silent
member back out.  Every replica in a real network performs exactly these
edits, which is why they all stay byte-identical.
"""

from random import Random

from gasman import (
    assign_new_id,
    build_initial_graph,
    encode_cycle,
    encode_graph,
    is_hamiltonian_cycle,
    locate_insertion_pair,
    neighbor_set_for_insert,
    splice_delete,
    splice_insert,
)

rng = Random(2024)

# Deal an instance for 11 founding members with a target of 22 edges.  The
# cycle is the secret; the graph is public.  Every vertex keeps at least its
# two cycle neighbors, so the cycle hides among the filler edges.
graph, cycle = build_initial_graph(n=11, m=22, rng=rng)
print("instance:", graph.order, "vertices,", graph.size, "edges")
print("secret cycle:", cycle.order)
print("cycle valid: ", is_hamiltonian_cycle(graph, cycle))

# A newcomer asks to join.  The lowest unassigned id becomes its identity.
new_id = assign_new_id(graph)
print("\nnew member gets id", new_id)

# The authenticator draws the newcomer's neighbor group: one cycle-adjacent
# pair plus fillers, arranged so the pair is the only adjacency in the group.
group = neighbor_set_for_insert(graph, cycle, degree=4, rng=rng)
pair = locate_insertion_pair(cycle, group)
print("neighbor group:", sorted(group))
print("unique adjacent pair (the splice point):", pair)

# Everyone who hears the group broadcast can find that pair on their own
# replica and splice the newcomer in between.
graph, cycle = splice_insert(graph, cycle, new_id, group)
print("cycle after insert:", cycle.order)
print("still valid:", is_hamiltonian_cycle(graph, cycle))

# A member that stops proving life gets spliced out; its two cycle neighbors
# are bridged so the cycle stays closed.
victim = sorted(graph.vertices)[3]
graph, cycle = splice_delete(graph, cycle, victim)
print("\nafter deleting", victim, "->", cycle.order)
print("still valid:", is_hamiltonian_cycle(graph, cycle))

# Canonical byte encodings make replicas comparable and hashable bit-exactly.
print("\ngraph encoding: ", encode_graph(graph)[:16].hex(), "...")
print("cycle encoding: ", encode_cycle(cycle).hex())
