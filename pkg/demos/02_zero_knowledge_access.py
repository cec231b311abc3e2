"""Access control as an interactive zero-knowledge proof.

A member proves it knows the secret cycle without revealing it.  Each round
the prover commits to a randomly relabeled copy of the instance; the verifier
then asks to see either the relabeled cycle (is there *a* cycle behind the
commitment?) or the relabeling itself (is the committed graph *the* public
one?).  Only someone holding the real cycle can survive both questions, and a
bluffer is caught with probability 1/2 per round.
"""

from random import Random

from gasman import build_initial_graph
from gasman.zkp import (
    HonestProver,
    OneBranchCheater,
    prover_commit,
    prover_respond,
    run_proof,
    verifier_check,
)

rng = Random(7)
graph, cycle = build_initial_graph(n=11, m=22, rng=rng)

# --- one round, by hand ----------------------------------------------------

secret, commitment = prover_commit(graph, cycle, rng)
print("commitment:")
print("  relabeled graph digest:", commitment.graph_digest.hex()[:32], "...")
print("  relabeled cycle digest:", commitment.cycle_digest.hex()[:32], "...")

challenge = rng.randrange(2)
response = prover_respond(secret, challenge)
accepted, reason = verifier_check(graph, commitment, challenge, response)
print(f"challenge {challenge} -> {'accept' if accepted else f'reject ({reason})'}")

# --- a full proof ------------------------------------------------------------

result = run_proof(graph, HonestProver(graph, cycle, rng), rounds=20, rng=rng)
print("\nhonest prover, 20 rounds:", "accept" if result.accepted else "reject")

# --- and a bluffer -----------------------------------------------------------

# The cheater guesses each challenge and prepares only that branch: a fake
# instance with a known cycle for one question, an honest relabeling with a
# junk cycle digest for the other.
cheater = OneBranchCheater(graph, rng)
one = sum(run_proof(graph, cheater, 1, rng).accepted for _ in range(10_000))
print(f"\ncheater surviving 1 round : {one / 10_000:.3f}  (expect ~0.5)")

ten = sum(run_proof(graph, cheater, 10, rng).accepted for _ in range(100_000))
print(f"cheater surviving 10 rounds: {ten / 100_000:.5f}  (expect ~{0.5 ** 10:.5f})")

twenty = run_proof(graph, cheater, 20, rng)
print(f"one 20-round attempt: rejected at round {twenty.failed_round} ({twenty.reason})")
