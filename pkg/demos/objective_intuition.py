"""What the two contrastive objectives actually optimize.

The instance objective treats every video as its own class under a softmax
over the memory bank; the aggregation objective replaces "my own bank row"
with "my cluster mates among my nearest background neighbors". This script
builds a toy bank and walks both losses through their defining behaviors.
"""

import numpy as np

import trajclust as tc

r = np.random.default_rng(3)
n, dim = 12, 4
bank = tc.init_bank(n, dim, update_momentum=0.5, seed=9)
cfg = tc.IrConfig(temperature=0.2)

# Instance recognition. The probability of index 5 under its own bank row
# is small when the query is random and grows as the query approaches the
# stored row; the loss is the negative log of exactly that probability.
query = r.standard_normal(dim)
query /= np.linalg.norm(query)
own = bank.entries[5]
print("P(5 | random query)  =", round(tc.instance_prob(5, query, bank, cfg), 4))
print("P(5 | own bank row)  =", round(tc.instance_prob(5, own, bank, cfg), 4))
for step in (0.0, 0.5, 1.0):
    d = (1 - step) * query + step * own
    d /= np.linalg.norm(d)
    loss, _ = tc.ir_loss_and_grad([5], d[None, :], bank, cfg)
    print(f"  ir loss while moving toward the row, step {step:.1f}: {loss:.3f}")

# Probabilities over the whole bank sum to one in exact mode.
total = sum(tc.instance_prob(i, query, bank, cfg) for i in range(n))
print("sum of P(i | query) over the bank:", round(total, 12))

# Local aggregation. Two independent clusterings of the bank define the
# close sets (cluster mates in any run); the background is each point's
# nearest bank rows by dot product. The loss compares where the close mass
# sits inside the background mass.
model = tc.build_cluster_model(bank.entries, num_clusters=3, num_runs=2, base_seed=1)
neighbors = tc.neighbor_sets(model, bank.entries, background_k=6)
i = 4
print("\nvideo", i, "close set:", neighbors.close[i].tolist())
print("video", i, "background:", neighbors.background[i].tolist())

batch = np.arange(n)
d = bank.entries + 0.1 * r.standard_normal((n, dim))
loss, grad = tc.la_loss_and_grad(batch, d, neighbors, bank, cfg)
print("aggregation loss over the bank:", round(loss, 4),
      " gradient norm:", round(float(np.linalg.norm(grad)), 4))

# Degenerate identity: with one cluster and one run, everything is a close
# mate, every background set is inside the close set, and the loss is zero
# by construction, not approximately.
solo = tc.build_cluster_model(bank.entries, num_clusters=1, num_runs=1, base_seed=0)
all_close = tc.neighbor_sets(solo, bank.entries, background_k=6)
loss0, grad0 = tc.la_loss_and_grad(batch, d, all_close, bank, cfg)
print("one cluster, one run: loss =", loss0, " max |grad| =", float(np.abs(grad0).max()))

# The production loss never forms the softmax denominator; it cancels in the
# ratio of set probabilities. The explicit reference path keeps it and must
# agree to float precision.
reference = tc.la_loss_reference(batch, d, neighbors, bank, cfg)
print("cancellation path vs explicit softmax path:",
      f"{loss:.15f} vs {reference:.15f}")
