# %% [markdown]
# # G-DICE against brute force on the tiny domain
# The tiny domain is small enough to enumerate every deterministic
# two-node controller, so we can see exactly how close the
# cross-entropy search gets.

# %%
import numpy as np

from decsearch.domains import TinyOracleDomain
from decsearch.fsa import GdiceConfig, exhaustive_policy_search, gdice_search

dom = TinyOracleDomain()
v_star, best = exhaustive_policy_search(dom, n_nodes=2)
v_open, _ = exhaustive_policy_search(dom, n_nodes=1)
print(f"best 2-node value {v_star:.6f}, best open-loop value {v_open:.6f}")
print("MA per node:", best[0].ma_probs.argmax(1))
print("next node per (node, bit):\n", best[0].trans_probs.argmax(2))

# %% [markdown]
# Memory buys about a 50% higher value: the second node lets the robot
# switch action when the observation bit flips.

# %%
for alpha in (0.1, 1.0):
    cfg = GdiceConfig(n_nodes=2, n_iter=150, n_samples=50, n_elite=5, alpha=alpha, horizon=6)
    vals = [dom.exact_value(gdice_search(dom, cfg, s).best_policy[0]) for s in range(5)]
    print(f"alpha={alpha}: exact values of returned policies", np.round(vals, 4))
