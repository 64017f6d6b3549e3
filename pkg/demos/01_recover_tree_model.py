"""Fit a tree spin model from samples, end to end.

Draws samples from the 10-node trident Ising model, recovers the interaction
tree with the mutual-information spanning tree, fits all tensor cores by
sketched linear systems (no iterative training), and compares against the
true density.
"""

import numpy as np

from ttnsketch import (
    chow_liu_tree,
    fit_ttns,
    markov_sketch,
    mrf_full_tensor,
    mrf_sample,
    preset_model,
    rel_l2_error,
)

preset = preset_model("trident10")
print(f"model: {preset.name}, d={preset.mrf.d}, beta={preset.mrf.beta}")
print(f"true edges: {sorted(tuple(sorted(e)) for e in preset.tree.edges)}")

for N in (2**10, 2**13, 2**16):
    samples = mrf_sample(preset.mrf, N, seed=0)

    # topology discovery from the samples alone
    tree = chow_liu_tree(samples, root=7)
    recovered = sorted(tuple(sorted(e)) for e in tree.edges)
    match = recovered == sorted(tuple(sorted(e)) for e in preset.tree.edges)

    # one linear-algebra pass solves every core
    sketch = markov_sketch(tree, preset.mrf.state_counts)
    fit = fit_ttns(samples, tree, sketch, ranks=2)

    err = rel_l2_error(fit.model.contract_full(), mrf_full_tensor(preset.mrf))
    print(f"N={N:>6}: tree recovered={match}, relative l2 error={err:.4f}")

print()
print("The error falls like 1/sqrt(N): no optimization, no local minima.")
