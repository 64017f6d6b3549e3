import numpy as np
import pytest

from ttnsketch.data import DiscreteSamples
from ttnsketch.estimator import (
    RankOverestimateError,
    cde_oracle,
    cores_from_factors,
    edge_factorizations,
    estimate_ranks,
    fit_from_sketches,
    fit_ttns,
    recursive_coefficient,
    sketch_exact,
    sketch_from_samples,
    sketch_spectra,
    solve_cores,
    system_forming,
)
from ttnsketch.models import (
    PairwiseMRF,
    mrf_full_tensor,
    mrf_sample,
    preset_model,
    tree_gm_to_ttns,
)
from ttnsketch.sketches import markov_sketch, perturbative_sketch
from ttnsketch.tree import build_rooted_tree, path_tree

rng = np.random.default_rng(31415)


def random_tree(d, seed):
    local = np.random.default_rng(seed)
    edges = [(i, int(local.integers(1, i))) for i in range(2, d + 1)]
    return build_rooted_tree(edges, root=1)


def random_tree_gm(d, n, seed):
    local = np.random.default_rng(seed)
    tree = random_tree(d, seed)
    tables = {
        tuple(sorted(e)): local.standard_normal((n, n)) for e in tree.edges
    }
    mrf = PairwiseMRF(d, np.full(d, n), 1.0, tables)
    return mrf, tree


# -- sampled sketches -----------------------------------------------------------


def test_markov_sampled_sketch_is_empirical_marginal():
    preset = preset_model("trident10")
    sk = markov_sketch(preset.tree, preset.mrf.state_counts)
    s = mrf_sample(preset.mrf, 300, seed=0)
    zs = sketch_from_samples(s, sk)
    k = 4
    counts = np.zeros((2, 2, 2, 2))  # (x2, x5, x4, x6) in listed order
    np.add.at(
        counts, (s.column(2), s.column(5), s.column(4), s.column(6)), 1.0
    )
    assert np.allclose(zs.Z[k], counts.reshape(4, 2, 2) / 300)


def test_single_sample_sketch_is_outer_product():
    tree = path_tree(3)
    sk = markov_sketch(tree, [2, 2, 2])
    s = DiscreteSamples(np.array([[1, 0, 1]]), np.array([2, 2, 2]))
    zs = sketch_from_samples(s, sk)
    assert zs.Z[2].sum() == 1.0
    assert zs.Z[2][1, 0, 1] == 1.0  # beta = x_3 = 1, x_2 = 0, gamma = x_1 = 1


def test_sharded_accumulation_matches_single_pass():
    preset = preset_model("trident10")
    sk = markov_sketch(preset.tree, preset.mrf.state_counts)
    s = mrf_sample(preset.mrf, 1000, seed=1)
    a = sketch_from_samples(s, sk, shards=1)
    b = sketch_from_samples(s, sk, shards=7)
    for k in preset.tree.nodes:
        assert np.abs(a.Z[k] - b.Z[k]).max() <= 1e-14
    tree = path_tree(5)
    skp = perturbative_sketch(tree, [2] * 5, eps=0.1, bond_dims=4, seed=2)
    s2 = DiscreteSamples(rng.integers(0, 2, size=(500, 5)), np.full(5, 2))
    a2 = sketch_from_samples(s2, skp, shards=1)
    b2 = sketch_from_samples(s2, skp, shards=3)
    for k in tree.nodes:
        assert np.abs(a2.Z[k] - b2.Z[k]).max() <= 1e-12


def test_sketch_set_linearity_under_union():
    preset = preset_model("trident10")
    sk = markov_sketch(preset.tree, preset.mrf.state_counts)
    s1 = mrf_sample(preset.mrf, 300, seed=3)
    s2 = mrf_sample(preset.mrf, 700, seed=4)
    z1 = sketch_from_samples(s1, sk)
    z2 = sketch_from_samples(s2, sk)
    zu = sketch_from_samples(s1.concat(s2), sk)
    merged = z1.merged(z2)
    for k in preset.tree.nodes:
        assert np.abs(zu.Z[k] - merged.Z[k]).max() <= 1e-12
    for e in preset.tree.edges:
        assert np.abs(zu.Z_edge[e] - merged.Z_edge[e]).max() <= 1e-12


def test_empty_samples_rejected():
    tree = path_tree(2)
    sk = markov_sketch(tree, [2, 2])
    with pytest.raises(ValueError):
        sketch_from_samples(
            DiscreteSamples(np.zeros((0, 2), dtype=int), np.array([2, 2])), sk
        )


def test_sampled_sketch_converges_to_exact():
    preset = preset_model("trident10")
    p = mrf_full_tensor(preset.mrf)
    sk = markov_sketch(preset.tree, preset.mrf.state_counts)
    star = sketch_exact(p, sk)
    hat = sketch_from_samples(mrf_sample(preset.mrf, 2**17, seed=5), sk)
    for k in preset.tree.nodes:
        scale = np.abs(star.Z[k]).max()
        assert np.abs(hat.Z[k] - star.Z[k]).max() <= 6 / np.sqrt(2**17) * max(scale, 1)


def test_exact_sketch_of_uniform_density():
    tree = path_tree(3)
    sk = markov_sketch(tree, [2, 2, 2])
    zs = sketch_exact(np.full((2, 2, 2), 0.125), sk)
    assert zs.exact
    total = zs.Z[1].sum()
    assert abs(total - 1.0) < 1e-12


def test_exact_sketch_ttns_matches_dense_perturbative():
    preset = preset_model("trident10")
    p = mrf_full_tensor(preset.mrf)
    gm = tree_gm_to_ttns(preset.mrf, preset.tree)
    sk = perturbative_sketch(preset.tree, preset.mrf.state_counts,
                             eps=0.2, bond_dims=3, seed=6)
    zd = sketch_exact(p, sk)
    zt = sketch_exact(gm, sk)
    for k in preset.tree.nodes:
        assert np.abs(zd.Z[k] - zt.Z[k]).max() <= 1e-10
    for e in preset.tree.edges:
        assert np.abs(zd.Z_edge[e] - zt.Z_edge[e]).max() <= 1e-10


# -- system forming ---------------------------------------------------------------


def test_system_forming_orthonormal_b_and_full_rank_a():
    preset = preset_model("trident10")
    p = mrf_full_tensor(preset.mrf)
    sk = markov_sketch(preset.tree, preset.mrf.state_counts)
    zs = sketch_exact(p, sk)
    sys = system_forming(zs, preset.tree, {e: 2 for e in preset.tree.edges})
    for k in preset.tree.nodes:
        if k == preset.tree.root:
            continue
        B = sys.B[k].reshape(-1, sys.B[k].shape[2])
        assert np.allclose(B.T @ B, np.eye(B.shape[1]), atol=1e-10)
    for k in preset.tree.nodes:
        if sys.A[k] is not None:
            s = np.linalg.svd(sys.A[k], compute_uv=False)
            assert s[-1] > 1e-10  # full column rank


def test_rank_one_on_uniform_density():
    tree = path_tree(3)
    sk = markov_sketch(tree, [2, 2, 2])
    zs = sketch_exact(np.full((2, 2, 2), 0.125), sk)
    sys = system_forming(zs, tree, {e: 1 for e in tree.edges})
    assert (sys.A[1] > 0).all()
    model, _, _ = solve_cores(sys, tree)
    assert np.allclose(model.contract_full(), 0.125, atol=1e-12)


def test_zero_retained_singular_value_is_hard_error():
    tree = path_tree(3)
    sk = markov_sketch(tree, [2, 2, 2])
    zs = sketch_exact(np.full((2, 2, 2), 0.125), sk)  # rank-1 sketches
    with pytest.raises(RankOverestimateError, match="node"):
        system_forming(zs, tree, {e: 2 for e in tree.edges})


def test_rank_exceeding_dims_rejected():
    tree = path_tree(3)
    sk = markov_sketch(tree, [2, 2, 2])
    zs = sketch_exact(mrf_full_tensor(preset_model("trident10").mrf).sum(
        axis=(3, 4, 5, 6, 7, 8, 9)
    ) * 0 + np.full((2, 2, 2), 0.125), sk)
    with pytest.raises(ValueError, match="exceeds"):
        system_forming(zs, tree, {e: 3 for e in tree.edges})


def test_recursive_coefficient_matches_generic():
    tree = path_tree(6)
    sk = perturbative_sketch(tree, [2] * 6, eps=0.3, bond_dims=4, seed=7)
    p = np.random.default_rng(8).random((2,) * 6)
    p /= p.sum()
    zs = sketch_exact(p, sk)
    sys = system_forming(zs, tree, {e: 2 for e in tree.edges})
    for k in tree.nodes:
        if tree.children(k):
            gen = sys.A[k]
            rec = recursive_coefficient(sk, sys, k)
            assert np.abs(gen - rec).max() <= 1e-10 * max(np.abs(gen).max(), 1)


def test_scaling_sketches_only_rescales_root_core():
    preset = preset_model("trident10")
    sk = markov_sketch(preset.tree, preset.mrf.state_counts)
    s = mrf_sample(preset.mrf, 4000, seed=9)
    zs = sketch_from_samples(s, sk)
    ranks = {e: 2 for e in preset.tree.edges}
    m1, _, _ = solve_cores(system_forming(zs, preset.tree, ranks), preset.tree)
    m2, _, _ = solve_cores(system_forming(zs.scaled(3.0), preset.tree, ranks), preset.tree)
    root = preset.tree.root
    for k in preset.tree.nodes:
        if k == root:
            assert np.abs(3.0 * m1.cores[k] - m2.cores[k]).max() <= 1e-10
        else:
            assert np.abs(m1.cores[k] - m2.cores[k]).max() <= 1e-10


# -- rank estimation ----------------------------------------------------------------


def test_estimate_ranks_exact_trident():
    preset = preset_model("trident10")
    p = mrf_full_tensor(preset.mrf)
    sk = markov_sketch(preset.tree, preset.mrf.state_counts)
    zs = sketch_exact(p, sk)
    spectra = sketch_spectra(zs, preset.tree)
    ranks = estimate_ranks(spectra, preset.tree, delta=1e-6)
    assert all(r == 2 for r in ranks.values())


def test_estimate_ranks_all_one_when_delta_large():
    preset = preset_model("trident10")
    sk = markov_sketch(preset.tree, preset.mrf.state_counts)
    zs = sketch_from_samples(mrf_sample(preset.mrf, 200, seed=10), sk)
    ranks = estimate_ranks(sketch_spectra(zs, preset.tree), preset.tree, delta=1.5)
    assert all(r == 1 for r in ranks.values())


def test_estimate_ranks_sampled_recovery_rate():
    preset = preset_model("trident10")
    sk = markov_sketch(preset.tree, preset.mrf.state_counts)
    hits = 0
    for seed in range(20):
        s = mrf_sample(preset.mrf, 2**15, seed=seed)
        zs = sketch_from_samples(s, sk)
        ranks = estimate_ranks(sketch_spectra(zs, preset.tree), preset.tree, delta=0.05)
        hits += all(r == 2 for r in ranks.values())
    assert hits >= 19


# -- core solving and the full pipeline ------------------------------------------------


def test_exact_recovery_markov_on_preset_trees():
    for name in ("trident10", "dendrimer10", "bipartite10"):
        preset = preset_model(name)
        p = mrf_full_tensor(preset.mrf)
        sk = markov_sketch(preset.tree, preset.mrf.state_counts)
        zs = sketch_exact(p, sk)
        fit = fit_from_sketches(zs, preset.tree, sk, ranks={e: 2 for e in preset.tree.edges})
        assert np.abs(fit.model.contract_full() - p).max() <= 1e-8


def test_leaf_core_equals_b_factor():
    preset = preset_model("trident10")
    sk = markov_sketch(preset.tree, preset.mrf.state_counts)
    zs = sketch_exact(mrf_full_tensor(preset.mrf), sk)
    sys = system_forming(zs, preset.tree, {e: 2 for e in preset.tree.edges})
    model, _, _ = solve_cores(sys, preset.tree)
    for k in preset.tree.leaves:
        assert np.array_equal(model.cores[k], sys.B[k][0])


def test_well_conditioned_square_system_residual():
    preset = preset_model("trident10")
    sk = markov_sketch(preset.tree, preset.mrf.state_counts)
    zs = sketch_exact(mrf_full_tensor(preset.mrf), sk)
    sys = system_forming(zs, preset.tree, {e: 2 for e in preset.tree.edges})
    _, cond, resid = solve_cores(sys, preset.tree)
    for k in preset.tree.nodes:
        assert resid[k] <= 1e-10


def test_exact_input_idempotence_through_pipeline():
    mrf, tree = random_tree_gm(7, 2, seed=11)
    p = mrf_full_tensor(mrf)
    gm = tree_gm_to_ttns(mrf, tree)
    sk = markov_sketch(tree, mrf.state_counts)
    zs = sketch_exact(gm, sk)
    ranks = {e: 2 for e in tree.edges}
    fit = fit_from_sketches(zs, tree, sk, ranks=ranks)
    assert np.abs(fit.model.contract_full() - p).max() <= 1e-10


def test_fit_reports_diagnostics():
    preset = preset_model("trident10")
    sk = markov_sketch(preset.tree, preset.mrf.state_counts)
    s = mrf_sample(preset.mrf, 2000, seed=12)
    fit = fit_ttns(s, preset.tree, sk, ranks=2)
    d = fit.diagnostics
    assert set(d.ranks) == set(preset.tree.edges)
    assert all(np.isfinite(v) for v in d.cond.values())
    assert d.n_samples == 2000
    assert abs(fit.model.total_mass() - 1.0) < 1e-10


def test_fit_flags_truncation():
    # 2-state model fitted with rank 1 cuts a genuinely 2-dimensional spectrum
    preset = preset_model("trident10")
    sk = markov_sketch(preset.tree, preset.mrf.state_counts)
    s = mrf_sample(preset.mrf, 4000, seed=13)
    fit = fit_ttns(s, preset.tree, sk, ranks=1)
    assert fit.diagnostics.truncated_nodes
    assert fit.diagnostics.warnings


def test_fit_requires_exactly_one_rank_spec():
    preset = preset_model("trident10")
    sk = markov_sketch(preset.tree, preset.mrf.state_counts)
    s = mrf_sample(preset.mrf, 100, seed=14)
    with pytest.raises(ValueError):
        fit_ttns(s, preset.tree, sk)
    with pytest.raises(ValueError):
        fit_ttns(s, preset.tree, sk, ranks=2, delta=0.1)


# -- dense-density oracle -----------------------------------------------------------


@pytest.mark.parametrize("seed", range(5))
def test_cde_oracle_reconstructs_random_tree_gms(seed):
    local = np.random.default_rng(seed)
    d = int(local.integers(4, 9))
    n = int(local.integers(2, 4))
    mrf, tree = random_tree_gm(d, n, seed=seed + 100)
    p = mrf_full_tensor(mrf)
    ranks = {(w, k): min(n, n) for (w, k) in tree.edges}
    model, residuals = cde_oracle(p, tree, ranks)
    assert max(residuals.values()) <= 1e-10
    assert np.abs(model.contract_full() - p).max() <= 1e-10


def test_cde_oracle_rank_one_product_density():
    tree = path_tree(4)
    margs = [np.array([0.3, 0.7]), np.array([0.5, 0.5]),
             np.array([0.9, 0.1]), np.array([0.2, 0.8])]
    p = margs[0][:, None, None, None] * margs[1][None, :, None, None] \
        * margs[2][None, None, :, None] * margs[3][None, None, None, :]
    model, residuals = cde_oracle(p, tree, 1)
    assert max(residuals.values()) <= 1e-12
    assert np.abs(model.contract_full() - p).max() <= 1e-12


def test_cde_oracle_reports_residual_when_rank_too_small():
    mrf, tree = random_tree_gm(5, 3, seed=15)
    p = mrf_full_tensor(mrf)
    model, residuals = cde_oracle(p, tree, 1)
    # tail energy of the rank-1 truncation at each edge
    from ttnsketch.linalg import unfold

    for (w, k), resid in residuals.items():
        rows = [v - 1 for v in tree.subtree(w)]
        cols = [a for a in range(5) if a not in rows]
        s = np.linalg.svd(unfold(p, rows, cols), compute_uv=False)
        assert abs(resid - np.sqrt((s[1:] ** 2).sum())) <= 1e-10


def test_cde_oracle_gauge_rotation_invariance():
    mrf, tree = random_tree_gm(6, 2, seed=16)
    p = mrf_full_tensor(mrf)
    ranks = {e: 2 for e in tree.edges}
    factors, _ = edge_factorizations(p, tree, ranks)
    base = cores_from_factors(p, tree, factors).contract_full()
    local = np.random.default_rng(17)
    rotated = {}
    for e, (Phi, Psi) in factors.items():
        R = local.standard_normal((2, 2)) + 3 * np.eye(2)
        rotated[e] = (Phi @ R, np.linalg.solve(R, Psi))
    alt = cores_from_factors(p, tree, rotated).contract_full()
    assert np.abs(base - alt).max() <= 1e-10
    assert np.abs(base - p).max() <= 1e-10


def test_truncated_two_markov_fit_runs_and_reports():
    # interior sketched tensors have numerical rank 16; rank 6 truncates
    from ttnsketch.sketches import l_markov_sketch

    preset = preset_model("nonlocal-clock", d=8)
    s = mrf_sample(preset.mrf, 2**13, seed=20)
    sk = l_markov_sketch(preset.tree, preset.mrf.state_counts, L=2)
    ranks = {e: 6 for e in preset.tree.edges}
    ranks[(2, 1)] = 4
    ranks[(8, 7)] = 4
    fit = fit_ttns(s, preset.tree, sk, ranks=ranks)
    assert fit.diagnostics.truncated_nodes
    assert any("truncat" in w for w in fit.diagnostics.warnings)
    assert np.isfinite(fit.model.total_mass())
