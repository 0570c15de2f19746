"""Threshold graphs, clique search, and sigma estimation."""

import numpy as np
import pytest

from augbound.augment import AugmentationSet, additive_shift, identity, sign_flip_mask
from augbound.concentration import (
    EXACT_CLIQUE_BUDGET,
    ConcentrationEstimate,
    approx_max_clique,
    build_threshold_graph,
    estimate_sigma,
    exact_max_clique,
    load_concentration,
    save_concentration,
    sigma_delta_curve,
)
from augbound.core import Dataset, GeneratorConfig, generate_dataset


def brute_force_max_clique_size(adjacency: np.ndarray) -> int:
    """Exhaustive subset scan; usable up to ~20 nodes."""
    n = adjacency.shape[0]
    masks = [0] * n
    for i in range(n):
        for j in range(n):
            if adjacency[i, j]:
                masks[i] |= 1 << j
    best = 1 if n else 0
    for subset in range(1, 1 << n):
        size = subset.bit_count()
        if size <= best:
            continue
        ok = True
        s = subset
        while s:
            i = (s & -s).bit_length() - 1
            s &= s - 1
            if (subset & ~(masks[i] | (1 << i))) != 0:
                ok = False
                break
        if ok:
            best = size
    return best


def is_clique(adjacency: np.ndarray, members) -> bool:
    members = list(members)
    return all(
        adjacency[a, b] for i, a in enumerate(members) for b in members[i + 1 :]
    )


def line_distances(positions) -> np.ndarray:
    pos = np.asarray(positions, dtype=float)
    return np.abs(pos[:, None] - pos[None, :])


def test_threshold_graph_edge_rule():
    dist = line_distances([0.0, 1.0, 2.0, 3.0])
    g0 = build_threshold_graph(dist, 0.0)
    assert not g0.adjacency.any()
    g_full = build_threshold_graph(dist, 3.0)
    assert g_full.adjacency.sum() == 4 * 3  # complete, both directions
    g_path = build_threshold_graph(dist, 1.0)
    expected = np.zeros((4, 4), dtype=bool)
    for i in range(3):
        expected[i, i + 1] = expected[i + 1, i] = True
    np.testing.assert_array_equal(g_path.adjacency, expected)
    assert not g_path.adjacency.diagonal().any()


def test_threshold_graph_rejects_negative_delta():
    with pytest.raises(ValueError):
        build_threshold_graph(np.zeros((2, 2)), -0.1)


def test_exact_clique_complete_graph():
    dist = np.zeros((5, 5))
    g = build_threshold_graph(dist, 0.5)
    assert exact_max_clique(g) == (0, 1, 2, 3, 4)


def test_exact_clique_edgeless_graph_tie_break():
    dist = line_distances([0.0, 10.0, 20.0, 30.0])
    g = build_threshold_graph(dist, 1.0)
    g_edgeless = build_threshold_graph(line_distances([0.0, 10.0, 20.0]), 1.0)
    assert exact_max_clique(g_edgeless) == (0,)
    # path graph: max clique size 2, lexicographically smallest is {0, 1}
    assert exact_max_clique(build_threshold_graph(line_distances([0, 1, 2, 3]), 1.0)) == (0, 1)


def test_exact_clique_matches_brute_force_on_random_graphs():
    rng = np.random.default_rng(7)
    for _ in range(40):
        n = int(rng.integers(2, 13))
        adj = rng.random((n, n)) < 0.5
        adj = np.triu(adj, 1)
        adj = adj | adj.T
        dist = np.where(adj, 0.5, 2.0)
        np.fill_diagonal(dist, 0.0)
        g = build_threshold_graph(dist, 1.0)
        clique = exact_max_clique(g)
        assert is_clique(g.adjacency, clique)
        assert len(clique) == brute_force_max_clique_size(g.adjacency)


def test_exact_clique_budget():
    n = EXACT_CLIQUE_BUDGET + 1
    g = build_threshold_graph(np.zeros((n, n)), 1.0)
    with pytest.raises(ValueError, match="dual_approx"):
        exact_max_clique(g)


def test_approx_clique_complete_graph():
    g = build_threshold_graph(np.zeros((6, 6)), 1.0)
    assert approx_max_clique(g) == (0, 1, 2, 3, 4, 5)


def test_approx_clique_edgeless_clamps_to_singleton():
    g = build_threshold_graph(line_distances([0.0, 10.0, 20.0, 30.0]), 1.0)
    assert approx_max_clique(g) == (0,)


def test_approx_clique_is_conservative_and_valid():
    rng = np.random.default_rng(3)
    for _ in range(60):
        n = int(rng.integers(2, 15))
        adj = rng.random((n, n)) < rng.choice([0.2, 0.5, 0.8])
        adj = np.triu(adj, 1)
        adj = adj | adj.T
        dist = np.where(adj, 0.5, 2.0)
        np.fill_diagonal(dist, 0.0)
        g = build_threshold_graph(dist, 1.0)
        approx = approx_max_clique(g)
        exact = exact_max_clique(g)
        assert is_clique(g.adjacency, approx)
        assert is_clique(g.adjacency, exact)
        assert 1 <= len(approx) <= len(exact)


def _blob_dataset(samples=6, seed=0, spread=0.2):
    cfg = GeneratorConfig(
        num_classes=2,
        samples_per_class=samples,
        cluster_centers=((-4.0, 0.0), (4.0, 0.0)),
        cluster_spread=spread,
        manifold="gaussian_blobs",
        seed=seed,
    )
    return generate_dataset(cfg)


def _identity_aug():
    return AugmentationSet(transforms=(identity(),), grid_resolution=2)


def test_sigma_one_when_delta_covers_every_class():
    ds = _blob_dataset()
    est = estimate_sigma(ds, _identity_aug(), delta=10.0, mode="exact")
    assert est.sigma == 1.0
    assert est.per_class_sigma == (1.0, 1.0)
    for k, part in enumerate(est.main_parts):
        assert sorted(part) == sorted(ds.class_indices(k).tolist())


def test_sigma_at_zero_delta_is_one_over_class_size():
    ds = _blob_dataset(samples=5)
    est = estimate_sigma(ds, _identity_aug(), delta=0.0, mode="exact")
    assert est.sigma == pytest.approx(1 / 5)
    assert all(len(p) == 1 for p in est.main_parts)


def test_sigma_matches_brute_force_on_hand_classes():
    # two classes of 5 points each on a line, far apart
    feats = np.array(
        [[0.0], [0.3], [0.6], [2.0], [2.1], [50.0], [50.4], [50.5], [53.0], [56.0]]
    )
    labels = np.array([0, 0, 0, 0, 0, 1, 1, 1, 1, 1])
    ds = Dataset(feats, labels, 2, (0.5, 0.5), seed=None)
    aug = _identity_aug()
    delta = 0.5
    est = estimate_sigma(ds, aug, delta, mode="exact")
    for k in range(2):
        idx = ds.class_indices(k)
        dist = np.abs(feats[idx, 0][:, None] - feats[idx, 0][None, :])
        g = build_threshold_graph(dist, delta)
        expected = brute_force_max_clique_size(g.adjacency) / idx.size
        assert est.per_class_sigma[k] == pytest.approx(expected)
    assert est.sigma == min(est.per_class_sigma)


def test_main_parts_certify_the_definition():
    ds = _blob_dataset(samples=8, seed=2)
    aug = AugmentationSet(
        transforms=(identity(), additive_shift((0.1, 0.1))), grid_resolution=3
    )
    delta = 0.6
    for mode in ("exact", "dual_approx"):
        est = estimate_sigma(ds, aug, delta, mode=mode)
        from augbound.augment import augmented_distance

        for k, part in enumerate(est.main_parts):
            assert len(part) >= est.sigma * ds.class_indices(k).size - 1e-12
            for i, a in enumerate(part):
                for b in part[i + 1 :]:
                    assert augmented_distance(ds.features[a], ds.features[b], aug) <= delta + 1e-12


def test_sigma_delta_curve_endpoints_and_monotonicity():
    ds = _blob_dataset(samples=7, seed=5, spread=0.4)
    aug = _identity_aug()
    deltas = [0.0, 0.2, 0.2, 0.6, 1.2, 50.0]
    curve = sigma_delta_curve(ds, aug, deltas, mode="exact")
    sigmas = [c.sigma for c in curve]
    assert sigmas[0] == pytest.approx(1 / 7)
    assert sigmas[-1] == 1.0
    assert all(b >= a for a, b in zip(sigmas, sigmas[1:]))
    # repeated delta values give repeated sigma values
    assert sigmas[1] == sigmas[2]
    assert curve[1].main_parts == curve[2].main_parts


def test_sigma_delta_curve_matches_pointwise_estimates_in_exact_mode():
    ds = _blob_dataset(samples=5, seed=9, spread=0.5)
    aug = _identity_aug()
    deltas = [0.1, 0.4, 0.9, 2.0]
    curve = sigma_delta_curve(ds, aug, deltas, mode="exact")
    for delta, est in zip(deltas, curve):
        single = estimate_sigma(ds, aug, delta, mode="exact")
        assert est.sigma == pytest.approx(single.sigma)
        assert est.per_class_sigma == single.per_class_sigma


def test_sigma_delta_curve_rejects_descending_deltas():
    ds = _blob_dataset(samples=4)
    with pytest.raises(ValueError, match="ascending"):
        sigma_delta_curve(ds, _identity_aug(), [0.5, 0.2], mode="exact")


def test_dual_approx_curve_is_monotone():
    ds = _blob_dataset(samples=10, seed=11, spread=0.5)
    aug = _identity_aug()
    deltas = np.linspace(0.05, 3.0, 9)
    curve = sigma_delta_curve(ds, aug, deltas, mode="dual_approx")
    sigmas = [c.sigma for c in curve]
    assert all(b >= a for a, b in zip(sigmas, sigmas[1:]))


def test_enrichment_with_baseline_never_decreases_sigma():
    ds = _blob_dataset(samples=9, seed=4, spread=0.5)
    lean = AugmentationSet(transforms=(identity(),), grid_resolution=3)
    rich = AugmentationSet(
        transforms=(identity(), additive_shift((0.2, 0.0))), grid_resolution=3
    )
    richer = AugmentationSet(
        transforms=(identity(), additive_shift((0.2, 0.0)), sign_flip_mask((1.0, -1.0))),
        grid_resolution=3,
    )
    delta = 0.45
    for mode in ("exact", "dual_approx"):
        prev = None
        prev_sigma = 0.0
        for aug in (lean, rich, richer):
            est = estimate_sigma(ds, aug, delta, mode=mode, baseline=prev)
            assert est.sigma >= prev_sigma - 1e-12
            prev, prev_sigma = est, est.sigma


def test_estimate_rejects_inconsistent_construction():
    with pytest.raises(ValueError):
        ConcentrationEstimate(
            delta=0.5,
            sigma=0.9,
            per_class_sigma=(0.5, 1.0),
            main_parts=((0,), (1,)),
            mode="exact",
        )


def test_concentration_record_round_trip(tmp_path):
    ds = _blob_dataset(samples=6, seed=8)
    aug = _identity_aug()
    est = estimate_sigma(ds, aug, 0.7, mode="exact")
    path = tmp_path / "conc.txt"
    save_concentration(est, str(path), aug.fingerprint())
    back, fingerprint = load_concentration(str(path))
    assert fingerprint == aug.fingerprint()
    assert back.delta == est.delta
    assert back.sigma == est.sigma
    assert back.per_class_sigma == est.per_class_sigma
    assert back.main_parts == est.main_parts
    assert back.mode == est.mode
