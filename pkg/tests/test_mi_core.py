import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from featsel.errors import DomainError
from featsel import mi_core


# ---------------------------------------------------------------------------
# patching


def test_patchify_exhaustive_partition():
    img = np.arange(16, dtype=float).reshape(1, 4, 4)
    ps = mi_core.patchify(img, 2)
    assert ps.patches.shape == (4, 4)
    # every input value appears exactly once
    assert sorted(ps.patches.ravel().tolist()) == list(range(16))
    assert ps.origins == [(0, 0, 0), (0, 0, 1), (0, 1, 0), (0, 1, 1)]


def test_patchify_paper_scale():
    # 32x64 map with side 8 -> 32 patches
    ps = mi_core.patchify(np.zeros((1, 32, 64)), 8)
    assert ps.patches.shape == (32, 64)


def test_patchify_nondivisible():
    with pytest.raises(DomainError, match="height"):
        mi_core.patchify(np.zeros((1, 5, 4)), 2)


def test_patch_roundtrip():
    rng = np.random.default_rng(1)
    img = rng.standard_normal((3, 6, 8))
    patches = mi_core.extract_patches(img, 2)
    back = mi_core.assemble_patches(patches, (3, 4), 2, channels=3)
    assert np.array_equal(back, img)


# ---------------------------------------------------------------------------
# kmeans


def test_kmeans_well_separated():
    pts = np.array([0.0, 0.1, 10.0, 10.1])
    model = mi_core.kmeans(pts, 2, seed=0)
    assert model.labels[0] == model.labels[1]
    assert model.labels[2] == model.labels[3]
    assert model.labels[0] != model.labels[2]


def test_kmeans_k_equals_n():
    pts = np.array([[0.0, 0], [1, 0], [0, 1], [5, 5]])
    model = mi_core.kmeans(pts, 4, seed=3)
    assert model.inertia == pytest.approx(0.0, abs=1e-20)
    assert sorted(model.labels) == [0, 1, 2, 3]


def test_kmeans_bayes_rate():
    # two unit-variance Gaussians at +-5: labels must agree with sign(x)
    rng = np.random.default_rng(7)
    signs = rng.integers(0, 2, 10_000) * 2 - 1
    x = signs * 5.0 + rng.standard_normal(10_000)
    model = mi_core.kmeans(x, 2, seed=0)
    # map cluster -> majority sign, then measure agreement
    agree = 0
    for lab in (0, 1):
        members = signs[model.labels == lab]
        agree += max((members == 1).sum(), (members == -1).sum())
    assert agree / len(x) >= 0.99


def test_kmeans_k_too_large():
    with pytest.raises(DomainError):
        mi_core.kmeans(np.zeros(3), 4)


def test_kmeans_deterministic():
    rng = np.random.default_rng(5)
    pts = rng.standard_normal((500, 3))
    a = mi_core.kmeans(pts, 5, seed=11)
    b = mi_core.kmeans(pts, 5, seed=11)
    assert np.array_equal(a.labels, b.labels)
    assert np.array_equal(a.centroids, b.centroids)


def test_kmeans_inertia_trace_nonincreasing():
    rng = np.random.default_rng(9)
    pts = rng.standard_normal((400, 2))
    model = mi_core.kmeans(pts, 6, seed=2)
    trace = model.inertia_trace
    assert all(trace[i + 1] <= trace[i] + 1e-9 for i in range(len(trace) - 1))


def test_kmeans_fixed_point():
    rng = np.random.default_rng(4)
    pts = rng.standard_normal((300, 2))
    model = mi_core.kmeans(pts, 4, seed=1, tol=1e-12, max_iters=1000)
    labels = mi_core.predict(model, pts)
    assert np.array_equal(labels, model.labels)
    for k in range(4):
        members = pts[labels == k]
        assert np.allclose(members.mean(axis=0), model.centroids[k], atol=1e-9)


# ---------------------------------------------------------------------------
# binning


def test_bin_indices_direct_formula():
    idx = mi_core.bin_indices(np.array([0.1, 0.9]), 0.0, 1.0, 2)
    assert idx.tolist() == [0, 1]


def test_bin_clamp_at_max():
    idx = mi_core.bin_indices(np.array([1.0]), 0.0, 1.0, 8)
    assert idx.tolist() == [7]


def test_bin_constant_channel():
    cfg = mi_core.BinningConfig(bins=8)
    sym = mi_core.bin_patches(np.ones((5, 4)), 3.0, 3.0, cfg)
    assert len(set(sym.tolist())) == 1


def test_bin_scale_invariance():
    rng = np.random.default_rng(2)
    patches = rng.standard_normal((100, 6))
    cfg = mi_core.BinningConfig(bins=8)
    lo, hi = patches.min(), patches.max()
    for s in (0.5, 3.0, 100.0):
        scaled = mi_core.bin_patches(s * patches, s * lo, s * hi, cfg)
        assert np.array_equal(scaled, mi_core.bin_patches(patches, lo, hi, cfg))


def test_hash_vs_exact_symbols_same_mi():
    rng = np.random.default_rng(3)
    patches = rng.standard_normal((500, 4))
    labels = rng.integers(0, 4, 500)
    lo, hi = patches.min(), patches.max()
    mi_hash = mi_core.plugin_mi(
        mi_core.bin_patches(patches, lo, hi, mi_core.BinningConfig(bins=3)), labels)
    mi_exact = mi_core.plugin_mi(
        mi_core.bin_patches(patches, lo, hi, mi_core.BinningConfig(bins=3, exact=True)),
        labels)
    assert mi_hash == pytest.approx(mi_exact, abs=1e-12)


# ---------------------------------------------------------------------------
# plug-in MI


def test_plugin_mi_perfect_dependence():
    # joint counts [[2,0],[0,2]] -> ln 2
    mi = mi_core.plugin_mi([0, 0, 1, 1], [5, 5, 9, 9])
    assert mi == pytest.approx(np.log(2), abs=1e-12)


def test_plugin_mi_constant_x():
    assert mi_core.plugin_mi([7, 7, 7, 7], [0, 1, 0, 1]) == 0.0


def test_plugin_mi_independent_uniform():
    assert mi_core.plugin_mi([0, 0, 1, 1], [0, 1, 0, 1]) == pytest.approx(0.0, abs=1e-12)


def test_plugin_mi_length_mismatch():
    with pytest.raises(DomainError):
        mi_core.plugin_mi([0, 1], [0])


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 5), st.integers(0, 5)),
                min_size=1, max_size=200))
def test_plugin_mi_properties(pairs):
    x = [p[0] for p in pairs]
    y = [p[1] for p in pairs]
    mi = mi_core.plugin_mi(x, y)
    assert mi >= 0.0
    assert mi == pytest.approx(mi_core.plugin_mi(y, x), abs=1e-12)  # symmetry
    assert mi <= min(mi_core.entropy(x), mi_core.entropy(y)) + 1e-12


@settings(max_examples=30, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 4), st.integers(0, 4)),
                min_size=2, max_size=100),
       st.permutations(list(range(5))))
def test_plugin_mi_relabeling_invariance(pairs, perm):
    x = [p[0] for p in pairs]
    y = [p[1] for p in pairs]
    relabeled = [perm[v] for v in x]
    assert mi_core.plugin_mi(x, y) == pytest.approx(
        mi_core.plugin_mi(relabeled, y), abs=1e-12)
