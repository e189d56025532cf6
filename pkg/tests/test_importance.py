import numpy as np
import pytest

from featsel.errors import DomainError
from featsel import importance, tensor_store as ts


def make_dataset(tmp_path, features_list, outputs_list, n=2, m=2):
    """features_list: per-sample (C,H,W); outputs_list: per-sample {task: (H,W)}."""
    samples = []
    for sid, (f, outs) in enumerate(zip(features_list, outputs_list)):
        frel = f"f{sid}.ften"
        ts.write_tensor(np.asarray(f, dtype=np.float32), tmp_path / frel)
        orels = {}
        for t, o in outs.items():
            orel = f"o{sid}_{t}.ften"
            ts.write_tensor(np.asarray(o, dtype=np.float32), tmp_path / orel)
            orels[t] = orel
        samples.append(ts.ManifestSample(sample_id=sid, features=frel, outputs=orels))
    man = ts.DatasetManifest(base_dir=str(tmp_path), patch_n=n, patch_m=m,
                             tasks=sorted(outputs_list[0]), samples=samples)
    ts.save_manifest(man, tmp_path / "manifest.json")
    return ts.load_manifest(tmp_path / "manifest.json")


def copy_channel_dataset(tmp_path, scale0=1.0, samples=40, seed=0):
    """Channel 0 is an exact copy of the output; channels 1..7 are noise."""
    rng = np.random.default_rng(seed)
    feats, outs = [], []
    for _ in range(samples):
        f = rng.standard_normal((8, 4, 8))
        f[0] = np.round(f[0], 1)  # discretize a bit so binning has structure
        feats.append(f * np.array([scale0] + [1.0] * 7)[:, None, None])
        outs.append({0: f[0]})
    return make_dataset(tmp_path, feats, outs)


def test_mi_copy_channel_ranked_first(tmp_path):
    man = copy_channel_dataset(tmp_path)
    table = importance.mi_importance(man, 0, k=8, bins=4, seed=0)
    assert table.ordering[0] == 0
    assert table.criterion == "mi" and table.task_id == 0


def test_mi_all_channels_identical_tie_rule(tmp_path):
    rng = np.random.default_rng(1)
    feats, outs = [], []
    for _ in range(10):
        ch = rng.standard_normal((4, 8))
        feats.append(np.stack([ch] * 5))
        outs.append({0: rng.standard_normal((4, 8))})
    man = make_dataset(tmp_path, feats, outs)
    table = importance.mi_importance(man, 0, k=4, bins=4, seed=0)
    scores = list(table.scores.values())
    assert all(s == pytest.approx(scores[0], abs=1e-12) for s in scores)
    assert table.ordering == [0, 1, 2, 3, 4]  # ascending ids on ties


def test_mi_scale_invariance(tmp_path):
    t_plain = importance.mi_importance(
        copy_channel_dataset(tmp_path / "a", scale0=1.0), 0, k=8, bins=4, seed=0)
    # power-of-two scale: multiplication is exact in float32, so the
    # normalized bin coordinates are bit-identical
    t_scaled = importance.mi_importance(
        copy_channel_dataset(tmp_path / "b", scale0=64.0), 0, k=8, bins=4, seed=0)
    assert t_plain.scores[0] == pytest.approx(t_scaled.scores[0], abs=1e-12)
    assert t_plain.ordering == t_scaled.ordering


def test_mi_missing_task(tmp_path):
    man = copy_channel_dataset(tmp_path)
    with pytest.raises(DomainError):
        importance.mi_importance(man, 3)


def test_norm_closed_form(tmp_path):
    c = 2.5
    feats = [np.stack([np.zeros((4, 8)), np.full((4, 8), c)])]
    outs = [{0: np.zeros((4, 8))}]
    man = make_dataset(tmp_path, feats, outs)
    t2 = importance.norm_importance(man, 2)
    assert t2.scores[0] == 0.0
    assert t2.scores[1] == pytest.approx(c * np.sqrt(32), rel=1e-6)
    assert t2.ordering == [1, 0]  # zero channel ranked last
    t1 = importance.norm_importance(man, 1)
    assert t1.scores[1] == pytest.approx(c * 32, rel=1e-6)


def test_norm_homogeneity():
    rng = np.random.default_rng(2)
    x = rng.standard_normal((6, 8))
    for s in (0.01, 100.0):
        assert importance.channel_norm(s * x, 2) == pytest.approx(
            abs(s) * importance.channel_norm(x, 2), rel=1e-12)
        assert importance.channel_norm(s * x, 1) == pytest.approx(
            abs(s) * importance.channel_norm(x, 1), rel=1e-12)


def test_geometric_median_collinear():
    pts = np.array([[0.0], [1.0], [2.0]])
    g = importance.geometric_median(pts)
    assert g[0] == pytest.approx(1.0, abs=1e-6)
    scores = np.linalg.norm(pts - g, axis=1)
    assert scores == pytest.approx([1.0, 0.0, 1.0], abs=1e-6)


def test_geometric_median_square():
    pts = np.array([[0.0, 0], [1, 0], [0, 1], [1, 1]])
    g = importance.geometric_median(pts)
    assert g == pytest.approx([0.5, 0.5], abs=1e-8)


def test_gm_identical_representatives(tmp_path):
    ch = np.ones((4, 8))
    man = make_dataset(tmp_path, [np.stack([ch] * 3)], [{0: ch}])
    table = importance.gm_importance(man)
    assert all(s == pytest.approx(0.0, abs=1e-9) for s in table.scores.values())


def test_gm_translation_invariance(tmp_path):
    rng = np.random.default_rng(3)
    base = rng.standard_normal((4, 4, 8))
    man_a = make_dataset(tmp_path / "a", [base], [{0: base[0]}])
    man_b = make_dataset(tmp_path / "b", [base + 7.0], [{0: base[0]}])
    ta = importance.gm_importance(man_a)
    tb = importance.gm_importance(man_b)
    for c in ta.scores:
        assert ta.scores[c] == pytest.approx(tb.scores[c], abs=1e-6)


def test_table_serialization_roundtrip(tmp_path):
    table = importance.ImportanceTable(
        criterion="l2", scores={0: 1.5, 1: 2.5, 2: 0.5})
    assert table.ordering == [1, 0, 2]
    table.save(tmp_path / "t.json")
    back = importance.ImportanceTable.load(tmp_path / "t.json")
    assert back.scores == table.scores
    assert back.ordering == table.ordering


def test_table_bad_ordering():
    with pytest.raises(DomainError):
        importance.ImportanceTable(criterion="l2", scores={0: 1.0, 1: 2.0},
                                   ordering=[0, 0])
