import filecmp
import json
from pathlib import Path

import numpy as np
import pytest

from ltca import fixtures, pipeline
from ltca.fixtures import SyntheticScene, gen_scene
from ltca.heads import segment
from ltca.numeric import MlpParams, read_ltf

GOLDEN = Path(__file__).parent / "data" / "golden"


def test_scene_peaks_at_blob_centres_without_noise():
    s = SyntheticScene(T=5, H=10, W=9, D=6, seed=3, noise=0.0)
    data = gen_scene(s)
    logits = segment(data.features, data.direction[None, :], MlpParams.identity(6, depth=3))
    for t in range(5):
        peak = np.unravel_index(np.argmax(logits[0, t]), logits.shape[2:])
        assert tuple(int(v) for v in peak) == tuple(data.centers[t])


def test_scene_invariants():
    s = SyntheticScene(T=6, H=12, W=12, D=8, seed=1)
    data = gen_scene(s)
    assert np.all((data.centers >= s.margin) & (data.centers < np.array([s.H, s.W]) - s.margin))
    norms = np.linalg.norm(data.frame_embeddings, axis=1)
    np.testing.assert_allclose(norms, 1.0, atol=1e-12)
    np.testing.assert_array_equal(data.sentence, data.frame_embeddings[0])


def test_scene_determinism():
    a = gen_scene(SyntheticScene(seed=4)).features.data
    b = gen_scene(SyntheticScene(seed=4)).features.data
    c = gen_scene(SyntheticScene(seed=5)).features.data
    assert np.array_equal(a, b)
    assert np.any(a != c)


def test_regenerated_golden_matches_checked_in(tmp_path):
    fixtures.write_golden(tmp_path)
    for f in sorted(GOLDEN.iterdir()):
        if f.suffix == ".ltf":
            np.testing.assert_allclose(read_ltf(tmp_path / f.name), read_ltf(f), rtol=0, atol=1e-12)
        else:
            assert json.loads((tmp_path / f.name).read_text()) == json.loads(f.read_text())


def test_golden_pipeline_localises_blob():
    b = pipeline.load_bundle(GOLDEN / "manifest.json")
    pred = pipeline.run(b)
    chosen = pipeline.select(pred, "single")
    assert len(chosen) == 1
    for t in range(b.geometry.T):
        peak = np.unravel_index(np.argmax(pred.masks[chosen[0], t]), pred.masks.shape[2:])
        assert np.max(np.abs(np.array(peak) - b.centers[t])) <= 1


def test_dense_and_sparse_pipelines_agree():
    b = pipeline.load_bundle(GOLDEN / "manifest.json")
    np.testing.assert_allclose(pipeline.run(b).masks, pipeline.run(b, dense=True).masks, atol=1e-9)


def test_zero_heads_give_half_scores_and_empty_multi(tmp_path):
    b = pipeline.load_bundle(GOLDEN / "manifest.json")
    D = b.features.D
    b.hc = MlpParams([(np.zeros((2 * D, 1)), np.zeros(1))])
    pred = pipeline.run(b)
    np.testing.assert_array_equal(pred.scores, 0.5)
    assert pipeline.write_outputs(pred, tmp_path, "multi", 0.5)["selected"] == []
    assert pipeline.write_outputs(pred, tmp_path, "single", 0.5)["selected"] == [0]


def test_outputs_are_byte_identical(tmp_path):
    b = pipeline.load_bundle(GOLDEN / "manifest.json")
    for run in ("a", "b"):
        pipeline.write_outputs(pipeline.run(b), tmp_path / run, "multi", 0.5)
    cmp = filecmp.dircmp(tmp_path / "a", tmp_path / "b")
    assert not cmp.diff_files and not cmp.left_only and not cmp.right_only
    sub = filecmp.dircmp(tmp_path / "a" / "masks", tmp_path / "b" / "masks")
    assert not sub.diff_files
    pgm = (tmp_path / "a" / "masks" / "q0_t0.pgm").read_bytes()
    assert pgm.startswith(b"P5\n12 12\n255\n") and set(pgm[13:]) <= {0, 255}


def test_missing_fixture_raises(tmp_path):
    with pytest.raises(OSError):
        pipeline.load_bundle(tmp_path / "manifest.json")
