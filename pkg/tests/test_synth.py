"""Sampling statistics, degradation round trips, and manifest determinism."""

import numpy as np
import pytest

from retouchlab.errors import EmptyCorpus
from retouchlab.imagecore import Image, load_image
from retouchlab.ops import (
    OP_INDEX,
    OPERATORS,
    CategoryMask,
    ParamVector,
    apply_pipeline,
)
from retouchlab.rng import Rng
from retouchlab.synth import (
    PairManifest,
    StdDevTable,
    degrade,
    gen_param_pairs,
    sample_params,
    synth_corpus,
    write_corpus,
)


class TestRng:
    def test_scalar_matches_vector(self):
        a = Rng(123)
        b = Rng(123)
        vec = b.uniforms(40)
        scalars = [a.uniform() for _ in range(40)]
        assert np.array_equal(vec, np.array(scalars))

    def test_normals_match_scalar(self):
        a = Rng(5)
        b = Rng(5)
        vec = b.normals(10)
        scalars = [a.normal() for _ in range(10)]
        assert np.allclose(vec, scalars, atol=0, rtol=0)

    def test_derived_streams_independent_of_parent_use(self):
        a = Rng(9)
        a.uniform()
        a.uniform()
        assert a.derive(3).uniform() == Rng(9).derive(3).uniform()


class TestSampleParams:
    def test_all_false_mask_gives_zero(self):
        pv = sample_params(CategoryMask(False, False, False), Rng(0))
        assert np.array_equal(pv.values, np.zeros(38))

    def test_deterministic(self):
        a = sample_params(CategoryMask.all_active(), Rng(7), mode="auto")
        b = sample_params(CategoryMask.all_active(), Rng(7), mode="auto")
        assert np.array_equal(a.values, b.values)

    def test_inactive_categories_exactly_zero(self):
        pv = sample_params(CategoryMask(False, True, False), Rng(3), mode="auto")
        assert np.array_equal(pv.values[:10], np.zeros(10))
        assert np.array_equal(pv.values[14:], np.zeros(24))
        assert np.any(pv.values[10:14] != 0)

    def test_always_in_range(self):
        root = Rng(11)
        for k in range(200):
            pv = sample_params(
                CategoryMask.all_active(), root.derive(k), mode="param", scale=0.6
            )
            pv.validate()

    def test_exposure_sigma_statistics(self):
        # 1e5 draws: sample stddev within 2% of 0.6543, clipped tail < 0.1%
        sigma = 0.6543
        root = Rng(2024)
        mask = CategoryMask(True, False, False)
        idx = OP_INDEX["Exposure2012"]
        draws = np.empty(100_000)
        for k in range(100_000):
            draws[k] = sample_params(mask, root.derive(k), mode="auto").values[idx]
        clipped = np.abs(np.abs(draws) - 5.0) < 1e-12
        assert clipped.mean() < 0.001
        sd = draws[~clipped].std()
        assert abs(sd - sigma) / sigma < 0.02

    def test_bad_mode_rejected(self):
        with pytest.raises(ValueError):
            sample_params(CategoryMask.all_active(), Rng(0), mode="weird")

    def test_custom_table(self):
        t = StdDevTable(np.full(38, 1e-6))
        pv = sample_params(CategoryMask.all_active(), Rng(0), mode="auto", table=t)
        assert np.all(np.abs(pv.values) < 1e-4)

    def test_table_rejects_bad_shape(self):
        with pytest.raises(ValueError):
            StdDevTable(np.ones(5))
        with pytest.raises(ValueError):
            StdDevTable(np.zeros(38))


class TestDegrade:
    def test_scale_zero_is_identity(self):
        img = synth_corpus(1, 12, 12, seed=5)[0]
        out, pv = degrade(img, mode="param", scale=0.0, seed=3)
        assert np.array_equal(out.data, img.data)
        assert np.array_equal(pv.values, np.zeros(38))

    def test_exposure_roundtrip_on_ramp(self):
        # -1 stop degradation then +1 stop restores unclipped grays
        ramp = np.linspace(0.05, 0.45, 16)
        img = Image.from_array(np.repeat(ramp, 3).reshape(1, 16, 3))
        pv = ParamVector.from_mapping({"Exposure2012": 1.0})
        degraded = apply_pipeline(pv.negated(), img)
        restored = apply_pipeline(pv, degraded)
        assert float(np.mean(np.abs(restored.data - img.data))) <= 0.01

    def test_returns_forward_params(self):
        img = synth_corpus(1, 16, 16, seed=6)[0]
        out, pv = degrade(img, mode="auto", seed=9)
        # re-applying the negated forward params reproduces the degraded image
        again = apply_pipeline(pv.negated(), img)
        assert np.array_equal(again.data, out.data)

    def test_deterministic_bytes(self, tmp_path):
        from retouchlab.imagecore import save_image

        img = synth_corpus(1, 16, 16, seed=8)[0]
        for i in range(2):
            out, _ = degrade(img, mode="auto", seed=4)
            save_image(out, tmp_path / f"d{i}.png", depth=8)
        assert (tmp_path / "d0.png").read_bytes() == (tmp_path / "d1.png").read_bytes()


class TestGenPairs:
    @pytest.fixture()
    def corpus_dir(self, tmp_path):
        d = tmp_path / "corpus"
        write_corpus(d, 3, 20, 20, seed=50)
        return d

    def test_seven_masks_cycle(self, corpus_dir, tmp_path):
        out = tmp_path / "pairs"
        masks = list(CategoryMask.combinations())
        manifest = gen_param_pairs(corpus_dir, 7, masks, 0.25, seed=1, out_dir=out)
        assert len(manifest.records) == 7
        assert [r.mask for r in manifest.records] == masks

    def test_zero_pairs(self, corpus_dir, tmp_path):
        out = tmp_path / "pairs"
        manifest = gen_param_pairs(corpus_dir, 0, [CategoryMask.all_active()], 0.25, 1, out)
        assert manifest.records == []
        assert (out / "manifest.jsonl").read_bytes() == b""

    def test_manifest_bytes_deterministic(self, corpus_dir, tmp_path):
        blobs = []
        for run in range(2):
            out = tmp_path / f"run{run}"
            gen_param_pairs(corpus_dir, 5, [CategoryMask.all_active()], 0.3, 77, out)
            blobs.append((out / "manifest.jsonl").read_bytes())
            assert b"\r" not in blobs[-1]
        assert blobs[0] == blobs[1]

    def test_threaded_output_identical(self, corpus_dir, tmp_path):
        outs = []
        for threads in (1, 4):
            out = tmp_path / f"t{threads}"
            gen_param_pairs(
                corpus_dir, 6, [CategoryMask.all_active()], 0.25, 9, out, threads=threads
            )
            listing = sorted(p.name for p in out.iterdir())
            outs.append({n: (out / n).read_bytes() for n in listing})
        assert outs[0] == outs[1]

    def test_manifest_self_describing(self, corpus_dir, tmp_path):
        from retouchlab.imagecore import save_image

        out = tmp_path / "pairs"
        manifest = gen_param_pairs(
            corpus_dir, 4, list(CategoryMask.combinations()), 0.25, 13, out
        )
        reloaded = PairManifest.load(out / "manifest.jsonl")
        for rec in reloaded.records:
            rendered = apply_pipeline(rec.params, load_image(out / rec.input))
            save_image(rendered, tmp_path / "re.png", depth=8)
            assert (tmp_path / "re.png").read_bytes() == (out / rec.target).read_bytes()

    def test_empty_corpus(self, tmp_path):
        empty = tmp_path / "empty"
        empty.mkdir()
        with pytest.raises(EmptyCorpus):
            gen_param_pairs(empty, 1, [CategoryMask.all_active()], 0.25, 0, tmp_path / "o")


class TestCorpus:
    def test_deterministic(self):
        a = synth_corpus(4, 10, 10, seed=3)
        b = synth_corpus(4, 10, 10, seed=3)
        for x, y in zip(a, b):
            assert np.array_equal(x.data, y.data)

    def test_in_range(self):
        for img in synth_corpus(8, 12, 12, seed=17):
            assert img.data.min() >= 0.0
            assert img.data.max() <= 1.0
