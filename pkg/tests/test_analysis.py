import json

import numpy as np
import pytest

from dsvd.analysis import (
    LayerGroupSpec,
    compression_report,
    layer_similarity_report,
    rank_table,
    ssim,
)
from dsvd.delta import (
    CompressedLayer,
    CompressionStats,
    Dense,
    DeltaArchive,
    Factors,
    Unchanged,
    build_stats,
    compress_checkpoint,
)
from dsvd.errors import DimensionMismatch, NoSharedLayers, WindowTooLarge
from dsvd.tensor_store import Dtype, TensorRecord

from conftest import make_checkpoint
from oracles import known_rank_perturbation, naive_ssim

# closed form for constant images a=0.25, b=0.75 at L=1:
# (2ab + C1) / (a^2 + b^2 + C1), every window having zero variance
CONST_PAIR_SSIM = 0.6000639897616381


def archive_of(layers, tau=0.5):
    index = {layer.name: layer for layer in layers}
    return DeltaArchive(
        layers=index,
        tau=tau,
        base_fingerprint="0" * 64,
        format_version=1,
        stats=build_stats(index, tau),
    )


def factors_layer(name, d, k, rank):
    return CompressedLayer(
        name=name,
        original_shape=(d, k),
        original_dtype=Dtype.F32,
        payload=Factors(a=np.ones((d, rank)), b=np.ones((rank, k)), rank=rank),
    )


def unchanged_layer(name, shape=(4, 4)):
    return CompressedLayer(
        name=name, original_shape=shape, original_dtype=Dtype.F32, payload=Unchanged()
    )


def dense_layer(name, shape):
    rec = TensorRecord(
        name=name, dtype=Dtype.F32, shape=shape, data=np.ones(shape, dtype=np.float32)
    )
    return CompressedLayer(
        name=name, original_shape=shape, original_dtype=Dtype.F32, payload=Dense(delta=rec)
    )


class TestSimilarityReport:
    def test_identical_checkpoints(self):
        ckpt = make_checkpoint({"a.w": np.ones((3, 3)), "b.w": np.arange(5.0)})
        report = layer_similarity_report(ckpt, ckpt)
        assert all(c == pytest.approx(1.0, abs=1e-12) for _, c in report.entries)
        assert report.summary == 1.0

    def test_negated_layer(self):
        base = make_checkpoint({"a.w": np.ones((3, 3)), "b.w": np.arange(1.0, 6.0)})
        ft = make_checkpoint({"a.w": np.ones((3, 3)), "b.w": -np.arange(1.0, 6.0)})
        report = layer_similarity_report(base, ft)
        entries = dict(report.entries)
        assert entries["b.w"] == pytest.approx(-1.0, abs=1e-12)
        assert entries["a.w"] == pytest.approx(1.0, abs=1e-12)

    def test_three_of_ten_perturbed(self):
        rng = np.random.default_rng(17)
        base_arrays = {f"l{i}.w": rng.standard_normal((12, 10)) for i in range(10)}
        ft_arrays = dict(base_arrays)
        for name in ["l1.w", "l4.w", "l7.w"]:
            ft_arrays[name] = base_arrays[name] + rng.standard_normal((12, 10)) * 5.0
        report = layer_similarity_report(
            make_checkpoint(base_arrays), make_checkpoint(ft_arrays)
        )
        exact = [name for name, c in report.entries if abs(c - 1.0) <= 1e-12]
        assert sorted(exact) == sorted(set(base_arrays) - {"l1.w", "l4.w", "l7.w"})

    def test_entries_lexicographic(self):
        ckpt = make_checkpoint({"z.w": [1.0], "a.w": [1.0], "m.w": [1.0]})
        report = layer_similarity_report(ckpt, ckpt)
        names = [n for n, _ in report.entries]
        assert names == sorted(names)

    def test_no_shared_layers(self):
        a = make_checkpoint({"a.w": [1.0]})
        b = make_checkpoint({"b.w": [1.0]})
        with pytest.raises(NoSharedLayers):
            layer_similarity_report(a, b)

    def test_shape_mismatched_layers_skipped(self):
        a = make_checkpoint({"a.w": np.ones((2, 3)), "b.w": [1.0]})
        b = make_checkpoint({"a.w": np.ones((3, 2)), "b.w": [1.0]})
        report = layer_similarity_report(a, b)
        assert [n for n, _ in report.entries] == ["b.w"]


class TestRankTable:
    def test_mean_of_two_factors(self):
        archive = archive_of(
            [factors_layer("g.one", 20, 10, 4), factors_layer("g.two", 20, 10, 6)]
        )
        spec = LayerGroupSpec(groups=(("g", ("g",)),))
        assert rank_table(archive, spec) == {"g": 5.0}

    def test_all_unchanged_zero(self):
        archive = archive_of([unchanged_layer("down_blocks.a"), unchanged_layer("up_blocks.b")])
        table = rank_table(archive)
        assert table == {"down_blocks": 0.0, "up_blocks": 0.0}

    def test_dense_counts_min_dim(self):
        archive = archive_of([dense_layer("mid_block.w", (6, 9))])
        assert rank_table(archive) == {"mid_block": 6.0}

    def test_unmatched_goes_to_other(self):
        archive = archive_of([unchanged_layer("text_encoder.w")])
        assert rank_table(archive) == {"other": 0.0}

    def test_first_matching_prefix_wins(self):
        spec = LayerGroupSpec(groups=(("first", ("lay",)), ("second", ("layer",))))
        assert spec.group_of("layer.0.w") == "first"

    def test_default_groups_cover_unet_names(self):
        spec = LayerGroupSpec.default()
        assert spec.group_of("conv_in.weight") == "conv_in"
        assert spec.group_of("conv_out.bias") == "conv_out"
        assert spec.group_of("down_blocks.3.attn.weight") == "down_blocks"
        assert spec.group_of("mid_block.resnets.0.w") == "mid_block"
        assert spec.group_of("up_blocks.0.w") == "up_blocks"

    def test_group_spec_from_json(self, tmp_path):
        doc = {"groups": [{"name": "attn", "prefixes": ["model.attn", "attn"]}]}
        path = tmp_path / "groups.json"
        path.write_text(json.dumps(doc))
        spec = LayerGroupSpec.from_json_file(path)
        assert spec.group_of("attn.0.w") == "attn"
        assert spec.group_of("conv_in.w") == "other"

    def test_every_layer_lands_in_exactly_one_group(self, low_rank_pair):
        base, ft, _ = low_rank_pair
        archive = compress_checkpoint(base, ft, 0.5)
        table = rank_table(archive)
        counted = 0
        spec = LayerGroupSpec.default()
        for name in archive.layers:
            assert spec.group_of(name) in table
            counted += 1
        assert counted == len(archive.layers)


class TestCompressionReport:
    def test_ratio_ten(self):
        archive = archive_of([factors_layer("w", 320, 320, 16)])
        report = compression_report(archive)
        assert report["ratio"] == 10.0
        assert report["dense_param_count"] == 320 * 320
        assert report["stored_param_count"] == 16 * 640

    def test_all_unchanged_infinite(self):
        archive = archive_of([unchanged_layer("a"), unchanged_layer("b")])
        report = compression_report(archive)
        assert report["stored_param_count"] == 0
        assert report["ratio"] == "infinite"

    def test_per_layer_sums_match_totals(self, low_rank_pair):
        base, ft, _ = low_rank_pair
        archive = compress_checkpoint(base, ft, 0.2)
        report = compression_report(archive)
        assert report["stored_param_count"] == sum(
            e["stored_params"] for e in report["per_layer"]
        )
        assert report["dense_param_count"] == sum(
            e["dense_params"] for e in report["per_layer"]
        )
        assert report["stored_param_count"] <= report["dense_param_count"]

    def test_json_serializable(self, low_rank_pair):
        base, ft, _ = low_rank_pair
        archive = compress_checkpoint(base, ft, 0.8)
        text = json.dumps(compression_report(archive))
        assert json.loads(text)["tau"] == 0.8

    def test_unet_shaped_ratio_at_low_tau(self, unet_shaped_pair):
        base, ft = unet_shaped_pair
        archive = compress_checkpoint(base, ft, 0.2, threads=0)
        report = compression_report(archive)
        assert report["ratio"] >= 10.0


class TestSsim:
    def test_identical_images_exactly_one(self):
        rng = np.random.default_rng(23)
        x = rng.random((16, 16))
        assert ssim(x, x.copy(), 1.0) == 1.0

    def test_constant_images_closed_form(self):
        x = np.full((12, 12), 0.25)
        y = np.full((12, 12), 0.75)
        assert ssim(x, y, 1.0) == pytest.approx(CONST_PAIR_SSIM, abs=1e-12)
        a, b = 10.0, 70.0
        c1 = (0.01 * 255.0) ** 2
        expected = (2 * a * b + c1) / (a * a + b * b + c1)
        assert ssim(np.full((9, 9), a), np.full((9, 9), b), 255.0) == pytest.approx(
            expected, abs=1e-12
        )

    def test_matches_naive_window_oracle(self):
        rng = np.random.default_rng(29)
        for _ in range(5):
            x = rng.random((16, 16))
            y = rng.random((16, 16))
            assert ssim(x, y, 1.0) == pytest.approx(naive_ssim(x, y, 1.0), abs=1e-10)

    def test_symmetric(self):
        rng = np.random.default_rng(31)
        x = rng.random((10, 14))
        y = rng.random((10, 14))
        assert ssim(x, y, 1.0) == pytest.approx(ssim(y, x, 1.0), abs=1e-12)

    def test_result_within_range(self):
        rng = np.random.default_rng(37)
        for _ in range(10):
            x = rng.random((9, 9)) * 4 - 2
            y = rng.random((9, 9)) * 4 - 2
            assert -1.0 <= ssim(x, y, 4.0) <= 1.0

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatch):
            ssim(np.ones((9, 9)), np.ones((9, 10)), 1.0)

    def test_window_too_large(self):
        with pytest.raises(WindowTooLarge):
            ssim(np.ones((7, 20)), np.ones((7, 20)), 1.0)

    def test_non_2d_rejected(self):
        with pytest.raises(DimensionMismatch):
            ssim(np.ones(10), np.ones(10), 1.0)

    def test_invalid_dynamic_range(self):
        with pytest.raises(ValueError):
            ssim(np.ones((9, 9)), np.ones((9, 9)), 0.0)
