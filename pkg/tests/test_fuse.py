import math

import numpy as np
import pytest

from suit.fuse import (Blend, Concat, SparseBank, dense_cascade_oracle,
                       ego_align, merge, run_sequence, warp)
from suit.geonet import GeoNetParams, forward_batch, offset_to_index
from suit.grid import (FeatureMap, GridCoord, GridSpec, Heatmap, Pose2,
                       WindowShape)
from suit.sample import (Patch, Sample, SamplingConfig, SignificantSet,
                         SquareWindow, build_significant_set_from_maps)
from suit.sim import SimConfig, simulate
from suit import _kernels
from test_sim import static_object


def one_hot_geonet(in_dim, window, offset, spike=60.0):
    """Zeroed net whose output bias makes q (numerically) one-hot."""
    params = GeoNetParams.zeros(in_dim, window)
    params.b3 = np.zeros(window.cells)
    params.b3[offset_to_index(offset[0], offset[1], window)] = spike
    return params


def point_bank(spec, cells_scores, geonet, c=1):
    samples = tuple(
        Sample(location=GridCoord(x, y), score=s,
               patch=Patch(offsets=((0, 0),), values=np.full((1, c), s)))
        for (x, y), s in cells_scores)
    sset = SignificantSet(samples=samples, source_frame=0,
                          source_pose=Pose2.identity(), spec=spec)
    return SparseBank(set=sset, geonet=geonet)


def random_instance(seed, n=16, c=3, window=WindowShape(5, 5)):
    """Random heatmap/features plus a random net with 1x1-patch input."""
    rng = np.random.default_rng(seed)
    spec = GridSpec(n, n, 1.0, c)
    heat = Heatmap(spec, rng.uniform(0.0, 1.0, size=(n, n)))
    feats = FeatureMap(spec, rng.normal(size=(n, n, c)))
    geonet = GeoNetParams.init(c, window, hidden=8,
                               seed=int(rng.integers(1 << 30)))
    return spec, heat, feats, geonet


def per_cell_q(geonet, feats):
    h, w, c = feats.data.shape
    return forward_batch(geonet, feats.data.reshape(-1, c)) \
        .reshape(h, w, geonet.window.cells)


def sparse_bank_covering_all(spec, heat, feats, geonet):
    scfg = SamplingConfig(alpha=0.0, top_k=spec.height * spec.width,
                          nms_radius=0,
                          relaxation=SquareWindow(WindowShape(1, 1)))
    sset = build_significant_set_from_maps(heat, feats, scfg, 0,
                                           Pose2.identity())
    return SparseBank(set=sset, geonet=geonet)


class TestEgoAlign:
    def test_identity_poses_unchanged(self):
        spec = GridSpec(16, 16, 1.0, 1)
        bank = point_bank(spec, [((5, 5), 0.9), ((10, 2), 0.7)],
                          one_hot_geonet(1, WindowShape(3, 3), (0, 0)))
        out = ego_align(bank, Pose2.identity(), Pose2.identity())
        assert [s.location for s in out.set.samples] \
            == [s.location for s in bank.set.samples]
        assert out.dropped_out_of_bounds == 0

    def test_forward_ego_motion_shifts_samples_back(self):
        spec = GridSpec(16, 16, 0.5, 1)
        bank = point_bank(spec, [((5, 5), 0.9), ((10, 2), 0.7)],
                          one_hot_geonet(1, WindowShape(3, 3), (0, 0)))
        pose_from = Pose2((-1.0, 0.0), 0.0)                  # ego at +1 m
        pose_to = Pose2((-1.0 - 2 * spec.cell_size, 0.0), 0.0)  # +2 cells more
        out = ego_align(bank, pose_from, pose_to)
        assert [s.location for s in out.set.samples] \
            == [GridCoord(3, 5), GridCoord(8, 2)]

    def test_out_of_bounds_samples_dropped_and_counted(self):
        spec = GridSpec(16, 16, 1.0, 1)
        bank = point_bank(spec, [((0, 5), 0.9), ((10, 5), 0.7)],
                          one_hot_geonet(1, WindowShape(3, 3), (0, 0)))
        out = ego_align(bank, Pose2.identity(), Pose2((-3.0, 0.0), 0.0))
        assert [s.location for s in out.set.samples] == [GridCoord(7, 5)]
        assert out.dropped_out_of_bounds == 1

    def test_quarter_turn_matches_dense_rotation_of_peaks(self):
        # the enumeration oracle in test_grid pins (x, y) -> (n-1-y, x)
        spec = GridSpec(9, 9, 1.0, 1)
        cells = [((2, 1), 0.9), ((7, 4), 0.8), ((4, 6), 0.6)]
        bank = point_bank(spec, cells,
                          one_hot_geonet(1, WindowShape(3, 3), (0, 0)))
        out = ego_align(bank, Pose2.identity(),
                        Pose2((0.0, 0.0), math.pi / 2))
        got = {(s.location.x, s.location.y) for s in out.set.samples}
        assert got == {(8 - y, x) for (x, y), _ in cells}


class TestWarp:
    def test_empty_bank_all_zero(self):
        spec = GridSpec(8, 8, 1.0, 2)
        sset = SignificantSet((), 0, Pose2.identity(), spec)
        state = warp(SparseBank(sset, GeoNetParams.zeros(2, WindowShape(3, 3))))
        assert not state.warped_heatmap.data.any()
        assert not state.warped_features.data.any()
        assert not state.weight_map.any()

    def test_one_hot_scatter_moves_sample(self):
        spec = GridSpec(12, 12, 1.0, 1)
        geonet = one_hot_geonet(1, WindowShape(5, 5), (2, 0))
        bank = point_bank(spec, [((4, 6), 1.0)], geonet)
        state = warp(bank)
        heat = state.warped_heatmap.data
        assert heat[6, 6] == pytest.approx(1.0, abs=1e-9)
        assert heat.sum() == pytest.approx(1.0, abs=1e-9)
        # the 1x1 patch (value 1.0) lands exactly at r + (2, 0)
        assert state.warped_features.data[6, 6, 0] == pytest.approx(1.0,
                                                                    abs=1e-9)
        mask = np.ones((12, 12), dtype=bool)
        mask[6, 6] = False
        assert np.abs(state.warped_features.data[mask]).max() < 1e-9

    def test_features_zero_where_weight_zero(self):
        for seed in range(3):
            spec, heat, feats, geonet = random_instance(seed)
            bank = sparse_bank_covering_all(spec, heat, feats, geonet)
            state = warp(bank)
            zero = state.weight_map == 0
            assert not state.warped_features.data[zero].any()


class TestDenseOracle:
    def test_zero_heatmap_zero_output(self):
        spec = GridSpec(8, 8, 1.0, 2)
        heat = Heatmap(spec, np.zeros((8, 8)))
        feats = FeatureMap(spec, np.ones((8, 8, 2)))
        window = WindowShape(3, 3)
        q = np.full((8, 8, 9), 1 / 9)
        state = dense_cascade_oracle(heat, feats, q, window)
        assert not state.warped_heatmap.data.any()
        assert not state.warped_features.data.any()

    def test_one_hot_moves_one_hot(self):
        spec = GridSpec(8, 8, 1.0, 1)
        hdata = np.zeros((8, 8))
        hdata[3, 2] = 1.0
        heat = Heatmap(spec, hdata)
        feats = FeatureMap(spec, np.ones((8, 8, 1)))
        window = WindowShape(3, 3)
        q = np.zeros((8, 8, 9))
        q[:, :, offset_to_index(1, 1, window)] = 1.0
        state = dense_cascade_oracle(heat, feats, q, window)
        expected = np.zeros((8, 8))
        expected[4, 3] = 1.0
        np.testing.assert_allclose(state.warped_heatmap.data, expected)

    def test_rejects_large_grids(self):
        spec = GridSpec(64, 64, 1.0, 1)
        heat = Heatmap(spec, np.zeros((64, 64)))
        feats = FeatureMap(spec, np.zeros((64, 64, 1)))
        with pytest.raises(ValueError):
            dense_cascade_oracle(heat, feats, np.zeros((64, 64, 9)),
                                 WindowShape(3, 3))

    def test_overlapping_mass_clamps(self):
        spec = GridSpec(8, 8, 1.0, 1)
        heat = Heatmap(spec, np.ones((8, 8)))
        feats = FeatureMap(spec, np.ones((8, 8, 1)))
        window = WindowShape(1, 3)
        q = np.zeros((8, 8, 3))
        q[:, 0, offset_to_index(1, 0, window)] = 1.0   # x=0 pushes right
        q[:, 2, offset_to_index(-1, 0, window)] = 1.0  # x=2 pushes left
        q[:, 1, offset_to_index(0, 0, window)] = 1.0
        q[:, 3:, offset_to_index(0, 0, window)] = 1.0
        state = dense_cascade_oracle(heat, feats, q, window)
        assert state.warped_heatmap.data.max() == 1.0
        assert state.clamp_fraction > 0.0


class TestSparseDenseEquivalence:
    def test_full_coverage_matches_oracle(self):
        for seed in range(10):
            spec, heat, feats, geonet = random_instance(seed)
            bank = sparse_bank_covering_all(spec, heat, feats, geonet)
            sparse = warp(bank)
            dense = dense_cascade_oracle(heat, feats,
                                         per_cell_q(geonet, feats),
                                         geonet.window)
            assert np.abs(sparse.warped_heatmap.data
                          - dense.warped_heatmap.data).max() <= 1e-9
            assert np.abs(sparse.weight_map - dense.weight_map).max() <= 1e-9
            assert np.abs(sparse.warped_features.data
                          - dense.warped_features.data).max() <= 1e-9

    def test_heatmap_deviation_bounded_by_excluded_mass(self):
        for seed in range(10):
            spec, heat, feats, geonet = random_instance(seed)
            scfg = SamplingConfig(alpha=0.1, top_k=200, nms_radius=2,
                                  relaxation=SquareWindow(WindowShape(1, 1)))
            sset = build_significant_set_from_maps(heat, feats, scfg, 0,
                                                   Pose2.identity())
            sparse = warp(SparseBank(sset, geonet))
            dense = dense_cascade_oracle(heat, feats,
                                         per_cell_q(geonet, feats),
                                         geonet.window)
            included = sum(s.score for s in sset.samples)
            excluded = float(heat.data.sum()) - included
            dev = np.abs(sparse.warped_heatmap.data
                         - dense.warped_heatmap.data).max()
            assert dev <= excluded + 1e-12

    def test_zero_motion_fixed_point(self):
        spec = GridSpec(12, 12, 1.0, 1)
        geonet = one_hot_geonet(1, WindowShape(5, 5), (0, 0))
        cells = [((3, 3), 0.9), ((8, 5), 0.6)]
        bank = point_bank(spec, cells, geonet)
        state = warp(bank)
        for (x, y), s in cells:
            assert state.warped_heatmap.data[y, x] == pytest.approx(s,
                                                                    abs=1e-9)
        assert state.warped_heatmap.data.sum() == pytest.approx(
            sum(s for _, s in cells), abs=1e-9)


class TestBackends:
    @pytest.mark.skipif(_kernels.active_backend() != "numba",
                        reason="numba backend unavailable")
    def test_numba_and_numpy_agree_bitwise(self):
        for seed in range(3):
            spec, heat, feats, geonet = random_instance(seed)
            bank = sparse_bank_covering_all(spec, heat, feats, geonet)
            a = warp(bank, backend="numba")
            b = warp(bank, backend="numpy")
            assert a.warped_heatmap.data.tobytes() \
                == b.warped_heatmap.data.tobytes()
            assert a.warped_features.data.tobytes() \
                == b.warped_features.data.tobytes()


class TestMerge:
    def make_frame(self, spec, seed=0):
        rng = np.random.default_rng(seed)
        cfg = SimConfig(spec, object_count=2, frame_count=1, frame_gap=0.5,
                        seed=seed)
        return simulate(cfg)[0]

    def test_blend_with_zero_warped(self):
        spec = GridSpec(10, 10, 1.0, 4)
        frame = self.make_frame(spec)
        zero = warp(SparseBank(SignificantSet((), 0, Pose2.identity(), spec),
                               GeoNetParams.zeros(4, WindowShape(3, 3))))
        fused = merge(frame, zero, Blend(0.5))
        np.testing.assert_allclose(fused.features.data,
                                   0.5 * frame.features.data)
        np.testing.assert_array_equal(fused.heatmap.data, frame.heatmap.data)

    def test_beta_zero_is_identity(self):
        spec = GridSpec(10, 10, 1.0, 4)
        frame = self.make_frame(spec)
        zero = warp(SparseBank(SignificantSet((), 0, Pose2.identity(), spec),
                               GeoNetParams.zeros(4, WindowShape(3, 3))))
        fused = merge(frame, zero, Blend(0.0))
        np.testing.assert_array_equal(fused.features.data, frame.features.data)
        np.testing.assert_array_equal(fused.heatmap.data, frame.heatmap.data)

    def test_concat_doubles_channels(self):
        spec = GridSpec(10, 10, 1.0, 4)
        frame = self.make_frame(spec)
        zero = warp(SparseBank(SignificantSet((), 0, Pose2.identity(), spec),
                               GeoNetParams.zeros(4, WindowShape(3, 3))))
        fused = merge(frame, zero, Concat())
        assert fused.features.data.shape == (10, 10, 8)


class TestRunSequence:
    def test_single_frame_identity(self):
        spec = GridSpec(16, 16, 1.0, 2)
        frames = simulate(SimConfig(spec, object_count=2, frame_count=1,
                                    frame_gap=0.5, seed=1))
        fused, reports = run_sequence(frames, SamplingConfig(),
                                      GeoNetParams.init(
                                          9 * 2, WindowShape(7, 7), seed=0))
        assert len(fused) == 1
        np.testing.assert_array_equal(fused[0].heatmap.data,
                                      frames[0].heatmap.data)
        assert reports == []

    def test_static_scene_peaks_stay_put(self):
        spec = GridSpec(20, 20, 1.0, 4)
        objs = [static_object(spec, (6, 6), oid=0),
                static_object(spec, (14, 12), oid=1)]
        frames = simulate(SimConfig(spec, object_count=2, frame_count=5,
                                    frame_gap=0.5), objects=objs)
        geonet = one_hot_geonet(9 * 4, WindowShape(7, 7), (0, 0))
        fused, _ = run_sequence(frames, SamplingConfig(), geonet, Blend(0.5))
        for f in fused:
            assert f.heatmap.data[6, 6] == pytest.approx(1.0)
            assert f.heatmap.data[12, 14] == pytest.approx(1.0)

    def test_bank_bytes_bounded_and_flat(self):
        spec = GridSpec(24, 24, 1.0, 4)
        objs = [static_object(spec, (8, 8), oid=0),
                static_object(spec, (16, 16), oid=1)]
        frames = simulate(SimConfig(spec, object_count=2, frame_count=10,
                                    frame_gap=0.5), objects=objs)
        scfg = SamplingConfig()
        geonet = one_hot_geonet(9 * 4, WindowShape(7, 7), (0, 0))
        _, reports = run_sequence(frames, scfg, geonet, Blend(0.5))
        # serialized bank: fixed header + per-sample record (24 bytes + patch)
        header = 8 + 8 + 12 + 48 + 8 + 9 * 8
        bound = header + scfg.top_k * (24 + 9 * spec.channels * 8)
        sizes = [r.bank_bytes for r in reports]
        assert all(b <= bound for b in sizes)
        assert len(set(sizes)) == 1    # static scene: flat across t

    def test_concat_rejected_for_long_sequences(self):
        spec = GridSpec(16, 16, 1.0, 2)
        frames = simulate(SimConfig(spec, object_count=1, frame_count=3,
                                    frame_gap=0.5, seed=2))
        with pytest.raises(ValueError):
            run_sequence(frames, SamplingConfig(),
                         GeoNetParams.zeros(9 * 2, WindowShape(7, 7)),
                         Concat())
