import os

import numpy as np
import pytest

import svlab.dynsys as D
import svlab.render as R
from svlab.errors import ContractError, ParseError
from svlab.rng import Rng

GEO = R.FrameGeometry(32, 32, 1)
SINGLE = D.SystemSpec.single_pendulum()


def make_trajectories(spec, n, frames=40, vscale=0.0, dt=0.1):
    inits = np.stack([D.sample_initial_conditions(spec, Rng(i),
                                                  velocity_scale=vscale)
                      for i in range(n)])
    states, aux = D.simulate_batch(spec, inits, frames, dt, substeps=5)
    return [D.Trajectory(spec, dt, states[i], {k: aux[k][i] for k in aux})
            for i in range(n)]


class TestRasterize:
    def test_bob_below_pivot_at_rest(self):
        f = R.rasterize(SINGLE, [0.0, 0.0], GEO)
        col = f.pixels[0][:, 16]
        bob_row = int(np.argmin(col))
        assert bob_row > 16
        assert col[bob_row] < 0.5

    def test_deterministic(self):
        a = R.rasterize(SINGLE, [0.7, 0.1], GEO)
        b = R.rasterize(SINGLE, [0.7, 0.1], GEO)
        assert np.array_equal(a.pixels, b.pixels)

    def test_pixels_in_unit_range(self):
        f = R.rasterize(D.SystemSpec.double_pendulum(), [0.5, -0.7, 0, 0], GEO)
        assert f.pixels.min() >= 0.0 and f.pixels.max() <= 1.0

    def test_supersampled_oracle_agrees(self):
        for theta in (0.0, 0.7, 2.0):
            f1 = R.rasterize(SINGLE, [theta, 0.0], GEO)
            f4 = R.rasterize(SINGLE, [theta, 0.0], GEO, supersample=4)
            assert abs(f1.pixels.mean() - f4.pixels.mean()) < 0.01

    def test_clamp_flag_for_stretched_spring(self):
        spec = D.SystemSpec.elastic_pendulum()
        f = R.rasterize(spec, [0.1, 5.0, 0.0, 0, 0, 0], GEO)  # huge stretch
        assert f.clamped

    def test_reaction_diffusion_rejected(self):
        rd = D.SystemSpec.reaction_diffusion()
        with pytest.raises(Exception):
            R.rasterize(rd, D.spiral_wave_state(rd), GEO)


class TestRasterizeField:
    def test_zero_field_mid_gray(self):
        f = R.rasterize_field(np.zeros((32, 32)), np.zeros((32, 32)), GEO)
        assert np.allclose(f.pixels, 0.5)

    def test_saturated_field_max_color(self):
        geo3 = R.FrameGeometry(32, 32, 3)
        f = R.rasterize_field(np.ones((32, 32)), np.zeros((32, 32)), geo3)
        assert np.allclose(f.pixels[:, 0, 0], R.COLORMAP[255])

    def test_pixel_matches_table_entry(self):
        geo3 = R.FrameGeometry(8, 8, 3)
        u = np.full((8, 8), -0.25)
        f = R.rasterize_field(u, np.zeros((8, 8)), geo3)
        idx = int(round((0.75 / 2.0) * 255))
        assert np.allclose(f.pixels[:, 3, 3], R.COLORMAP[idx])

    def test_mismatched_grids_rejected(self):
        with pytest.raises(ContractError):
            R.rasterize_field(np.zeros((8, 8)), np.zeros((9, 9)), GEO)


class TestEmbedding:
    def test_range_and_determinism(self):
        s = D.sample_initial_conditions(SINGLE, Rng(1))
        e = R.embed_state(SINGLE, s, 99)
        assert e.shape == (64,)
        assert np.all(np.abs(e) < 1.0)
        assert np.array_equal(e, R.embed_state(SINGLE, s, 99))

    def test_distinct_states_distinct_embeddings(self):
        states = np.stack([D.sample_initial_conditions(SINGLE, Rng(i))
                           for i in range(1000)])
        emb = R.embed_states(SINGLE, states, 99)
        d = np.linalg.norm(emb[:, None, :] - emb[None, :, :], axis=2)
        d += np.eye(1000) * 1e9
        assert d.min() > 0.0

    def test_seed_changes_embedding(self):
        s = D.sample_initial_conditions(SINGLE, Rng(1))
        assert not np.allclose(R.embed_state(SINGLE, s, 1),
                               R.embed_state(SINGLE, s, 2))

    def test_batch_matches_scalar_within_ulp(self):
        # BLAS may pick different kernels per shape, so batch vs scalar
        # agree to rounding noise, not bit-exactly
        states = np.stack([D.sample_initial_conditions(SINGLE, Rng(i))
                           for i in range(5)])
        batch = R.embed_states(SINGLE, states, 7)
        each = np.stack([R.embed_state(SINGLE, s, 7) for s in states])
        assert np.allclose(batch, each, rtol=0, atol=1e-14)


class TestBuildDataset:
    def test_sample_counting(self, tmp_path):
        trajs = make_trajectories(SINGLE, 10, frames=100)
        man = R.build_dataset(trajs, tmp_path, GEO, shift=2, mode="vectors",
                              rng=Rng(7))
        total = sum(man.splits[s]["count"] for s in R.SPLIT_NAMES)
        assert total == 10 * 97

    def test_split_80_10_10_by_trajectory(self):
        assignment = R.split_trajectories(1000, Rng(3))
        assert len(assignment["train"]) == 800
        assert len(assignment["val"]) == 100
        assert len(assignment["test"]) == 100
        all_ids = sorted(assignment["train"] + assignment["val"]
                         + assignment["test"])
        assert all_ids == list(range(1000))

    def test_same_seed_identical_split(self, tmp_path):
        trajs = make_trajectories(SINGLE, 10)
        m1 = R.build_dataset(trajs, tmp_path / "a", GEO, rng=Rng(7))
        m2 = R.build_dataset(trajs, tmp_path / "b", GEO, rng=Rng(7))
        for s in R.SPLIT_NAMES:
            assert m1.splits[s]["trajectories"] == m2.splits[s]["trajectories"]

    def test_no_window_crosses_trajectory_boundary(self, tmp_path):
        trajs = make_trajectories(SINGLE, 6, frames=20)
        R.build_dataset(trajs, tmp_path, GEO, shift=2, mode="vectors",
                        rng=Rng(1))
        ds = R.Dataset(tmp_path)
        for split in R.SPLIT_NAMES:
            traj, frame = ds.index(split)
            # max frame index leaves room for t+shift+1 inside 20 frames
            assert frame.max() <= 20 - 2 - 2

    def test_shard_roundtrip_bit_exact(self, tmp_path):
        trajs = make_trajectories(SINGLE, 5, frames=30)
        R.build_dataset(trajs, tmp_path, GEO, shift=2, mode="vectors",
                        rng=Rng(2), embed_seed=55)
        ds = R.Dataset(tmp_path)
        spec = ds.manifest.spec()
        for split in R.SPLIT_NAMES:
            traj_ids = ds.manifest.splits[split]["trajectories"]
            x = ds.inputs(split)
            for tid in traj_ids:
                rows = ds.trajectory_rows(split, tid)
                expect = R.embed_states(spec, trajs[tid].states, 55)[:27]
                assert np.array_equal(np.asarray(x[rows]), expect)

    def test_rebuild_reproduces_shard_bytes(self, tmp_path):
        trajs = make_trajectories(SINGLE, 6, frames=20)
        R.build_dataset(trajs, tmp_path / "a", GEO, shift=2, mode="vectors",
                        rng=Rng(2), embed_seed=55)
        R.build_dataset(trajs, tmp_path / "b", GEO, shift=2, mode="vectors",
                        rng=Rng(2), embed_seed=55)
        for split in R.SPLIT_NAMES:
            a = (tmp_path / "a" / f"data_{split}_0.bin").read_bytes()
            b = (tmp_path / "b" / f"data_{split}_0.bin").read_bytes()
            assert a == b

    def test_vectors_target_is_shifted_embedding(self, tmp_path):
        trajs = make_trajectories(SINGLE, 5, frames=30)
        R.build_dataset(trajs, tmp_path, GEO, shift=2, mode="vectors",
                        rng=Rng(2), embed_seed=55)
        ds = R.Dataset(tmp_path)
        spec = ds.manifest.spec()
        tid = ds.manifest.splits["train"]["trajectories"][0]
        rows = ds.trajectory_rows("train", tid)
        tgt = np.asarray(ds.targets("train")[rows])
        expect = R.embed_states(spec, trajs[tid].states[2:29], 55)
        assert np.array_equal(tgt, expect)

    def test_frames_mode_shapes_and_range(self, tmp_path):
        trajs = make_trajectories(SINGLE, 4, frames=10)
        man = R.build_dataset(trajs, tmp_path, GEO, shift=1, mode="frames",
                              rng=Rng(4))
        assert man.sample_shape == (2, 32, 32)
        ds = R.Dataset(tmp_path)
        x = ds.inputs("train")
        assert x.shape[1:] == (2, 32, 32)
        assert x.min() >= 0.0 and x.max() <= 1.0

    def test_too_short_trajectory_listed(self, tmp_path):
        trajs = make_trajectories(SINGLE, 3, frames=3)
        with pytest.raises(ContractError):
            R.build_dataset(trajs, tmp_path, GEO, shift=2, rng=Rng(0))

    def test_pair_indices_stay_within_trajectory(self, tmp_path):
        trajs = make_trajectories(SINGLE, 6, frames=20)
        R.build_dataset(trajs, tmp_path, GEO, shift=2, mode="vectors",
                        rng=Rng(1))
        ds = R.Dataset(tmp_path)
        traj, frame = ds.index("train")
        pairs = ds.pair_indices("train")
        assert np.all(traj[pairs[:, 0]] == traj[pairs[:, 1]])
        assert np.all(frame[pairs[:, 1]] == frame[pairs[:, 0]] + 1)


class TestPnm:
    def test_pgm_roundtrip_within_quantization(self, tmp_path):
        img = Rng(1).uniform(size=(1, 16, 16))
        R.write_pnm(tmp_path / "a.pgm", img, 255)
        back = R.read_pnm(tmp_path / "a.pgm")
        assert np.max(np.abs(back - img)) <= 0.5 / 255 + 1e-12

    def test_maxval_255_white(self, tmp_path):
        R.write_pnm(tmp_path / "w.pgm", np.ones((1, 4, 4)), 255)
        assert np.allclose(R.read_pnm(tmp_path / "w.pgm"), 1.0)

    def test_two_byte_big_endian(self, tmp_path):
        R.write_pnm(tmp_path / "b.pgm", np.ones((1, 4, 4)), 65535)
        raw = (tmp_path / "b.pgm").read_bytes()
        assert raw.endswith(b"\xff\xff" * 16)
        assert np.allclose(R.read_pnm(tmp_path / "b.pgm"), 1.0)

    def test_ppm_roundtrip(self, tmp_path):
        rgb = Rng(2).uniform(size=(3, 8, 8))
        R.write_pnm(tmp_path / "c.ppm", rgb)
        back = R.read_pnm(tmp_path / "c.ppm")
        assert back.shape == (3, 8, 8)
        assert np.max(np.abs(back - rgb)) <= 0.5 / 255 + 1e-12

    def test_comments_in_header(self, tmp_path):
        blob = b"P5\n# a comment\n4 2\n255\n" + bytes(8)
        (tmp_path / "c.pgm").write_bytes(blob)
        img = R.read_pnm(tmp_path / "c.pgm")
        assert img.shape == (1, 2, 4)

    def test_malformed_header_names_file(self, tmp_path):
        (tmp_path / "bad.pgm").write_bytes(b"P5\nxx yy\n255\n")
        with pytest.raises(ParseError) as e:
            R.read_pnm(tmp_path / "bad.pgm")
        assert "bad.pgm" in str(e.value)

    def test_truncated_payload(self, tmp_path):
        (tmp_path / "t.pgm").write_bytes(b"P5\n4 4\n255\n" + bytes(3))
        with pytest.raises(ParseError):
            R.read_pnm(tmp_path / "t.pgm")


class TestImportFramesDir:
    def _write_fixture(self, root, trajs=3, frames=6, geo=R.FrameGeometry(16, 16, 1)):
        os.makedirs(root, exist_ok=True)
        for t in range(trajs):
            for i in range(frames):
                f = R.rasterize(SINGLE, [0.3 * t + 0.1 * i, 0.0], geo)
                R.write_pnm(os.path.join(root, f"traj{t}_{i}.pgm"), f.pixels)

    def test_import_counts(self, tmp_path):
        src = tmp_path / "frames"
        self._write_fixture(src)
        geo = R.FrameGeometry(16, 16, 1)
        man = R.import_frames_dir(src, geo, shift=2, out_dir=tmp_path / "ds")
        total = sum(man.splits[s]["count"] for s in R.SPLIT_NAMES)
        assert total == 3 * 3

    def test_import_matches_pixels_within_quantization(self, tmp_path):
        src = tmp_path / "frames"
        geo = R.FrameGeometry(16, 16, 1)
        self._write_fixture(src, trajs=3, frames=6, geo=geo)
        R.import_frames_dir(src, geo, shift=2, out_dir=tmp_path / "ds")
        ds = R.Dataset(tmp_path / "ds")
        split = next(s for s in R.SPLIT_NAMES
                     if 0 in ds.manifest.splits[s]["trajectories"])
        rows = ds.trajectory_rows(split, 0)
        x0 = np.asarray(ds.inputs(split)[rows[0]])
        ref = R.rasterize(SINGLE, [0.0, 0.0], geo).pixels
        assert np.max(np.abs(x0[:1] - ref)) <= 1.0 / 255

    def test_missing_index_names_gap(self, tmp_path):
        src = tmp_path / "frames"
        self._write_fixture(src)
        os.remove(src / "traj1_3.pgm")
        with pytest.raises(ParseError) as e:
            R.import_frames_dir(src, R.FrameGeometry(16, 16, 1), 2,
                                tmp_path / "ds")
        assert "traj1" in str(e.value) and "3" in str(e.value)


class TestBilinearResize:
    def test_identity_when_same_size(self):
        img = Rng(3).uniform(size=(1, 9, 9))
        assert np.array_equal(R.bilinear_resize(img, 9, 9), img)

    def test_constant_preserved(self):
        img = np.full((1, 8, 8), 0.37)
        out = R.bilinear_resize(img, 13, 5)
        assert np.allclose(out, 0.37)

    def test_downsample_average_close(self):
        img = np.zeros((1, 8, 8))
        img[:, :, 4:] = 1.0
        out = R.bilinear_resize(img, 4, 4)
        assert out.shape == (1, 4, 4)
        assert np.all(out[:, :, 0] < 0.2) and np.all(out[:, :, 3] > 0.8)
