"""Observation rendering and dataset assembly.

Frames are [channels, height, width] float64 arrays in [0, 1]. Datasets
pair two stacked consecutive frames (input) with the two frames ``shift``
later (target); in vectors mode a fixed seeded nonlinear embedding of the
analytic state replaces rasterization as a fast stand-in for the outer
autoencoder's 64-wide latent.

On disk a dataset is a ``manifest.json`` plus one raw little-endian f64
shard per split (``data_<split>_0.bin``); each record is the flattened
input, the flattened target, then the aux observables for that sample.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np

from .dynsys import DOUBLE, ELASTIC, SINGLE, SystemSpec
from .errors import ContractError, ParseError, UnsupportedSystemError
from .rng import Rng

EMBED_WIDTH = 64


@dataclass(frozen=True)
class FrameGeometry:
    height: int = 32
    width: int = 32
    channels: int = 1

    def __post_init__(self):
        if self.height < 4 or self.width < 4 or self.channels not in (1, 3):
            raise ContractError(f"bad geometry {self}")


@dataclass
class Frame:
    pixels: np.ndarray  # [C, H, W] in [0, 1]
    clamped: bool = False


# ---------------------------------------------------------------------------
# rasterization


_ARM_SHADE = 0.45
_BOB_SHADES = (0.0, 0.2, 0.1)


def _reach(spec: SystemSpec) -> float:
    if spec.kind == SINGLE:
        return spec.l1
    if spec.kind == DOUBLE:
        return spec.l1 + spec.l2
    return 1.35 * spec.l1 + spec.l2


def _scene_points(spec: SystemSpec, state):
    """World-space joint positions: pivot, bob1[, bob2]."""
    s = np.asarray(state, dtype=np.float64)
    if spec.kind == SINGLE:
        th = s[0]
        return [(0.0, 0.0), (spec.l1 * math.sin(th), -spec.l1 * math.cos(th))]
    if spec.kind == DOUBLE:
        th1, th2 = s[0], s[1]
        p1 = (spec.l1 * math.sin(th1), -spec.l1 * math.cos(th1))
        p2 = (p1[0] + spec.l2 * math.sin(th2), p1[1] - spec.l2 * math.cos(th2))
        return [(0.0, 0.0), p1, p2]
    th1, z, th2 = s[0], s[1], s[2]
    r = spec.l1 + z
    p1 = (r * math.sin(th1), -r * math.cos(th1))
    p2 = (p1[0] + spec.l2 * math.sin(th2), p1[1] - spec.l2 * math.cos(th2))
    return [(0.0, 0.0), p1, p2]


def _disk_cov(py, px, cy, cx, radius):
    d = np.sqrt((py - cy) ** 2 + (px - cx) ** 2)
    return np.clip(radius + 0.5 - d, 0.0, 1.0)


def _segment_cov(py, px, ay, ax, by, bx, halfwidth):
    vy, vx = by - ay, bx - ax
    seg2 = vy * vy + vx * vx
    if seg2 < 1e-12:
        return _disk_cov(py, px, ay, ax, halfwidth)
    t = np.clip(((py - ay) * vy + (px - ax) * vx) / seg2, 0.0, 1.0)
    d = np.sqrt((py - (ay + t * vy)) ** 2 + (px - (ax + t * vx)) ** 2)
    return np.clip(halfwidth + 0.5 - d, 0.0, 1.0)


def rasterize(spec: SystemSpec, state, geometry: FrameGeometry = FrameGeometry(),
              supersample: int = 1) -> Frame:
    """Draw arms and bobs on a white background, anti-aliased.

    Deterministic; positions outside the drawable region are pulled back
    onto its boundary and the frame is flagged as clamped.
    """
    if not spec.mechanical:
        raise UnsupportedSystemError("rasterize covers mechanical systems; "
                                     "use rasterize_field")
    h = geometry.height * supersample
    w = geometry.width * supersample
    size = min(h, w)
    reach = _reach(spec)
    px_per_world = size / (2.2 * reach)
    cy, cx = h / 2.0, w / 2.0

    pts = _scene_points(spec, state)
    clamped = False
    world = []
    for (x, y) in pts:
        rr = math.hypot(x, y)
        if rr > reach * 1.001:
            x, y = x * reach / rr, y * reach / rr
            clamped = True
        world.append((cx + x * px_per_world, cy - y * px_per_world))

    py, px = np.mgrid[0:h, 0:w].astype(np.float64) + 0.5
    bob_r = 0.085 * size
    halfw = 0.022 * size
    ink = np.zeros((h, w))
    for a, b in zip(world[:-1], world[1:]):
        cov = _segment_cov(py, px, a[1], a[0], b[1], b[0], halfw)
        np.maximum(ink, cov * (1.0 - _ARM_SHADE), out=ink)
    for i, (x, y) in enumerate(world[1:]):
        cov = _disk_cov(py, px, y, x, bob_r)
        np.maximum(ink, cov * (1.0 - _BOB_SHADES[i]), out=ink)
    img = 1.0 - ink
    if supersample > 1:
        img = img.reshape(geometry.height, supersample,
                          geometry.width, supersample).mean(axis=(1, 3))
    pixels = np.repeat(img[None], geometry.channels, axis=0)
    return Frame(pixels=pixels, clamped=clamped)


def _diverging_colormap() -> np.ndarray:
    """256-entry blue -> white -> red table."""
    t = np.linspace(0.0, 1.0, 256)
    lo = np.array([0.10, 0.20, 0.85])
    mid = np.array([1.0, 1.0, 1.0])
    hi = np.array([0.85, 0.15, 0.10])
    table = np.empty((256, 3))
    first = t < 0.5
    table[first] = lo + (mid - lo) * (t[first, None] * 2.0)
    table[~first] = mid + (hi - mid) * ((t[~first, None] - 0.5) * 2.0)
    return table


COLORMAP = _diverging_colormap()


def rasterize_field(u: np.ndarray, v: np.ndarray,
                    geometry: FrameGeometry = FrameGeometry()) -> Frame:
    """Map the u field through a fixed diverging colormap.

    u is affinely normalized from [-1, 1] (clamped) to [0, 1]; one-channel
    output uses that value directly as luminance.
    """
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape or u.ndim != 2 or u.shape[0] != u.shape[1]:
        raise ContractError(f"field grids must be equal square, got {u.shape}")
    norm = (np.clip(u, -1.0, 1.0) + 1.0) / 2.0
    if norm.shape != (geometry.height, geometry.width):
        norm = bilinear_resize(norm[None], geometry.height, geometry.width)[0]
    if geometry.channels == 1:
        return Frame(pixels=norm[None].copy())
    idx = np.rint(norm * 255.0).astype(np.int64)
    rgb = COLORMAP[idx]  # [H, W, 3]
    return Frame(pixels=np.ascontiguousarray(rgb.transpose(2, 0, 1)))


def bilinear_resize(img: np.ndarray, h2: int, w2: int) -> np.ndarray:
    """Resample [C, H, W] to [C, h2, w2]; identity when sizes match."""
    c, h, w = img.shape
    if (h, w) == (h2, w2):
        return img.copy()
    ys = (np.arange(h2) + 0.5) * (h / h2) - 0.5
    xs = (np.arange(w2) + 0.5) * (w / w2) - 0.5
    y0 = np.clip(np.floor(ys).astype(int), 0, h - 1)
    x0 = np.clip(np.floor(xs).astype(int), 0, w - 1)
    y1 = np.clip(y0 + 1, 0, h - 1)
    x1 = np.clip(x0 + 1, 0, w - 1)
    fy = np.clip(ys - y0, 0.0, 1.0)[None, :, None]
    fx = np.clip(xs - x0, 0.0, 1.0)[None, None, :]
    top = img[:, y0][:, :, x0] * (1 - fx) + img[:, y0][:, :, x1] * fx
    bot = img[:, y1][:, :, x0] * (1 - fx) + img[:, y1][:, :, x1] * fx
    return top * (1 - fy) + bot * fy


# ---------------------------------------------------------------------------
# state embedding (vectors mode)


def _angle_flags(spec: SystemSpec):
    if spec.kind == SINGLE:
        return [True]
    if spec.kind == DOUBLE:
        return [True, True]
    if spec.kind == ELASTIC:
        return [True, False, True]
    raise UnsupportedSystemError("embedding covers mechanical systems")


def _feature_map(spec: SystemSpec, states: np.ndarray) -> np.ndarray:
    """Angles become (sin, cos) pairs; lengths and momenta pass through."""
    n = spec.n_coords
    cols = []
    for i, is_angle in enumerate(_angle_flags(spec)):
        if is_angle:
            cols.append(np.sin(states[:, i]))
            cols.append(np.cos(states[:, i]))
        else:
            cols.append(states[:, i])
    for i in range(n, 2 * n):
        cols.append(states[:, i])
    return np.stack(cols, axis=1)


@lru_cache(maxsize=32)
def _embed_weights(seed: int, g_len: int):
    rng = Rng(seed)
    a = rng.uniform(-1.0, 1.0, size=(EMBED_WIDTH, g_len))
    b = rng.uniform(-1.0, 1.0, size=EMBED_WIDTH)
    return a, b


def embed_states(spec: SystemSpec, states: np.ndarray, seed: int) -> np.ndarray:
    """Fixed seeded embedding y = tanh(A g(state) + b) for many states."""
    states = np.atleast_2d(np.asarray(states, dtype=np.float64))
    g = _feature_map(spec, states)
    a, b = _embed_weights(seed, g.shape[1])
    return np.tanh(g @ a.T + b)


def embed_state(spec: SystemSpec, state, seed: int) -> np.ndarray:
    """64-float embedding of one analytic state."""
    return embed_states(spec, np.asarray(state)[None], seed)[0]


# ---------------------------------------------------------------------------
# dataset manifest and shards


@dataclass
class DatasetManifest:
    system: dict
    mode: str
    geometry: FrameGeometry
    shift: int
    dt_frame: float
    seed: int
    embed_seed: int
    sample_shape: tuple
    aux_names: list
    splits: dict = field(default_factory=dict)  # name -> split info dict

    def spec(self) -> SystemSpec:
        return SystemSpec(**self.system)

    def to_json(self) -> dict:
        return {
            "format": "svlab-dataset",
            "version": 1,
            "system": self.system,
            "mode": self.mode,
            "geometry": {"height": self.geometry.height,
                         "width": self.geometry.width,
                         "channels": self.geometry.channels},
            "shift": self.shift,
            "dt_frame": self.dt_frame,
            "seed": self.seed,
            "embed_seed": self.embed_seed,
            "sample_shape": list(self.sample_shape),
            "aux_names": self.aux_names,
            "splits": self.splits,
        }

    @classmethod
    def from_json(cls, d: dict) -> "DatasetManifest":
        if d.get("format") != "svlab-dataset":
            raise ParseError("not a svlab dataset manifest")
        g = d["geometry"]
        return cls(system=d["system"], mode=d["mode"],
                   geometry=FrameGeometry(g["height"], g["width"], g["channels"]),
                   shift=d["shift"], dt_frame=d["dt_frame"], seed=d["seed"],
                   embed_seed=d["embed_seed"],
                   sample_shape=tuple(d["sample_shape"]),
                   aux_names=list(d["aux_names"]), splits=d["splits"])


SPLIT_NAMES = ("train", "val", "test")


def split_trajectories(n: int, rng: Rng) -> dict:
    """80/10/10 split by trajectory index, never splitting a trajectory."""
    perm = rng.permutation(n)
    n_val = int(round(0.1 * n))
    n_test = int(round(0.1 * n))
    n_train = n - n_val - n_test
    return {"train": sorted(perm[:n_train].tolist()),
            "val": sorted(perm[n_train:n_train + n_val].tolist()),
            "test": sorted(perm[n_train + n_val:].tolist())}


def _frames_for_state(spec, states, geometry):
    if spec.mechanical:
        return np.stack([rasterize(spec, s, geometry).pixels for s in states])
    g = spec.grid
    return np.stack([rasterize_field(s[: g * g].reshape(g, g),
                                     s[g * g:].reshape(g, g), geometry).pixels
                     for s in states])


def build_dataset(trajectories, out_dir, geometry: FrameGeometry = FrameGeometry(),
                  shift: int = 2, mode: str = "vectors", rng: Rng = None,
                  embed_seed: int = 1234) -> DatasetManifest:
    """Write manifest + shards for a list of Trajectory objects.

    Samples pair frames (t, t+1) with (t+shift, t+shift+1); every
    trajectory must be long enough for shift + 2 frames. Split assignment
    is by trajectory via the supplied rng.
    """
    if mode not in ("vectors", "frames"):
        raise ContractError(f"unknown dataset mode {mode!r}")
    if rng is None:
        rng = Rng(0)
    if not trajectories:
        raise ContractError("no trajectories given")
    spec = trajectories[0].spec
    dt_frame = trajectories[0].dt_frame
    too_short = [i for i, tr in enumerate(trajectories)
                 if tr.n_frames < shift + 2]
    if too_short:
        raise ContractError(
            f"trajectories too short for shift={shift}: {too_short}")

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    aux_names = sorted(trajectories[0].aux)
    assignment = split_trajectories(len(trajectories), rng)

    if mode == "vectors":
        sample_shape = (EMBED_WIDTH,)
    else:
        sample_shape = (2 * geometry.channels, geometry.height, geometry.width)
    swidth = int(np.prod(sample_shape))
    record_width = 2 * swidth + len(aux_names)

    manifest = DatasetManifest(
        system={k: getattr(spec, k) for k in
                ("kind", "m1", "m2", "l1", "l2", "g", "k_spring",
                 "d1", "d2", "beta_rd", "grid", "domain")},
        mode=mode, geometry=geometry, shift=shift, dt_frame=dt_frame,
        seed=rng.seed, embed_seed=embed_seed, sample_shape=sample_shape,
        aux_names=aux_names)

    for split in SPLIT_NAMES:
        traj_ids = assignment[split]
        counts = []
        rows_traj = []
        rows_frame = []
        shard_path = out_dir / f"data_{split}_0.bin"
        with open(shard_path, "wb") as f:
            for tid in traj_ids:
                tr = trajectories[tid]
                n_samples = tr.n_frames - shift - 1
                counts.append(n_samples)
                if mode == "vectors":
                    emb = embed_states(spec, tr.states, embed_seed)
                    inputs = emb[:n_samples]
                    targets = emb[shift : shift + n_samples]
                else:
                    frames = _frames_for_state(spec, tr.states, geometry)
                    inputs = np.concatenate(
                        [frames[:n_samples], frames[1 : n_samples + 1]], axis=1)
                    targets = np.concatenate(
                        [frames[shift : shift + n_samples],
                         frames[shift + 1 : shift + n_samples + 1]], axis=1)
                aux = (np.stack([tr.aux[n][:n_samples] for n in aux_names],
                                axis=1) if aux_names
                       else np.zeros((n_samples, 0)))
                rec = np.concatenate([inputs.reshape(n_samples, -1),
                                      targets.reshape(n_samples, -1), aux],
                                     axis=1)
                f.write(rec.astype("<f8").tobytes(order="C"))
                rows_traj += [tid] * n_samples
                rows_frame += list(range(n_samples))
        manifest.splits[split] = {
            "count": int(sum(counts)),
            "shard": shard_path.name,
            "trajectories": traj_ids,
            "trajectory": rows_traj,
            "frame": rows_frame,
            "record_width": record_width,
        }

    with open(out_dir / "manifest.json", "w") as f:
        json.dump(manifest.to_json(), f)
    return manifest


class Dataset:
    """Loader over a written dataset directory (memory-mapped shards)."""

    def __init__(self, path):
        self.dir = Path(path)
        with open(self.dir / "manifest.json") as f:
            self.manifest = DatasetManifest.from_json(json.load(f))
        self._records = {}

    @property
    def sample_shape(self):
        return self.manifest.sample_shape

    def _load(self, split):
        if split not in self._records:
            info = self.manifest.splits[split]
            width = info["record_width"]
            if info["count"] == 0:
                self._records[split] = np.zeros((0, width))
            else:
                mm = np.memmap(self.dir / info["shard"], dtype="<f8", mode="r")
                self._records[split] = mm.reshape(info["count"], width)
        return self._records[split]

    def count(self, split) -> int:
        return self.manifest.splits[split]["count"]

    def inputs(self, split) -> np.ndarray:
        s = int(np.prod(self.sample_shape))
        n = self.count(split)
        return self._load(split)[:, :s].reshape(n, *self.sample_shape)

    def targets(self, split) -> np.ndarray:
        s = int(np.prod(self.sample_shape))
        n = self.count(split)
        return self._load(split)[:, s : 2 * s].reshape(n, *self.sample_shape)

    def aux(self, split) -> np.ndarray:
        s = int(np.prod(self.sample_shape))
        return np.asarray(self._load(split)[:, 2 * s :])

    def index(self, split):
        info = self.manifest.splits[split]
        return (np.asarray(info["trajectory"]), np.asarray(info["frame"]))

    def pair_indices(self, split) -> np.ndarray:
        """Indices (i, j) of consecutive samples within one trajectory."""
        traj, frame = self.index(split)
        n = traj.shape[0]
        i = np.arange(n - 1)
        ok = (traj[i + 1] == traj[i]) & (frame[i + 1] == frame[i] + 1)
        return np.stack([i[ok], i[ok] + 1], axis=1)

    def trajectory_rows(self, split, traj_id) -> np.ndarray:
        traj, frame = self.index(split)
        rows = np.where(traj == traj_id)[0]
        return rows[np.argsort(frame[rows], kind="stable")]


# ---------------------------------------------------------------------------
# Netpbm import/export


def _read_pnm_header(blob: bytes, path):
    if blob[:2] not in (b"P5", b"P6"):
        raise ParseError(f"{path}: not a binary PGM/PPM file")
    fields = []
    pos = 2
    while len(fields) < 3:
        while pos < len(blob) and blob[pos : pos + 1].isspace():
            pos += 1
        if pos < len(blob) and blob[pos : pos + 1] == b"#":
            while pos < len(blob) and blob[pos : pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(blob) and not blob[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise ParseError(f"{path}: truncated header")
        try:
            fields.append(int(blob[start:pos]))
        except ValueError as e:
            raise ParseError(f"{path}: bad header token {blob[start:pos]!r}") from e
    pos += 1  # single whitespace byte after maxval
    width, height, maxval = fields
    if not (0 < maxval < 65536) or width < 1 or height < 1:
        raise ParseError(f"{path}: invalid dimensions/maxval")
    return blob[:2], width, height, maxval, pos


def read_pnm(path) -> np.ndarray:
    """Decode binary PGM (P5) or PPM (P6) to [C, H, W] floats in [0, 1].

    Two-byte samples (maxval > 255) are big-endian per the PNM spec.
    """
    path = Path(path)
    blob = path.read_bytes()
    magic, width, height, maxval, pos = _read_pnm_header(blob, path)
    channels = 1 if magic == b"P5" else 3
    n = width * height * channels
    dtype = ">u2" if maxval > 255 else np.uint8
    itemsize = 2 if maxval > 255 else 1
    if len(blob) - pos < n * itemsize:
        raise ParseError(f"{path}: pixel payload truncated")
    raw = np.frombuffer(blob, dtype=dtype, count=n, offset=pos)
    img = raw.astype(np.float64).reshape(height, width, channels) / maxval
    return np.ascontiguousarray(img.transpose(2, 0, 1))


def write_pnm(path, pixels: np.ndarray, maxval: int = 255) -> None:
    """Encode [C, H, W] floats in [0, 1] as binary PGM/PPM."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    c, h, w = pixels.shape
    if c not in (1, 3):
        raise ContractError(f"PNM supports 1 or 3 channels, got {c}")
    magic = b"P5" if c == 1 else b"P6"
    q = np.rint(np.clip(pixels, 0.0, 1.0) * maxval)
    payload = q.transpose(1, 2, 0).astype(">u2" if maxval > 255 else np.uint8)
    with open(path, "wb") as f:
        f.write(magic + b"\n" + f"{w} {h}\n{maxval}\n".encode())
        f.write(payload.tobytes(order="C"))


_PNM_NAME = re.compile(r"^(?P<traj>.+)_(?P<idx>\d+)\.(pgm|ppm)$")


def import_frames_dir(path, geometry: FrameGeometry, shift: int, out_dir,
                      split_seed: int = 0) -> DatasetManifest:
    """Build a frames-mode dataset from a directory of PGM/PPM files.

    Files must be named <trajectory>_<index>.pgm|ppm with consecutive
    indices inside each trajectory.
    """
    path = Path(path)
    groups: dict[str, dict[int, Path]] = {}
    for f in sorted(path.iterdir()):
        m = _PNM_NAME.match(f.name)
        if m:
            groups.setdefault(m.group("traj"), {})[int(m.group("idx"))] = f
    if not groups:
        raise ParseError(f"{path}: no <trajectory>_<index>.pgm|ppm files found")

    trajectories = []
    for name in sorted(groups):
        frames_by_idx = groups[name]
        idxs = sorted(frames_by_idx)
        for a, b in zip(idxs, idxs[1:]):
            if b != a + 1:
                raise ParseError(
                    f"trajectory {name!r}: missing frame index {a + 1}")
        stack = []
        for i in idxs:
            img = read_pnm(frames_by_idx[i])
            if img.shape[0] != geometry.channels:
                img = _convert_channels(img, geometry.channels)
            stack.append(bilinear_resize(img, geometry.height, geometry.width))
        trajectories.append(_ImportedTrajectory(name, np.stack(stack)))
    return _build_imported(trajectories, out_dir, geometry, shift,
                           Rng(split_seed))


def _convert_channels(img: np.ndarray, channels: int) -> np.ndarray:
    if channels == 3 and img.shape[0] == 1:
        return np.repeat(img, 3, axis=0)
    luma = (0.299 * img[0] + 0.587 * img[1] + 0.114 * img[2])
    return luma[None]


@dataclass
class _ImportedTrajectory:
    name: str
    frames: np.ndarray  # [T, C, H, W]

    @property
    def n_frames(self):
        return self.frames.shape[0]


def _build_imported(trajectories, out_dir, geometry, shift, rng):
    too_short = [tr.name for tr in trajectories if tr.n_frames < shift + 2]
    if too_short:
        raise ContractError(f"trajectories too short for shift={shift}: {too_short}")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    assignment = split_trajectories(len(trajectories), rng)
    sample_shape = (2 * geometry.channels, geometry.height, geometry.width)
    swidth = int(np.prod(sample_shape))
    manifest = DatasetManifest(
        system={"kind": "imported"}, mode="frames", geometry=geometry,
        shift=shift, dt_frame=0.0, seed=rng.seed, embed_seed=0,
        sample_shape=sample_shape, aux_names=[])
    for split in SPLIT_NAMES:
        ids = assignment[split]
        rows_traj, rows_frame = [], []
        total = 0
        shard_path = out_dir / f"data_{split}_0.bin"
        with open(shard_path, "wb") as f:
            for tid in ids:
                tr = trajectories[tid]
                n_samples = tr.n_frames - shift - 1
                inputs = np.concatenate(
                    [tr.frames[:n_samples], tr.frames[1 : n_samples + 1]], axis=1)
                targets = np.concatenate(
                    [tr.frames[shift : shift + n_samples],
                     tr.frames[shift + 1 : shift + n_samples + 1]], axis=1)
                rec = np.concatenate([inputs.reshape(n_samples, -1),
                                      targets.reshape(n_samples, -1)], axis=1)
                f.write(rec.astype("<f8").tobytes(order="C"))
                rows_traj += [tid] * n_samples
                rows_frame += list(range(n_samples))
                total += n_samples
        manifest.splits[split] = {"count": total, "shard": shard_path.name,
                                  "trajectories": ids, "trajectory": rows_traj,
                                  "frame": rows_frame,
                                  "record_width": 2 * swidth}
    with open(out_dir / "manifest.json", "w") as f:
        json.dump(manifest.to_json(), f)
    return manifest
