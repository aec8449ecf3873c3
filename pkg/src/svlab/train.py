"""Training pipelines, DOF reporting, latent traces, and metrics.

A run directory holds config.json, report.json, checkpoints/, traces/ and
plots/. Every quantity derives deterministically from (config, seed): the
seed is split into fixed lanes (dataset, split, init, batching/noise,
subsampling), so rerunning a config reproduces the report bit-for-bit in
single-threaded mode.
"""

from __future__ import annotations

import hashlib
import json
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import models as M
from . import tensor as T
from .dynsys import (REACTION_DIFFUSION, SystemSpec, Trajectory,
                     sample_initial_conditions, simulate, simulate_batch)
from .errors import ContractError, TrainingError
from .idest import IdEstimate, dof_round, mle_id
from .optim import Adam
from .render import (Dataset, FrameGeometry, build_dataset, embed_states)
from .rng import Rng

# seed lanes (Rng.split ids)
LANE_DATASET = 0
LANE_SPLIT = 1
LANE_INIT = 2
LANE_TRAIN = 3
LANE_SUBSAMPLE = 4
LANE_OUTER_INIT = 5
LANE_OUTER_TRAIN = 6

# Per-system defaults: reconstruction-loss weights (pi-vae, hpi-vae),
# ground-truth dof, and sampling parameters. Frame spacing and initial
# velocity spread are calibrated so (a) trajectories explore the full
# state space rather than the lower-dimensional released-from-rest
# subset, and (b) the finite-difference momentum latents carry variance
# comfortably above the fixed 0.01 threshold.
SYSTEM_DEFAULTS = {
    "single-pendulum": {"beta_pi_vae": 17.0, "beta_hpi_vae": 20.0,
                        "dof": 2, "velocity_scale": 0.0, "dt_frame": 0.1},
    "double-pendulum": {"beta_pi_vae": 30.0, "beta_hpi_vae": 40.0,
                        "dof": 4, "velocity_scale": 1.5, "dt_frame": 0.15},
    "elastic-pendulum": {"beta_pi_vae": 50.0, "beta_hpi_vae": 80.0,
                         "dof": 6, "velocity_scale": 2.0, "dt_frame": 0.2},
    "reaction-diffusion": {"beta_pi_vae": 7.0, "beta_hpi_vae": 7.0,
                           "dof": 2, "velocity_scale": 0.0,
                           "dt_frame": 1.0 / 60.0},
}


@dataclass
class TrainConfig:
    system: str = "single-pendulum"
    mode: str = "vectors"          # vectors | frames
    seed: int = 0
    # data
    system_params: dict = None     # overrides for SystemSpec fields
    n_trajectories: int = 100
    n_frames: int = 100
    dt_frame: float = None         # resolved from SYSTEM_DEFAULTS when None
    substeps: int = 10
    velocity_scale: float = None   # resolved from SYSTEM_DEFAULTS when None
    shift: int = 2
    height: int = 32
    width: int = 32
    channels: int = 1
    embed_seed: int = 1234
    # inner training
    beta: float = None             # resolved per variant when None
    epochs: int = 1000
    batch_size: int = 256
    lr: float = 1e-3
    lr_decay: float = 1.0          # final lr = lr * lr_decay
    var_threshold: float = 0.01
    vae_latent: int = 10
    so_dt: float = 1.0
    hamilton_at_midpoint: bool = False
    # intrinsic dimension
    k1: int = 10
    k2: int = 20
    id_subsample: int = 10000
    # outer training
    outer_epochs: int = 120
    outer_batch: int = 128
    outer_lr: float = 1e-3
    outer_early_stop: float = 1e-3
    outer_patience: int = 10

    def __post_init__(self):
        if self.system not in SYSTEM_DEFAULTS:
            raise ContractError(f"unknown system {self.system!r}")
        if self.mode not in ("vectors", "frames"):
            raise ContractError(f"unknown mode {self.mode!r}")
        if self.epochs < 1 or self.var_threshold <= 0:
            raise ContractError("epochs >= 1 and var_threshold > 0 required")
        if self.velocity_scale is None:
            object.__setattr__(self, "velocity_scale",
                               SYSTEM_DEFAULTS[self.system]["velocity_scale"])
        if self.dt_frame is None:
            object.__setattr__(self, "dt_frame",
                               SYSTEM_DEFAULTS[self.system]["dt_frame"])
        if self.beta is not None and self.beta <= 0:
            raise ContractError("beta must be > 0")

    def resolved_beta(self, variant: str) -> float:
        if self.beta is not None:
            return self.beta
        d = SYSTEM_DEFAULTS[self.system]
        return d["beta_hpi_vae"] if variant == "hpi-vae" else d["beta_pi_vae"]

    def system_spec(self) -> SystemSpec:
        params = self.system_params or SYSTEM_DEFAULTS[self.system].get(
            "system_params", {})
        return SystemSpec(self.system, **params)

    def geometry(self) -> FrameGeometry:
        return FrameGeometry(self.height, self.width, self.channels)

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, d: dict) -> "TrainConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise ContractError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    def config_hash(self) -> str:
        blob = json.dumps(self.to_json(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


@dataclass
class TrainReport:
    history: list                  # per-epoch dicts of loss terms
    final_val_recon: float
    wall_time: float
    seed: int
    config_hash: str
    diverged: bool = False

    def to_json(self) -> dict:
        return {"history": self.history,
                "final_val_recon": self.final_val_recon,
                "wall_time": self.wall_time, "seed": self.seed,
                "config_hash": self.config_hash, "diverged": self.diverged}


@dataclass
class DofReport:
    variant: str
    latent_dim: int
    variances: list
    threshold: float
    active_count: int
    active_mask: list
    ground_truth_dof: int
    passed: bool
    id_estimate: float = None
    id_per_k: list = None

    def to_json(self) -> dict:
        return {k: getattr(self, k) for k in (
            "variant", "latent_dim", "variances", "threshold", "active_count",
            "active_mask", "ground_truth_dof", "passed", "id_estimate",
            "id_per_k")}


@dataclass
class LatentTrace:
    trajectory_id: int
    times: np.ndarray
    latents: np.ndarray            # [T, n_active] scaled to [-1, 1]
    scale_lo: np.ndarray
    scale_hi: np.ndarray
    overlays: dict                 # name -> [T]
    latent_ids: list


# ---------------------------------------------------------------------------
# dataset preparation


def generate_trajectories(config: TrainConfig):
    spec = config.system_spec()
    rng = Rng(config.seed).split(LANE_DATASET)
    if spec.mechanical:
        inits = np.stack([
            sample_initial_conditions(spec, rng.split(i),
                                      velocity_scale=config.velocity_scale)
            for i in range(config.n_trajectories)])
        states, aux = simulate_batch(spec, inits, config.n_frames,
                                     config.dt_frame, config.substeps)
        return [Trajectory(spec, config.dt_frame, states[i],
                           {k: aux[k][i] for k in aux})
                for i in range(config.n_trajectories)]
    return [simulate(spec, sample_initial_conditions(spec, rng.split(i)),
                     config.n_frames, config.dt_frame, config.substeps)
            for i in range(config.n_trajectories)]


def prepare_dataset(config: TrainConfig, out_dir) -> Dataset:
    """Simulate, render/embed, and write the dataset for a config."""
    trajs = generate_trajectories(config)
    build_dataset(trajs, out_dir, geometry=config.geometry(),
                  shift=config.shift, mode=config.mode,
                  rng=Rng(config.seed).split(LANE_SPLIT),
                  embed_seed=config.embed_seed)
    return Dataset(out_dir)


# ---------------------------------------------------------------------------
# outer autoencoder


def _batched_outer_latents(model, x: np.ndarray, chunk: int = 256):
    outs = []
    for lo in range(0, x.shape[0], chunk):
        latent, _ = M.outer_forward(model, T.Tensor(x[lo : lo + chunk]))
        outs.append(latent.value.data)
    return np.concatenate(outs, axis=0)


def train_outer(config: TrainConfig, dataset: Dataset):
    """Adam training of the outer conv AE on target-stack reconstruction.

    Stops early once validation recon stays below the threshold for the
    configured number of consecutive epochs.
    """
    if dataset.manifest.mode != "frames":
        raise ContractError("train_outer needs a frames-mode dataset")
    rng = Rng(config.seed).split(LANE_OUTER_TRAIN)
    model = M.init_outer(config.channels, config.height, config.width,
                         Rng(config.seed).split(LANE_OUTER_INIT))
    params = list(model.params().values())
    opt = Adam(params, lr=config.outer_lr)
    x_train = dataset.inputs("train")
    y_train = dataset.targets("train")
    x_val = dataset.inputs("val")
    y_val = dataset.targets("val")
    n = x_train.shape[0]
    bs = config.outer_batch
    history = []
    t0 = time.time()
    streak = 0
    diverged = False
    for epoch in range(config.outer_epochs):
        perm = rng.permutation(n)
        total = 0.0
        nb = 0
        for lo in range(0, n, bs):
            idx = perm[lo : lo + bs]
            opt.zero_grad()
            _, pred = M.outer_forward(model, T.Tensor(x_train[idx]))
            loss = M.reconstruction_loss(pred, T.Tensor(y_train[idx]))
            lv = loss.item()
            if not np.isfinite(lv):
                diverged = True
                break
            T.backward(loss)
            opt.step()
            total += lv
            nb += 1
        if diverged:
            break
        val = _outer_val_recon(model, x_val, y_val)
        history.append({"train_recon": total / max(nb, 1), "val_recon": val})
        streak = streak + 1 if val < config.outer_early_stop else 0
        if streak >= config.outer_patience:
            break
    val = _outer_val_recon(model, x_val, y_val) if not diverged else float("nan")
    report = TrainReport(history=history, final_val_recon=val,
                         wall_time=time.time() - t0, seed=config.seed,
                         config_hash=config.config_hash(), diverged=diverged)
    if diverged:
        raise TrainingError("outer training diverged (NaN loss)")
    return model, report


def _outer_val_recon(model, x_val, y_val, chunk: int = 256) -> float:
    se = 0.0
    count = 0
    for lo in range(0, x_val.shape[0], chunk):
        _, pred = M.outer_forward(model, T.Tensor(x_val[lo : lo + chunk]))
        d = pred.value.data - y_val[lo : lo + chunk]
        se += float((d * d).sum())
        count += d.size
    return se / count


def compute_outer_latents(config: TrainConfig, dataset: Dataset, split: str,
                          outer_model=None) -> np.ndarray:
    """64-wide representation per sample, ordered by (trajectory, frame).

    Vectors mode passes the stored embeddings through unchanged; frames
    mode encodes the input stacks with the trained outer model.
    """
    if dataset.manifest.mode == "vectors":
        return np.asarray(dataset.inputs(split))
    if outer_model is None:
        raise ContractError("frames mode needs a trained outer model")
    return _batched_outer_latents(outer_model, dataset.inputs(split))


# ---------------------------------------------------------------------------
# inner training


def _pairs_or_all(dataset: Dataset, split: str, needs_pairs: bool):
    if needs_pairs:
        return dataset.pair_indices(split)
    n = dataset.count(split)
    idx = np.arange(n)
    return np.stack([idx, idx], axis=1)


def train_inner(config: TrainConfig, dataset: Dataset, variant: str,
                latent_dim: int = None, outer_model=None):
    """Train one inner variant; returns (model, head, TrainReport, DofReport ingredients).

    Consecutive-sample pairs drive the pairing and Hamilton terms; the
    model always reconstructs the time-t representation.
    """
    if variant not in M.VARIANTS:
        raise ContractError(f"unknown variant {variant!r}")
    if variant in M.VARIATIONAL:
        latent_dim = config.vae_latent
    elif latent_dim is None:
        raise ContractError(f"{variant} needs an explicit latent width")

    y_train = compute_outer_latents(config, dataset, "train", outer_model)
    y_val = compute_outer_latents(config, dataset, "val", outer_model)
    pairs = _pairs_or_all(dataset, "train", variant != "baseline")
    if variant != "baseline" and pairs.shape[0] == 0:
        raise ContractError("no consecutive-sample pairs in the train split")

    rng = Rng(config.seed).split(LANE_TRAIN)
    model = M.init_inner(variant, latent_dim, Rng(config.seed).split(LANE_INIT),
                         input_dim=y_train.shape[1])
    head = None
    params = list(model.params().values())
    if variant == "hpi-vae":
        head = M.init_hnn(model.latent_dim,
                          Rng(config.seed).split(LANE_INIT).split(1))
        params += list(head.params().values())
    opt = Adam(params, lr=config.lr)
    beta = config.resolved_beta(variant)
    n = pairs.shape[0]
    bs = config.batch_size
    history = []
    t0 = time.time()
    diverged = False
    for epoch in range(config.epochs):
        if config.lr_decay != 1.0:
            opt.lr = config.lr * (config.lr_decay **
                                  (epoch / max(config.epochs - 1, 1)))
        perm = rng.permutation(n)
        sums = {}
        nb = 0
        for lo in range(0, n, bs):
            rows = pairs[perm[lo : lo + bs]]
            y1 = T.Tensor(y_train[rows[:, 0]])
            y2 = (T.Tensor(y_train[rows[:, 1]])
                  if variant != "baseline" else None)
            eps = (rng.normal(size=(rows.shape[0], model.latent_dim))
                   if model.variational else None)
            opt.zero_grad()
            loss, terms = M.total_loss(model, y1, y2, head=head, beta=beta,
                                       eps=eps, so_dt=config.so_dt,
                                       hamilton_at_midpoint=config.hamilton_at_midpoint)
            if not np.isfinite(terms.get("total", terms["recon"])):
                diverged = True
                break
            T.backward(loss)
            opt.step()
            for k, v in terms.items():
                sums[k] = sums.get(k, 0.0) + v
            nb += 1
        if diverged:
            break
        history.append({k: v / nb for k, v in sums.items()})
    wall = time.time() - t0
    if diverged:
        report = TrainReport(history=history, final_val_recon=float("nan"),
                             wall_time=wall, seed=config.seed,
                             config_hash=config.config_hash(), diverged=True)
        raise TrainingError(f"{variant} training diverged (NaN loss)")

    val_recon, variances = evaluate_inner(model, y_val)
    report = TrainReport(history=history, final_val_recon=val_recon,
                         wall_time=wall, seed=config.seed,
                         config_hash=config.config_hash())
    return model, head, report, variances


def evaluate_inner(model: M.InnerModel, y: np.ndarray):
    """(validation recon with deterministic codes, per-dim code variances).

    Variational models are evaluated at the posterior mean.
    """
    code = M.encode(model, T.Tensor(y))
    if model.variational:
        code = code[0]
    recon = M.reconstruction_loss(M.decode(model, code), T.Tensor(y)).item()
    variances = code.value.data.var(axis=0)
    return recon, variances


def count_active_dims(variances, threshold: float):
    """Number of dimensions at or above the variance threshold, plus mask."""
    if threshold <= 0:
        raise ContractError("threshold must be > 0")
    v = np.asarray(variances, dtype=np.float64)
    mask = v >= threshold
    return int(mask.sum()), mask


def estimate_dataset_id(config: TrainConfig, dataset: Dataset,
                        outer_model=None) -> IdEstimate:
    """Intrinsic dimension of the train-split representations."""
    pts = compute_outer_latents(config, dataset, "train", outer_model)
    rng = Rng(config.seed).split(LANE_SUBSAMPLE)
    idx = rng.subsample(pts.shape[0], config.id_subsample)
    return mle_id(pts[idx], config.k1, config.k2)


# ---------------------------------------------------------------------------
# pipelines


def _dof_report(config: TrainConfig, variant, model, variances,
                est: IdEstimate = None) -> DofReport:
    truth = SYSTEM_DEFAULTS[config.system]["dof"]
    count, mask = count_active_dims(variances, config.var_threshold)
    if variant in M.VARIATIONAL:
        passed = count == truth
    else:
        passed = model.latent_dim == truth
    return DofReport(
        variant=variant, latent_dim=model.latent_dim,
        variances=[float(v) for v in variances],
        threshold=config.var_threshold, active_count=count,
        active_mask=[bool(m) for m in mask], ground_truth_dof=truth,
        passed=passed,
        id_estimate=None if est is None else est.value,
        id_per_k=None if est is None else est.per_k)


def _write_run(run_dir, config: TrainConfig, report: TrainReport,
               dof: DofReport, model, head, est: IdEstimate = None):
    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    with open(run_dir / "config.json", "w") as f:
        json.dump(config.to_json(), f, indent=2)
    with open(run_dir / "report.json", "w") as f:
        json.dump({"train": report.to_json(), "dof": dof.to_json()}, f,
                  indent=2)
    ck = run_dir / "checkpoints"
    M.save_inner(ck / f"inner_{dof.variant}.bin", model,
                 extra={"system": config.system})
    if head is not None:
        M.save_hnn(ck / "hnn.bin", head)
    if est is not None:
        with open(run_dir / "id_per_k.csv", "w") as f:
            f.write("k,id_k\n")
            for k, v in zip(range(est.k1, est.k2 + 1), est.per_k):
                f.write(f"{k},{v:.9g}\n")


def run_baseline(config: TrainConfig, dataset: Dataset, run_dir=None,
                 outer_model=None):
    """Intrinsic-dimension path: estimate ID, round, train the plain AE."""
    est = estimate_dataset_id(config, dataset, outer_model)
    width = dof_round(est.value)
    model, head, report, variances = train_inner(
        config, dataset, "baseline", latent_dim=width, outer_model=outer_model)
    dof = _dof_report(config, "baseline", model, variances, est)
    if run_dir is not None:
        _write_run(run_dir, config, report, dof, model, head, est)
    return model, report, dof


def run_variant(config: TrainConfig, dataset: Dataset, variant: str,
                run_dir=None, outer_model=None, id_estimate: IdEstimate = None):
    """Physics-informed paths (pi-ae, pi-vae, hpi-vae)."""
    if variant not in ("pi-ae", "pi-vae", "hpi-vae"):
        raise ContractError(f"run_variant does not handle {variant!r}")
    est = id_estimate
    latent_dim = None
    if variant == "pi-ae":
        if est is None:
            est = estimate_dataset_id(config, dataset, outer_model)
        latent_dim = dof_round(est.value)
    model, head, report, variances = train_inner(
        config, dataset, variant, latent_dim=latent_dim,
        outer_model=outer_model)
    dof = _dof_report(config, variant, model, variances, est)
    if run_dir is not None:
        _write_run(run_dir, config, report, dof, model, head, est)
    return model, head, report, dof


# ---------------------------------------------------------------------------
# traces, correlations, conservation


def _trace_latents(model: M.InnerModel, y: np.ndarray) -> np.ndarray:
    code = M.encode(model, T.Tensor(y))
    if model.variational:
        code = code[0]
    return code.value.data


def export_traces(model: M.InnerModel, config: TrainConfig, dataset: Dataset,
                  trajectory_ids, split: str = "val", run_dir=None,
                  active_mask=None, outer_model=None) -> list:
    """Per-trajectory latent time series with ground-truth overlays.

    Active latent dimensions (per the mask) are min-max scaled to [-1, 1];
    the affine scaling is recorded on the trace. Writes CSV and an SVG
    line plot per trajectory when run_dir is given.
    """
    y = compute_outer_latents(config, dataset, split, outer_model)
    traj_arr, frame_arr = dataset.index(split)
    aux = dataset.aux(split)
    names = dataset.manifest.aux_names
    traces = []
    for tid in trajectory_ids:
        rows = np.where(traj_arr == tid)[0]
        if rows.size == 0:
            raise ContractError(f"trajectory {tid} not in split {split!r}")
        rows = rows[np.argsort(frame_arr[rows], kind="stable")]
        z = _trace_latents(model, y[rows])
        if active_mask is None:
            keep = list(range(z.shape[1]))
        else:
            keep = [i for i, m in enumerate(active_mask) if m]
        z = z[:, keep]
        lo = z.min(axis=0)
        hi = z.max(axis=0)
        span = np.where(hi > lo, hi - lo, 1.0)
        scaled = 2.0 * (z - lo) / span - 1.0
        times = frame_arr[rows] * dataset.manifest.dt_frame
        overlays = {nm: aux[rows, i] for i, nm in enumerate(names)}
        trace = LatentTrace(trajectory_id=int(tid), times=times,
                            latents=scaled, scale_lo=lo, scale_hi=hi,
                            overlays=overlays, latent_ids=keep)
        traces.append(trace)
        if run_dir is not None:
            _write_trace(Path(run_dir), trace)
    return traces


def _write_trace(run_dir: Path, trace: LatentTrace) -> None:
    tdir = run_dir / "traces"
    tdir.mkdir(parents=True, exist_ok=True)
    names = sorted(trace.overlays)
    with open(tdir / f"{trace.trajectory_id}.csv", "w") as f:
        cols = (["t"] + [f"latent_{i}" for i in trace.latent_ids]
                + [f"aux_{n}" for n in names])
        f.write(",".join(cols) + "\n")
        for r in range(trace.times.shape[0]):
            row = [f"{trace.times[r]:.9g}"]
            row += [f"{v:.9g}" for v in trace.latents[r]]
            row += [f"{trace.overlays[n][r]:.9g}" for n in names]
            f.write(",".join(row) + "\n")
    _plot_trace(run_dir / "plots", trace)


def _plot_trace(pdir: Path, trace: LatentTrace) -> None:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    pdir.mkdir(parents=True, exist_ok=True)
    fig, ax = plt.subplots(figsize=(6, 3.2))
    for j, lid in enumerate(trace.latent_ids):
        ax.plot(trace.times, trace.latents[:, j], label=f"latent {lid}")
    for name in sorted(trace.overlays):
        ov = trace.overlays[name]
        lo, hi = ov.min(), ov.max()
        span = hi - lo if hi > lo else 1.0
        ax.plot(trace.times, 2 * (ov - lo) / span - 1, "k:", lw=1.2,
                label=name)
    ax.set_xlabel("t [s]")
    ax.set_ylabel("scaled value")
    ax.legend(fontsize=7, ncol=2)
    fig.tight_layout()
    fig.savefig(pdir / f"{trace.trajectory_id}.svg")
    plt.close(fig)


def pearson_r(a: np.ndarray, b: np.ndarray):
    """Pearson correlation; None when either series has zero variance."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.size < 3:
        raise ContractError("need two equal series of length >= 3")
    da = a - a.mean()
    db = b - b.mean()
    na = float(np.sqrt((da * da).sum()))
    nb = float(np.sqrt((db * db).sum()))
    if na == 0.0 or nb == 0.0:
        return None
    return float((da * db).sum() / (na * nb))


def correlation_report(trace: LatentTrace) -> dict:
    """Pearson r for every (active latent, overlay) pair plus a greedy
    max-|r| assignment of latents to overlays."""
    names = sorted(trace.overlays)
    table = {}
    for j, lid in enumerate(trace.latent_ids):
        for name in names:
            table[(lid, name)] = pearson_r(trace.latents[:, j],
                                           trace.overlays[name])
    pairs = []
    used_l, used_o = set(), set()
    candidates = sorted(
        ((abs(r), lid, name) for (lid, name), r in table.items()
         if r is not None), reverse=True)
    for mag, lid, name in candidates:
        if lid in used_l or name in used_o:
            continue
        used_l.add(lid)
        used_o.add(name)
        pairs.append({"latent": lid, "overlay": name, "r": table[(lid, name)]})
    return {"table": {f"{lid}:{name}": r for (lid, name), r in table.items()},
            "assignment": pairs}


def hamiltonian_conservation_metric(head: M.HnnHead, latent_series) -> list:
    """Relative energy spread per trajectory.

    For each trajectory's (unscaled) latent series, computes
    std(H(z_t)) / (std of H pooled across trajectories + 1e-12).
    """
    energies = [M.hnn_energy(head, T.Tensor(z)).value.data.reshape(-1)
                for z in latent_series]
    pooled = np.concatenate(energies)
    denom = float(pooled.std()) + 1e-12
    return [float(e.std()) / denom for e in energies]


def trace_latents_unscaled(model: M.InnerModel, config: TrainConfig,
                           dataset: Dataset, trajectory_ids,
                           split: str = "val", outer_model=None) -> list:
    """Raw (unscaled) latent series per trajectory, for energy metrics."""
    y = compute_outer_latents(config, dataset, split, outer_model)
    traj_arr, frame_arr = dataset.index(split)
    out = []
    for tid in trajectory_ids:
        rows = np.where(traj_arr == tid)[0]
        rows = rows[np.argsort(frame_arr[rows], kind="stable")]
        out.append(_trace_latents(model, y[rows]))
    return out
