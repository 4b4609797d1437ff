"""Training loop: optimize a GaussianCloud against posed ground-truth images.

Covers the photometric loss, the adaptive-moment updates, periodic
densification (clone/split) and pruning, opacity resets, the spherical
harmonics degree schedule, checkpointing and the loss CSV log.
"""

from __future__ import annotations

import dataclasses
import time
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from . import sh
from .dataset import Dataset
from .errors import EmptyCloud, TooFewViews
from .loss import photometric_loss
from .optim import Adam
from .raster import RasterConfig, blend_backward, render_with_cache
from .scene import GaussianCloud, init_from_points, logit, sigmoid


@dataclass(frozen=True)
class TrainConfig:
    iterations: int = 7000
    loss_lambda: float = 0.2
    lr_means: float = 1.6e-4
    lr_means_final_factor: float = 0.01  # exponential decay target over the run
    lr_log_scales: float = 5e-3
    lr_rotations: float = 1e-3
    lr_opacity: float = 5e-2
    lr_sh: float = 2.5e-3
    densify_interval: int = 100
    densify_from: int = 500
    densify_until: int | None = None     # defaults to iterations // 2
    pos_grad_threshold: float = 2e-4
    split_scale_fraction: float = 0.01   # of scene extent: clone below, split above
    split_factor: float = 1.6
    split_count: int = 2
    clone_nudge: float = 0.3             # nudge distance in units of mean scale
    prune_opacity: float = 0.005
    prune_scale_fraction: float = 0.1    # of scene extent
    opacity_reset_interval: int = 3000
    opacity_reset_ceiling: float = 0.01
    sh_degree_interval: int = 1000
    max_sh_degree: int = 3
    max_gaussians: int = 500_000
    checkpoint_interval: int = 0         # 0 disables mid-run checkpoints
    seed: int = 0
    background: tuple[float, float, float] = (0.0, 0.0, 0.0)
    raster: RasterConfig = field(default_factory=RasterConfig)

    def __post_init__(self):
        for name in ("lr_means", "lr_log_scales", "lr_rotations",
                     "lr_opacity", "lr_sh"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if not 0.0 <= self.loss_lambda <= 1.0:
            raise ValueError("loss_lambda must lie in [0, 1]")
        for name in ("densify_interval", "opacity_reset_interval",
                     "sh_degree_interval"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.iterations < 0:
            raise ValueError("iterations must be >= 0")

    def densify_stop(self) -> int:
        return (self.densify_until if self.densify_until is not None
                else self.iterations // 2)

    def mean_lr_at(self, iteration: int) -> float:
        if self.iterations <= 0:
            return self.lr_means
        frac = iteration / self.iterations
        return self.lr_means * self.lr_means_final_factor ** frac

    def learning_rates(self) -> dict[str, float]:
        return {
            "means": self.lr_means,
            "log_scales": self.lr_log_scales,
            "rotations": self.lr_rotations,
            "opacity_logits": self.lr_opacity,
            "sh_coeffs": self.lr_sh,
        }

    def to_dict(self) -> dict:
        doc = dataclasses.asdict(self)
        doc["background"] = list(self.background)
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "TrainConfig":
        doc = dict(doc)
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        if "raster" in doc and isinstance(doc["raster"], dict):
            doc["raster"] = RasterConfig(**doc["raster"])
        if "background" in doc:
            doc["background"] = tuple(doc["background"])
        return cls(**doc)

    def with_overrides(self, overrides: dict[str, str]) -> "TrainConfig":
        """Apply ``key=value`` CLI overrides (dotted keys reach the raster)."""
        cfg_doc = self.to_dict()
        for key, value in overrides.items():
            if key.startswith("raster."):
                target = cfg_doc["raster"]
                key = key.split(".", 1)[1]
            else:
                target = cfg_doc
            if key not in target:
                raise ValueError(f"unknown config key {key!r}")
            old = target[key]
            target[key] = _parse_override(value, old)
        return TrainConfig.from_dict(cfg_doc)


def _parse_override(value: str, old):
    import json
    if old is None or isinstance(old, (list, tuple, bool)):
        parsed = json.loads(value)
        return parsed
    if isinstance(old, int) and not isinstance(old, bool):
        return int(value)
    if isinstance(old, float):
        return float(value)
    return value


@dataclass
class TrainState:
    """Optimizer and densification bookkeeping."""

    iteration: int
    adam: Adam
    grad_accum: np.ndarray    # (n,) accumulated screen positional grad norms
    grad3d_accum: np.ndarray  # (n, 3) accumulated world-space mean gradients
    obs_count: np.ndarray     # (n,) views in which each Gaussian was visible
    loss_history: list = field(default_factory=list)

    @classmethod
    def fresh(cls, n: int, config: TrainConfig) -> "TrainState":
        return cls(iteration=0,
                   adam=Adam(learning_rates=config.learning_rates()),
                   grad_accum=np.zeros(n),
                   grad3d_accum=np.zeros((n, 3)),
                   obs_count=np.zeros(n, dtype=np.int64))

    def reset_densify_stats(self, n: int) -> None:
        self.grad_accum = np.zeros(n)
        self.grad3d_accum = np.zeros((n, 3))
        self.obs_count = np.zeros(n, dtype=np.int64)


def densify_and_prune(cloud: GaussianCloud, state: TrainState,
                      config: TrainConfig, extent: float,
                      rng: np.random.Generator,
                      reset_opacity: bool = False) -> GaussianCloud:
    """Clone/split high-gradient Gaussians and prune weak or oversized ones.

    Gaussians whose mean accumulated screen gradient exceeds the threshold
    are cloned (nudged down the accumulated mean gradient) when small, or
    split in two (means sampled from the parent density, scales shrunk,
    parent removed) when larger than the split threshold. Gaussians with
    opacity below the prune floor or scales above the prune fraction of the
    scene extent are removed. Optimizer moments follow: survivors keep
    theirs, newcomers start at zero.
    """
    obs = np.maximum(state.obs_count, 1)
    mean_grad = state.grad_accum / obs
    candidates = (mean_grad > config.pos_grad_threshold) & (state.obs_count > 0)
    if cloud.n >= config.max_gaussians:
        candidates[:] = False

    scales = cloud.scales()
    max_scale = scales.max(axis=1)
    split_threshold = config.split_scale_fraction * extent
    clone_sel = candidates & (max_scale < split_threshold)
    split_sel = candidates & (max_scale >= split_threshold)

    # clones: copy, nudged a fraction of the scale down the mean gradient
    g3d = state.grad3d_accum[clone_sel] / obs[clone_sel, None]
    g3d_norm = np.linalg.norm(g3d, axis=1, keepdims=True)
    direction = np.where(g3d_norm > 0, g3d / np.maximum(g3d_norm, 1e-30), 0.0)
    nudge = -direction * (config.clone_nudge
                          * scales[clone_sel].mean(axis=1, keepdims=True))
    clone = {
        "means": cloud.means[clone_sel] + nudge,
        "log_scales": cloud.log_scales[clone_sel].copy(),
        "rotations": cloud.rotations[clone_sel].copy(),
        "opacity_logits": cloud.opacity_logits[clone_sel].copy(),
        "sh_coeffs": cloud.sh_coeffs[clone_sel].copy(),
    }

    # splits: children sampled from the parent density, scales shrunk
    n_split = int(split_sel.sum())
    kids = config.split_count
    from .camera import quat_to_rotmat
    rot = quat_to_rotmat(cloud.rotations[split_sel]
                         / np.linalg.norm(cloud.rotations[split_sel],
                                          axis=1, keepdims=True))
    z = rng.standard_normal((n_split, kids, 3))
    local = z * scales[split_sel][:, None, :]
    offsets = np.einsum("nij,nkj->nki", rot, local)
    child_means = (cloud.means[split_sel][:, None, :] + offsets).reshape(-1, 3)
    split = {
        "means": child_means,
        "log_scales": np.repeat(cloud.log_scales[split_sel]
                                - np.log(config.split_factor), kids, axis=0),
        "rotations": np.repeat(cloud.rotations[split_sel], kids, axis=0),
        "opacity_logits": np.repeat(cloud.opacity_logits[split_sel], kids,
                                    axis=0),
        "sh_coeffs": np.repeat(cloud.sh_coeffs[split_sel], kids, axis=0),
    }

    keep_original = ~split_sel
    arrays = {}
    for name in clone:
        arrays[name] = np.concatenate([
            getattr(cloud, name)[keep_original], clone[name], split[name]])
    n_added = len(clone["means"]) + len(split["means"])
    state.adam.select_rows(keep_original)
    state.adam.append_rows(n_added)

    # prune weak and oversized Gaussians across old and new alike
    alpha = sigmoid(arrays["opacity_logits"])
    biggest = np.exp(arrays["log_scales"]).max(axis=1)
    alive = (alpha >= config.prune_opacity) & (
        biggest <= config.prune_scale_fraction * extent)
    if not alive.any():
        raise EmptyCloud("pruning removed every Gaussian")
    if not alive.all():
        for name in arrays:
            arrays[name] = arrays[name][alive]
        state.adam.select_rows(alive)

    if reset_opacity:
        ceiling = float(logit(config.opacity_reset_ceiling))
        arrays["opacity_logits"] = np.minimum(arrays["opacity_logits"],
                                              ceiling)
        state.adam.zero_group("opacity_logits")

    new_cloud = GaussianCloud(active_sh_degree=cloud.active_sh_degree,
                              max_sh_degree=cloud.max_sh_degree, **arrays)
    state.reset_densify_stats(new_cloud.n)
    return new_cloud


@dataclass
class TrainResult:
    cloud: GaussianCloud
    state: TrainState
    elapsed_s: float


def train(dataset: Dataset, config: TrainConfig = TrainConfig(),
          out_dir: str | Path | None = None,
          log_every: int = 0) -> TrainResult:
    """Run the optimization loop on a dataset's training views.

    Deterministic for a fixed seed: view order, densification sampling and
    all kernels are seeded or bit-reproducible. Writes ``loss.csv`` and
    optional checkpoint PLYs when ``out_dir`` is given.
    """
    bundle = dataset.bundle
    if len(dataset.train_indices) < 2:
        raise TooFewViews("training needs at least 2 train views")
    cloud = init_from_points(bundle.point_positions(), bundle.point_colors(),
                             max_sh_degree=config.max_sh_degree)
    state = TrainState.fresh(cloud.n, config)
    state.adam.ensure_state(cloud.param_arrays())
    extent = bundle.scene_extent()
    rng = np.random.default_rng(config.seed)
    background = np.asarray(config.background, dtype=np.float64)

    out_dir = Path(out_dir) if out_dir is not None else None
    csv_file = None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        csv_file = open(out_dir / "loss.csv", "w")
        csv_file.write("iteration,l1,d_ssim,total,n_gaussians,elapsed_s\n")

    order: list[int] = []
    densify_stop = config.densify_stop()
    t_start = time.perf_counter()
    try:
        for it in range(1, config.iterations + 1):
            state.iteration = it
            if not order:
                order = [int(i) for i in
                         rng.permutation(dataset.train_indices)]
            vi = order.pop(0)
            cam = bundle.view_camera(vi)
            truth = bundle.views[vi].image

            rendered, cache = render_with_cache(cloud, cam, background,
                                                config.raster)
            lv = photometric_loss(rendered.image, truth, config.loss_lambda)
            grads = blend_backward(cache, lv.grad)

            state.grad_accum += grads.pos_grad_norm
            state.grad3d_accum += grads.means
            state.obs_count += grads.visible

            state.adam.step(
                cloud.param_arrays(),
                {"means": grads.means, "log_scales": grads.log_scales,
                 "rotations": grads.rotations,
                 "opacity_logits": grads.opacity_logits,
                 "sh_coeffs": grads.sh_coeffs},
                lr_overrides={"means": config.mean_lr_at(it)})
            cloud.rotations /= np.linalg.norm(cloud.rotations, axis=1,
                                              keepdims=True)

            if (config.densify_from <= it <= densify_stop
                    and it % config.densify_interval == 0):
                reset = it % config.opacity_reset_interval == 0
                cloud = densify_and_prune(cloud, state, config, extent, rng,
                                          reset_opacity=reset)

            if it % config.sh_degree_interval == 0:
                cloud.active_sh_degree = min(cloud.active_sh_degree + 1,
                                             config.max_sh_degree)

            elapsed = time.perf_counter() - t_start
            state.loss_history.append(
                (it, lv.l1, lv.d_ssim, lv.total, cloud.n, elapsed))
            if csv_file is not None:
                csv_file.write(f"{it},{lv.l1:.8f},{lv.d_ssim:.8f},"
                               f"{lv.total:.8f},{cloud.n},{elapsed:.3f}\n")
            if log_every and it % log_every == 0:
                print(f"iter {it:6d}  loss {lv.total:.5f}  "
                      f"n={cloud.n}  {elapsed:.1f}s", flush=True)

            if (out_dir is not None and config.checkpoint_interval
                    and it % config.checkpoint_interval == 0):
                from .ply import save_ply
                ckpt_dir = out_dir / "checkpoints"
                ckpt_dir.mkdir(exist_ok=True)
                save_ply(ckpt_dir / f"iter_{it:06d}.ply", cloud)
    finally:
        if csv_file is not None:
            csv_file.close()

    return TrainResult(cloud=cloud, state=state,
                       elapsed_s=time.perf_counter() - t_start)
