"""Differentiable tile-based rasterizer.

Forward path: project 3D Gaussians to screen-space ellipses (first-order
covariance transform through the perspective Jacobian), bin them into
16x16-pixel tiles, depth-sort per tile, and alpha-blend front to back.
Backward path: analytic chain-rule gradients for every learnable parameter.

All math is float64. The hot loops run in numba kernels parallelized over
tiles (or Gaussians) with a deterministic merge, so renders and gradients
are bit-identical for any thread count.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import sh
from ._kernels import (
    PAIR_GRAD_WIDTH,
    blend_backward_kernel,
    blend_forward_kernel,
    merge_pair_grads,
    project_backward_kernel,
    project_forward_kernel,
)
from .camera import PinholeCamera
from .errors import NonFiniteGradient
from .scene import GaussianCloud, sigmoid


@dataclass(frozen=True)
class RasterConfig:
    """Rasterization constants (the de-facto standard values)."""

    tile_size: int = 16
    near: float = 0.01           # view-space depth cull, world units
    dilation: float = 0.3        # screen-space low-pass added to cov2d diagonal
    radius_sigma: float = 3.0    # effective radius in major-axis sigmas
    alpha_cap: float = 0.99
    skip_alpha: float = 1.0 / 255.0
    stop_transmittance: float = 1e-4


@dataclass
class SplatProjections:
    """Screen-space splats for one view (struct of arrays, visible only)."""

    indices: np.ndarray   # (m,) original Gaussian indices
    means2d: np.ndarray   # (m, 2) pixel coordinates
    cov2d: np.ndarray     # (m, 3) packed symmetric (c00, c01, c11), dilated
    conics: np.ndarray    # (m, 3) packed inverse (a, b, c)
    depths: np.ndarray    # (m,) view-space z
    radii: np.ndarray     # (m,) pixels
    colors: np.ndarray    # (m, 3) view-direction RGB
    alphas: np.ndarray    # (m,) sigmoid opacities
    width: int = 0
    height: int = 0

    def __len__(self) -> int:
        return len(self.indices)


@dataclass
class TileBins:
    """Per-tile splat lists, depth-sorted (ties broken by lower index)."""

    tile_size: int
    tiles_x: int
    tiles_y: int
    offsets: np.ndarray     # (tiles_x*tiles_y + 1,) int64
    splat_ids: np.ndarray   # (n_pairs,) int64 indices into the projections

    def tile_list(self, tx: int, ty: int) -> np.ndarray:
        t = ty * self.tiles_x + tx
        return self.splat_ids[self.offsets[t]:self.offsets[t + 1]]


@dataclass
class RenderedView:
    image: np.ndarray  # (h, w, 3) in [0, 1]
    alpha: np.ndarray  # (h, w) accumulated opacity in [0, 1]


@dataclass
class _ProjectionCache:
    """Per-visible-splat state retained for the analytic backward pass."""

    means: np.ndarray       # (m, 3) parameter copies at forward time
    log_scales: np.ndarray  # (m, 3)
    rotations: np.ndarray   # (m, 4) raw (pre-normalization)
    dirs: np.ndarray        # (m, 3) unit view directions (camera -> mean)
    dists: np.ndarray       # (m,)
    basis: np.ndarray       # (m, k) SH basis values
    raw_color: np.ndarray   # (m, 3) pre-clamp SH color
    sh_active: np.ndarray   # (m, 3, k) active-degree coefficients
    degree: int


@dataclass
class RenderCache:
    """Everything blend_backward needs to run without re-rendering."""

    camera: PinholeCamera
    config: RasterConfig
    background: np.ndarray
    n_total: int
    sh_width: int
    projections: SplatProjections
    bins: TileBins
    proj_cache: _ProjectionCache
    final_t: np.ndarray
    n_processed: np.ndarray


@dataclass
class CloudGradients:
    """Full-cloud parameter gradients plus densification statistics."""

    means: np.ndarray
    log_scales: np.ndarray
    rotations: np.ndarray
    opacity_logits: np.ndarray
    sh_coeffs: np.ndarray
    pos_grad_norm: np.ndarray  # (n,) screen-space positional gradient magnitude
    visible: np.ndarray        # (n,) bool


def project(cloud: GaussianCloud, cam: PinholeCamera,
            config: RasterConfig = RasterConfig(),
            degree: int | None = None,
            _with_cache: bool = False):
    """Project the cloud into screen space for one camera.

    Gaussians behind the near plane or with their radius-expanded square
    fully outside the image are culled. Returns ``SplatProjections`` (and
    the backward cache when ``_with_cache`` is set).
    """
    if degree is None:
        degree = cloud.active_sh_degree
    n = cloud.n
    rot_w2c = np.ascontiguousarray(cam.rotation_matrix())
    trans = np.ascontiguousarray(cam.translation)

    uv = np.empty((n, 2))
    depths = np.empty(n)
    cov2d = np.empty((n, 3))
    conics = np.empty((n, 3))
    radii = np.empty(n)
    visible = np.empty(n, dtype=np.bool_)
    project_forward_kernel(cloud.means, cloud.log_scales, cloud.rotations,
                           rot_w2c, trans, cam.fx, cam.fy, cam.cx, cam.cy,
                           cam.width, cam.height, config.near,
                           config.dilation, config.radius_sigma,
                           uv, depths, cov2d, conics, radii, visible)
    idx = np.nonzero(visible)[0]

    center = cam.center()
    offsets = cloud.means[idx] - center
    dists = np.linalg.norm(offsets, axis=1)
    dirs = offsets / dists[:, None]
    basis = sh.eval_basis(dirs, degree)
    k = sh.num_coeffs(degree)
    sh_active = cloud.sh_coeffs[idx, :, :k]
    raw_color = np.einsum("nck,nk->nc", sh_active, basis) + sh.COLOR_OFFSET
    colors = np.clip(raw_color, 0.0, 1.0)

    proj = SplatProjections(
        indices=idx,
        means2d=uv[idx],
        cov2d=cov2d[idx],
        conics=conics[idx],
        depths=depths[idx],
        radii=radii[idx],
        colors=colors,
        alphas=sigmoid(cloud.opacity_logits[idx]),
        width=cam.width,
        height=cam.height,
    )
    if not _with_cache:
        return proj
    cache = _ProjectionCache(
        means=np.ascontiguousarray(cloud.means[idx]),
        log_scales=np.ascontiguousarray(cloud.log_scales[idx]),
        rotations=np.ascontiguousarray(cloud.rotations[idx]),
        dirs=dirs, dists=dists, basis=basis, raw_color=raw_color,
        sh_active=sh_active, degree=degree)
    return proj, cache


def bin_and_sort(proj: SplatProjections, width: int, height: int,
                 config: RasterConfig = RasterConfig()) -> TileBins:
    """Assign splats to every tile their radius-expanded box overlaps and
    sort each tile's list by ascending depth (ties by lower index)."""
    ts = config.tile_size
    tiles_x = (width + ts - 1) // ts
    tiles_y = (height + ts - 1) // ts
    n_tiles = tiles_x * tiles_y
    m = len(proj)
    if m == 0:
        return TileBins(ts, tiles_x, tiles_y,
                        np.zeros(n_tiles + 1, dtype=np.int64),
                        np.zeros(0, dtype=np.int64))

    u = proj.means2d[:, 0]
    v = proj.means2d[:, 1]
    r = proj.radii
    tx_min = np.clip(np.floor((u - r) / ts).astype(np.int64), 0, tiles_x - 1)
    tx_max = np.clip(np.floor((u + r) / ts).astype(np.int64), 0, tiles_x - 1)
    ty_min = np.clip(np.floor((v - r) / ts).astype(np.int64), 0, tiles_y - 1)
    ty_max = np.clip(np.floor((v + r) / ts).astype(np.int64), 0, tiles_y - 1)
    spans_x = tx_max - tx_min + 1
    spans_y = ty_max - ty_min + 1
    counts = spans_x * spans_y
    total = int(counts.sum())
    splat_rep = np.repeat(np.arange(m, dtype=np.int64), counts)
    starts = np.concatenate([[0], np.cumsum(counts)[:-1]])
    local = np.arange(total, dtype=np.int64) - np.repeat(starts, counts)
    lx = local % spans_x[splat_rep]
    ly = local // spans_x[splat_rep]
    tile_ids = ((ty_min[splat_rep] + ly) * tiles_x
                + tx_min[splat_rep] + lx)

    order = np.lexsort((splat_rep, proj.depths[splat_rep], tile_ids))
    tile_sorted = tile_ids[order]
    splat_sorted = splat_rep[order]
    offsets = np.zeros(n_tiles + 1, dtype=np.int64)
    np.cumsum(np.bincount(tile_sorted, minlength=n_tiles), out=offsets[1:])
    return TileBins(ts, tiles_x, tiles_y, offsets, splat_sorted)


def blend_forward(bins: TileBins, proj: SplatProjections,
                  background: np.ndarray,
                  config: RasterConfig = RasterConfig(),
                  _internals: bool = False):
    """Front-to-back alpha compositing over the binned splats."""
    h, w = proj.height, proj.width
    background = np.asarray(background, dtype=np.float64)
    image = np.zeros((h, w, 3))
    final_t = np.ones((h, w))
    n_processed = np.zeros((h, w), dtype=np.int64)
    blend_forward_kernel(h, w, bins.tile_size, bins.tiles_x,
                         bins.offsets, bins.splat_ids,
                         proj.means2d, proj.conics, proj.radii,
                         proj.colors, proj.alphas, background,
                         config.alpha_cap, config.skip_alpha,
                         config.stop_transmittance,
                         image, final_t, n_processed)
    view = RenderedView(image=image, alpha=1.0 - final_t)
    if _internals:
        return view, final_t, n_processed
    return view


def render(cloud: GaussianCloud, cam: PinholeCamera,
           background: np.ndarray | tuple = (0.0, 0.0, 0.0),
           config: RasterConfig = RasterConfig(),
           degree: int | None = None) -> RenderedView:
    """project -> bin_and_sort -> blend_forward; deterministic."""
    proj = project(cloud, cam, config, degree)
    bins = bin_and_sort(proj, cam.width, cam.height, config)
    return blend_forward(bins, proj, np.asarray(background, dtype=np.float64),
                         config)


def render_with_cache(cloud: GaussianCloud, cam: PinholeCamera,
                      background: np.ndarray | tuple = (0.0, 0.0, 0.0),
                      config: RasterConfig = RasterConfig(),
                      degree: int | None = None
                      ) -> tuple[RenderedView, RenderCache]:
    """Render while retaining the state blend_backward needs."""
    background = np.asarray(background, dtype=np.float64)
    proj, proj_cache = project(cloud, cam, config, degree, _with_cache=True)
    bins = bin_and_sort(proj, cam.width, cam.height, config)
    view, final_t, n_processed = blend_forward(bins, proj, background, config,
                                               _internals=True)
    cache = RenderCache(
        camera=cam, config=config, background=background,
        n_total=cloud.n, sh_width=cloud.sh_coeffs.shape[2],
        projections=proj, bins=bins, proj_cache=proj_cache,
        final_t=final_t, n_processed=n_processed)
    return view, cache


def blend_backward(cache: RenderCache, grad_pixels: np.ndarray) -> CloudGradients:
    """Analytic gradients of a scalar loss through the full render.

    ``grad_pixels`` is dL/dpixels with shape (h, w, 3). Gradients flow
    through compositing, the 2D Gaussian weight, the screen covariance,
    projection, the sigmoid opacity, the scale exponential, quaternion
    normalization, and the SH color (including its dependence on the view
    direction). Raises ``NonFiniteGradient`` if any output is not finite.
    """
    proj = cache.projections
    pc = cache.proj_cache
    cam = cache.camera
    cfg = cache.config
    m = len(proj)
    n_pairs = len(cache.bins.splat_ids)
    grad_pixels = np.ascontiguousarray(grad_pixels, dtype=np.float64)

    splat_grads = np.zeros((m, PAIR_GRAD_WIDTH))
    if n_pairs:
        pair_grads = np.zeros((n_pairs, PAIR_GRAD_WIDTH))
        blend_backward_kernel(proj.height, proj.width, cache.bins.tile_size,
                              cache.bins.tiles_x, cache.bins.offsets,
                              cache.bins.splat_ids,
                              proj.means2d, proj.conics, proj.radii,
                              proj.colors, proj.alphas, cache.background,
                              cfg.alpha_cap, cfg.skip_alpha,
                              cache.final_t, cache.n_processed, grad_pixels,
                              pair_grads)
        merge_pair_grads(cache.bins.splat_ids, pair_grads, splat_grads)

    gu = np.ascontiguousarray(splat_grads[:, 0])
    gv = np.ascontiguousarray(splat_grads[:, 1])
    g_color = splat_grads[:, 5:8]
    g_alpha = splat_grads[:, 8]

    # ---- opacity: alpha = sigmoid(logit)
    alphas = proj.alphas
    g_logit = g_alpha * alphas * (1.0 - alphas)

    # ---- geometry: 2D mean + conic back to mean/scale/rotation
    rot_w2c = np.ascontiguousarray(cam.rotation_matrix())
    trans = np.ascontiguousarray(cam.translation)
    g_means = np.zeros((m, 3))
    g_log_scales = np.zeros((m, 3))
    g_quats = np.zeros((m, 4))
    if m:
        project_backward_kernel(pc.means, pc.log_scales, pc.rotations,
                                rot_w2c, trans, cam.fx, cam.fy, cfg.dilation,
                                gu, gv,
                                np.ascontiguousarray(splat_grads[:, 2]),
                                np.ascontiguousarray(splat_grads[:, 3]),
                                np.ascontiguousarray(splat_grads[:, 4]),
                                g_means, g_log_scales, g_quats)

    # ---- SH color: raw = sum_k coeff_k * basis_k + offset, clamped to [0,1]
    interior = (pc.raw_color > 0.0) & (pc.raw_color < 1.0)
    g_raw = g_color * interior
    k = pc.basis.shape[1]
    g_sh_active = g_raw[:, :, None] * pc.basis[:, None, :]       # (m, 3, k)
    g_dir = np.einsum("nc,nck,nkd->nd", g_raw, pc.sh_active,
                      sh.eval_basis_grad(pc.dirs, pc.degree))
    # direction = (mean - center) / dist; project through normalization
    radial = np.einsum("nd,nd->n", g_dir, pc.dirs)
    g_means += (g_dir - radial[:, None] * pc.dirs) / pc.dists[:, None]

    # ---- scatter back to full-cloud arrays
    n = cache.n_total
    out = CloudGradients(
        means=np.zeros((n, 3)),
        log_scales=np.zeros((n, 3)),
        rotations=np.zeros((n, 4)),
        opacity_logits=np.zeros(n),
        sh_coeffs=np.zeros((n, 3, cache.sh_width)),
        pos_grad_norm=np.zeros(n),
        visible=np.zeros(n, dtype=bool),
    )
    idx = proj.indices
    out.means[idx] = g_means
    out.log_scales[idx] = g_log_scales
    out.rotations[idx] = g_quats
    out.opacity_logits[idx] = g_logit
    out.sh_coeffs[idx, :, :k] = g_sh_active
    # half-viewport units so densification thresholds are resolution-free
    out.pos_grad_norm[idx] = np.hypot(gu * 0.5 * proj.width,
                                      gv * 0.5 * proj.height)
    out.visible[idx] = True

    for name in ("means", "log_scales", "rotations", "opacity_logits",
                 "sh_coeffs"):
        arr = getattr(out, name)
        if not np.all(np.isfinite(arr)):
            bad = int(np.count_nonzero(~np.isfinite(arr)))
            raise NonFiniteGradient(
                f"{bad} non-finite values in d/d{name} ({m} visible splats)")
    return out
