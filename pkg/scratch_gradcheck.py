"""Throwaway finite-difference validation of the rasterizer backward pass."""
import numpy as np

from splatkit.camera import PinholeCamera, look_at
from splatkit.scene import GaussianCloud
from splatkit.raster import RasterConfig, render, render_with_cache, blend_backward

rng = np.random.default_rng(7)


def random_cloud(n, degree=3):
    means = rng.normal(0, 0.4, (n, 3))
    log_scales = rng.normal(np.log(0.3), 0.3, (n, 3))
    q = rng.normal(0, 1, (n, 4))
    q /= np.linalg.norm(q, axis=1, keepdims=True)
    logits = rng.normal(0.0, 1.0, n).clip(-2, 2)
    shc = np.zeros((n, 3, 16))
    shc[:, :, 0] = rng.normal(0, 0.5, (n, 3))
    shc[:, :, 1:] = rng.normal(0, 0.1, (n, 3, 15))
    return GaussianCloud(means=means, log_scales=log_scales, rotations=q,
                         opacity_logits=logits, sh_coeffs=shc,
                         active_sh_degree=degree)


def make_cam(w=8, h=8):
    q, t = look_at(np.array([0.0, -3.0, 0.5]), np.zeros(3), np.array([0, 0, 1.0]))
    return PinholeCamera(camera_id=1, width=w, height=h, fx=6.0, fy=6.0,
                         cx=w / 2, cy=h / 2, rotation=q, translation=t)


def loss_of(cloud, cam, bg, upstream):
    view = render(cloud, cam, bg)
    return float(np.sum(view.image * upstream))


def main():
    cfg = RasterConfig()
    cam = make_cam()
    bg = np.array([0.1, 0.2, 0.3])
    cloud = random_cloud(5)
    upstream = rng.normal(0, 1, (cam.height, cam.width, 3))

    view, cache = render_with_cache(cloud, cam, bg)
    grads = blend_backward(cache, upstream)
    print("visible:", int(grads.visible.sum()), "of", cloud.n)

    h = 1e-4
    worst = 0.0
    params = cloud.param_arrays()
    for name, arr in params.items():
        g_analytic = getattr(grads, name)
        flat = arr.reshape(-1)
        gflat = g_analytic.reshape(-1)
        n_checked = 0
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            lp = loss_of(cloud, cam, bg, upstream)
            flat[i] = orig - h
            lm = loss_of(cloud, cam, bg, upstream)
            flat[i] = orig
            fd = (lp - lm) / (2 * h)
            ga = gflat[i]
            denom = max(abs(fd), abs(ga), 1e-6 / 1e-3)
            rel = abs(fd - ga) / denom
            if rel > worst:
                worst = rel
                worst_info = (name, i, fd, ga)
            n_checked += 1
        print(f"{name}: checked {n_checked}")
    print("worst relative error:", worst, worst_info)


if __name__ == "__main__":
    main()
