"""Splat PLY serialization (community layout).

Binary little-endian PLY with one ``vertex`` element and float32 properties
``x y z nx ny nz f_dc_0..2 f_rest_0..44 opacity scale_0..2 rot_0..3``.
Normals are written as zeros, opacity is stored as the raw logit, scales as
log standard deviations, and f_rest is channel-major (15 coefficients for R,
then G, then B). Write -> read -> write reproduces identical bytes.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .errors import MalformedFile
from .scene import GaussianCloud

N_REST = 45  # 3 channels x 15 higher-order coefficients (degree 3)

PROPERTY_NAMES = (
    ["x", "y", "z", "nx", "ny", "nz"]
    + [f"f_dc_{i}" for i in range(3)]
    + [f"f_rest_{i}" for i in range(N_REST)]
    + ["opacity"]
    + [f"scale_{i}" for i in range(3)]
    + [f"rot_{i}" for i in range(4)]
)


def save_ply(path: str | Path, cloud: GaussianCloud) -> None:
    n = cloud.n
    data = np.zeros((n, len(PROPERTY_NAMES)), dtype=np.float32)
    data[:, 0:3] = cloud.means
    # 3:6 normals stay zero
    data[:, 6:9] = cloud.sh_coeffs[:, :, 0]
    data[:, 9:9 + N_REST] = cloud.sh_coeffs[:, :, 1:].reshape(n, N_REST)
    data[:, 54] = cloud.opacity_logits
    data[:, 55:58] = cloud.log_scales
    data[:, 58:62] = cloud.rotations

    header_lines = ["ply", "format binary_little_endian 1.0",
                    f"element vertex {n}"]
    header_lines += [f"property float {name}" for name in PROPERTY_NAMES]
    header_lines.append("end_header")
    with open(path, "wb") as f:
        f.write(("\n".join(header_lines) + "\n").encode("ascii"))
        f.write(data.astype("<f4").tobytes())


def load_ply(path: str | Path) -> GaussianCloud:
    with open(path, "rb") as f:
        raw = f.read()
    end = raw.find(b"end_header\n")
    if not raw.startswith(b"ply") or end < 0:
        raise MalformedFile(f"{path} is not a PLY file")
    header = raw[:end].decode("ascii", errors="replace").splitlines()
    body = raw[end + len(b"end_header\n"):]

    n = None
    names: list[str] = []
    fmt = None
    for line in header[1:]:
        toks = line.split()
        if not toks:
            continue
        if toks[0] == "format":
            fmt = toks[1]
        elif toks[0] == "element":
            if toks[1] != "vertex":
                raise MalformedFile(f"unexpected element {toks[1]!r}")
            n = int(toks[2])
        elif toks[0] == "property":
            if toks[1] != "float":
                raise MalformedFile(f"unsupported property type {toks[1]!r}")
            names.append(toks[2])
    if fmt != "binary_little_endian":
        raise MalformedFile(f"unsupported PLY format {fmt!r}")
    if n is None:
        raise MalformedFile("missing vertex element")
    expected = 4 * len(names) * n
    if len(body) < expected:
        raise MalformedFile("truncated PLY body")
    data = np.frombuffer(body[:expected], dtype="<f4").reshape(n, len(names))
    col = {name: i for i, name in enumerate(names)}
    missing = [p for p in PROPERTY_NAMES if p not in col and not p.startswith("n")]
    if missing:
        raise MalformedFile(f"missing splat properties: {missing[:3]}...")

    def cols(prefix: str, count: int) -> np.ndarray:
        idx = [col[f"{prefix}_{i}"] for i in range(count)]
        return data[:, idx].astype(np.float64)

    means = data[:, [col["x"], col["y"], col["z"]]].astype(np.float64)
    f_dc = cols("f_dc", 3)
    f_rest = cols("f_rest", N_REST).reshape(n, 3, N_REST // 3)
    sh_coeffs = np.concatenate([f_dc[:, :, None], f_rest], axis=2)
    return GaussianCloud(
        means=means,
        log_scales=cols("scale", 3),
        rotations=cols("rot", 4),
        opacity_logits=data[:, col["opacity"]].astype(np.float64),
        sh_coeffs=sh_coeffs,
        active_sh_degree=3,
        max_sh_degree=3,
    )
