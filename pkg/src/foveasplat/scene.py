"""
Gaussian scenes, cameras and pose sequences.

Scenes are held as a struct of arrays (one row per Gaussian) with all
activations already applied: opacities are in (0, 1], scales are positive
standard deviations and rotations are unit quaternions ``(w, x, y, z)``.
Files use the usual splatting export layout, where opacity is stored as a
logit, scale as a log and the DC color band without its 0.5 offset.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, EmptySceneError, FormatError

# Image sides must be whole multiples of this so that edge tiles are made of
# complete 2x2 blocks at every refinement level.
SIZE_ALIGN = 8

SH_C0 = 0.28209479177387814
SH_C1 = 0.4886025119029199
SH_C2 = (
    1.0925484305920792,
    -1.0925484305920792,
    0.31539156525252005,
    -1.0925484305920792,
    0.5462742152960396,
)
SH_C3 = (
    -0.5900435899266435,
    2.890611442640554,
    -0.4570457994644658,
    0.3731763325901154,
    -0.4570457994644658,
    1.445305721320277,
    -0.5900435899266435,
)


def sh_coeff_count(degree: int) -> int:
    return (degree + 1) ** 2


def sh_degree_of(count: int) -> int:
    degree = int(round(math.sqrt(count))) - 1
    if degree < 0 or sh_coeff_count(degree) != count:
        raise FormatError(f"{count} SH coefficients per channel is not a square number")
    return degree


def quat_to_rotmat(q: np.ndarray) -> np.ndarray:
    """Rotation matrices for unit quaternions ``(w, x, y, z)``, shape (..., 3, 3)."""
    q = np.asarray(q, dtype=np.float64)
    w, x, y, z = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    R = np.empty(q.shape[:-1] + (3, 3))
    R[..., 0, 0] = 1 - 2 * (y * y + z * z)
    R[..., 0, 1] = 2 * (x * y - w * z)
    R[..., 0, 2] = 2 * (x * z + w * y)
    R[..., 1, 0] = 2 * (x * y + w * z)
    R[..., 1, 1] = 1 - 2 * (x * x + z * z)
    R[..., 1, 2] = 2 * (y * z - w * x)
    R[..., 2, 0] = 2 * (x * z - w * y)
    R[..., 2, 1] = 2 * (y * z + w * x)
    R[..., 2, 2] = 1 - 2 * (x * x + y * y)
    return R


def sh_to_color(sh: np.ndarray, dirs: np.ndarray) -> np.ndarray:
    """Evaluate SH color for many Gaussians at once.

    Parameters
    ----------
    sh : ndarray, shape (N, K, 3)
        Coefficients, K = (deg+1)**2 with deg <= 3.
    dirs : ndarray, shape (N, 3)
        Unit view directions.

    Returns
    -------
    ndarray, shape (N, 3)
        Colors, offset by 0.5 and clamped below at 0 (not above).
    """
    sh = np.asarray(sh, dtype=np.float64)
    dirs = np.asarray(dirs, dtype=np.float64)
    K = sh.shape[1]
    deg = sh_degree_of(K)
    result = SH_C0 * sh[:, 0]
    if deg > 0:
        x, y, z = dirs[:, 0:1], dirs[:, 1:2], dirs[:, 2:3]
        result = (
            result
            - SH_C1 * y * sh[:, 1]
            + SH_C1 * z * sh[:, 2]
            - SH_C1 * x * sh[:, 3]
        )
        if deg > 1:
            xx, yy, zz = x * x, y * y, z * z
            xy, yz, xz = x * y, y * z, x * z
            result = (
                result
                + SH_C2[0] * xy * sh[:, 4]
                + SH_C2[1] * yz * sh[:, 5]
                + SH_C2[2] * (2.0 * zz - xx - yy) * sh[:, 6]
                + SH_C2[3] * xz * sh[:, 7]
                + SH_C2[4] * (xx - yy) * sh[:, 8]
            )
            if deg > 2:
                result = (
                    result
                    + SH_C3[0] * y * (3 * xx - yy) * sh[:, 9]
                    + SH_C3[1] * xy * z * sh[:, 10]
                    + SH_C3[2] * y * (4 * zz - xx - yy) * sh[:, 11]
                    + SH_C3[3] * z * (2 * zz - 3 * xx - 3 * yy) * sh[:, 12]
                    + SH_C3[4] * x * (4 * zz - xx - yy) * sh[:, 13]
                    + SH_C3[5] * z * (xx - yy) * sh[:, 14]
                    + SH_C3[6] * x * (xx - 3 * yy) * sh[:, 15]
                )
    return np.maximum(result + 0.5, 0.0)


@dataclass(frozen=True, eq=False)
class Gaussian3D:
    """A single scene primitive (activated values)."""

    mean: np.ndarray
    scale: np.ndarray
    rotation: np.ndarray
    opacity: float
    sh_coeffs: np.ndarray  # (K, 3)

    @property
    def sh_degree(self) -> int:
        return sh_degree_of(self.sh_coeffs.shape[0])


def evaluate_sh(g: Gaussian3D, view_dir) -> np.ndarray:
    """RGB color of ``g`` seen along the unit vector ``view_dir``."""
    d = np.asarray(view_dir, dtype=np.float64).reshape(1, 3)
    return sh_to_color(g.sh_coeffs[None], d)[0]


@dataclass(eq=False)
class Scene:
    """A set of 3D Gaussians stored column-wise.

    ``sh`` has shape (N, K, 3): coefficient index first, then channel.
    """

    means: np.ndarray
    scales: np.ndarray
    rotations: np.ndarray
    opacities: np.ndarray
    sh: np.ndarray
    name: str = "scene"

    def __post_init__(self):
        n = len(self.means)
        if n == 0:
            raise EmptySceneError(f"scene {self.name!r} has no Gaussians")
        for attr, shape in (
            ("means", (n, 3)),
            ("scales", (n, 3)),
            ("rotations", (n, 4)),
            ("opacities", (n,)),
        ):
            arr = np.asarray(getattr(self, attr), dtype=np.float64)
            if arr.shape != shape:
                raise FormatError(f"{attr} has shape {arr.shape}, expected {shape}")
            object.__setattr__(self, attr, arr)
        self.sh = np.asarray(self.sh, dtype=np.float64)
        if self.sh.ndim != 3 or self.sh.shape[0] != n or self.sh.shape[2] != 3:
            raise FormatError(f"sh has shape {self.sh.shape}, expected ({n}, K, 3)")
        sh_degree_of(self.sh.shape[1])
        if np.any(self.scales <= 0):
            raise FormatError("scales must be positive")
        if np.any(self.opacities <= 0) or np.any(self.opacities > 1):
            raise FormatError("opacities must lie in (0, 1]")
        norms = np.linalg.norm(self.rotations, axis=1)
        if np.any(np.abs(norms - 1.0) > 1e-6):
            raise FormatError("rotations must be unit quaternions")

    def __len__(self) -> int:
        return len(self.means)

    def __getitem__(self, i: int) -> Gaussian3D:
        return Gaussian3D(
            self.means[i], self.scales[i], self.rotations[i],
            float(self.opacities[i]), self.sh[i],
        )

    @property
    def sh_degree(self) -> int:
        return sh_degree_of(self.sh.shape[1])

    @property
    def bbox(self) -> tuple[np.ndarray, np.ndarray]:
        return self.means.min(axis=0), self.means.max(axis=0)

    def covariances(self) -> np.ndarray:
        """World-space covariances R S S^T R^T, shape (N, 3, 3)."""
        R = quat_to_rotmat(self.rotations)
        M = R * self.scales[:, None, :]
        return M @ np.swapaxes(M, 1, 2)


# ---------------------------------------------------------------------------
# PLY reading / writing

_PLY_TYPES = {
    "char": "i1", "int8": "i1", "uchar": "u1", "uint8": "u1",
    "short": "i2", "int16": "i2", "ushort": "u2", "uint16": "u2",
    "int": "i4", "int32": "i4", "uint": "u4", "uint32": "u4",
    "float": "f4", "float32": "f4", "double": "f8", "float64": "f8",
}

_REQUIRED = (
    ["x", "y", "z", "opacity"]
    + [f"scale_{i}" for i in range(3)]
    + [f"rot_{i}" for i in range(4)]
    + [f"f_dc_{i}" for i in range(3)]
)


def _parse_header(fh) -> tuple[str, int, list[tuple[str, str]]]:
    magic = fh.readline().strip()
    if magic != b"ply":
        raise FormatError("not a PLY file (missing 'ply' magic)")
    fmt = None
    count = None
    props: list[tuple[str, str]] = []
    current = None
    while True:
        line = fh.readline()
        if not line:
            raise FormatError("unexpected end of file inside PLY header")
        words = line.decode("ascii", errors="replace").split()
        if not words or words[0] in ("comment", "obj_info"):
            continue
        if words[0] == "end_header":
            break
        if words[0] == "format":
            fmt = words[1]
        elif words[0] == "element":
            current = words[1]
            if current == "vertex":
                count = int(words[2])
            elif count is None:
                raise FormatError(f"element {current!r} precedes the vertex element")
        elif words[0] == "property" and current == "vertex":
            if words[1] == "list":
                raise FormatError("list properties are not supported on vertices")
            if words[1] not in _PLY_TYPES:
                raise FormatError(f"unknown PLY property type {words[1]!r}")
            props.append((words[2], _PLY_TYPES[words[1]]))
    if fmt not in ("binary_little_endian", "ascii"):
        raise FormatError(f"unsupported PLY format {fmt!r}")
    if count is None:
        raise FormatError("PLY file has no vertex element")
    return fmt, count, props


def read_ply_fields(path) -> dict[str, np.ndarray]:
    """Raw per-vertex fields of a PLY file (binary little endian or ascii)."""
    with open(path, "rb") as fh:
        fmt, count, props = _parse_header(fh)
        if fmt == "ascii":
            text = fh.read().decode("ascii").split()
            need = count * len(props)
            if len(text) < need:
                raise FormatError(f"ascii body has {len(text)} values, expected {need}")
            flat = np.array(text[:need], dtype=np.float64).reshape(count, len(props))
            return {name: flat[:, j] for j, (name, _) in enumerate(props)}
        dtype = np.dtype([(name, "<" + t) for name, t in props])
        body = fh.read(dtype.itemsize * count)
        if len(body) < dtype.itemsize * count:
            raise FormatError("binary body is truncated")
        data = np.frombuffer(body, dtype=dtype, count=count)
        return {name: data[name] for name, _ in props}


def load_scene(path, sh_degree_limit: int = 3, name: str | None = None) -> Scene:
    """Load a Gaussian scene from a PLY file and apply activations.

    Opacity goes through the logistic function, scales are exponentiated,
    quaternions are normalized and SH bands above ``sh_degree_limit`` are
    dropped silently.

    Raises
    ------
    FormatError
        Missing field (named in the message) or non-finite value (point index
        in the message).
    EmptySceneError
        The file declares zero points.
    """
    fields = read_ply_fields(path)
    for key in _REQUIRED:
        if key not in fields:
            raise FormatError(f"missing field {key!r} in {path}")
    n = len(fields["x"])
    if n == 0:
        raise EmptySceneError(f"{path} contains zero points")

    rest_keys = sorted(
        (k for k in fields if k.startswith("f_rest_")), key=lambda k: int(k[7:])
    )
    if len(rest_keys) % 3:
        raise FormatError(f"{len(rest_keys)} f_rest fields is not a multiple of 3")
    per_channel = len(rest_keys) // 3
    file_degree = sh_degree_of(per_channel + 1)

    cols = [fields[k] for k in _REQUIRED] + [fields[k] for k in rest_keys]
    raw = np.stack([np.asarray(c, dtype=np.float64) for c in cols], axis=1)
    bad = ~np.isfinite(raw).all(axis=1)
    if bad.any():
        idx = int(np.flatnonzero(bad)[0])
        raise FormatError(f"non-finite value at point index {idx} in {path}")

    means = np.stack([fields[k] for k in ("x", "y", "z")], axis=1).astype(np.float64)
    opac = 1.0 / (1.0 + np.exp(-np.asarray(fields["opacity"], dtype=np.float64)))
    scales = np.exp(np.stack([fields[f"scale_{i}"] for i in range(3)], axis=1).astype(np.float64))
    rots = np.stack([fields[f"rot_{i}"] for i in range(4)], axis=1).astype(np.float64)
    norms = np.linalg.norm(rots, axis=1)
    if np.any(norms == 0):
        raise FormatError(f"zero quaternion at point index {int(np.flatnonzero(norms == 0)[0])}")
    rots = rots / norms[:, None]

    degree = min(file_degree, max(0, int(sh_degree_limit)))
    K = sh_coeff_count(degree)
    sh = np.zeros((n, K, 3))
    sh[:, 0, :] = np.stack([fields[f"f_dc_{i}"] for i in range(3)], axis=1)
    if K > 1:
        rest = np.stack([fields[k] for k in rest_keys], axis=1).astype(np.float64)
        rest = rest.reshape(n, 3, per_channel)  # channel-major on disk
        sh[:, 1:, :] = np.swapaxes(rest[:, :, : K - 1], 1, 2)

    if scales.min() <= 0 or not np.isfinite(scales).all():
        idx = int(np.flatnonzero(~(np.isfinite(scales).all(axis=1) & (scales > 0).all(axis=1)))[0])
        raise FormatError(f"scale overflow at point index {idx} in {path}")
    if name is None:
        name = Path(path).stem
    return Scene(means, scales, rots, opac, sh, name=name)


def scene_to_fields(scene: Scene) -> dict[str, np.ndarray]:
    """Pre-activation float32 columns in the standard export order."""
    n = len(scene)
    out: dict[str, np.ndarray] = {}
    for i, k in enumerate("xyz"):
        out[k] = scene.means[:, i]
    for c in range(3):
        out[f"f_dc_{c}"] = scene.sh[:, 0, c]
    rest = np.swapaxes(scene.sh[:, 1:, :], 1, 2).reshape(n, -1)
    for j in range(rest.shape[1]):
        out[f"f_rest_{j}"] = rest[:, j]
    o = np.clip(scene.opacities, 1e-7, 1.0 - 1e-7)
    out["opacity"] = np.log(o / (1.0 - o))
    for i in range(3):
        out[f"scale_{i}"] = np.log(scene.scales[:, i])
    for i in range(4):
        out[f"rot_{i}"] = scene.rotations[:, i]
    return {k: np.asarray(v, dtype=np.float32) for k, v in out.items()}


def write_scene(path, scene: Scene, binary: bool = True) -> None:
    """Write ``scene`` as a PLY file readable by :func:`load_scene`.

    Opacities of exactly 1 are stored as logit(1 - 1e-7).
    """
    fields = scene_to_fields(scene)
    names = list(fields)
    n = len(scene)
    header = ["ply", "format " + ("binary_little_endian 1.0" if binary else "ascii 1.0"),
              f"element vertex {n}"]
    header += [f"property float {k}" for k in names]
    header.append("end_header")
    with open(path, "wb") as fh:
        fh.write(("\n".join(header) + "\n").encode("ascii"))
        if binary:
            rec = np.empty(n, dtype=[(k, "<f4") for k in names])
            for k in names:
                rec[k] = fields[k]
            fh.write(rec.tobytes())
        else:
            table = np.stack([fields[k] for k in names], axis=1)
            for row in table:
                fh.write((" ".join(repr(float(v)) for v in row) + "\n").encode("ascii"))


# ---------------------------------------------------------------------------
# Cameras

@dataclass(frozen=True, eq=False)
class Camera:
    """Pinhole camera, OpenCV convention (x right, y down, looking along +z).

    Pixel ``(i, j)`` covers ``[i, i+1) x [j, j+1)``, so the image center is at
    ``(W/2, H/2)``.
    """

    world_to_camera: np.ndarray
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        M = np.asarray(self.world_to_camera, dtype=np.float64)
        if M.shape == (16,):
            M = M.reshape(4, 4)
        if M.shape != (4, 4):
            raise ConfigurationError(f"world_to_camera must be 4x4, got {M.shape}")
        object.__setattr__(self, "world_to_camera", M)
        if not np.allclose(M[3], [0, 0, 0, 1], atol=1e-9):
            raise ConfigurationError("world_to_camera bottom row must be (0, 0, 0, 1)")
        R = M[:3, :3]
        if not np.allclose(R @ R.T, np.eye(3), atol=1e-5) or np.linalg.det(R) < 0:
            raise ConfigurationError("world_to_camera rotation is not a proper rotation")
        W, H = int(self.width), int(self.height)
        if W <= 0 or H <= 0:
            raise ConfigurationError(f"image size must be positive, got {W}x{H}")
        if W % SIZE_ALIGN or H % SIZE_ALIGN:
            raise ConfigurationError(
                f"image size {W}x{H} is not a multiple of {SIZE_ALIGN} "
                "(tiles must split into whole 2x2 blocks)"
            )
        if not (self.fx > 0 and self.fy > 0):
            raise ConfigurationError("focal lengths must be positive")
        object.__setattr__(self, "width", W)
        object.__setattr__(self, "height", H)

    @classmethod
    def from_fov(cls, fov_deg: float, width: int, height: int, world_to_camera=None) -> Camera:
        if not 0 < fov_deg < 180:
            raise ConfigurationError(f"fov must lie in (0, 180), got {fov_deg}")
        fx = width / (2.0 * math.tan(math.radians(fov_deg) / 2.0))
        if world_to_camera is None:
            world_to_camera = np.eye(4)
        return cls(world_to_camera, fx, fx, width / 2.0, height / 2.0, width, height)

    @property
    def image_size(self) -> tuple[int, int]:
        return self.width, self.height

    @property
    def fov_deg(self) -> float:
        return math.degrees(2.0 * math.atan(self.width / (2.0 * self.fx)))

    @property
    def rotation(self) -> np.ndarray:
        return self.world_to_camera[:3, :3]

    @property
    def translation(self) -> np.ndarray:
        return self.world_to_camera[:3, 3]

    @property
    def center(self) -> np.ndarray:
        return -self.rotation.T @ self.translation

    def resized(self, width: int, height: int) -> Camera:
        """Same pose and field of view at another resolution."""
        sx, sy = width / self.width, height / self.height
        return Camera(self.world_to_camera, self.fx * sx, self.fy * sy,
                      self.cx * sx, self.cy * sy, width, height)

    def to_dict(self) -> dict:
        return {
            "world_to_camera": [float(v) for v in self.world_to_camera.ravel()],
            "fx": float(self.fx), "fy": float(self.fy),
            "cx": float(self.cx), "cy": float(self.cy),
            "W": self.width, "H": self.height,
        }


def camera_from_dict(entry: dict) -> Camera:
    try:
        W, H = int(entry["W"]), int(entry["H"])
        M = np.asarray(entry.get("world_to_camera", np.eye(4).ravel()), dtype=np.float64)
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"bad pose entry: {exc}") from exc
    if M.size != 16:
        raise FormatError("world_to_camera must hold 16 numbers")
    fov = entry.get("fov_deg")
    fx = entry.get("fx")
    if fx is None:
        if fov is None:
            raise FormatError("pose entry needs fx or fov_deg")
        fx = W / (2.0 * math.tan(math.radians(float(fov)) / 2.0))
    elif fov is not None:
        expect = math.tan(math.radians(float(fov)) / 2.0)
        if abs(expect - W / (2.0 * float(fx))) > 1e-6:
            raise ConfigurationError("fov_deg is inconsistent with fx")
    fy = entry.get("fy", fx)
    cx = entry.get("cx", W / 2.0)
    cy = entry.get("cy", H / 2.0)
    return Camera(M.reshape(4, 4), float(fx), float(fy), float(cx), float(cy), W, H)


def load_poses(path) -> list[Camera]:
    """Read a JSON array of camera entries, preserving order.

    Each entry holds ``world_to_camera`` (16 floats, row-major), ``W``, ``H``
    and either ``fx`` (optionally ``fy``, ``cx``, ``cy``) or ``fov_deg``.
    """
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: {exc}") from exc
    if isinstance(data, dict) and "poses" in data:
        data = data["poses"]
    if not isinstance(data, list):
        raise FormatError(f"{path}: expected a JSON array of poses")
    return [camera_from_dict(e) for e in data]


def write_poses(path, cameras) -> None:
    Path(path).write_text(json.dumps([c.to_dict() for c in cameras], indent=1))


def look_at(eye, target, up=(0.0, -1.0, 0.0)) -> np.ndarray:
    """World-to-camera matrix for a camera at ``eye`` looking at ``target``.

    ``up`` is the world direction that should appear at the top of the image
    (the camera's -y axis).
    """
    eye = np.asarray(eye, dtype=np.float64)
    f = np.asarray(target, dtype=np.float64) - eye
    f /= np.linalg.norm(f)
    down = -np.asarray(up, dtype=np.float64)
    r = np.cross(down, f)
    r /= np.linalg.norm(r)
    d = np.cross(f, r)
    R = np.stack([r, d, f])
    M = np.eye(4)
    M[:3, :3] = R
    M[:3, 3] = -R @ eye
    return M
