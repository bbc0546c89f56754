"""Expected-colour quadrature along camera rays through a radiance field.

A field maps positions and view directions to a colour in [0, 1]^3 and a
density (per cm). Along a ray the samples ``t_k`` split ``[t_near, t_far]``
into bins of length ``delta_k`` (bin edges halfway between samples), and

    alpha_k = 1 - exp(-sigma_k * delta_k)
    T_k     = prod_{j<k} (1 - alpha_j)
    colour  = sum_k T_k * alpha_k * c_k

The remaining transmittance composites over black.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Protocol

import numpy as np

from .errors import InvalidBounds, InvalidInput, InvalidSpec, ParseError
from .geometry import Camera, Ray


class RadianceField(Protocol):
    def query(self, points: np.ndarray, directions: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """``(n, 3)`` positions and unit directions -> ``(n, 3)`` colours, ``(n,)`` densities."""


def _color(c):
    c = np.asarray(c, dtype=float).reshape(3)
    if np.any(~np.isfinite(c)) or np.any((c < 0) | (c > 1)):
        raise InvalidSpec("colour components must lie in [0, 1]")
    return c


def _density(s):
    s = float(s)
    if not np.isfinite(s) or s < 0:
        raise InvalidSpec("density must be finite and non-negative")
    return s


@dataclass(frozen=True)
class Homogeneous:
    """Constant density and colour everywhere."""

    sigma: float
    color: tuple = (1.0, 1.0, 1.0)

    def __post_init__(self):
        object.__setattr__(self, "sigma", _density(self.sigma))
        object.__setattr__(self, "color", tuple(_color(self.color)))

    def query(self, points, directions):
        n = len(points)
        return np.tile(np.array(self.color), (n, 1)), np.full(n, self.sigma)


@dataclass(frozen=True)
class Slab:
    """Constant medium between two parallel planes ``lo <= normal . x < hi``."""

    normal: tuple
    lo: float
    hi: float
    sigma: float
    color: tuple = (1.0, 1.0, 1.0)

    def __post_init__(self):
        n = np.asarray(self.normal, dtype=float).reshape(3)
        if not np.linalg.norm(n) > 0:
            raise InvalidSpec("slab normal must be non-zero")
        if not float(self.lo) < float(self.hi):
            raise InvalidSpec("slab needs lo < hi")
        object.__setattr__(self, "normal", tuple(n / np.linalg.norm(n)))
        object.__setattr__(self, "lo", float(self.lo))
        object.__setattr__(self, "hi", float(self.hi))
        object.__setattr__(self, "sigma", _density(self.sigma))
        object.__setattr__(self, "color", tuple(_color(self.color)))

    def query(self, points, directions):
        d = points @ np.array(self.normal)
        inside = (d >= self.lo) & (d < self.hi)
        return np.tile(np.array(self.color), (len(points), 1)), np.where(inside, self.sigma, 0.0)


@dataclass(frozen=True)
class Sphere:
    center: tuple
    radius: float
    sigma: float
    color: tuple = (1.0, 1.0, 1.0)

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(np.asarray(self.center, dtype=float).reshape(3)))
        if not float(self.radius) > 0:
            raise InvalidSpec("sphere radius must be positive")
        object.__setattr__(self, "radius", float(self.radius))
        object.__setattr__(self, "sigma", _density(self.sigma))
        object.__setattr__(self, "color", tuple(_color(self.color)))

    def query(self, points, directions):
        r2 = np.sum((points - np.array(self.center)) ** 2, axis=1)
        inside = r2 <= self.radius**2
        return np.tile(np.array(self.color), (len(points), 1)), np.where(inside, self.sigma, 0.0)


@dataclass(frozen=True)
class Composite:
    """Superposition of fields: densities add, colours mix by density."""

    parts: tuple

    def query(self, points, directions):
        n = len(points)
        sigma = np.zeros(n)
        weighted = np.zeros((n, 3))
        for part in self.parts:
            c, s = part.query(points, directions)
            sigma += s
            weighted += s[:, None] * c
        color = np.divide(weighted, sigma[:, None], out=np.zeros((n, 3)), where=sigma[:, None] > 0)
        return np.clip(color, 0.0, 1.0), sigma


def field_from_dict(doc) -> RadianceField:
    """Build a field from ``{"primitives": [{"type": "slab" | "sphere" | "homogeneous", ...}]}``."""
    if not isinstance(doc, dict) or not isinstance(doc.get("primitives"), list):
        raise InvalidSpec("field spec needs a 'primitives' list")
    unknown = set(doc) - {"primitives"}
    if unknown:
        raise InvalidSpec(f"unknown field spec keys: {sorted(unknown)}")
    kinds = {"homogeneous": Homogeneous, "slab": Slab, "sphere": Sphere}
    parts = []
    for i, p in enumerate(doc["primitives"]):
        if not isinstance(p, dict) or p.get("type") not in kinds:
            raise InvalidSpec(f"primitive {i}: type must be one of {sorted(kinds)}")
        args = {k: v for k, v in p.items() if k != "type"}
        try:
            parts.append(kinds[p["type"]](**args))
        except TypeError as exc:
            raise InvalidSpec(f"primitive {i}: {exc}") from None
    return parts[0] if len(parts) == 1 else Composite(tuple(parts))


@dataclass(frozen=True)
class RenderConfig:
    t_near: float = 0.0
    t_far: float = 1000.0
    sample_count: int = 128
    stratified: bool = False
    seed: int = 0
    threads: int = 1

    def __post_init__(self):
        tn, tf = float(self.t_near), float(self.t_far)
        if not (np.isfinite(tn) and np.isfinite(tf) and 0.0 <= tn < tf):
            raise InvalidBounds(f"need 0 <= t_near < t_far, got [{self.t_near}, {self.t_far}]")
        if int(self.sample_count) < 2:
            raise InvalidBounds("sample_count must be at least 2")
        if int(self.threads) < 1:
            raise InvalidInput("threads must be >= 1")
        object.__setattr__(self, "t_near", tn)
        object.__setattr__(self, "t_far", tf)
        object.__setattr__(self, "sample_count", int(self.sample_count))


def sample_depths(config: RenderConfig, rng=None, rays=1):
    """Sample depths ``(rays, S)`` and bin lengths ``(rays, S)``.

    Without stratification the samples are the bin midpoints of ``S`` equal
    bins; with it, each sample is drawn uniformly inside its bin. Bin edges
    are then placed halfway between neighbouring samples, so the lengths
    always sum to ``t_far - t_near``.
    """
    S = config.sample_count
    width = (config.t_far - config.t_near) / S
    base = config.t_near + width * np.arange(S)
    if config.stratified:
        if rng is None:
            rng = np.random.default_rng(config.seed)
        t = base + width * rng.random((rays, S))
    else:
        t = np.tile(base + 0.5 * width, (rays, 1))
    edges = np.empty((rays, S + 1))
    edges[:, 0] = config.t_near
    edges[:, -1] = config.t_far
    edges[:, 1:-1] = 0.5 * (t[:, 1:] + t[:, :-1])
    return t, np.diff(edges, axis=1)


def composite(colors, sigma, delta):
    """Alpha-composite samples along the last axis; returns ``(colour, opacity)``."""
    tau = sigma * delta
    alpha = -np.expm1(-tau)
    # T_k from the optical depth in front of sample k
    before = np.concatenate([np.zeros(tau.shape[:-1] + (1,)), np.cumsum(tau, axis=-1)[..., :-1]], axis=-1)
    w = np.exp(-before) * alpha
    rgb = np.einsum("...k,...kc->...c", w, colors)
    return np.clip(rgb, 0.0, 1.0), np.clip(w.sum(axis=-1), 0.0, 1.0)


def _render_rays(field, origins, directions, config, rng):
    t, delta = sample_depths(config, rng, len(origins))
    pts = origins[:, None, :] + t[..., None] * directions[:, None, :]
    dirs = np.broadcast_to(directions[:, None, :], pts.shape)
    c, s = field.query(pts.reshape(-1, 3), np.ascontiguousarray(dirs).reshape(-1, 3))
    c = np.asarray(c, dtype=float).reshape(pts.shape)
    s = np.asarray(s, dtype=float).reshape(t.shape)
    if np.any(s < 0) or np.any(~np.isfinite(s)):
        raise InvalidInput("field returned a negative or non-finite density")
    return composite(c, s, delta)[0]


def render_ray(field: RadianceField, ray: Ray, config: RenderConfig) -> np.ndarray:
    """Expected colour along one ray."""
    rng = np.random.default_rng(config.seed) if config.stratified else None
    return _render_rays(field, ray.origin[None], ray.direction[None], config, rng)[0]


def render_image(field: RadianceField, camera: Camera, config: RenderConfig) -> np.ndarray:
    """``(height, width, 3)`` image with one ray through each pixel centre.

    Stratified jitter is drawn from a generator seeded by ``(seed, row)``,
    so the image does not depend on how rows are distributed over threads.
    """
    w, h = camera.image_size
    u = np.arange(w) + 0.5

    def row(v):
        px = np.column_stack([u, np.full(w, v + 0.5)])
        dirs = camera.pixel_directions(px)
        origins = np.tile(camera.center, (w, 1))
        rng = np.random.default_rng([config.seed, v]) if config.stratified else None
        return _render_rays(field, origins, dirs, config, rng)

    if config.threads > 1 and h > 1:
        with ThreadPoolExecutor(config.threads) as pool:
            rows = list(pool.map(row, range(h)))
    else:
        rows = [row(v) for v in range(h)]
    return np.stack(rows)


def to_bytes(image) -> np.ndarray:
    """8-bit quantisation with round-half-to-even."""
    return np.rint(np.clip(np.asarray(image, dtype=float), 0.0, 1.0) * 255.0).astype(np.uint8)


def write_ppm(path, image):
    img = to_bytes(image)
    if img.ndim != 3 or img.shape[2] != 3:
        raise InvalidInput("image must have shape (height, width, 3)")
    h, w, _ = img.shape
    with open(path, "wb") as f:
        f.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        f.write(img.tobytes())


def read_ppm(path) -> np.ndarray:
    """Binary PPM written by :func:`write_ppm` back to ``uint8 (h, w, 3)``."""
    with open(path, "rb") as f:
        data = f.read()
    fields, pos = [], 0
    while len(fields) < 4:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise ParseError("truncated PPM header", 1, 1, str(path))
        fields.append(data[start:pos])
    pos += 1  # single whitespace byte before the raster
    if fields[0] != b"P6":
        raise ParseError("not a binary PPM file", 1, 1, str(path))
    try:
        w, h, maxval = (int(v) for v in fields[1:])
    except ValueError:
        raise ParseError("malformed PPM header", 1, 1, str(path)) from None
    if maxval != 255:
        raise ParseError("only 8-bit PPM is supported", 1, 1, str(path))
    pixels = data[pos:]
    if len(pixels) != w * h * 3:
        raise ParseError("PPM pixel data has the wrong length", 4, 1, str(path))
    return np.frombuffer(pixels, dtype=np.uint8).reshape(h, w, 3)
