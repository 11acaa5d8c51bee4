"""Cell decompositions of the reference domain.

All domains live in reference coordinates.  The contracted inclusion is
obtained with :meth:`DiscreteDomain.scaled`, never meshed separately.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
from scipy.spatial import ConvexHull, QhullError
from scipy.spatial.distance import pdist

from .errors import ConfigurationError, DomainError, ParseError

__all__ = [
    "Cell",
    "DiscreteDomain",
    "make_ball",
    "make_box",
    "load_voxels",
    "export_voxels",
    "format_voxels",
    "eq_radius",
]


def eq_radius(volume):
    """Radius of the ball having the given volume."""
    return np.cbrt(3.0 * np.asarray(volume, dtype=float) / (4.0 * np.pi))


@dataclass(frozen=True)
class Cell:
    center: tuple[float, float, float]
    volume: float

    def __post_init__(self):
        if not self.volume > 0:
            raise DomainError(f"cell volume must be positive, got {self.volume}")

    @property
    def eq_radius(self) -> float:
        return float(eq_radius(self.volume))


@dataclass(frozen=True, eq=False)
class DiscreteDomain:
    """Immutable cell decomposition of a bounded domain containing the origin.

    ``centers`` is (n, 3), ``volumes`` is (n,), ``sides`` is (n, 3) with the
    edge lengths of every (box-shaped) cell.  When the cells sit on a uniform
    lattice, ``lattice_shape`` and ``lattice_index`` locate each cell on it so
    that convolution operators can be applied with FFTs.
    """

    centers: np.ndarray
    volumes: np.ndarray
    sides: np.ndarray
    kind: str
    params: dict
    diameter: float
    bbox_diagonal: float
    lattice_shape: tuple[int, int, int] | None = None
    lattice_index: np.ndarray | None = None
    lattice_origin: np.ndarray | None = None
    scale: float = 1.0
    total_volume: float = field(init=False)
    contains_origin: bool = field(init=False)

    def __post_init__(self):
        for name in ("centers", "volumes", "sides"):
            arr = np.ascontiguousarray(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if self.centers.ndim != 2 or self.centers.shape[1] != 3:
            raise DomainError("centers must have shape (n, 3)")
        if len(self.centers) == 0:
            raise DomainError("domain has no cells")
        if np.any(self.volumes <= 0):
            raise DomainError("cell volumes must be positive")
        object.__setattr__(self, "total_volume", float(math.fsum(self.volumes)))
        covered = np.all(np.abs(self.centers) <= 0.5 * self.sides * (1 + 1e-12), axis=1)
        object.__setattr__(self, "contains_origin", bool(covered.any()))

    @property
    def n(self) -> int:
        return len(self.volumes)

    @property
    def eq_radii(self) -> np.ndarray:
        return eq_radius(self.volumes)

    @property
    def cells(self) -> list[Cell]:
        return [Cell(tuple(c), float(v)) for c, v in zip(self.centers, self.volumes)]

    @property
    def mesh_id(self) -> str:
        items = ",".join(f"{k}={v}" for k, v in sorted(self.params.items()))
        tag = f"{self.kind}({items})"
        if self.scale != 1.0:
            tag += f"*{self.scale!r}"
        return tag

    @property
    def is_lattice(self) -> bool:
        return self.lattice_shape is not None

    @property
    def spacing(self) -> np.ndarray | None:
        return self.sides[0].copy() if self.is_lattice else None

    @property
    def circumradius(self) -> float:
        """Radius of a ball about the origin containing every cell."""
        return float(np.max(np.linalg.norm(self.centers, axis=1)
                            + 0.5 * np.linalg.norm(self.sides, axis=1)))

    @cached_property
    def distances(self) -> np.ndarray:
        """Dense matrix of center distances (cached, read-only)."""
        from scipy.spatial.distance import cdist

        d = cdist(self.centers, self.centers)
        d.setflags(write=False)
        return d

    def scaled(self, eps: float) -> "DiscreteDomain":
        """Image of the domain under x -> eps*x (cells scale exactly)."""
        if not eps > 0:
            raise ConfigurationError("scale factor must be positive")
        return DiscreteDomain(
            centers=self.centers * eps,
            volumes=self.volumes * eps**3,
            sides=self.sides * eps,
            kind=self.kind,
            params=dict(self.params),
            diameter=self.diameter * eps,
            bbox_diagonal=self.bbox_diagonal * eps,
            lattice_shape=self.lattice_shape,
            lattice_index=self.lattice_index,
            lattice_origin=None if self.lattice_origin is None else self.lattice_origin * eps,
            scale=self.scale * eps,
        )


def _grid(n_axis, lo, step):
    return lo + step * (np.arange(n_axis) + 0.5)


def _lattice_domain(mask, axes, spacing, kind, params, diameter, bbox_diag):
    X, Y, Z = np.meshgrid(*axes, indexing="ij")
    flat = np.flatnonzero(mask.ravel())
    centers = np.stack([X.ravel()[flat], Y.ravel()[flat], Z.ravel()[flat]], axis=1)
    vol = float(np.prod(spacing))
    return DiscreteDomain(
        centers=centers,
        volumes=np.full(len(flat), vol),
        sides=np.tile(spacing, (len(flat), 1)),
        kind=kind,
        params=params,
        diameter=diameter,
        bbox_diagonal=bbox_diag,
        lattice_shape=tuple(mask.shape),
        lattice_index=flat,
        lattice_origin=np.array([ax[0] for ax in axes]),
    )


def make_ball(radius: float, resolution: int) -> DiscreteDomain:
    """Voxelize the ball of given radius with ``resolution`` cells per axis.

    A cube of the bounding grid is kept when its center lies strictly inside
    the ball; kept cubes carry their full volume.
    """
    if not radius > 0:
        raise ConfigurationError(f"radius must be positive, got {radius}")
    if int(resolution) != resolution or resolution < 4:
        raise ConfigurationError(f"resolution must be an integer >= 4, got {resolution}")
    resolution = int(resolution)
    h = 2.0 * radius / resolution
    g = _grid(resolution, -radius, h)
    X, Y, Z = np.meshgrid(g, g, g, indexing="ij")
    mask = X**2 + Y**2 + Z**2 < radius**2
    return _lattice_domain(
        mask, (g, g, g), np.array([h, h, h]), "ball",
        {"radius": float(radius), "resolution": resolution},
        diameter=2.0 * radius, bbox_diag=2.0 * radius * math.sqrt(3.0),
    )


def make_box(extents, resolution: int) -> DiscreteDomain:
    """Exact tiling of the origin-centered box by resolution**3 cells."""
    ext = np.asarray(extents, dtype=float).reshape(-1)
    if ext.shape != (3,) or np.any(~(ext > 0)):
        raise ConfigurationError(f"box extents must be three positive numbers, got {extents}")
    if int(resolution) != resolution or resolution < 1:
        raise ConfigurationError(f"resolution must be a positive integer, got {resolution}")
    resolution = int(resolution)
    step = ext / resolution
    axes = tuple(_grid(resolution, -e / 2, s) for e, s in zip(ext, step))
    mask = np.ones((resolution,) * 3, dtype=bool)
    dom = _lattice_domain(
        mask, axes, step, "box",
        {"extents": tuple(float(e) for e in ext), "resolution": resolution},
        diameter=float(np.linalg.norm(ext)), bbox_diag=float(np.linalg.norm(ext)),
    )
    # exact tiling: |Omega| is the product of the extents
    object.__setattr__(dom, "total_volume", float(np.prod(ext)))
    return dom


def _max_center_distance(centers):
    if len(centers) < 2:
        return 0.0
    pts = centers
    if len(centers) > 64:
        try:
            pts = centers[ConvexHull(centers).vertices]
        except QhullError:
            pass  # degenerate (flat) point sets: fall back to all pairs
    return float(pdist(pts).max())


def _detect_lattice(centers, h):
    """Return (shape, index, origin) when cells sit on one uniform cubic grid."""
    if not np.allclose(h, h[0], rtol=1e-12, atol=0):
        return None
    step = float(h[0])
    lo = centers.min(axis=0)
    q = (centers - lo) / step
    iq = np.rint(q)
    if np.max(np.abs(q - iq)) > 1e-6:
        return None
    iq = iq.astype(np.int64)
    shape = tuple(int(s) for s in iq.max(axis=0) + 1)
    index = np.ravel_multi_index(iq.T, shape)
    if len(np.unique(index)) != len(index):
        return None
    return shape, index, lo


def load_voxels(path) -> DiscreteDomain:
    """Read a voxel file (``x y z h`` per line, ``#`` comments)."""
    path = Path(path)
    rows = []
    with path.open(encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 4:
                raise ParseError(f"expected 4 fields 'x y z h', got {len(parts)}", lineno)
            try:
                vals = [float(p) for p in parts]
            except ValueError as exc:
                raise ParseError(f"not a decimal number ({exc})", lineno) from None
            if not all(math.isfinite(v) for v in vals):
                raise ParseError("non-finite value", lineno)
            if not vals[3] > 0:
                raise ParseError(f"cube side must be positive, got {vals[3]}", lineno)
            rows.append(vals)
    if not rows:
        raise DomainError(f"{path}: no voxels")
    arr = np.array(rows)
    centers, h = arr[:, :3], arr[:, 3]
    lat = _detect_lattice(centers, h)
    lo = (centers - h[:, None] / 2).min(axis=0)
    hi = (centers + h[:, None] / 2).max(axis=0)
    bbox = float(np.linalg.norm(hi - lo))
    # both terms bound the true diameter from above; keep the sharper one
    diam = min(_max_center_distance(centers) + math.sqrt(3.0) * float(h.max()), bbox)
    dom = DiscreteDomain(
        centers=centers,
        volumes=h**3,
        sides=np.repeat(h[:, None], 3, axis=1),
        kind="voxel",
        params={"path": str(path)},
        diameter=diam,
        bbox_diagonal=bbox,
        lattice_shape=None if lat is None else lat[0],
        lattice_index=None if lat is None else lat[1],
        lattice_origin=None if lat is None else lat[2],
    )
    if not dom.contains_origin:
        raise DomainError(f"{path}: the voxels do not cover the origin")
    return dom


def format_voxels(domain: DiscreteDomain) -> str:
    """Voxel-file text for a domain made of cubes."""
    s = domain.sides
    if not np.allclose(s, s[:, :1], rtol=1e-12, atol=0):
        raise ConfigurationError("voxel format requires cubic cells")
    lines = ["# x y z h"]
    for (x, y, z), h in zip(domain.centers, s[:, 0]):
        lines.append(f"{x:.17g} {y:.17g} {z:.17g} {h:.17g}")
    return "\n".join(lines) + "\n"


def export_voxels(domain: DiscreteDomain, path) -> None:
    from .io import atomic_write_text

    atomic_write_text(path, format_voxels(domain))
