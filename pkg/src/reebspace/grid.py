"""Sampled multivariate fields on regular 2D/3D lattices.

A grid stores r scalar sample arrays in x-fastest order.  Cells are
decomposed into simplices with a diagonal-consistent (Kuhn) subdivision:
six tetrahedra per hexahedral cell in 3D, two triangles per quad in 2D,
always using the min-corner to max-corner diagonal.  Neighbouring cells
therefore induce identical triangulations of their shared face, which the
fragment gluing stage relies on.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterator, Sequence

import numpy as np

__all__ = [
    "MultiFieldGrid",
    "FieldSpec",
    "Simplex",
    "GridError",
    "GridFileError",
    "SYNTHETIC_FIELDS",
    "generate_field",
    "simplices",
    "simplex_arrays",
    "write_field_file",
    "read_field_file",
]


class GridError(ValueError):
    """Invalid grid construction parameters."""


class GridFileError(ValueError):
    """Malformed or unreadable field file."""


# Closed-form synthetic fields used by the generator and the test corpus.
SYNTHETIC_FIELDS: dict[str, Callable] = {
    "circle": lambda x, y, z: x * x + y * y,
    "line": lambda x, y, z: y,
    "sphere": lambda x, y, z: x * x + y * y + z * z,
    "paraboloid": lambda x, y, z: x * x + y * y - z,
    "height": lambda x, y, z: z,
    "cubic_pair_first": lambda x, y, z: y * y * y - x * y + z * z,
    "cubic_pair_second": lambda x, y, z: x,
    "quartic": lambda x, y, z: (
        x ** 4 + y ** 4 + z ** 4 - 5.0 * (x * x + y * y + z * z) + 10.0
    ),
}


@dataclass(frozen=True)
class FieldSpec:
    """One synthetic scalar field, selected by name."""

    kind: str

    def __post_init__(self):
        if self.kind not in SYNTHETIC_FIELDS:
            raise GridError(
                f"unknown field kind {self.kind!r}; known: {sorted(SYNTHETIC_FIELDS)}"
            )

    def evaluate(self, x, y, z):
        return SYNTHETIC_FIELDS[self.kind](x, y, z)


@dataclass
class MultiFieldGrid:
    """Regular lattice of multivariate samples.

    dims:    sample counts per axis (nx, ny, nz), each >= 1
    origin:  position of sample (0, 0, 0)
    spacing: sample step per axis (> 0; degenerate axes use 1.0)
    samples: one flat float64 array per field, length nx*ny*nz, x-fastest
    """

    dims: tuple[int, int, int]
    origin: tuple[float, float, float]
    spacing: tuple[float, float, float]
    samples: list[np.ndarray]
    field_names: tuple[str, ...] = ()

    def __post_init__(self):
        self.dims = tuple(int(n) for n in self.dims)
        self.origin = tuple(float(v) for v in self.origin)
        self.spacing = tuple(float(v) for v in self.spacing)
        if len(self.dims) != 3 or any(n < 1 for n in self.dims):
            raise GridError(f"dims must be three counts >= 1, got {self.dims}")
        if any(not (s > 0.0) for s in self.spacing):
            raise GridError(f"spacing must be positive, got {self.spacing}")
        n = self.point_count
        if not self.samples:
            raise GridError("at least one sample array is required")
        self.samples = [np.ascontiguousarray(a, dtype=np.float64).ravel() for a in self.samples]
        for i, a in enumerate(self.samples):
            if a.size != n:
                raise GridError(f"field {i} has {a.size} samples, expected {n}")
            if not np.all(np.isfinite(a)):
                raise GridError(f"field {i} contains non-finite samples")
        if not self.field_names:
            self.field_names = tuple(f"f{i}" for i in range(len(self.samples)))
        if len(self.field_names) != len(self.samples):
            raise GridError("field_names length must match the number of fields")

    @property
    def field_count(self) -> int:
        return len(self.samples)

    @property
    def point_count(self) -> int:
        nx, ny, nz = self.dims
        return nx * ny * nz

    @property
    def dimension(self) -> int:
        """2 when the grid is a single z-slice, else 3."""
        return 2 if self.dims[2] == 1 else 3

    @property
    def cell_counts(self) -> tuple[int, int, int]:
        return tuple(max(n - 1, 1) if n > 1 else 1 for n in self.dims)

    @property
    def domain_measure(self) -> float:
        """Area (2D) or volume (3D) covered by the lattice."""
        nx, ny, nz = self.dims
        measure = (nx - 1) * self.spacing[0] * (ny - 1) * self.spacing[1]
        if self.dimension == 3:
            measure *= (nz - 1) * self.spacing[2]
        return float(measure)

    def point_id(self, i: int, j: int, k: int) -> int:
        nx, ny, _ = self.dims
        return i + nx * (j + ny * k)

    def point_coords(self, ids: np.ndarray) -> np.ndarray:
        nx, ny, _ = self.dims
        ids = np.asarray(ids)
        i = ids % nx
        j = (ids // nx) % ny
        k = ids // (nx * ny)
        out = np.empty(ids.shape + (3,), dtype=np.float64)
        out[..., 0] = self.origin[0] + i * self.spacing[0]
        out[..., 1] = self.origin[1] + j * self.spacing[1]
        out[..., 2] = self.origin[2] + k * self.spacing[2]
        return out

    def values_at(self, ids: np.ndarray) -> np.ndarray:
        """Sample tuples at point ids, shape ``ids.shape + (r,)``."""
        ids = np.asarray(ids)
        out = np.empty(ids.shape + (self.field_count,), dtype=np.float64)
        for f, arr in enumerate(self.samples):
            out[..., f] = arr[ids]
        return out


@dataclass(frozen=True)
class Simplex:
    """One triangle or tetrahedron of the cell decomposition."""

    simplex_id: int
    vertex_ids: tuple[int, ...]
    vertices: np.ndarray  # (d+1, 3) coordinates

    @property
    def measure(self) -> float:
        v = self.vertices
        if len(self.vertex_ids) == 3:
            e1 = v[1] - v[0]
            e2 = v[2] - v[0]
            return abs(e1[0] * e2[1] - e1[1] * e2[0]) / 2.0
        m = v[1:] - v[0]
        return abs(float(np.linalg.det(m))) / 6.0


def generate_field(
    specs: Sequence[FieldSpec | str],
    dims: Sequence[int],
    bounds: Sequence[tuple[float, float]],
) -> MultiFieldGrid:
    """Sample synthetic fields on a lattice covering ``bounds``.

    ``bounds`` is ((x0, x1), (y0, y1), (z0, z1)).  An axis with a single
    sample must have zero extent; an axis with more than one sample must
    have positive extent.
    """
    specs = [s if isinstance(s, FieldSpec) else FieldSpec(s) for s in specs]
    if not specs:
        raise GridError("at least one field spec is required")
    dims = tuple(int(n) for n in dims)
    if len(dims) != 3:
        raise GridError(f"dims must have three entries, got {dims}")
    if len(bounds) != 3:
        raise GridError(f"bounds must have three (lo, hi) pairs, got {bounds}")
    origin = []
    spacing = []
    for axis, (n, (lo, hi)) in enumerate(zip(dims, bounds)):
        extent = float(hi) - float(lo)
        if n < 1:
            raise GridError(f"axis {axis}: sample count must be >= 1")
        if n == 1:
            if extent != 0.0:
                raise GridError(f"axis {axis}: single-sample axis must have zero extent")
            origin.append(float(lo))
            spacing.append(1.0)
        else:
            if extent <= 0.0:
                raise GridError(f"axis {axis}: need positive extent for {n} samples")
            origin.append(float(lo))
            spacing.append(extent / (n - 1))
    nx, ny, nz = dims
    xs = origin[0] + spacing[0] * np.arange(nx)
    ys = origin[1] + spacing[1] * np.arange(ny)
    zs = origin[2] + spacing[2] * np.arange(nz) if nz > 1 else np.array([origin[2]])
    zz, yy, xx = np.meshgrid(zs, ys, xs, indexing="ij")
    samples = [np.asarray(s.evaluate(xx, yy, zz), dtype=np.float64).ravel() for s in specs]
    return MultiFieldGrid(
        dims=dims,
        origin=tuple(origin),
        spacing=tuple(spacing),
        samples=samples,
        field_names=tuple(s.kind for s in specs),
    )


# Vertex-insertion orders of the Kuhn subdivision.  Each row lists the axis
# added at each step while walking the min corner to the max corner.
_PERMS_3D = ((0, 1, 2), (0, 2, 1), (1, 0, 2), (1, 2, 0), (2, 0, 1), (2, 1, 0))
_PERMS_2D = ((0, 1), (1, 0))


def _corner_offsets(dimension: int) -> np.ndarray:
    """(n_simplices_per_cell, d+1, 3) corner offsets within one cell."""
    perms = _PERMS_3D if dimension == 3 else _PERMS_2D
    out = np.zeros((len(perms), dimension + 1, 3), dtype=np.int64)
    for t, perm in enumerate(perms):
        corner = np.zeros(3, dtype=np.int64)
        out[t, 0] = corner
        for step, axis in enumerate(perm):
            corner = corner.copy()
            corner[axis] = 1
            out[t, step + 1] = corner
    return out


def simplex_arrays(grid: MultiFieldGrid) -> np.ndarray:
    """Global vertex ids of every simplex, shape (n_simplices, d+1).

    Simplices are ordered cell-by-cell (x-fastest) with a fixed subdivision
    order inside each cell, so ids are stable across runs.
    """
    nx, ny, nz = grid.dims
    d = grid.dimension
    if (d == 3 and (nx < 2 or ny < 2 or nz < 2)) or (d == 2 and (nx < 2 or ny < 2)):
        raise GridError(f"grid {grid.dims} has no cells to decompose")
    offsets = _corner_offsets(d)
    cx, cy, cz = nx - 1, ny - 1, (nz - 1 if d == 3 else 1)
    ci = np.arange(cx)
    cj = np.arange(cy)
    ck = np.arange(cz)
    kk, jj, ii = np.meshgrid(ck, cj, ci, indexing="ij")
    base = np.stack([ii.ravel(), jj.ravel(), kk.ravel()], axis=1)  # (ncells, 3)
    corners = base[:, None, None, :] + offsets[None, :, :, :]  # (ncells, nper, d+1, 3)
    ids = (
        corners[..., 0]
        + nx * (corners[..., 1] + ny * corners[..., 2])
    )
    return ids.reshape(-1, d + 1).astype(np.int64)


def simplices(grid: MultiFieldGrid) -> Iterator[Simplex]:
    """Iterate the cell decomposition as :class:`Simplex` objects."""
    ids = simplex_arrays(grid)
    for s in range(ids.shape[0]):
        vid = tuple(int(v) for v in ids[s])
        yield Simplex(simplex_id=s, vertex_ids=vid, vertices=grid.point_coords(ids[s]))


_MAGIC = "REEBGRID 1"


def write_field_file(grid: MultiFieldGrid, path) -> None:
    """Write the text field format: header then one block of reals per field."""
    with open(path, "w", encoding="ascii") as fh:
        fh.write(f"{_MAGIC}\n")
        fh.write("dims {} {} {}\n".format(*grid.dims))
        fh.write("origin {!r} {!r} {!r}\n".format(*grid.origin))
        fh.write("spacing {!r} {!r} {!r}\n".format(*grid.spacing))
        fh.write(f"fields {grid.field_count}\n")
        for name in grid.field_names:
            fh.write(f"name {name}\n")
        for name, arr in zip(grid.field_names, grid.samples):
            fh.write(f"data {name}\n")
            for start in range(0, arr.size, 8):
                fh.write(" ".join(repr(float(v)) for v in arr[start : start + 8]))
                fh.write("\n")


def read_field_file(path) -> MultiFieldGrid:
    try:
        with open(path, "r", encoding="ascii") as fh:
            text = fh.read()
    except OSError as exc:
        raise GridFileError(f"cannot read field file {path}: {exc}") from exc
    tokens = text.split()
    pos = 0

    def take(n: int, what: str) -> list[str]:
        nonlocal pos
        if pos + n > len(tokens):
            raise GridFileError(f"field file truncated while reading {what}")
        out = tokens[pos : pos + n]
        pos += n
        return out

    magic = take(2, "magic")
    if " ".join(magic) != _MAGIC:
        raise GridFileError(f"bad magic {' '.join(magic)!r}, expected {_MAGIC!r}")

    def keyword(expected: str):
        got = take(1, f"keyword {expected!r}")[0]
        if got != expected:
            raise GridFileError(f"expected keyword {expected!r}, got {got!r}")

    def ints(n: int, what: str) -> list[int]:
        raw = take(n, what)
        try:
            return [int(v) for v in raw]
        except ValueError as exc:
            raise GridFileError(f"bad integer in {what}: {raw}") from exc

    def floats(n: int, what: str) -> list[float]:
        raw = take(n, what)
        try:
            return [float(v) for v in raw]
        except ValueError as exc:
            raise GridFileError(f"bad real in {what}: {raw}") from exc

    keyword("dims")
    dims = ints(3, "dims")
    keyword("origin")
    origin = floats(3, "origin")
    keyword("spacing")
    spacing = floats(3, "spacing")
    keyword("fields")
    r = ints(1, "field count")[0]
    if r < 1:
        raise GridFileError(f"field count must be >= 1, got {r}")
    names = []
    for _ in range(r):
        keyword("name")
        names.append(take(1, "field name")[0])
    npts = dims[0] * dims[1] * dims[2]
    samples = []
    for name in names:
        keyword("data")
        got = take(1, "data field name")[0]
        if got != name:
            raise GridFileError(f"data block for {got!r} does not match header name {name!r}")
        samples.append(np.array(floats(npts, f"samples of {name}"), dtype=np.float64))
    if pos != len(tokens):
        raise GridFileError(f"{len(tokens) - pos} trailing tokens after last data block")
    try:
        return MultiFieldGrid(
            dims=tuple(dims),
            origin=tuple(origin),
            spacing=tuple(spacing),
            samples=samples,
            field_names=tuple(names),
        )
    except GridError as exc:
        raise GridFileError(str(exc)) from exc
