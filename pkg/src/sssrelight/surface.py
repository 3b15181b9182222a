"""Mesh loading, surface sampling, and quadtree flattening.

Surface samples are the mesh vertices with one third of each incident
triangle's area lumped onto them. For wavelet compression the samples are
split into m spatially coherent parts (recursive longest-axis median
bisection), each part arranged into a 2^n x 2^n grid by a balanced quadtree
whose leaves land in Morton order; unfilled cells are PAD and read as zero.
"""

from dataclasses import dataclass

import numpy as np

PAD = np.uint32(0xFFFFFFFF)


class MeshError(ValueError):
    pass


@dataclass(frozen=True)
class TriangleMesh:
    vertices: np.ndarray  # (V, 3) mm
    normals: np.ndarray  # (V, 3) unit
    triangles: np.ndarray  # (T, 3) int32

    @property
    def triangle_areas(self) -> np.ndarray:
        v = self.vertices
        t = self.triangles
        cross = np.cross(v[t[:, 1]] - v[t[:, 0]], v[t[:, 2]] - v[t[:, 0]])
        return 0.5 * np.linalg.norm(cross, axis=1)

    @property
    def total_area(self) -> float:
        return float(self.triangle_areas.sum())

    @property
    def bbox(self) -> tuple:
        return self.vertices.min(axis=0), self.vertices.max(axis=0)

    def content_hash(self) -> bytes:
        import hashlib

        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.vertices, np.float64).tobytes())
        h.update(np.ascontiguousarray(self.normals, np.float64).tobytes())
        h.update(np.ascontiguousarray(self.triangles, np.int32).tobytes())
        return h.digest()


@dataclass(frozen=True)
class SurfaceSamples:
    positions: np.ndarray  # (N, 3)
    normals: np.ndarray  # (N, 3)
    area: np.ndarray  # (N,) lumped mm^2
    source_vertex: np.ndarray  # (N,) int32

    @property
    def count(self) -> int:
        return int(self.positions.shape[0])


@dataclass(frozen=True)
class QuadtreeAtlas:
    """Bijection between samples and non-PAD cells of m flattened quadtrees."""

    part_count: int
    grid_side: int  # 2^n
    part_of: np.ndarray  # (N,) uint32
    cell_of: np.ndarray  # (N,) uint32, row * side + col
    inverse: np.ndarray  # (m, side, side) uint32 sample id or PAD

    @property
    def level(self) -> int:
        return int(self.grid_side).bit_length() - 1

    @property
    def cells_per_part(self) -> int:
        return self.grid_side * self.grid_side

    @property
    def sample_count(self) -> int:
        return int(self.part_of.shape[0])

    def pad_mask(self, part: int) -> np.ndarray:
        return self.inverse[part] == PAD

    def flatten(self, part: int, values: np.ndarray) -> np.ndarray:
        """Per-sample values -> 2^n x 2^n grid for one part; PAD cells are 0."""
        values = np.asarray(values, dtype=np.float64)
        if values.shape[0] != self.sample_count:
            raise ValueError("value vector does not cover the sample set")
        inv = self.inverse[part]
        grid = np.zeros((self.grid_side, self.grid_side), np.float64)
        filled = inv != PAD
        grid[filled] = values[inv[filled].astype(np.int64)]
        return grid

    def unflatten(self, part: int, grid: np.ndarray, out=None) -> np.ndarray:
        """Grid -> per-sample values (only this part's samples written)."""
        if grid.shape != (self.grid_side, self.grid_side):
            raise ValueError("grid shape does not match the atlas")
        if out is None:
            out = np.zeros(self.sample_count, np.float64)
        inv = self.inverse[part]
        filled = inv != PAD
        out[inv[filled].astype(np.int64)] = grid[filled]
        return out

    def flatten_all(self, values: np.ndarray) -> np.ndarray:
        """All parts at once: (m, side, side)."""
        return np.stack([self.flatten(p, values) for p in range(self.part_count)])

    def unflatten_all(self, grids: np.ndarray) -> np.ndarray:
        out = np.zeros(self.sample_count, np.float64)
        for p in range(self.part_count):
            self.unflatten(p, grids[p], out)
        return out


def compute_vertex_normals(vertices: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    normals = np.zeros_like(vertices)
    v0 = vertices[triangles[:, 0]]
    cross = np.cross(vertices[triangles[:, 1]] - v0, vertices[triangles[:, 2]] - v0)
    for axis in range(3):
        np.add.at(normals, triangles[:, axis], cross)  # |cross| = 2*area: area weighting
    lens = np.linalg.norm(normals, axis=1, keepdims=True)
    lens[lens == 0.0] = 1.0
    return normals / lens


def load_mesh(path) -> TriangleMesh:
    """Wavefront OBJ: v/vn/f records, polygons fan-triangulated.

    Vertices are deduplicated by exact position; normals come from the file
    when present (first reference wins) and are area-weighted face averages
    otherwise.
    """
    positions = []
    file_normals = []
    faces = []  # (vertex idx, normal idx or -1) triples
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            tag = parts[0]
            try:
                if tag == "v":
                    positions.append([float(parts[1]), float(parts[2]), float(parts[3])])
                elif tag == "vn":
                    file_normals.append([float(parts[1]), float(parts[2]), float(parts[3])])
                elif tag == "f":
                    refs = []
                    for token in parts[1:]:
                        fields = token.split("/")
                        vi = int(fields[0])
                        ni = int(fields[2]) if len(fields) >= 3 and fields[2] else 0
                        vi = vi - 1 if vi > 0 else len(positions) + vi
                        ni = ni - 1 if ni > 0 else (len(file_normals) + ni if ni else -1)
                        if vi < 0 or vi >= len(positions):
                            raise IndexError("vertex reference out of range")
                        refs.append((vi, ni))
                    if len(refs) < 3:
                        raise IndexError("face needs at least 3 vertices")
                    for a in range(1, len(refs) - 1):
                        faces.append((refs[0], refs[a], refs[a + 1]))
            except (ValueError, IndexError) as exc:
                raise MeshError(f"{path}: parse error on line {lineno}: {line!r}") from exc
    if not positions or not faces:
        raise MeshError(f"{path}: no geometry found")

    positions = np.asarray(positions, np.float64)
    uniq, remap = np.unique(positions, axis=0, return_inverse=True)
    tris = np.asarray(
        [[remap[a[0]], remap[b[0]], remap[c[0]]] for a, b, c in faces], np.int32
    )
    # drop degenerate triangles (repeated vertices or zero area)
    keep = (tris[:, 0] != tris[:, 1]) & (tris[:, 1] != tris[:, 2]) & (tris[:, 0] != tris[:, 2])
    tris = tris[keep]
    v0 = uniq[tris[:, 0]]
    area2 = np.linalg.norm(np.cross(uniq[tris[:, 1]] - v0, uniq[tris[:, 2]] - v0), axis=1)
    tris = tris[area2 > 0.0]
    if tris.shape[0] == 0:
        raise MeshError(f"{path}: all faces degenerate")

    if file_normals:
        fn = np.asarray(file_normals, np.float64)
        normals = np.zeros_like(uniq)
        seen = np.zeros(uniq.shape[0], bool)
        for face in faces:
            for vi, ni in face:
                m = remap[vi]
                if ni >= 0 and not seen[m]:
                    normals[m] = fn[ni]
                    seen[m] = True
        if not seen.all():
            fill = compute_vertex_normals(uniq, tris)
            normals[~seen] = fill[~seen]
        lens = np.linalg.norm(normals, axis=1, keepdims=True)
        lens[lens == 0.0] = 1.0
        normals = normals / lens
    else:
        normals = compute_vertex_normals(uniq, tris)
    return TriangleMesh(vertices=uniq, normals=normals, triangles=tris)


def sample_surface(mesh: TriangleMesh) -> SurfaceSamples:
    areas = mesh.triangle_areas
    lumped = np.zeros(mesh.vertices.shape[0])
    for axis in range(3):
        np.add.at(lumped, mesh.triangles[:, axis], areas / 3.0)
    used = lumped > 0.0
    idx = np.flatnonzero(used).astype(np.int32)
    return SurfaceSamples(
        positions=mesh.vertices[used],
        normals=mesh.normals[used],
        area=lumped[used],
        source_vertex=idx,
    )


def _median_split(indices: np.ndarray, coords: np.ndarray):
    """Split along the longest bbox axis into ceil/floor halves.

    Stable sort keys on the coordinate, so co-located points tie-break by
    input index.
    """
    pts = coords[indices]
    extent = pts.max(axis=0) - pts.min(axis=0)
    axis = int(np.argmax(extent))
    order = np.argsort(pts[:, axis], kind="stable")
    cut = (indices.size + 1) // 2
    return indices[order[:cut]], indices[order[cut:]]


def _partition(samples: SurfaceSamples, m: int):
    if m < 1:
        raise ValueError("m must be >= 1")
    levels = max(int(np.ceil(np.log2(m))), 0)
    part_count = 2 ** levels
    coords = samples.positions
    labels = np.zeros(samples.count, np.uint32)
    groups = [np.arange(samples.count, dtype=np.int64)]
    for _ in range(levels):
        nxt = []
        for g in groups:
            if g.size == 0:
                nxt.extend([g, g])
                continue
            a, b = _median_split(g, coords)
            nxt.extend([a, b])
        groups = nxt
    for label, g in enumerate(groups):
        labels[g] = label
    return labels, part_count


def partition_points(samples: SurfaceSamples, m: int) -> np.ndarray:
    """Balanced labels via recursive longest-axis median bisection.

    m is rounded up to a power of two internally; the trailing parts may be
    empty. Non-empty part sizes differ by at most one.
    """
    return _partition(samples, m)[0]


def _axis_split(indices: np.ndarray, coords: np.ndarray, cut: int):
    """Longest-axis spatial bisection at a fixed count (stable ties)."""
    pts = coords[indices]
    extent = pts.max(axis=0) - pts.min(axis=0)
    axis = int(np.argmax(extent))
    order = np.argsort(pts[:, axis], kind="stable")
    return indices[order[:cut]], indices[order[cut:]]


def _quadrant_split(indices: np.ndarray, coords: np.ndarray, child_capacity: int):
    """Two nested bisections -> 4 coherent quadrants, packed in Morton order.

    Earlier quadrants fill to capacity before later ones receive anything,
    so PAD cells stay contiguous at the Morton tail of every subtree. An
    evenly balanced split would instead scatter PAD holes through the grid,
    which wrecks the wavelet compressibility the atlas exists to provide.
    """
    cut = min(indices.size, 2 * child_capacity)
    first_a, first_b = _axis_split(indices, coords, cut)
    quads = []
    for half in (first_a, first_b):
        if half.size == 0:
            quads.extend([half, half])
        else:
            quads.extend(_axis_split(half, coords, min(half.size, child_capacity)))
    return quads


def _layout_part(indices: np.ndarray, coords: np.ndarray, side: int,
                 row0: int, col0: int, cell_of: np.ndarray, inverse: np.ndarray):
    if indices.size == 0:
        return
    if side == 1:
        sample = int(indices[0])
        cell_of[sample] = row0 * inverse.shape[0] + col0
        inverse[row0, col0] = sample
        return
    half = side // 2
    quads = _quadrant_split(indices, coords, half * half)
    # Morton child order: (0,0), (0,1), (1,0), (1,1)
    offsets = ((0, 0), (0, half), (half, 0), (half, half))
    for quad, (dr, dc) in zip(quads, offsets):
        _layout_part(quad, coords, half, row0 + dr, col0 + dc, cell_of, inverse)


def default_grid_level(sample_count: int, m: int) -> int:
    """Smallest n with m * 4^n >= sample count."""
    n = 0
    while m * (4 ** n) < sample_count:
        n += 1
    return n


def build_quadtree_atlas(samples: SurfaceSamples, m: int, n: int = None) -> QuadtreeAtlas:
    labels, part_count = _partition(samples, m)
    if n is None:
        n = default_grid_level(samples.count, part_count)
    side = 2 ** n
    capacity = side * side
    counts = np.bincount(labels, minlength=part_count)
    if counts.max(initial=0) > capacity:
        raise ValueError(
            f"part of {counts.max()} samples exceeds 4^n = {capacity}; raise n or m"
        )
    cell_of = np.zeros(samples.count, np.uint32)
    inverse = np.full((part_count, side, side), PAD, np.uint32)
    for p in range(part_count):
        members = np.flatnonzero(labels == p).astype(np.int64)
        _layout_part(members, samples.positions, side, 0, 0, cell_of, inverse[p])
    return QuadtreeAtlas(
        part_count=part_count,
        grid_side=side,
        part_of=labels,
        cell_of=cell_of,
        inverse=inverse,
    )
