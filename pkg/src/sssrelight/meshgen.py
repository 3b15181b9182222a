"""Procedural test meshes (desk-scale, mm units) and OBJ writing.

Three regimes for validation: a convex icosphere (no self-occlusion), a thin
slab (near-surface transport between opposing faces), and a torus (genuine
self-occlusion on the inner ring).
"""

import numpy as np

from .surface import TriangleMesh, compute_vertex_normals


def _dedup(vertices, triangles):
    uniq, remap = np.unique(np.round(vertices, 9), axis=0, return_inverse=True)
    tris = remap[np.asarray(triangles, np.int64)].astype(np.int32)
    keep = (tris[:, 0] != tris[:, 1]) & (tris[:, 1] != tris[:, 2]) & (tris[:, 0] != tris[:, 2])
    return uniq, tris[keep]


def make_icosphere(subdivisions: int = 3, radius: float = 10.0) -> TriangleMesh:
    phi = (1.0 + np.sqrt(5.0)) / 2.0
    verts = np.array([
        [-1, phi, 0], [1, phi, 0], [-1, -phi, 0], [1, -phi, 0],
        [0, -1, phi], [0, 1, phi], [0, -1, -phi], [0, 1, -phi],
        [phi, 0, -1], [phi, 0, 1], [-phi, 0, -1], [-phi, 0, 1],
    ], np.float64)
    verts /= np.linalg.norm(verts, axis=1, keepdims=True)
    faces = [
        (0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
        (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
        (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
        (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1),
    ]
    verts = list(verts)
    cache = {}

    def midpoint(a, b):
        key = (min(a, b), max(a, b))
        if key not in cache:
            p = (verts[a] + verts[b]) / 2.0
            p /= np.linalg.norm(p)
            cache[key] = len(verts)
            verts.append(p)
        return cache[key]

    for _ in range(subdivisions):
        nxt = []
        for a, b, c in faces:
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            nxt += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = nxt

    v = np.asarray(verts) * radius
    t = np.asarray(faces, np.int32)
    normals = v / np.linalg.norm(v, axis=1, keepdims=True)
    return TriangleMesh(vertices=v, normals=normals, triangles=t)


def make_slab(width: float = 20.0, depth: float = 20.0, thickness: float = 2.0,
              divisions: int = 15) -> TriangleMesh:
    """Axis-aligned thin box with gridded top/bottom faces, centered at origin."""
    verts = []
    tris = []

    def add_grid(axis_u, axis_v, axis_w, w_value, flip):
        base = len(verts)
        us = np.linspace(-0.5, 0.5, divisions + 1)
        vs = np.linspace(-0.5, 0.5, divisions + 1)
        size = {0: width, 1: depth, 2: thickness}
        for uu in us:
            for vv in vs:
                p = np.zeros(3)
                p[axis_u] = uu * size[axis_u]
                p[axis_v] = vv * size[axis_v]
                p[axis_w] = w_value
                verts.append(p)
        cols = divisions + 1
        for i in range(divisions):
            for j in range(divisions):
                a = base + i * cols + j
                b = a + 1
                c = a + cols
                d = c + 1
                if flip:
                    tris.extend([(a, c, b), (b, c, d)])
                else:
                    tris.extend([(a, b, c), (b, d, c)])

    hz = thickness / 2.0
    add_grid(0, 1, 2, hz, flip=False)   # top (+z)
    add_grid(0, 1, 2, -hz, flip=True)   # bottom (-z)
    side_div = 2
    hx, hy = width / 2.0, depth / 2.0

    def add_side(corner_a, corner_b):
        base = len(verts)
        for s in np.linspace(0.0, 1.0, side_div + 1):
            for z in np.linspace(-hz, hz, 2):
                p = corner_a + (corner_b - corner_a) * s
                p = np.array([p[0], p[1], z])
                verts.append(p)
        for i in range(side_div):
            a = base + i * 2
            tris.extend([(a, a + 2, a + 1), (a + 1, a + 2, a + 3)])

    ca = np.array([-hx, -hy])
    cb = np.array([hx, -hy])
    cc = np.array([hx, hy])
    cd = np.array([-hx, hy])
    for p, q in ((ca, cb), (cb, cc), (cc, cd), (cd, ca)):
        add_side(np.array([p[0], p[1]]), np.array([q[0], q[1]]))

    v, t = _dedup(np.asarray(verts), tris)
    # orient all faces outward (slab is star-shaped about the origin)
    e1 = v[t[:, 1]] - v[t[:, 0]]
    e2 = v[t[:, 2]] - v[t[:, 0]]
    centroid = (v[t[:, 0]] + v[t[:, 1]] + v[t[:, 2]]) / 3.0
    inward = np.einsum("ij,ij->i", np.cross(e1, e2), centroid) < 0.0
    t[inward] = t[inward][:, [0, 2, 1]]
    return TriangleMesh(vertices=v, normals=compute_vertex_normals(v, t), triangles=t)


def make_torus(major: float = 8.0, minor: float = 3.0, rings: int = 48,
               sides: int = 24) -> TriangleMesh:
    verts = []
    tris = []
    for i in range(rings):
        a = 2.0 * np.pi * i / rings
        ca, sa = np.cos(a), np.sin(a)
        for j in range(sides):
            b = 2.0 * np.pi * j / sides
            cb, sb = np.cos(b), np.sin(b)
            verts.append([(major + minor * cb) * ca, (major + minor * cb) * sa, minor * sb])
    for i in range(rings):
        for j in range(sides):
            a = i * sides + j
            b = i * sides + (j + 1) % sides
            c = ((i + 1) % rings) * sides + j
            d = ((i + 1) % rings) * sides + (j + 1) % sides
            tris += [(a, c, b), (b, c, d)]
    v = np.asarray(verts)
    t = np.asarray(tris, np.int32)
    return TriangleMesh(vertices=v, normals=compute_vertex_normals(v, t), triangles=t)


def save_obj(mesh: TriangleMesh, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("# generated desk-scale test mesh (mm)\n")
        for p in mesh.vertices:
            fh.write(f"v {float(p[0])!r} {float(p[1])!r} {float(p[2])!r}\n")
        for n in mesh.normals:
            fh.write(f"vn {float(n[0])!r} {float(n[1])!r} {float(n[2])!r}\n")
        for t in mesh.triangles:
            fh.write(f"f {t[0] + 1}//{t[0] + 1} {t[1] + 1}//{t[1] + 1} {t[2] + 1}//{t[2] + 1}\n")
