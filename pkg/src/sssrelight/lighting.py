"""Direct irradiance under point, directional, local-sphere, and ambient
lights, with CPU ray-cast visibility.

Irradiance folds the incident Fresnel transmittance (per the transfer
factorization the transport operator stays material-independent), so
E[i] already carries F_t(eta, cos) * max(cos, 0) per light sample. All
visibility is binary and exact against the triangle soup via a median-split
BVH; shadow-ray origins are offset 1e-4 * bbox-diagonal along the normal.
"""

from dataclasses import dataclass, field

import numpy as np

from . import _accel
from .dipole import fresnel_transmittance
from .envmap import Cubemap, face_directions, face_solid_angles
from .surface import SurfaceSamples, TriangleMesh
from .wavelets import SparseSpectrum, haar2d

_k = _accel.get_kernels()

_LEAF_SIZE = 4
RAY_OFFSET_SCALE = 1e-4  # of the bbox diagonal

SPHERE_LIGHT_SAMPLES = 64  # 8x8 midpoint-stratified cone grid


def _as_rgb(value) -> np.ndarray:
    return np.broadcast_to(np.asarray(value, np.float64), (3,)).copy()


@dataclass(frozen=True)
class PointLight:
    position: np.ndarray  # mm
    intensity: np.ndarray  # W/sr per channel

    def __post_init__(self):
        object.__setattr__(self, "position", np.asarray(self.position, np.float64))
        object.__setattr__(self, "intensity", _as_rgb(self.intensity))
        if np.any(self.intensity < 0.0):
            raise ValueError("intensity must be >= 0")


@dataclass(frozen=True)
class DirectionalLight:
    direction: np.ndarray  # propagation direction (light -> scene), unit
    irradiance: np.ndarray  # W/mm^2 per channel on a facing surface

    def __post_init__(self):
        d = np.asarray(self.direction, np.float64)
        n = np.linalg.norm(d)
        if n == 0.0:
            raise ValueError("direction must be nonzero")
        object.__setattr__(self, "direction", d / n)
        object.__setattr__(self, "irradiance", _as_rgb(self.irradiance))
        if np.any(self.irradiance < 0.0):
            raise ValueError("irradiance must be >= 0")


@dataclass(frozen=True)
class AmbientLight:
    environment: Cubemap


@dataclass(frozen=True)
class SphereLight:
    center: np.ndarray  # mm
    radius: float  # mm
    radiance: np.ndarray  # W/(sr mm^2) per channel

    def __post_init__(self):
        object.__setattr__(self, "center", np.asarray(self.center, np.float64))
        object.__setattr__(self, "radiance", _as_rgb(self.radiance))
        if self.radius < 0.0 or np.any(self.radiance < 0.0):
            raise ValueError("radius and radiance must be >= 0")


@dataclass(frozen=True)
class LightRig:
    lights: tuple

    def __post_init__(self):
        ambients = [l for l in self.lights if isinstance(l, AmbientLight)]
        if len(ambients) > 1:
            raise ValueError("at most one ambient light")
        object.__setattr__(self, "lights", tuple(self.lights))

    @property
    def ambient(self):
        for l in self.lights:
            if isinstance(l, AmbientLight):
                return l
        return None

    @property
    def direct_lights(self):
        return [l for l in self.lights if not isinstance(l, AmbientLight)]


class RayAccelerator:
    """Median-split BVH over the mesh triangles; any-hit queries only."""

    def __init__(self, mesh: TriangleMesh):
        v = mesh.vertices
        t = mesh.triangles
        tri_lo = np.minimum(np.minimum(v[t[:, 0]], v[t[:, 1]]), v[t[:, 2]])
        tri_hi = np.maximum(np.maximum(v[t[:, 0]], v[t[:, 1]]), v[t[:, 2]])
        centroids = (tri_lo + tri_hi) / 2.0
        n_tris = t.shape[0]
        order = np.arange(n_tris, dtype=np.int64)

        node_min, node_max = [], []
        node_left, node_right, node_start, node_count = [], [], [], []

        def new_node():
            node_min.append(np.zeros(3))
            node_max.append(np.zeros(3))
            node_left.append(-1)
            node_right.append(-1)
            node_start.append(0)
            node_count.append(0)
            return len(node_min) - 1

        root = new_node()
        stack = [(root, 0, n_tris)]
        while stack:
            node, lo, hi = stack.pop()
            ids = order[lo:hi]
            node_min[node] = tri_lo[ids].min(axis=0)
            node_max[node] = tri_hi[ids].max(axis=0)
            if hi - lo <= _LEAF_SIZE:
                node_start[node] = lo
                node_count[node] = hi - lo
                continue
            extent = centroids[ids].max(axis=0) - centroids[ids].min(axis=0)
            axis = int(np.argmax(extent))
            local = np.argsort(centroids[ids, axis], kind="stable")
            order[lo:hi] = ids[local]
            mid = (lo + hi) // 2
            left = new_node()
            right = new_node()
            node_left[node] = left
            node_right[node] = right
            stack.append((left, lo, mid))
            stack.append((right, mid, hi))

        self.node_min = np.asarray(node_min, np.float64)
        self.node_max = np.asarray(node_max, np.float64)
        self.node_left = np.asarray(node_left, np.int64)
        self.node_right = np.asarray(node_right, np.int64)
        self.node_start = np.asarray(node_start, np.int64)
        self.node_count = np.asarray(node_count, np.int64)
        self.v0 = np.ascontiguousarray(v[t[order, 0]], np.float64)
        self.e1 = np.ascontiguousarray(v[t[order, 1]] - v[t[order, 0]], np.float64)
        self.e2 = np.ascontiguousarray(v[t[order, 2]] - v[t[order, 0]], np.float64)
        lo, hi = mesh.bbox
        self.bbox_diagonal = float(np.linalg.norm(hi - lo))
        self.ray_offset = RAY_OFFSET_SCALE * self.bbox_diagonal

    def any_hit(self, origins, dirs, tmax) -> np.ndarray:
        origins = np.ascontiguousarray(origins, np.float64)
        dirs = np.ascontiguousarray(dirs, np.float64)
        tmax = np.ascontiguousarray(tmax, np.float64)
        return _k.bvh_any_hit(
            origins, dirs, tmax,
            self.node_min, self.node_max, self.node_left, self.node_right,
            self.node_start, self.node_count, self.v0, self.e1, self.e2,
        )


def build_accelerator(mesh: TriangleMesh) -> RayAccelerator:
    return RayAccelerator(mesh)


def brute_force_any_hit(mesh: TriangleMesh, origins, dirs, tmax) -> np.ndarray:
    """All-triangles reference used to validate the accelerator."""
    from ._kernels_np import _tri_any_hit

    v = mesh.vertices
    t = mesh.triangles
    v0 = v[t[:, 0]]
    e1 = v[t[:, 1]] - v0
    e2 = v[t[:, 2]] - v0
    out = np.zeros(origins.shape[0], bool)
    for i in range(origins.shape[0]):
        o = np.broadcast_to(origins[i], v0.shape)
        d = np.broadcast_to(dirs[i], v0.shape)
        tm = np.full(v0.shape[0], tmax[i])
        out[i] = bool(_tri_any_hit(o, d, tm, v0, e1, e2).any())
    return out


def _cone_strata():
    side = int(np.sqrt(SPHERE_LIGHT_SAMPLES))
    u = (np.arange(side) + 0.5) / side
    u1, u2 = np.meshgrid(u, u, indexing="ij")
    return u1.ravel(), u2.ravel()


def _orthonormal_frame(axis):
    helper = np.where(np.abs(axis[..., 2:3]) < 0.9, [0.0, 0.0, 1.0], [1.0, 0.0, 0.0])
    t1 = np.cross(axis, helper)
    t1 /= np.linalg.norm(t1, axis=-1, keepdims=True)
    t2 = np.cross(axis, t1)
    return t1, t2


def irradiance_direct(samples: SurfaceSamples, rig: LightRig,
                      accel: RayAccelerator, eta: float) -> np.ndarray:
    """Fresnel- and cosine-weighted direct irradiance, (N, 3) W/mm^2.

    Handles point/directional/sphere lights; the ambient term runs through
    the precomputed visibility path instead.
    """
    n = samples.count
    e_out = np.zeros((n, 3))
    pos = samples.positions
    nrm = samples.normals
    origins = pos + accel.ray_offset * nrm
    for light in rig.direct_lights:
        if isinstance(light, PointLight):
            dvec = light.position[None, :] - pos
            dist = np.linalg.norm(dvec, axis=1)
            wi = dvec / dist[:, None]
            cos = np.einsum("ij,ij->i", nrm, wi)
            lit = cos > 0.0
            vis = np.zeros(n, bool)
            if lit.any():
                vis[lit] = ~accel.any_hit(origins[lit], wi[lit], dist[lit])
            weight = np.where(lit & vis,
                              fresnel_transmittance(eta, np.clip(cos, 0.0, 1.0))
                              * np.clip(cos, 0.0, 1.0) / (dist * dist), 0.0)
            e_out += weight[:, None] * light.intensity[None, :]
        elif isinstance(light, DirectionalLight):
            wi = -light.direction
            cos = nrm @ wi
            lit = cos > 0.0
            vis = np.zeros(n, bool)
            if lit.any():
                far = np.full(int(lit.sum()), 4.0 * accel.bbox_diagonal + 1.0)
                vis[lit] = ~accel.any_hit(origins[lit], np.tile(wi, (int(lit.sum()), 1)), far)
            weight = np.where(lit & vis,
                              fresnel_transmittance(eta, np.clip(cos, 0.0, 1.0))
                              * np.clip(cos, 0.0, 1.0), 0.0)
            e_out += weight[:, None] * light.irradiance[None, :]
        elif isinstance(light, SphereLight):
            e_out += _sphere_light_irradiance(samples, light, accel, eta, origins)
        else:
            raise TypeError(f"unsupported light {type(light).__name__}")
    return e_out


def _sphere_light_irradiance(samples, light, accel, eta, origins):
    pos = samples.positions
    nrm = samples.normals
    n = samples.count
    axis = light.center[None, :] - pos
    dist = np.linalg.norm(axis, axis=1)
    if np.any(dist <= light.radius):
        raise ValueError("sphere light overlaps the surface")
    axis = axis / dist[:, None]
    sin_max = light.radius / dist
    cos_max = np.sqrt(np.clip(1.0 - sin_max * sin_max, 0.0, 1.0))
    omega = 2.0 * np.pi * (1.0 - cos_max)  # cone solid angle
    u1, u2 = _cone_strata()
    t1, t2 = _orthonormal_frame(axis)
    # uniform directions in each cone (midpoint strata, deterministic)
    ct = 1.0 - u1[None, :] * (1.0 - cos_max[:, None])  # (N, S)
    st = np.sqrt(np.clip(1.0 - ct * ct, 0.0, 1.0))
    phi = 2.0 * np.pi * u2[None, :]
    dirs = (axis[:, None, :] * ct[..., None]
            + t1[:, None, :] * (st * np.cos(phi))[..., None]
            + t2[:, None, :] * (st * np.sin(phi))[..., None])
    cos = np.einsum("ij,isj->is", nrm, dirs)
    lit = cos > 0.0
    # distance to the sphere's near surface along each sampled ray
    proj = dist[:, None] * ct
    under = proj * proj - (dist * dist - light.radius * light.radius)[:, None]
    t_hit = proj - np.sqrt(np.clip(under, 0.0, None))
    vis = np.zeros_like(lit)
    if lit.any():
        ray_o = np.repeat(origins, len(u1), axis=0)[lit.ravel()]
        vis[lit] = ~accel.any_hit(ray_o, dirs[lit], t_hit[lit])
    weight = np.where(
        lit & vis,
        fresnel_transmittance(eta, np.clip(cos, 0.0, 1.0)) * np.clip(cos, 0.0, 1.0),
        0.0,
    ).mean(axis=1) * omega
    return weight[:, None] * light.radiance[None, :]


def project_environment(cubemap: Cubemap, n_keep: int = 128):
    """Per-channel Haar spectra of the cubemap, top-n_keep truncated.

    Returns three SparseSpectrum over the concatenated 6 * s^2 domain.
    """
    from .wavelets import compress_top_n

    s = cubemap.side
    out = []
    for c in range(3):
        coeffs = haar2d(np.ascontiguousarray(cubemap.faces[..., c]))
        out.append(compress_top_n(coeffs.reshape(-1), n_keep))
    return out


def reconstruct_environment(spectra, side: int) -> Cubemap:
    from .wavelets import haar2d_inverse

    faces = np.empty((6, side, side, 3))
    for c in range(3):
        dense = spectra[c].to_dense().reshape(6, side, side)
        faces[..., c] = haar2d_inverse(dense)
    return Cubemap(faces=faces)


def visibility_weights(samples: SurfaceSamples, visibility: np.ndarray,
                       side: int, eta: float) -> np.ndarray:
    """Fold cosine, Fresnel, and texel solid angle into the visibility matrix.

    visibility: (N, 6*s*s) in [0,1]; the result maps cubemap radiance texels
    directly to irradiance: E = W @ L.
    """
    dirs = face_directions(side).reshape(-1, 3)
    dom = face_solid_angles(side).reshape(-1)
    cos = samples.normals @ dirs.T
    cosp = np.clip(cos, 0.0, 1.0)
    return visibility * fresnel_transmittance(eta, cosp) * cosp * dom[None, :]


def ambient_irradiance_dense(samples: SurfaceSamples, weights: np.ndarray,
                             cubemap: Cubemap) -> np.ndarray:
    """Unfolded reference path: E = W @ L per channel, (N, 3)."""
    radiance = cubemap.faces.reshape(-1, 3)
    return weights @ radiance
