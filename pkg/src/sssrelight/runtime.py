"""The per-frame loop: irradiance, compressed transfer, material weighting,
inverse spatial transform, shading, and software rasterization.

Stages per frame (per RGB channel):
  1. direct irradiance E, flattened and Haar-projected (then truncated),
  2. per-basis sparse apply -> response coefficients in the spatial wavelet
     domain (plus the folded ambient term when an environment is lit),
  3. material weights from the radial-basis projection,
  4. weighted sum over bases,
  5. single inverse 9/7 + unflatten, then the view-dependent Fresnel shade.

Editing the material re-runs only stages 3-5 against the cached stage-2
vectors, which is what makes material edits interactive.
"""

import time
from dataclasses import dataclass, field

import numpy as np

from . import _accel
from .basisgen import DiffusionBasis, project_material
from .container import Container
from .dipole import OpticalMaterial, fresnel_transmittance
from .envmap import linear_to_srgb
from .lighting import LightRig, RayAccelerator, irradiance_direct, project_environment
from .surface import SurfaceSamples, TriangleMesh
from .transfer import atlas_flat_cells, w0_forward, w1_inverse
from .wavelets import compress_top_n

_k = _accel.get_kernels()

DEFAULT_E_KEEP = 0.25  # fraction of irradiance coefficients kept
ENV_COEFF_KEEP = 128  # truncation of the w2 environment spectrum

STAGES = ("irradiance", "transfer", "weighting", "inverse_wavelet", "raster")


@dataclass
class Camera:
    position: np.ndarray
    look_at: np.ndarray
    up: np.ndarray = field(default_factory=lambda: np.array([0.0, 1.0, 0.0]))
    fov_y_degrees: float = 40.0

    def __post_init__(self):
        self.position = np.asarray(self.position, np.float64)
        self.look_at = np.asarray(self.look_at, np.float64)
        self.up = np.asarray(self.up, np.float64)
        if np.linalg.norm(self.look_at - self.position) == 0.0:
            raise ValueError("camera position and look-at coincide")
        if not 0.0 < self.fov_y_degrees < 180.0:
            raise ValueError("vertical FOV must lie in (0, 180)")


@dataclass
class FrameResult:
    radiance: np.ndarray  # (N, 3) outgoing, clamped at >= 0
    radiance_unclamped: np.ndarray
    timings_ms: dict
    kept_energy_ratio: float
    sequence: int = 0


class Scene:
    """Owns the full relight state and the stage-2 cache for fast edits."""

    def __init__(self, mesh: TriangleMesh, samples: SurfaceSamples,
                 container: Container, accel: RayAccelerator,
                 material: OpticalMaterial, rig: LightRig, camera: Camera,
                 e_keep: float = DEFAULT_E_KEEP):
        if container.mesh_hash != mesh.content_hash():
            raise ValueError("container was precomputed for a different mesh")
        if container.atlas.sample_count != samples.count:
            raise ValueError("sample count mismatch between container and mesh")
        self.mesh = mesh
        self.samples = samples
        self.container = container
        self.accel = accel
        self.rig = rig
        self.camera = camera
        self.e_keep = e_keep
        self.material = self._clamp_material(material)
        self._flat_cells = atlas_flat_cells(container.atlas)
        self._vk_cache = None  # (K, 3, domain) stage-2 outputs
        self._cache_energy = 0.0

    @property
    def basis(self) -> DiffusionBasis:
        return self.container.basis

    def _clamp_material(self, material: OpticalMaterial) -> OpticalMaterial:
        lo_p, hi_p, lo_a, hi_a = self.container.basis.sigma_box
        sp = np.clip(material.sigma_s_prime, lo_p, hi_p)
        sa = np.clip(material.sigma_a, lo_a, hi_a)
        if not (np.array_equal(sp, material.sigma_s_prime)
                and np.array_equal(sa, material.sigma_a)):
            import warnings

            warnings.warn("material clamped to the basis sigma box", stacklevel=3)
            return OpticalMaterial(sigma_s_prime=sp, sigma_a=sa,
                                   g=material.g, eta=material.eta)
        return material

    # ------------------------------------------------------------------
    # pipeline stages
    # ------------------------------------------------------------------

    def _stage1_irradiance(self):
        atlas = self.container.atlas
        domain = self.container.compressed.domain_size
        keep = max(1, int(round(self.e_keep * domain)))
        e_direct = irradiance_direct(self.samples, self.rig, self.accel,
                                     self.material.eta)
        spectra = []
        for c in range(3):
            coeffs = w0_forward(atlas, e_direct[:, c], self._flat_cells)
            spectra.append(compress_top_n(coeffs, keep))
        env_spectra = None
        ambient = self.rig.ambient
        if ambient is not None:
            if self.container.folded is None:
                raise ValueError("container lacks folded visibility; "
                                 "precompute with --ambient to light environments")
            if abs(self.container.folded.eta - self.material.eta) > 1e-9:
                import warnings

                warnings.warn("folded ambient operator was baked for eta="
                              f"{self.container.folded.eta:g}; ambient response "
                              "uses that Fresnel weighting", stacklevel=2)
            side = self.container.folded.face_side
            if ambient.environment.side != side:
                raise ValueError(f"environment face side {ambient.environment.side} "
                                 f"!= folded operator side {side}")
            env_spectra = project_environment(ambient.environment, ENV_COEFF_KEEP)
        return e_direct, spectra, env_spectra

    def _stage2_transfer(self, spectra, env_spectra):
        domain = self.container.compressed.domain_size
        k_count = self.container.compressed.k_count
        vk = np.zeros((k_count, 3, domain))
        for k, op in enumerate(self.container.compressed.operators):
            for c in range(3):
                vk[k, c] = op.apply(spectra[c].indices, spectra[c].values, domain)
        if env_spectra is not None:
            for k, op in enumerate(self.container.folded.operators):
                for c in range(3):
                    vk[k, c] += op.apply(env_spectra[c].indices,
                                         env_spectra[c].values, domain)
        return vk

    def _stage3_weights(self):
        return project_material(self.basis, self.material).s  # (3, K)

    def _stage5_reconstruct(self, summed):
        atlas = self.container.atlas
        scatter = np.empty((self.samples.count, 3))
        for c in range(3):
            scatter[:, c] = w1_inverse(atlas, summed[c], self._flat_cells)
        return scatter

    def _shade(self, scatter):
        view = self.camera.position[None, :] - self.samples.positions
        view /= np.linalg.norm(view, axis=1, keepdims=True)
        cos = np.clip(np.einsum("ij,ij->i", self.samples.normals, view), 0.0, 1.0)
        ft = fresnel_transmittance(self.material.eta, cos)
        unclamped = scatter * (ft / np.pi)[:, None]
        return unclamped

    # ------------------------------------------------------------------
    # public operations
    # ------------------------------------------------------------------

    def relight(self) -> FrameResult:
        """Full pipeline; repopulates the stage-2 cache."""
        timings = dict.fromkeys(STAGES, 0.0)
        t0 = time.perf_counter()
        _, spectra, env_spectra = self._stage1_irradiance()
        timings["irradiance"] = (time.perf_counter() - t0) * 1e3
        t0 = time.perf_counter()
        vk = self._stage2_transfer(spectra, env_spectra)
        timings["transfer"] = (time.perf_counter() - t0) * 1e3
        self._vk_cache = vk
        kept = sum(s.kept_energy for s in spectra)
        total = sum(s.total_energy for s in spectra)
        self._cache_energy = kept / total if total else 1.0
        return self._finish(timings)

    def set_material(self, material: OpticalMaterial) -> FrameResult:
        """Fast edit path: stages 3-5 only, against the cached transfer."""
        if self._vk_cache is None:
            self.material = self._clamp_material(material)
            return self.relight()
        eta_changed = material.eta != self.material.eta
        self.material = self._clamp_material(material)
        if eta_changed and self.rig.direct_lights:
            # incident Fresnel weighting lives inside E: must recompute
            return self.relight()
        timings = dict.fromkeys(STAGES, 0.0)
        return self._finish(timings)

    def _finish(self, timings) -> FrameResult:
        t0 = time.perf_counter()
        weights = self._stage3_weights()
        summed = np.einsum("ck,kcd->cd", weights, self._vk_cache)
        timings["weighting"] = (time.perf_counter() - t0) * 1e3
        t0 = time.perf_counter()
        scatter = self._stage5_reconstruct(summed)
        timings["inverse_wavelet"] = (time.perf_counter() - t0) * 1e3
        unclamped = self._shade(scatter)
        return FrameResult(
            radiance=np.maximum(unclamped, 0.0),
            radiance_unclamped=unclamped,
            timings_ms=timings,
            kept_energy_ratio=self._cache_energy,
        )

    def set_light(self, rig: LightRig) -> FrameResult:
        self.rig = rig
        return self.relight()

    def set_camera(self, camera: Camera) -> FrameResult:
        """Camera only affects shading and raster; reuse the cache."""
        self.camera = camera
        if self._vk_cache is None:
            return self.relight()
        return self._finish(dict.fromkeys(STAGES, 0.0))


def render_image(mesh: TriangleMesh, samples: SurfaceSamples, frame: FrameResult,
                 camera: Camera, width: int, height: int,
                 exposure: float = 1.0, background=(0.0, 0.0, 0.0)) -> np.ndarray:
    """Z-buffered rasterization of per-vertex radiance to an sRGB image."""
    if width < 1 or height < 1:
        raise ValueError("image dimensions must be positive")
    colors = np.zeros((mesh.vertices.shape[0], 3))
    colors[samples.source_vertex] = frame.radiance
    sx, sy, zn, iw = _project_vertices(mesh.vertices, camera, width, height)
    zbuf = np.full((height, width), np.inf)
    img = np.empty((height, width, 3))
    img[:] = np.asarray(background, np.float64)
    _k.raster_fill(np.ascontiguousarray(mesh.triangles, np.int64), sx, sy, zn, iw,
                   np.ascontiguousarray(colors), zbuf, img)
    return (linear_to_srgb(img * exposure) * 255.0 + 0.5).astype(np.uint8)


def _project_vertices(vertices, camera: Camera, width, height):
    fwd = camera.look_at - camera.position
    fwd = fwd / np.linalg.norm(fwd)
    right = np.cross(fwd, camera.up)
    nr = np.linalg.norm(right)
    if nr < 1e-12:
        raise ValueError("camera up vector is parallel to the view direction")
    right /= nr
    up = np.cross(right, fwd)
    rel = vertices - camera.position
    x = rel @ right
    y = rel @ up
    z = rel @ fwd  # camera-space depth, positive in front
    near = 1e-3
    f = 1.0 / np.tan(np.radians(camera.fov_y_degrees) / 2.0)
    aspect = width / height
    with np.errstate(divide="ignore", invalid="ignore"):
        ndc_x = (x * f / aspect) / z
        ndc_y = (y * f) / z
    sx = (ndc_x * 0.5 + 0.5) * width
    sy = (0.5 - ndc_y * 0.5) * height
    iw = np.where(z > near, 1.0 / z, 0.0)  # <= 0 marks clipped vertices
    zn = np.where(z > near, z, np.inf)
    return (np.ascontiguousarray(sx), np.ascontiguousarray(sy),
            np.ascontiguousarray(zn), np.ascontiguousarray(iw))


def save_png(image: np.ndarray, path) -> None:
    from PIL import Image

    Image.fromarray(image).save(path)


def bench(scene: Scene, iterations: int = 20) -> dict:
    """Median/percentile stage timings for the full and edit paths."""
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    scene.relight()  # warm caches and JIT
    full, edit = [], []
    material = scene.material
    for _ in range(iterations):
        t0 = time.perf_counter()
        scene.relight()
        full.append((time.perf_counter() - t0) * 1e3)
        t0 = time.perf_counter()
        scene.set_material(material)
        edit.append((time.perf_counter() - t0) * 1e3)
    full = np.asarray(full)
    edit = np.asarray(edit)

    def stats(a):
        return {"median_ms": float(np.median(a)),
                "p10_ms": float(np.percentile(a, 10)),
                "p90_ms": float(np.percentile(a, 90))}

    return {
        "iterations": iterations,
        "relight": stats(full),
        "material_edit": stats(edit),
        "edit_faster": bool(np.median(edit) < np.median(full)),
    }
