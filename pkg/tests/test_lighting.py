import numpy as np
import pytest

from sssrelight import lighting as lt
from sssrelight.envmap import Cubemap, face_directions, face_solid_angles
from sssrelight.meshgen import make_icosphere, make_torus
from sssrelight.surface import TriangleMesh, sample_surface


@pytest.fixture(scope="module")
def sphere_mesh():
    return make_icosphere(2, 10.0)


@pytest.fixture(scope="module")
def sphere_accel(sphere_mesh):
    return lt.build_accelerator(sphere_mesh)


def single_triangle_mesh():
    v = np.array([[0.0, 0.0, 0.0], [4.0, 0.0, 0.0], [0.0, 4.0, 0.0]])
    t = np.array([[0, 1, 2]], np.int32)
    n = np.tile([0.0, 0.0, 1.0], (3, 1))
    return TriangleMesh(vertices=v, normals=n, triangles=t)


class TestAccelerator:
    def test_single_triangle_hit_and_parallel_miss(self):
        accel = lt.build_accelerator(single_triangle_mesh())
        origins = np.array([[1.0, 1.0, 5.0], [1.0, 1.0, 5.0]])
        dirs = np.array([[0.0, 0.0, -1.0], [1.0, 0.0, 0.0]])
        tmax = np.array([100.0, 100.0])
        hits = accel.any_hit(origins, dirs, tmax)
        assert hits.tolist() == [True, False]

    def test_empty_space_miss(self, sphere_accel):
        hits = sphere_accel.any_hit(
            np.array([[50.0, 0.0, 0.0]]), np.array([[0.0, 1.0, 0.0]]), np.array([1e6])
        )
        assert not hits[0]

    def test_agrees_with_brute_force_10k_rays(self, sphere_mesh, sphere_accel):
        rng = np.random.default_rng(99)
        n = 10_000
        origins = rng.uniform(-25, 25, (n, 3))
        dirs = rng.standard_normal((n, 3))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        tmax = rng.uniform(1.0, 100.0, n)
        fast = sphere_accel.any_hit(origins, dirs, tmax)
        slow = lt.brute_force_any_hit(sphere_mesh, origins, dirs, tmax)
        assert np.array_equal(fast, slow)

    def test_agrees_on_torus(self):
        mesh = make_torus()
        accel = lt.build_accelerator(mesh)
        rng = np.random.default_rng(7)
        n = 2000
        origins = rng.uniform(-15, 15, (n, 3))
        dirs = rng.standard_normal((n, 3))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        tmax = np.full(n, 1e3)
        assert np.array_equal(accel.any_hit(origins, dirs, tmax),
                              lt.brute_force_any_hit(mesh, origins, dirs, tmax))


class TestIrradianceDirect:
    def _flat_patch_samples(self):
        # one sample at origin, normal +z
        from sssrelight.surface import SurfaceSamples

        return SurfaceSamples(
            positions=np.array([[0.0, 0.0, 0.0]]),
            normals=np.array([[0.0, 0.0, 1.0]]),
            area=np.array([1.0]),
            source_vertex=np.array([0], np.int32),
        )

    def _free_accel(self):
        # far-away triangle: no occlusion anywhere near the origin
        v = np.array([[100.0, 100.0, 100.0], [101.0, 100.0, 100.0], [100.0, 101.0, 100.0]])
        mesh = TriangleMesh(vertices=v, normals=np.tile([0.0, 0.0, 1.0], (3, 1)),
                            triangles=np.array([[0, 1, 2]], np.int32))
        return lt.build_accelerator(mesh)

    def test_point_light_inverse_square(self):
        samples = self._flat_patch_samples()
        rig = lt.LightRig(lights=(lt.PointLight(position=[0, 0, 2.0], intensity=4.0),))
        e = lt.irradiance_direct(samples, rig, self._free_accel(), eta=1.0)
        assert e[0] == pytest.approx([1.0, 1.0, 1.0], rel=1e-12)

    def test_light_below_tangent_plane(self):
        samples = self._flat_patch_samples()
        rig = lt.LightRig(lights=(lt.PointLight(position=[0, 0, -2.0], intensity=4.0),))
        e = lt.irradiance_direct(samples, rig, self._free_accel(), eta=1.0)
        assert np.all(e == 0.0)

    def test_occluder_blocks(self):
        samples = self._flat_patch_samples()
        v = np.array([[-5.0, -5.0, 1.0], [5.0, -5.0, 1.0], [0.0, 10.0, 1.0]])
        mesh = TriangleMesh(vertices=v, normals=np.tile([0.0, 0.0, 1.0], (3, 1)),
                            triangles=np.array([[0, 1, 2]], np.int32))
        rig = lt.LightRig(lights=(lt.PointLight(position=[0, 0, 2.0], intensity=4.0),))
        e = lt.irradiance_direct(samples, rig, lt.build_accelerator(mesh), eta=1.0)
        assert np.all(e == 0.0)

    def test_directional_cosine(self):
        samples = self._flat_patch_samples()
        d = np.array([1.0, 0.0, -1.0]) / np.sqrt(2.0)
        rig = lt.LightRig(lights=(lt.DirectionalLight(direction=d, irradiance=2.0),))
        e = lt.irradiance_direct(samples, rig, self._free_accel(), eta=1.0)
        assert e[0, 0] == pytest.approx(2.0 / np.sqrt(2.0), rel=1e-12)

    def test_lights_additive_and_linear(self):
        samples = self._flat_patch_samples()
        p1 = lt.PointLight(position=[0, 0, 2.0], intensity=4.0)
        p2 = lt.PointLight(position=[0, 1.0, 3.0], intensity=[1.0, 2.0, 3.0])
        accel = self._free_accel()
        e_both = lt.irradiance_direct(samples, lt.LightRig(lights=(p1, p2)), accel, 1.3)
        e1 = lt.irradiance_direct(samples, lt.LightRig(lights=(p1,)), accel, 1.3)
        e2 = lt.irradiance_direct(samples, lt.LightRig(lights=(p2,)), accel, 1.3)
        assert np.allclose(e_both, e1 + e2, rtol=1e-12)
        p1_doubled = lt.PointLight(position=[0, 0, 2.0], intensity=8.0)
        e_dbl = lt.irradiance_direct(samples, lt.LightRig(lights=(p1_doubled,)), accel, 1.3)
        assert np.allclose(e_dbl, 2.0 * e1, rtol=1e-12)

    def test_sphere_light_converges_to_point(self):
        samples = self._flat_patch_samples()
        accel = self._free_accel()
        d = 2.0
        radius = d / 1000.0
        radiance = 5.0
        sphere = lt.SphereLight(center=[0, 0, d], radius=radius, radiance=radiance)
        e_sphere = lt.irradiance_direct(samples, lt.LightRig(lights=(sphere,)), accel, 1.3)
        point = lt.PointLight(position=[0, 0, d], intensity=radiance * np.pi * radius**2)
        e_point = lt.irradiance_direct(samples, lt.LightRig(lights=(point,)), accel, 1.3)
        assert np.abs(e_sphere / e_point - 1.0).max() < 0.01

    def test_visibility_only_decreases(self, sphere_mesh, sphere_accel):
        samples = sample_surface(sphere_mesh)
        rig = lt.LightRig(lights=(lt.PointLight(position=[0, 0, 30.0], intensity=100.0),))
        e = lt.irradiance_direct(samples, rig, sphere_accel, eta=1.3)
        assert np.all(e >= 0.0)
        # unshadowed variant: free-space accel
        free = self._free_accel()
        e_free = lt.irradiance_direct(samples, rig, free, eta=1.3)
        assert np.all(e <= e_free + 1e-15)


class TestEnvironment:
    def test_constant_env_six_dc(self):
        env = Cubemap.constant(2.0, side=8)
        spectra = lt.project_environment(env, n_keep=4096)
        for s in spectra:
            dense = s.to_dense().reshape(6, 8, 8)
            assert np.abs(dense[:, 0, 0] - 2.0 * 8).max() < 1e-10
            mask = np.ones((6, 8, 8), bool)
            mask[:, 0, 0] = False
            assert np.abs(dense[mask]).max() < 1e-10

    def test_roundtrip_full(self):
        rng = np.random.default_rng(12)
        env = Cubemap(faces=rng.random((6, 16, 16, 3)))
        spectra = lt.project_environment(env, n_keep=6 * 16 * 16)
        back = lt.reconstruct_environment(spectra, 16)
        assert np.abs(back.faces - env.faces).max() < 1e-9

    def test_single_texel_error_shrinks_with_n(self):
        faces = np.zeros((6, 16, 16, 3))
        faces[2, 5, 9, :] = 10.0
        env = Cubemap(faces=faces)
        errs = []
        for n in (4, 16, 64, 256, 6 * 256):
            back = lt.reconstruct_environment(lt.project_environment(env, n), 16)
            errs.append(np.linalg.norm(back.faces - env.faces))
        assert all(a >= b - 1e-12 for a, b in zip(errs, errs[1:]))
        assert errs[-1] < 1e-9

    def test_solid_angles_sum(self):
        assert face_solid_angles(16).sum() == pytest.approx(4.0 * np.pi, rel=1e-3)

    def test_directions_unit_and_distinct(self):
        dirs = face_directions(8).reshape(-1, 3)
        assert np.abs(np.linalg.norm(dirs, axis=1) - 1.0).max() < 1e-12
        assert np.unique(np.round(dirs, 9), axis=0).shape[0] == dirs.shape[0]

    def test_rejects_non_square(self):
        with pytest.raises(ValueError):
            Cubemap(faces=np.zeros((6, 8, 4, 3)))
