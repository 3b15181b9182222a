import numpy as np
import pytest

from sssrelight import container as ctn
from sssrelight import lighting as lt
from sssrelight import runtime as rt
from sssrelight.dipole import OpticalMaterial

from conftest import MARBLE, brute_force_scatter


@pytest.fixture(scope="module")
def scene(small_scene, small_compressed, tmp_path_factory):
    path = tmp_path_factory.mktemp("rt") / "scene.prts"
    vis = None
    ctn.save_container(path, small_scene["basis"], small_scene["atlas"],
                       small_compressed, small_scene["mesh"].content_hash(),
                       visibility=vis)
    container = ctn.load_container(path)
    camera = rt.Camera(position=[0.0, 0.0, 180.0], look_at=[0.0, 0.0, 0.0])
    return rt.Scene(
        mesh=small_scene["mesh"], samples=small_scene["samples"],
        container=container, accel=small_scene["accel"], material=MARBLE,
        rig=small_scene["rig"], camera=camera)


class TestRelight:
    def test_zero_lights_zero_output(self, scene):
        saved = scene.rig
        try:
            scene.rig = lt.LightRig(lights=())
            frame = scene.relight()
            assert np.all(frame.radiance == 0.0)
        finally:
            scene.rig = saved
            scene.relight()

    def test_doubling_intensity_doubles_radiance(self, scene, small_scene):
        f1 = scene.relight()
        saved = scene.rig
        try:
            bright = lt.LightRig(lights=(lt.PointLight(
                position=[0, 0, 125.0], intensity=24000.0),))
            scene.rig = bright
            f2 = scene.relight()
            assert np.allclose(f2.radiance_unclamped,
                               2.0 * f1.radiance_unclamped, rtol=1e-9, atol=1e-12)
        finally:
            scene.rig = saved
            scene.relight()

    def test_matches_brute_force_oracle(self, scene, small_scene):
        frame = scene.relight()
        scatter = brute_force_scatter(small_scene["samples"], scene.material,
                                      small_scene["e_direct"])
        view = scene.camera.position[None, :] - small_scene["samples"].positions
        view /= np.linalg.norm(view, axis=1, keepdims=True)
        cos = np.clip(np.einsum("ij,ij->i", small_scene["samples"].normals, view),
                      0.0, 1.0)
        from sssrelight.dipole import fresnel_transmittance

        want = scatter * (fresnel_transmittance(scene.material.eta, cos) / np.pi)[:, None]
        rel = np.linalg.norm(frame.radiance_unclamped - want) / np.linalg.norm(want)
        assert rel < 0.02

    def test_timings_populated(self, scene):
        frame = scene.relight()
        assert frame.timings_ms["irradiance"] > 0.0
        assert frame.timings_ms["transfer"] > 0.0
        assert frame.timings_ms["weighting"] > 0.0
        assert frame.timings_ms["inverse_wavelet"] > 0.0


class TestMaterialEdit:
    def test_identity_edit_bitwise_equal(self, scene):
        f1 = scene.relight()
        f2 = scene.set_material(scene.material)
        assert np.array_equal(f1.radiance, f2.radiance)

    def test_edit_equals_full_relight(self, scene):
        rng = np.random.default_rng(2)
        for _ in range(3):
            mat = OpticalMaterial(
                sigma_s_prime=rng.uniform(0.5, 5.0, 3),
                sigma_a=rng.uniform(0.002, 0.5, 3), eta=MARBLE.eta)
            edited = scene.set_material(mat)
            full = scene.relight()
            assert np.abs(edited.radiance - full.radiance).max() < 1e-6
        scene.set_material(MARBLE)
        scene.relight()

    def test_edit_skips_heavy_stages(self, scene):
        scene.relight()
        frame = scene.set_material(OpticalMaterial(
            sigma_s_prime=[1.0, 1.1, 1.2], sigma_a=[0.01, 0.02, 0.03], eta=MARBLE.eta))
        assert frame.timings_ms["irradiance"] == 0.0
        assert frame.timings_ms["transfer"] == 0.0
        scene.set_material(MARBLE)

    def test_eta_change_recomputes_irradiance(self, scene):
        scene.relight()
        frame = scene.set_material(OpticalMaterial(
            sigma_s_prime=MARBLE.sigma_s_prime, sigma_a=MARBLE.sigma_a, eta=1.5))
        assert frame.timings_ms["irradiance"] > 0.0
        scene.set_material(MARBLE)

    def test_out_of_box_material_clamped_with_warning(self, scene):
        with pytest.warns(UserWarning, match="clamped"):
            scene.set_material(OpticalMaterial(
                sigma_s_prime=[50.0, 1.0, 1.0], sigma_a=[0.01, 0.01, 0.01]))
        assert scene.material.sigma_s_prime[0] == scene.basis.sigma_box[1]
        scene.set_material(MARBLE)


class TestCameraAndRaster:
    def test_camera_change_keeps_transfer_cache(self, scene):
        scene.relight()
        frame = scene.set_camera(rt.Camera(position=[0, 100, 150.0],
                                           look_at=[0, 0, 0]))
        assert frame.timings_ms["irradiance"] == 0.0
        scene.set_camera(rt.Camera(position=[0.0, 0.0, 180.0], look_at=[0, 0, 0]))

    def test_render_deterministic(self, scene, small_scene):
        frame = scene.relight()
        img1 = rt.render_image(small_scene["mesh"], small_scene["samples"], frame,
                               scene.camera, 96, 72, exposure=2.0)
        img2 = rt.render_image(small_scene["mesh"], small_scene["samples"], frame,
                               scene.camera, 96, 72, exposure=2.0)
        assert np.array_equal(img1, img2)
        assert img1.shape == (72, 96, 3)

    def test_camera_behind_object_background_only(self, scene, small_scene):
        frame = scene.relight()
        away = rt.Camera(position=[0, 0, 200.0], look_at=[0, 0, 400.0])
        img = rt.render_image(small_scene["mesh"], small_scene["samples"], frame,
                              away, 64, 64, background=(0.0, 0.0, 0.0))
        assert np.all(img == 0)

    def test_object_actually_rendered(self, scene, small_scene):
        frame = scene.relight()
        img = rt.render_image(small_scene["mesh"], small_scene["samples"], frame,
                              scene.camera, 96, 96, exposure=2.0)
        assert (img > 8).any()

    def test_degenerate_camera_rejected(self):
        with pytest.raises(ValueError):
            rt.Camera(position=[1, 2, 3], look_at=[1, 2, 3])


class TestBench:
    def test_edit_path_faster(self, scene):
        report = rt.bench(scene, iterations=5)
        assert report["edit_faster"]
        assert report["material_edit"]["median_ms"] < 0.5 * report["relight"]["median_ms"]
        assert report["relight"]["median_ms"] > 0.0

    def test_single_iteration(self, scene):
        report = rt.bench(scene, iterations=1)
        assert report["iterations"] == 1


class TestSceneValidation:
    def test_wrong_mesh_rejected(self, small_scene, small_compressed, tmp_path):
        from sssrelight.meshgen import make_icosphere
        from sssrelight.surface import sample_surface

        path = tmp_path / "c.prts"
        ctn.save_container(path, small_scene["basis"], small_scene["atlas"],
                           small_compressed, small_scene["mesh"].content_hash())
        container = ctn.load_container(path)
        other = make_icosphere(2, 7.0)
        with pytest.raises(ValueError, match="different mesh"):
            rt.Scene(mesh=other, samples=sample_surface(other),
                     container=container, accel=small_scene["accel"],
                     material=MARBLE, rig=small_scene["rig"],
                     camera=rt.Camera(position=[0, 0, 30], look_at=[0, 0, 0]))
