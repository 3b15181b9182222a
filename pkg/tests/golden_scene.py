"""The fixed golden scene shared by the regression test and the
regeneration script (scripts/make_golden.py)."""

import numpy as np

from sssrelight import container as ctn
from sssrelight import runtime as rt

from conftest import MARBLE

WIDTH, HEIGHT = 320, 240
EXPOSURE = 2.0
CAMERA = dict(position=[60.0, 45.0, 150.0], look_at=[0.0, 0.0, 0.0],
              fov_y_degrees=45.0)


def render_golden(ico_scene, compressed, tmp_dir=None) -> np.ndarray:
    import tempfile

    with tempfile.TemporaryDirectory(dir=tmp_dir) as td:
        path = td + "/golden.prts"
        ctn.save_container(path, ico_scene["basis"], ico_scene["atlas"],
                           compressed, ico_scene["mesh"].content_hash())
        scene = rt.Scene(
            mesh=ico_scene["mesh"], samples=ico_scene["samples"],
            container=ctn.load_container(path), accel=ico_scene["accel"],
            material=MARBLE, rig=ico_scene["rig"],
            camera=rt.Camera(**CAMERA))
        frame = scene.relight()
        return rt.render_image(ico_scene["mesh"], ico_scene["samples"], frame,
                               scene.camera, WIDTH, HEIGHT, exposure=EXPOSURE,
                               background=(0.02, 0.02, 0.03))
