"""Regenerate the golden regression image for the bundled icosphere scene."""

import pathlib
import sys

ROOT = pathlib.Path(__file__).resolve().parents[1]
sys.path.insert(0, str(ROOT / "src"))
sys.path.insert(0, str(ROOT / "tests"))

import os  # noqa: E402

os.chdir(ROOT)

from sssrelight import basisgen as bg  # noqa: E402
from sssrelight import lighting as lt  # noqa: E402
from sssrelight import transfer as tr  # noqa: E402
from sssrelight.surface import build_quadtree_atlas, load_mesh, sample_surface  # noqa: E402

from conftest import MARBLE  # noqa: E402
from golden_scene import render_golden  # noqa: E402


def main():
    mesh = load_mesh(ROOT / "assets" / "icosphere.obj")
    samples = sample_surface(mesh)
    atlas = build_quadtree_atlas(samples, 4)
    basis = bg.decompose(bg.assemble_matrix(bg.build_sample_grid()), 12)
    accel = lt.build_accelerator(mesh)
    rig = lt.LightRig(lights=(lt.PointLight(position=[0.0, 0.0, 125.0],
                                            intensity=12000.0),))
    ico = {"mesh": mesh, "samples": samples, "atlas": atlas, "basis": basis,
           "accel": accel, "rig": rig}
    compressed = tr.precompute_compressed(samples, atlas, basis,
                                          tr.DEFAULT_STEP1_KEEP,
                                          tr.DEFAULT_STEP2_FRACTION)
    image = render_golden(ico, compressed)
    out = ROOT / "tests" / "golden" / "icosphere_point.png"
    out.parent.mkdir(exist_ok=True)
    from PIL import Image

    Image.fromarray(image).save(out)
    print(f"wrote {out} ({image.shape[1]}x{image.shape[0]})")


if __name__ == "__main__":
    main()
