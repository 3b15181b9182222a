"""Regenerate the bundled desk-scale test meshes (mm units).

Three regimes: convex (icosphere), thin (slab), self-occluding (torus),
proportioned so marble/skin-scale diffusion lengths stay well under the
object size.
"""

import pathlib
import sys

sys.path.insert(0, str(pathlib.Path(__file__).resolve().parents[1] / "src"))

from sssrelight.meshgen import make_icosphere, make_slab, make_torus, save_obj  # noqa: E402

ASSETS = pathlib.Path(__file__).resolve().parents[1] / "assets"


def main():
    ASSETS.mkdir(exist_ok=True)
    meshes = {
        "icosphere.obj": make_icosphere(subdivisions=4, radius=50.0),
        "slab.obj": make_slab(width=60.0, depth=60.0, thickness=8.0, divisions=15),
        "torus.obj": make_torus(major=30.0, minor=12.0, rings=48, sides=24),
    }
    for name, mesh in meshes.items():
        path = ASSETS / name
        save_obj(mesh, path)
        print(f"{path}: {mesh.vertices.shape[0]} vertices, "
              f"{mesh.triangles.shape[0]} triangles")


if __name__ == "__main__":
    main()
