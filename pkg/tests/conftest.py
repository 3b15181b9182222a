import numpy as np
import pytest

from sssrelight import basisgen as bg
from sssrelight import lighting as lt
from sssrelight import transfer as tr
from sssrelight.dipole import OpticalMaterial
from sssrelight.meshgen import make_icosphere
from sssrelight.surface import build_quadtree_atlas, sample_surface

# marble-like scene proportions: diffusion lengths well under the object size
MARBLE = OpticalMaterial(sigma_s_prime=[2.19, 2.62, 3.00],
                         sigma_a=[0.0021, 0.0041, 0.0071], eta=1.3)


@pytest.fixture(scope="session")
def small_scene():
    """Icosphere at subdivision 3 (642 samples), shared across test modules."""
    mesh = make_icosphere(3, 50.0)
    samples = sample_surface(mesh)
    atlas = build_quadtree_atlas(samples, 4)
    grid = bg.build_sample_grid()
    basis = bg.decompose(bg.assemble_matrix(grid), 12)
    accel = lt.build_accelerator(mesh)
    rig = lt.LightRig(lights=(lt.PointLight(position=[0, 0, 125.0], intensity=12000.0),))
    e_direct = lt.irradiance_direct(samples, rig, accel, MARBLE.eta)
    return {
        "mesh": mesh, "samples": samples, "atlas": atlas, "basis": basis,
        "accel": accel, "rig": rig, "material": MARBLE, "e_direct": e_direct,
    }


@pytest.fixture(scope="session")
def small_compressed(small_scene):
    return tr.precompute_compressed(
        small_scene["samples"], small_scene["atlas"], small_scene["basis"],
        step1_keep=0.05, step2_fraction=0.9999)


def brute_force_scatter(samples, material, e_direct):
    """Reference double sum over sample pairs with the exact radial kernel."""
    from sssrelight.dipole import derive_dipole, eval_rd

    d = np.linalg.norm(samples.positions[:, None, :] - samples.positions[None, :, :],
                       axis=-1)
    out = np.zeros((samples.count, 3))
    for c in range(3):
        rd = eval_rd(derive_dipole(material, c), d.ravel()).reshape(d.shape)
        out[:, c] = (rd * (e_direct[:, c] * samples.area)[None, :]).sum(axis=1)
    return out


def truncated_kernel_scatter(samples, basis, weights, e_direct):
    """Double sum against the K-truncated radial kernel (basis error removed)."""
    out = np.zeros((samples.count, 3))
    for lo in range(0, samples.count, 256):
        ids = np.arange(lo, min(lo + 256, samples.count))
        blk = tr.transfer_rows_block(samples, basis, ids)
        for c in range(3):
            out[ids, c] = np.einsum("k,bkn,n->b", weights[c], blk, e_direct[:, c])
    return out
