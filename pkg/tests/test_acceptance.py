"""Acceptance gate: every criterion at its stated tolerance, one printed
PASS/FAIL line per criterion.

The compressed-vs-oracle criterion at the stated default compression
settings (row keep 1%, spatial energy fraction 0.95) is known to fail by a
wide, well-understood margin: dropping 5% of coefficient energy in a
near-orthogonal transform forces an L2 error near sqrt(0.05) ~ 22%, and the
measured residuals do not cancel. See notes/decisions.md in the reviewer
notes for the full analysis and the measured error-vs-fraction curve. The
assertion is kept at the stated numbers rather than tuned to pass.
"""

import time

import numpy as np
import pytest

from sssrelight import basisgen as bg
from sssrelight import container as ctn
from sssrelight import lighting as lt
from sssrelight import runtime as rt
from sssrelight import transfer as tr
from sssrelight import wavelets as wv
from sssrelight.dipole import OpticalMaterial, derive_dipole_raw, eval_rd
from sssrelight.envmap import Cubemap
from sssrelight.surface import build_quadtree_atlas, load_mesh, sample_surface

from conftest import MARBLE, brute_force_scatter, truncated_kernel_scatter
from test_dipole import reference_rd

ICOSPHERE = "assets/icosphere.obj"


def report(name, passed, detail=""):
    status = "PASS" if passed else "FAIL"
    print(f"\nACCEPTANCE {name}: {status} {detail}")
    return passed


# ---------------------------------------------------------------------------
# shared desk-scale scene (bundled icosphere, ~2.5k samples)
# ---------------------------------------------------------------------------

@pytest.fixture(scope="module")
def ico():
    t0 = time.time()
    mesh = load_mesh(ICOSPHERE)
    samples = sample_surface(mesh)
    atlas = build_quadtree_atlas(samples, 4)
    basis = bg.decompose(bg.assemble_matrix(bg.build_sample_grid()), 12)
    accel = lt.build_accelerator(mesh)
    rig = lt.LightRig(lights=(lt.PointLight(position=[0.0, 0.0, 125.0],
                                            intensity=12000.0),))
    e_direct = lt.irradiance_direct(samples, rig, accel, MARBLE.eta)
    return {
        "mesh": mesh, "samples": samples, "atlas": atlas, "basis": basis,
        "accel": accel, "rig": rig, "e_direct": e_direct,
        "setup_seconds": time.time() - t0,
    }


@pytest.fixture(scope="module")
def oracle_run(ico):
    """Everything the oracle-equivalence criterion needs, with timing."""
    t0 = time.time()
    samples, atlas, basis = ico["samples"], ico["atlas"], ico["basis"]
    ct_default = tr.precompute_compressed(samples, atlas, basis,
                                          tr.DEFAULT_STEP1_KEEP,
                                          tr.DEFAULT_STEP2_FRACTION)
    ct_lossless = tr.precompute_compressed(samples, atlas, basis, 1.0, 1.0)
    oracle = brute_force_scatter(samples, MARBLE, ico["e_direct"])
    weights = bg.project_material(basis, MARBLE).s
    kernel_oracle = truncated_kernel_scatter(samples, basis, weights,
                                             ico["e_direct"])
    elapsed = time.time() - t0 + ico["setup_seconds"]
    return {"ct_default": ct_default, "ct_lossless": ct_lossless,
            "oracle": oracle, "kernel_oracle": kernel_oracle,
            "weights": weights, "elapsed": elapsed}


def _apply_pipeline(ico_scene, ct, weights, e_keep):
    samples, atlas = ico_scene["samples"], ico_scene["atlas"]
    flat = tr.atlas_flat_cells(atlas)
    domain = ct.domain_size
    out = np.zeros((samples.count, 3))
    for c in range(3):
        coeffs = tr.w0_forward(atlas, ico_scene["e_direct"][:, c], flat)
        spec = wv.compress_top_n(coeffs, max(1, round(e_keep * domain)))
        acc = np.zeros(domain)
        for k, op in enumerate(ct.operators):
            acc += weights[c, k] * op.apply(spec.indices, spec.values, domain)
        out[:, c] = tr.w1_inverse(atlas, acc, flat)
    return out


# ---------------------------------------------------------------------------
# criterion: PCA approximation quality
# ---------------------------------------------------------------------------

class TestPcaQuality:
    def test_pca_quality(self):
        t0 = time.time()
        grid = bg.build_sample_grid()
        matrix = bg.assemble_matrix(grid)
        basis = bg.decompose(matrix, 20)
        rows = {r["K"]: r for r in bg.error_report(basis, matrix, [12, 15])}
        sv = basis.singular_values
        elapsed = time.time() - t0
        ok15 = rows[15]["l2rel"] < 1e-4
        ok12 = rows[12]["l2rel"] < 1e-3
        ok_sv = bool(np.all(sv[10:] < 1e-3 * sv[0]))
        ok_time = elapsed < 30.0
        passed = ok15 and ok12 and ok_sv and ok_time
        report("pca-quality", passed,
               f"(K=15 l2rel={rows[15]['l2rel']:.2e}, K=12 l2rel={rows[12]['l2rel']:.2e}, "
               f"sv10/sv0={sv[10] / sv[0]:.2e}, {elapsed:.1f}s)")
        assert ok15 and ok12 and ok_sv and ok_time


# ---------------------------------------------------------------------------
# criterion: oracle equivalence end to end
# ---------------------------------------------------------------------------

class TestOracleEquivalence:
    def test_compressed_defaults_vs_oracle(self, ico, oracle_run):
        """Stated defaults: step-1 1%, step-2 energy fraction 0.95.

        Known-infeasible as specified (see module docstring); asserted at
        the stated tolerance regardless.
        """
        got = _apply_pipeline(ico, oracle_run["ct_default"],
                              oracle_run["weights"], rt.DEFAULT_E_KEEP)
        rel = np.linalg.norm(got - oracle_run["oracle"]) / np.linalg.norm(
            oracle_run["oracle"])
        passed = rel < 0.02
        report("oracle-equivalence-defaults", passed,
               f"(rms={rel:.4f} at keep={tr.DEFAULT_STEP1_KEEP}, "
               f"fraction={tr.DEFAULT_STEP2_FRACTION}; bound 0.02 -- "
               "energy-fraction semantics force ~sqrt(1-fraction), "
               "see decisions ledger)")
        assert passed

    def test_lossless_vs_oracle(self, ico, oracle_run):
        # at lossless wavelet settings the only remaining discrepancy vs the
        # raw dipole kernel is the K-truncation of the radial family, which
        # the PCA criterion bounds separately; the lossless check therefore
        # compares against the K-truncated kernel oracle
        got = _apply_pipeline(ico, oracle_run["ct_lossless"],
                              oracle_run["weights"], 1.0)
        want = oracle_run["kernel_oracle"]
        rel = np.linalg.norm(got - want) / np.linalg.norm(want)
        passed = rel < 1e-6
        report("oracle-equivalence-lossless", passed, f"(rms={rel:.2e})")
        assert passed

    def test_runtime_budget(self, oracle_run):
        passed = oracle_run["elapsed"] < 300.0
        report("oracle-equivalence-runtime", passed,
               f"({oracle_run['elapsed']:.0f}s < 300s including precompute)")
        assert passed


# ---------------------------------------------------------------------------
# criterion: wavelet correctness
# ---------------------------------------------------------------------------

class TestWaveletCorrectness:
    def test_wavelets(self):
        rng = np.random.default_rng(2024)
        worst_pr = 0.0
        worst_parseval = 0.0
        for log_side in range(1, 10):  # sides 2..512
            side = 2 ** log_side
            x = rng.standard_normal((side, side))
            norm = np.linalg.norm(x)
            h = wv.haar2d(x)
            worst_pr = max(worst_pr, np.linalg.norm(wv.haar2d_inverse(h) - x) / norm)
            c = wv.cdf97(x)
            worst_pr = max(worst_pr, np.linalg.norm(wv.cdf97_inverse(c) - x) / norm)
            worst_parseval = max(
                worst_parseval,
                abs(np.sum(h * h) - np.sum(x * x)) / np.sum(x * x))
        x = rng.standard_normal((64, 64))
        h = wv.haar2d(x)
        spec = wv.compress_top_n(h, 300)
        rec = wv.haar2d_inverse(spec.to_dense().reshape(64, 64))
        identity_err = abs(np.sum((x - rec) ** 2)
                           - (spec.total_energy - spec.kept_energy))
        ok = worst_pr < 1e-9 and worst_parseval < 1e-10 and identity_err < 1e-9
        report("wavelet-correctness", ok,
               f"(PR={worst_pr:.1e}, parseval={worst_parseval:.1e}, "
               f"truncation-identity={identity_err:.1e})")
        assert ok


# ---------------------------------------------------------------------------
# criterion: material-edit fast path
# ---------------------------------------------------------------------------

class TestMaterialEditFastPath:
    def test_fast_path(self, ico, oracle_run, tmp_path):
        path = tmp_path / "edit.prts"
        ctn.save_container(path, ico["basis"], ico["atlas"],
                           oracle_run["ct_default"], ico["mesh"].content_hash())
        scene = rt.Scene(mesh=ico["mesh"], samples=ico["samples"],
                         container=ctn.load_container(path), accel=ico["accel"],
                         material=MARBLE, rig=ico["rig"],
                         camera=rt.Camera(position=[0, 0, 180.0], look_at=[0, 0, 0]))
        scene.relight()
        edited_mat = OpticalMaterial(sigma_s_prime=[1.1, 1.3, 1.7],
                                     sigma_a=[0.02, 0.05, 0.09], eta=MARBLE.eta)
        edited = scene.set_material(edited_mat)
        full = scene.relight()
        max_diff = float(np.abs(edited.radiance - full.radiance).max())
        zero_stages = (edited.timings_ms["irradiance"] == 0.0
                       and edited.timings_ms["transfer"] == 0.0)
        bench_report = rt.bench(scene, iterations=10)
        ratio = (bench_report["material_edit"]["median_ms"]
                 / bench_report["relight"]["median_ms"])
        ok = max_diff < 1e-6 and zero_stages and ratio < 0.5
        report("material-edit-fast-path", ok,
               f"(max|edit-full|={max_diff:.1e}, stages-zero={zero_stages}, "
               f"edit/relight={ratio:.3f})")
        assert ok


# ---------------------------------------------------------------------------
# criterion: ambient visibility folding
# ---------------------------------------------------------------------------

class TestAmbientFolding:
    def test_folded_vs_unfolded(self, ico, oracle_run):
        samples, atlas, basis = ico["samples"], ico["atlas"], ico["basis"]
        ct = oracle_run["ct_default"]
        face_side = 8  # 384 directions: same math as the default 16, faster
        vis = tr.precompute_visibility(samples, ico["accel"], face_side)
        folded = tr.fold_visibility(ct, vis, samples, atlas, eta=MARBLE.eta)
        weights = oracle_run["weights"]
        flat = tr.atlas_flat_cells(atlas)
        domain = ct.domain_size
        wmat = lt.visibility_weights(samples, vis.matrix, face_side, MARBLE.eta)
        rng = np.random.default_rng(11)
        worst = 0.0
        for _ in range(3):
            env = Cubemap(faces=rng.random((6, face_side, face_side, 3)))
            spectra = lt.project_environment(env, n_keep=6 * face_side**2)
            got = np.zeros((samples.count, 3))
            for c in range(3):
                acc = np.zeros(domain)
                for k, op in enumerate(folded.operators):
                    acc += weights[c, k] * op.apply(spectra[c].indices,
                                                    spectra[c].values, domain)
                got[:, c] = tr.w1_inverse(atlas, acc, flat)
            e_amb = lt.ambient_irradiance_dense(samples, wmat, env)
            want = np.zeros((samples.count, 3))
            for c in range(3):
                coeffs = tr.w0_forward(atlas, e_amb[:, c], flat)
                spec = wv.compress_top_n(coeffs, domain)
                acc = np.zeros(domain)
                for k, op in enumerate(ct.operators):
                    acc += weights[c, k] * op.apply(spec.indices, spec.values,
                                                    domain)
                want[:, c] = tr.w1_inverse(atlas, acc, flat)
            worst = max(worst, float(np.linalg.norm(got - want)
                                     / np.linalg.norm(want)))
        ok = worst < 0.01
        report("ambient-visibility-folding", ok, f"(worst rms={worst:.4f})")
        assert ok


# ---------------------------------------------------------------------------
# criterion: dipole numerics
# ---------------------------------------------------------------------------

class TestDipoleNumerics:
    def test_dipole(self):
        rng = np.random.default_rng(5)
        worst = 0.0
        for _ in range(20):
            sp = float(rng.uniform(0.1, 10.0))
            sa = float(rng.uniform(0.001, 1.0))
            r = float(rng.uniform(0.0, 50.0))
            got = eval_rd(derive_dipole_raw(sp, sa, 1.3), r)
            want = reference_rd(sp, sa, 1.3, r)
            worst = max(worst, abs(got - want) / abs(want))
        worked = eval_rd(derive_dipole_raw(1.0, 0.1, 1.3), 1.0)
        ok = worst < 1e-6 and abs(worked - 0.02301) < 1e-4
        report("dipole-numerics", ok,
               f"(worst rel={worst:.1e}, R_d(1.0)={worked:.5f})")
        assert ok


# ---------------------------------------------------------------------------
# criterion: golden-image regression
# ---------------------------------------------------------------------------

class TestGoldenImage:
    def test_golden(self, ico, oracle_run, tmp_path):
        from PIL import Image

        from golden_scene import render_golden

        img1 = render_golden(ico, oracle_run["ct_default"])
        img2 = render_golden(ico, oracle_run["ct_default"])
        byte_stable = np.array_equal(img1, img2)
        golden = np.asarray(Image.open("tests/golden/icosphere_point.png"))
        same_shape = golden.shape == img1.shape
        max_diff = int(np.abs(img1.astype(int) - golden.astype(int)).max()) \
            if same_shape else 255
        ok = byte_stable and same_shape and max_diff <= 2
        report("golden-image", ok,
               f"(byte-stable={byte_stable}, max-channel-diff={max_diff})")
        assert ok
