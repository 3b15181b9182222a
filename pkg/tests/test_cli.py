import csv
import json

import pytest

from sssrelight.cli import main, parse_camera, parse_light
from sssrelight.meshgen import make_icosphere, save_obj


@pytest.fixture(scope="module")
def mesh_path(tmp_path_factory):
    path = tmp_path_factory.mktemp("cli") / "ball.obj"
    save_obj(make_icosphere(2, 50.0), path)
    return path


@pytest.fixture(scope="module")
def container_path(mesh_path, tmp_path_factory):
    out = tmp_path_factory.mktemp("cli_ctn") / "ball.prts"
    code = main([
        "precompute", "--mesh", str(mesh_path), "--out", str(out),
        "--k", "8", "--step1-keep", "0.1", "--step2-fraction", "0.9999",
        "--face-side", "8",
    ])
    assert code == 0
    return out


class TestParsers:
    def test_point_light(self):
        light = parse_light("point:1,2,3:100")
        assert light.position.tolist() == [1.0, 2.0, 3.0]
        assert light.intensity.tolist() == [100.0] * 3

    def test_rgb_intensity(self):
        light = parse_light("point:0,0,1:1,2,3")
        assert light.intensity.tolist() == [1.0, 2.0, 3.0]

    def test_bad_light_usage_error(self):
        import click

        with pytest.raises(click.UsageError):
            parse_light("laser:0,0,0:1")

    def test_camera(self):
        cam = parse_camera("1,2,3:0,0,0:55")
        assert cam.fov_y_degrees == 55.0


class TestBasisCommand:
    def test_emits_basis_and_csv(self, tmp_path):
        out = tmp_path / "b.prtb"
        csv_path = tmp_path / "errors.csv"
        code = main(["basis", "--out", str(out), "--csv", str(csv_path),
                     "--k", "20", "--k-list", "1,12,15"])
        assert code == 0
        assert out.exists()
        with open(csv_path) as fh:
            rows = list(csv.DictReader(fh))
        by_k = {int(r["K"]): r for r in rows}
        assert float(by_k[15]["l2rel"]) < 1e-4
        assert float(by_k[12]["l2rel"]) < 1e-3
        from sssrelight.container import load_basis

        basis = load_basis(out)
        assert basis.K == 20

    def test_missing_output_dir_io_error(self, tmp_path):
        code = main(["basis", "--out", str(tmp_path / "nope" / "b.prtb"),
                     "--csv", str(tmp_path / "nope" / "e.csv"), "--k-list", "1"])
        assert code == 3


class TestPrecomputeAndRender:
    def test_container_loads(self, container_path, mesh_path):
        from sssrelight.container import load_container
        from sssrelight.surface import load_mesh

        c = load_container(container_path,
                           expected_mesh_hash=load_mesh(mesh_path).content_hash())
        assert c.compressed.k_count == 8
        assert c.folded is not None
        assert c.metadata["step1_keep"] == 0.1

    def test_lossless_flag_in_meta(self, mesh_path, tmp_path):
        out = tmp_path / "lossless.prts"
        code = main(["precompute", "--mesh", str(mesh_path), "--out", str(out),
                     "--k", "4", "--step1-keep", "1.0", "--step2-fraction", "1.0",
                     "--no-ambient"])
        assert code == 0
        from sssrelight.container import load_container

        assert load_container(out).metadata["lossless"] is True

    def test_mismatched_mesh_hash_error(self, container_path, tmp_path):
        other = tmp_path / "other.obj"
        save_obj(make_icosphere(1, 10.0), other)
        code = main(["render", "--container", str(container_path),
                     "--mesh", str(other), "--out", str(tmp_path / "x.png")])
        assert code == 3

    def test_render_writes_png(self, container_path, mesh_path, tmp_path):
        out = tmp_path / "frame.png"
        code = main(["render", "--container", str(container_path),
                     "--mesh", str(mesh_path), "--out", str(out),
                     "--width", "96", "--height", "64",
                     "--light", "point:0,0,125:12000", "--preset", "skin"])
        assert code == 0
        assert out.read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"

    def test_zero_light_black_image(self, container_path, mesh_path, tmp_path):
        out = tmp_path / "black.png"
        code = main(["render", "--container", str(container_path),
                     "--mesh", str(mesh_path), "--out", str(out),
                     "--width", "48", "--height", "48",
                     "--light", "point:0,0,125:0"])
        assert code == 0
        import numpy as np
        from PIL import Image

        assert np.asarray(Image.open(out)).max() == 0

    def test_bad_container_error(self, mesh_path, tmp_path):
        bad = tmp_path / "bad.prts"
        bad.write_bytes(b"garbage")
        code = main(["render", "--container", str(bad), "--mesh", str(mesh_path),
                     "--out", str(tmp_path / "y.png")])
        assert code == 3


class TestValidate:
    def test_good_settings_pass(self, mesh_path):
        # subdiv-2 is very coarse, so run nearly lossless: this checks the
        # pass path and exit code, not desk-scale quality (the acceptance
        # suite covers that at full resolution)
        code = main(["validate", "--mesh", str(mesh_path), "--k", "8",
                     "--step1-keep", "0.5", "--step2-fraction", "1.0",
                     "--e-keep", "1.0", "--max-rms", "0.02"])
        assert code == 0

    def test_degraded_settings_flagged(self, mesh_path):
        code = main(["validate", "--mesh", str(mesh_path), "--k", "8",
                     "--step1-keep", "0.1", "--step2-fraction", "0.5",
                     "--max-rms", "0.02"])
        assert code == 2

    def test_lossless_settings_tiny_error(self, mesh_path, capsys):
        code = main(["validate", "--mesh", str(mesh_path), "--k", "12",
                     "--step1-keep", "1.0", "--step2-fraction", "1.0",
                     "--e-keep", "1.0", "--max-rms", "0.02", "--json"])
        assert code == 0
        report = json.loads(capsys.readouterr().out)
        # lossless wavelets: all residual error is the K-truncation of the
        # radial family, far below the acceptance bound
        assert report["rms_vs_oracle"] < 1e-3


class TestBench:
    def test_bench_json(self, container_path, mesh_path, capsys):
        code = main(["bench", "--container", str(container_path),
                     "--mesh", str(mesh_path), "--iterations", "3", "--json"])
        assert code == 0
        report = json.loads(capsys.readouterr().out)
        assert report["iterations"] == 3
        assert set(report["stages_ms"]) == {
            "irradiance", "transfer", "weighting", "inverse_wavelet", "raster"}
        assert report["material_edit"]["median_ms"] < report["relight"]["median_ms"]
        assert report["relight"]["median_ms"] > 0.0


class TestUsage:
    def test_unknown_flag(self):
        assert main(["render", "--frobnicate"]) in (1, 2)

    def test_missing_required(self):
        assert main(["render"]) == 1
