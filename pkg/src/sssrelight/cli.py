"""Batch entry points: basis generation, precompute, render, validate,
serve, and bench.

Every subcommand reads an optional TOML config (section named after the
subcommand) whose keys mirror the flags; explicit flags win. Exit codes:
0 ok, 1 usage error, 2 validation failure, 3 I/O or data error.
"""

import csv
import json
import sys

import click
import numpy as np

try:
    import tomllib
except ImportError:  # python < 3.11
    import tomli as tomllib

from . import basisgen as bg
from . import container as ctn
from . import lighting as lt
from . import runtime as rt
from . import transfer as tr
from ._accel import backend_name
from .dipole import OpticalMaterial
from .presets import DEFAULT_PRESET, PRESETS, get_preset
from .surface import MeshError, build_quadtree_atlas, load_mesh, sample_surface


class ValidationFailure(Exception):
    pass


def _load_config(path, section):
    if not path:
        return {}
    with open(path, "rb") as fh:
        data = tomllib.load(fh)
    return data.get(section, {})


def _merged(config, key, flag_value, default):
    if flag_value is not None:
        return flag_value
    return config.get(key, default)


def parse_light(spec: str):
    """point:x,y,z:i[,g,b] | dir:x,y,z:e[,g,b] | sphere:x,y,z:radius:L[,g,b]
    | ambient:const:r,g,b | ambient:<image path>"""
    kind, _, rest = spec.partition(":")
    try:
        if kind == "point":
            pos, inten = rest.split(":")
            return lt.PointLight(position=[float(v) for v in pos.split(",")],
                                 intensity=_rgb(inten))
        if kind == "dir":
            d, irr = rest.split(":")
            return lt.DirectionalLight(direction=[float(v) for v in d.split(",")],
                                       irradiance=_rgb(irr))
        if kind == "sphere":
            pos, radius, rad = rest.split(":")
            return lt.SphereLight(center=[float(v) for v in pos.split(",")],
                                  radius=float(radius), radiance=_rgb(rad))
        if kind == "ambient":
            from .envmap import Cubemap, load_cross_png, load_hdr

            if rest.startswith("const:"):
                return lt.AmbientLight(environment=Cubemap.constant(
                    _rgb(rest[len("const:"):]), side=16))
            if rest.endswith(".hdr"):
                return lt.AmbientLight(environment=load_hdr(rest))
            return lt.AmbientLight(environment=load_cross_png(rest))
    except (ValueError, OSError) as exc:
        raise click.UsageError(f"bad light spec {spec!r}: {exc}") from exc
    raise click.UsageError(f"unknown light kind {kind!r}")


def _rgb(text):
    parts = [float(v) for v in text.split(",")]
    if len(parts) == 1:
        return [parts[0]] * 3
    if len(parts) != 3:
        raise ValueError("expected 1 or 3 comma-separated values")
    return parts


def parse_camera(spec: str) -> rt.Camera:
    try:
        fields = spec.split(":")
        pos = [float(v) for v in fields[0].split(",")]
        look = [float(v) for v in fields[1].split(",")]
        fov = float(fields[2]) if len(fields) > 2 else 40.0
        return rt.Camera(position=pos, look_at=look, fov_y_degrees=fov)
    except (IndexError, ValueError) as exc:
        raise click.UsageError(f"bad camera spec {spec!r}: {exc}") from exc


def _material_from(config, preset, sigma_s, sigma_a, g, eta) -> OpticalMaterial:
    base = get_preset(preset or config.get("preset", DEFAULT_PRESET))
    return OpticalMaterial(
        sigma_s_prime=_rgb(sigma_s) if sigma_s else base.sigma_s_prime,
        sigma_a=_rgb(sigma_a) if sigma_a else base.sigma_a,
        g=g if g is not None else base.g,
        eta=eta if eta is not None else base.eta,
    )


def _load_scene(container_path, mesh_path, material, rig, camera, e_keep=None):
    mesh = load_mesh(mesh_path)
    samples = sample_surface(mesh)
    container = ctn.load_container(container_path,
                                   expected_mesh_hash=mesh.content_hash())
    accel = lt.build_accelerator(mesh)
    kwargs = {} if e_keep is None else {"e_keep": e_keep}
    return rt.Scene(mesh=mesh, samples=samples, container=container, accel=accel,
                    material=material, rig=rig, camera=camera, **kwargs), mesh, samples


@click.group()
def cli():
    """Precomputed translucent-material relighting toolkit."""


@cli.command("basis")
@click.option("--config", type=click.Path(exists=True), default=None)
@click.option("--out", "out_path", type=click.Path(), default=None,
              help="radial-basis output file")
@click.option("--csv", "csv_path", type=click.Path(), default=None,
              help="error-report CSV output")
@click.option("--k", "k_count", type=int, default=None)
@click.option("--k-list", default=None, help="comma-separated K values for the report")
@click.option("--eta", type=float, default=None)
@click.option("--g", "g_value", type=float, default=None)
def cmd_basis(config, out_path, csv_path, k_count, k_list, eta, g_value):
    """Sample the radial response family, factor it, report errors."""
    cfg = _load_config(config, "basis")
    out_path = _merged(cfg, "out", out_path, "basis.prtb")
    csv_path = _merged(cfg, "csv", csv_path, "basis_errors.csv")
    k_count = int(_merged(cfg, "k", k_count, 20))
    k_list = _merged(cfg, "k_list", k_list, "1,2,4,8,12,15,20")
    ks = sorted({int(v) for v in str(k_list).split(",")})
    grid = bg.build_sample_grid(bg.GridConfig(
        eta=float(_merged(cfg, "eta", eta, 1.3)),
        g=float(_merged(cfg, "g", g_value, 0.0))))
    matrix = bg.assemble_matrix(grid)
    basis = bg.decompose(matrix, max(k_count, max(ks)))
    report = bg.error_report(basis, matrix, [k for k in ks if k <= basis.K])
    ctn.save_basis(out_path, basis, metadata={"k": k_count})
    with open(csv_path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=["K", "l2rel", "linfabs", "linfrel"])
        writer.writeheader()
        writer.writerows(report)
    click.echo(f"basis written to {out_path}; error report to {csv_path}")
    for row in report:
        click.echo(f"  K={row['K']:3d} l2rel={row['l2rel']:.3e} "
                   f"linfabs={row['linfabs']:.3e} linfrel={row['linfrel']:.3e}")


@cli.command("precompute")
@click.option("--config", type=click.Path(exists=True), default=None)
@click.option("--mesh", "mesh_path", type=click.Path(exists=True), required=True)
@click.option("--out", "out_path", type=click.Path(), required=True)
@click.option("--k", "k_count", type=int, default=None)
@click.option("--m", "part_count", type=int, default=None)
@click.option("--level", type=int, default=None, help="quadtree level n (auto if omitted)")
@click.option("--step1-keep", type=float, default=None,
              help="fraction of transport coefficients kept per row")
@click.option("--step2-fraction", type=float, default=None,
              help="energy fraction kept per spatial column")
@click.option("--ambient/--no-ambient", default=None,
              help="precompute visibility and the folded ambient operator")
@click.option("--face-side", type=int, default=None)
@click.option("--fold-fraction", type=float, default=None)
@click.option("--eta", type=float, default=None, help="Fresnel eta baked into ambient")
def cmd_precompute(config, mesh_path, out_path, k_count, part_count, level,
                   step1_keep, step2_fraction, ambient, face_side,
                   fold_fraction, eta):
    """Build the compressed scattering-transfer container for a mesh."""
    cfg = _load_config(config, "precompute")
    k_count = int(_merged(cfg, "k", k_count, 12))
    part_count = int(_merged(cfg, "m", part_count, 4))
    level = _merged(cfg, "level", level, None)
    step1_keep = float(_merged(cfg, "step1_keep", step1_keep, tr.DEFAULT_STEP1_KEEP))
    step2_fraction = float(_merged(cfg, "step2_fraction", step2_fraction,
                                   tr.DEFAULT_STEP2_FRACTION))
    ambient = bool(_merged(cfg, "ambient", ambient, True))
    face_side = int(_merged(cfg, "face_side", face_side, 16))
    fold_fraction = float(_merged(cfg, "fold_fraction", fold_fraction,
                                  tr.DEFAULT_FOLD_FRACTION))
    eta = float(_merged(cfg, "eta", eta, 1.3))

    mesh = load_mesh(mesh_path)
    samples = sample_surface(mesh)
    click.echo(f"{mesh_path}: {samples.count} samples, backend {backend_name()}")
    atlas = build_quadtree_atlas(samples, part_count,
                                 None if level is None else int(level))
    grid = bg.build_sample_grid(bg.GridConfig(eta=eta))
    basis = bg.decompose(bg.assemble_matrix(grid), k_count)

    def progress(done, total):
        click.echo(f"  transfer rows {done}/{total}", nl=False)
        click.echo("\r", nl=False)

    compressed = tr.precompute_compressed(
        samples, atlas, basis, step1_keep, step2_fraction, progress=progress)
    click.echo(f"\n  stored entries: {compressed.nnz} "
               f"(step-1 retained {compressed.step1_entries})")
    visibility = folded = None
    if ambient:
        accel = lt.build_accelerator(mesh)
        visibility = tr.precompute_visibility(samples, accel, face_side)
        folded = tr.fold_visibility(compressed, visibility, samples, atlas,
                                    eta=eta, fraction=fold_fraction)
        click.echo(f"  visibility {visibility.matrix.shape} folded at "
                   f"fraction {fold_fraction}")
    meta = {
        "tool": "sssrelight",
        "mesh": str(mesh_path),
        "k": k_count, "m": part_count,
        "step1_keep": step1_keep, "step2_fraction": step2_fraction,
        "ambient": ambient, "face_side": face_side,
        "fold_fraction": fold_fraction, "eta": eta,
        "lossless": step1_keep >= 1.0 and step2_fraction >= 1.0,
    }
    ctn.save_container(out_path, basis, atlas, compressed, mesh.content_hash(),
                       visibility=visibility, folded=folded, metadata=meta)
    click.echo(f"container written to {out_path}")


def _default_rig():
    return lt.LightRig(lights=(lt.PointLight(position=[0.0, 0.0, 125.0],
                                             intensity=12000.0),))


@cli.command("render")
@click.option("--config", type=click.Path(exists=True), default=None)
@click.option("--container", "container_path", type=click.Path(exists=True), required=True)
@click.option("--mesh", "mesh_path", type=click.Path(exists=True), required=True)
@click.option("--out", "out_path", type=click.Path(), required=True)
@click.option("--light", "lights", multiple=True, help="repeatable light spec")
@click.option("--camera", "camera_spec", default=None)
@click.option("--width", type=int, default=None)
@click.option("--height", type=int, default=None)
@click.option("--exposure", type=float, default=None)
@click.option("--preset", default=None, help=f"material preset {sorted(PRESETS)}")
@click.option("--sigma-s", default=None, help="sigma_s' per channel, e.g. 2.19,2.62,3.0")
@click.option("--sigma-a", default=None)
@click.option("--g", "g_value", type=float, default=None)
@click.option("--eta", type=float, default=None)
def cmd_render(config, container_path, mesh_path, out_path, lights, camera_spec,
               width, height, exposure, preset, sigma_s, sigma_a, g_value, eta):
    """Relight and rasterize one frame to PNG."""
    cfg = _load_config(config, "render")
    width = int(_merged(cfg, "width", width, 640))
    height = int(_merged(cfg, "height", height, 480))
    exposure = float(_merged(cfg, "exposure", exposure, 1.0))
    lights = list(lights) or list(cfg.get("lights", []))
    rig = (lt.LightRig(lights=tuple(parse_light(s) for s in lights))
           if lights else _default_rig())
    camera_spec = _merged(cfg, "camera", camera_spec, "0,0,180:0,0,0:40")
    material = _material_from(cfg, preset, sigma_s, sigma_a, g_value, eta)
    scene, mesh, samples = _load_scene(container_path, mesh_path, material, rig,
                                       parse_camera(camera_spec))
    frame = scene.relight()
    image = rt.render_image(mesh, samples, frame, scene.camera, width, height,
                            exposure=exposure)
    rt.save_png(image, out_path)
    timings = {k: round(v, 3) for k, v in frame.timings_ms.items()}
    click.echo(f"wrote {out_path} ({width}x{height}); stage ms: {timings}")


@cli.command("validate")
@click.option("--config", type=click.Path(exists=True), default=None)
@click.option("--mesh", "mesh_path", type=click.Path(exists=True), required=True)
@click.option("--step1-keep", type=float, default=None)
@click.option("--step2-fraction", type=float, default=None)
@click.option("--k", "k_count", type=int, default=None)
@click.option("--m", "part_count", type=int, default=None)
@click.option("--max-rms", type=float, default=None,
              help="acceptance bound on the oracle-relative RMS error")
@click.option("--e-keep", type=float, default=None,
              help="irradiance coefficient keep fraction")
@click.option("--json", "json_out", is_flag=True, default=False)
def cmd_validate(config, mesh_path, step1_keep, step2_fraction, k_count,
                 part_count, max_rms, e_keep, json_out):
    """Compare the compressed pipeline against the brute-force double sum.

    Exit code 2 when the error bound is violated.
    """
    cfg = _load_config(config, "validate")
    step1_keep = float(_merged(cfg, "step1_keep", step1_keep, tr.DEFAULT_STEP1_KEEP))
    step2_fraction = float(_merged(cfg, "step2_fraction", step2_fraction,
                                   tr.DEFAULT_STEP2_FRACTION))
    k_count = int(_merged(cfg, "k", k_count, 12))
    part_count = int(_merged(cfg, "m", part_count, 4))
    max_rms = float(_merged(cfg, "max_rms", max_rms, 0.02))
    e_keep = float(_merged(cfg, "e_keep", e_keep, rt.DEFAULT_E_KEEP))

    from .dipole import derive_dipole, eval_rd

    mesh = load_mesh(mesh_path)
    samples = sample_surface(mesh)
    atlas = build_quadtree_atlas(samples, part_count)
    basis = bg.decompose(bg.assemble_matrix(bg.build_sample_grid()), k_count)
    accel = lt.build_accelerator(mesh)
    material = get_preset("marble")
    material = OpticalMaterial(sigma_s_prime=material.sigma_s_prime,
                               sigma_a=material.sigma_a, eta=1.3)
    rig = _default_rig()
    e_direct = lt.irradiance_direct(samples, rig, accel, material.eta)

    diff = samples.positions[:, None, :] - samples.positions[None, :, :]
    dist = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
    oracle = np.zeros((samples.count, 3))
    for c in range(3):
        rd = eval_rd(derive_dipole(material, c), dist.ravel()).reshape(dist.shape)
        oracle[:, c] = (rd * (e_direct[:, c] * samples.area)[None, :]).sum(axis=1)

    compressed = tr.precompute_compressed(samples, atlas, basis,
                                          step1_keep, step2_fraction)
    weights = bg.project_material(basis, material).s
    flat = tr.atlas_flat_cells(atlas)
    domain = compressed.domain_size
    from .wavelets import compress_top_n

    result = np.zeros((samples.count, 3))
    for c in range(3):
        coeffs = tr.w0_forward(atlas, e_direct[:, c], flat)
        spec = compress_top_n(coeffs, max(1, round(e_keep * domain)))
        acc = np.zeros(domain)
        for k, op in enumerate(compressed.operators):
            acc += weights[c, k] * op.apply(spec.indices, spec.values, domain)
        result[:, c] = tr.w1_inverse(atlas, acc, flat)
    rms = float(np.linalg.norm(result - oracle) / np.linalg.norm(oracle))
    report = {
        "mesh": str(mesh_path),
        "samples": samples.count,
        "step1_keep": step1_keep,
        "step2_fraction": step2_fraction,
        "e_keep": e_keep,
        "rms_vs_oracle": rms,
        "bound": max_rms,
        "stored_entries": compressed.nnz,
        "step1_entries": compressed.step1_entries,
        "passed": rms <= max_rms,
    }
    if json_out:
        click.echo(json.dumps(report, indent=2))
    else:
        click.echo(f"samples={report['samples']} settings=({step1_keep}, "
                   f"{step2_fraction}) rms={rms:.5f} bound={max_rms}")
        click.echo("PASS" if report["passed"] else "FAIL (degraded compression)")
    if not report["passed"]:
        raise ValidationFailure(f"rms {rms:.5f} exceeds bound {max_rms}")


@cli.command("serve")
@click.option("--config", type=click.Path(exists=True), default=None)
@click.option("--container", "container_path", type=click.Path(exists=True), required=True)
@click.option("--mesh", "mesh_path", type=click.Path(exists=True), required=True)
@click.option("--bind", default=None, help="host:port, default 127.0.0.1:7878")
@click.option("--ui-dir", type=click.Path(), default=None,
              help="static editor bundle to serve at /")
@click.option("--preset", default=None)
def cmd_serve(config, container_path, mesh_path, bind, ui_dir, preset):
    """Run the interactive relighting service (HTTP + WebSocket)."""
    cfg = _load_config(config, "serve")
    bind = _merged(cfg, "bind", bind, "127.0.0.1:7878")
    ui_dir = _merged(cfg, "ui_dir", ui_dir, None)
    host, _, port = bind.partition(":")
    material = get_preset(preset or cfg.get("preset", DEFAULT_PRESET))
    from .service import run_service

    run_service(container_path, mesh_path, host=host or "127.0.0.1",
                port=int(port or 7878), material=material, ui_dir=ui_dir)


@cli.command("bench")
@click.option("--config", type=click.Path(exists=True), default=None)
@click.option("--container", "container_path", type=click.Path(exists=True), required=True)
@click.option("--mesh", "mesh_path", type=click.Path(exists=True), required=True)
@click.option("--iterations", type=int, default=None)
@click.option("--json", "json_out", is_flag=True, default=False)
def cmd_bench(config, container_path, mesh_path, iterations, json_out):
    """Time the full relight vs the material-edit fast path."""
    cfg = _load_config(config, "bench")
    iterations = int(_merged(cfg, "iterations", iterations, 20))
    material = get_preset(DEFAULT_PRESET)
    scene, _, _ = _load_scene(container_path, mesh_path, material, _default_rig(),
                              parse_camera("0,0,180:0,0,0"))
    report = rt.bench(scene, iterations=iterations)
    frame = scene.relight()
    report["stages_ms"] = {k: round(v, 3) for k, v in frame.timings_ms.items()}
    report["backend"] = backend_name()
    if json_out:
        click.echo(json.dumps(report, indent=2))
    else:
        click.echo(f"backend: {report['backend']}  iterations: {iterations}")
        click.echo(f"relight median: {report['relight']['median_ms']:.2f} ms")
        click.echo(f"edit    median: {report['material_edit']['median_ms']:.2f} ms")
        click.echo(f"stages (one relight): {report['stages_ms']}")
        click.echo("edit path faster" if report["edit_faster"] else
                   "WARNING: edit path not faster")


def main(argv=None):
    try:
        cli.main(args=argv, standalone_mode=False)
        return 0
    except click.UsageError as exc:
        click.echo(f"usage error: {exc.format_message()}", err=True)
        return 1
    except click.Abort:
        return 1
    except ValidationFailure as exc:
        click.echo(f"validation failure: {exc}", err=True)
        return 2
    except (OSError, MeshError, ctn.ContainerError) as exc:
        click.echo(f"error: {exc}", err=True)
        return 3


if __name__ == "__main__":
    sys.exit(main())
