"""Command-line front end.

Subcommands cover the full forward-design loop: paint calibration
fitting, pad generation, mesh conversion, approximate indentation,
rendering, the two illumination design sweeps, and an end-to-end
pipeline.  Every command that produces results writes a JSON manifest
recording resolved settings, input hashes and outputs, so any run can
be reproduced exactly.

Exit codes: 0 success, 1 usage error, 2 validation error, 3 runtime
failure.
"""

from __future__ import annotations

import csv
import hashlib
import json
import os
import sys
import time
from dataclasses import dataclass
from pathlib import Path

import click
import numpy as np

from . import __version__
from .deform import DeformSettings, indent_surface, position_indenter
from .errors import ImageNaN, SimulationError
from .geometry import (
    GelPadSpec,
    Indenter,
    assemble_scene,
    generate_gelpad,
    make_indenter,
    make_led_panel,
    sensing_surface,
    sensing_surface_with_nodes,
)
from .meshconvert import (
    hex_to_surface,
    read_fem_deck,
    read_neutral_mesh,
    read_obj,
    write_neutral_mesh,
    write_obj,
)
from .render import (
    OBJ_GEL,
    compile_scene,
    luminance,
    pad_probe_pixel,
    probe_intensity,
    render_compiled,
    set_thread_count,
)
from .scene import RenderSettings, Scene, load_scene, save_scene
from .spectra import (
    fit_spectrum,
    material_from_emission_fit,
    read_spectrum_csv,
    write_fit_report,
)

THREADS_ENV = "LUMITACT_THREADS"

DEFAULT_SWEEP_ANGLES = tuple(float(a) for a in range(10, 160, 10))
DEFAULT_PROBE_WINDOW = 9


def _sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()


@dataclass
class SweepSpec:
    """One design sweep: which variable moves, over which values."""

    variable: str
    values: list[float]
    base_scene: str | None = None
    probe: tuple[int, int] | None = None
    probe_window: int = DEFAULT_PROBE_WINDOW

    def __post_init__(self) -> None:
        allowed = ("light_angle", "light_count", "gelpad_shape", "indenter_depth")
        if self.variable not in allowed:
            raise ValueError(f"sweep variable must be one of {allowed}")
        if len(self.values) < 2:
            raise ValueError("a sweep needs at least two values")
        if sorted(self.values) != list(self.values):
            raise ValueError("sweep values must be sorted ascending")


class Manifest:
    """Collects resolved settings per stage; written as JSON."""

    def __init__(self, command: str, out_dir: Path):
        self.data = {
            "tool": "lumitact",
            "version": __version__,
            "command": command,
            "created": time.strftime("%Y-%m-%dT%H:%M:%S"),
            "stages": [],
            "inputs": {},
            "outputs": [],
            "status": "running",
        }
        self.out_dir = out_dir

    def stage(self, name: str, **settings) -> None:
        self.data["stages"].append({"name": name, "settings": settings})

    def add_input(self, path: str | Path) -> None:
        p = Path(path)
        self.data["inputs"][str(p)] = _sha256(p)

    def add_output(self, path: str | Path) -> None:
        self.data["outputs"].append(str(path))

    def write(self, status: str = "ok") -> Path:
        self.data["status"] = status
        path = self.out_dir / "manifest.json"
        with open(path, "w") as fh:
            json.dump(self.data, fh, indent=2)
        return path


def _render_settings(ctx_obj: dict, scene: Scene) -> RenderSettings:
    settings = scene.render
    overrides = {}
    if ctx_obj.get("spp") is not None:
        overrides["samples_per_pixel"] = ctx_obj["spp"]
    if ctx_obj.get("seed") is not None:
        overrides["seed"] = ctx_obj["seed"]
    if overrides:
        from dataclasses import replace

        settings = replace(settings, **overrides)
    return settings


def _default_render() -> RenderSettings:
    return RenderSettings(samples_per_pixel=256, width=320, height=240, exposure=400.0)


def _parse_pad(family, width, length, thickness, cyl_radius, ellipsoid_radii, resolution) -> GelPadSpec:
    radii = None
    if ellipsoid_radii:
        radii = tuple(float(v) for v in ellipsoid_radii.split(","))
        if len(radii) != 3:
            raise click.UsageError("--ellipsoid-radii expects three comma-separated values")
    res = None
    if resolution:
        parts = tuple(int(v) for v in resolution.split(","))
        if len(parts) != 2:
            raise click.UsageError("--resolution expects two comma-separated counts")
        res = parts
    return GelPadSpec(
        family=family,
        width=width,
        length=length,
        thickness=thickness,
        cyl_radius=cyl_radius,
        ellipsoid_radii=radii,
        resolution=res,
    )


def _parse_indenter(kind, dims, center, axis) -> Indenter:
    dim_values = tuple(float(v) for v in dims.split(","))
    center_v = tuple(float(v) for v in center.split(",")) if center else (0.0, 0.0, 60.0)
    axis_v = tuple(float(v) for v in axis.split(",")) if axis else (1.0, 0.0, 0.0)
    return make_indenter(kind, dim_values, center_v, axis_v)


def _default_pad() -> GelPadSpec:
    # the flattest of the ellipsoid pads, at ~1 mm render resolution
    return GelPadSpec(
        "ellipsoid", width=35.0, length=70.0, thickness=4.0,
        ellipsoid_radii=(80.0, 60.0, 30.0), resolution=(70, 35),
    )


def _build_default_scene(
    n_lights: int = 1,
    angle: float = 30.0,
    pad: GelPadSpec | None = None,
    indenter: Indenter | None = None,
    depth: float = 1.0,
) -> Scene:
    pad = pad or _default_pad()
    lights = [make_led_panel("bottom", angle)]
    if n_lights >= 2:
        lights.append(make_led_panel("top", angle))
    surface = None
    source = "generated"
    if indenter is not None and depth > 0.0:
        mesh = sensing_surface(pad, frame="rig")
        posed = position_indenter(indenter, mesh, depth)
        surface = indent_surface(mesh, posed, depth)
        source = "approximate-deformer"
        indenter = posed
    return assemble_scene(
        pad, lights, indenter=indenter, surface=surface,
        surface_source=source, render=_default_render(),
    )


@click.group()
@click.option("--seed", type=int, default=None, help="Override the render seed.")
@click.option("--spp", type=int, default=None, help="Override samples per pixel.")
@click.option("--out-dir", type=click.Path(path_type=Path), default=Path("out"),
              help="Directory for outputs (created if missing).")
@click.option("--scene", "scene_path", type=click.Path(exists=True, path_type=Path),
              default=None, help="Scene file to operate on.")
@click.pass_context
def cli(ctx, seed, spp, out_dir, scene_path):
    """Forward-design toolkit for fluorescent camera-based tactile fingers."""
    ctx.ensure_object(dict)
    ctx.obj.update(seed=seed, spp=spp, out_dir=out_dir, scene_path=scene_path)
    threads = os.environ.get(THREADS_ENV)
    if threads:
        set_thread_count(int(threads))


@cli.command()
@click.argument("measured_csv", type=click.Path(path_type=Path))
@click.option("--paint", type=click.Choice(["red", "green"]), required=True)
@click.pass_context
def fit(ctx, measured_csv, paint):
    """Fit the spectral model to a measured emission CSV."""
    out_dir: Path = ctx.obj["out_dir"]
    out_dir.mkdir(parents=True, exist_ok=True)
    if not measured_csv.exists() or measured_csv.stat().st_size == 0:
        raise click.UsageError(f"measured CSV {measured_csv} is missing or empty")
    try:
        measured = read_spectrum_csv(measured_csv)
    except ValueError as exc:
        raise click.UsageError(str(exc)) from exc

    manifest = Manifest("fit", out_dir)
    manifest.add_input(measured_csv)
    result = fit_spectrum(measured)
    material = material_from_emission_fit(paint, result.params)

    report = out_dir / "fit_report.csv"
    write_fit_report(report, measured, result)
    manifest.add_output(report)

    from .plots import plot_fit_overlay

    overlay = out_dir / "fit_overlay.svg"
    plot_fit_overlay(measured, result, overlay, title=f"{paint} paint emission")
    manifest.add_output(overlay)

    preset = out_dir / f"paint_{paint}.yaml"
    import yaml

    from .scene import _material_to_dict

    with open(preset, "w") as fh:
        yaml.safe_dump(_material_to_dict(material), fh, sort_keys=False)
    manifest.add_output(preset)

    manifest.stage(
        "fit",
        paint=paint,
        lambda0=result.params.lambda0, gamma=result.params.gamma,
        omega=result.params.omega, h=result.params.h,
        residual=result.residual, converged=result.converged,
        iterations=result.iterations,
    )
    manifest.write()
    click.echo(
        f"fit: lambda0={result.params.lambda0:.2f} nm gamma={result.params.gamma:.2f} "
        f"omega={result.params.omega:.3f} h={result.params.h:.4g} "
        f"residual={result.residual:.3e} converged={result.converged}"
    )


@cli.command("gen-pad")
@click.option("--family", type=click.Choice(["flat", "cylindrical", "ellipsoid"]), required=True)
@click.option("--width", type=float, required=True)
@click.option("--length", type=float, required=True)
@click.option("--thickness", type=float, required=True)
@click.option("--cyl-radius", type=float, default=None)
@click.option("--ellipsoid-radii", type=str, default=None, help="a,b,c in mm")
@click.option("--resolution", type=str, default=None, help="nu,nv surface quad counts")
@click.pass_context
def gen_pad(ctx, family, width, length, thickness, cyl_radius, ellipsoid_radii, resolution):
    """Generate a parametric gel pad (neutral hex mesh + OBJ surface)."""
    out_dir: Path = ctx.obj["out_dir"]
    out_dir.mkdir(parents=True, exist_ok=True)
    spec = _parse_pad(family, width, length, thickness, cyl_radius, ellipsoid_radii, resolution)
    surface, hexmesh = generate_gelpad(spec)
    manifest = Manifest("gen-pad", out_dir)
    mesh_path = out_dir / f"pad_{family}.mesh"
    write_neutral_mesh(mesh_path, hexmesh, comment=f"gel pad {spec.to_dict()}")
    obj_path = out_dir / f"pad_{family}.obj"
    write_obj(obj_path, surface, name=f"pad_{family}")
    manifest.add_output(mesh_path)
    manifest.add_output(obj_path)
    manifest.stage("gen-pad", **spec.to_dict())
    manifest.write()
    click.echo(
        f"pad: {len(hexmesh.nodes)} nodes, {len(hexmesh.elements)} hexes, "
        f"{len(surface.triangles)} surface triangles, volume {surface.signed_volume():.2f} mm^3"
    )


@cli.command()
@click.argument("input_mesh", type=click.Path(exists=True, path_type=Path))
@click.pass_context
def convert(ctx, input_mesh):
    """Convert a hex mesh (neutral format or FEM deck) to a surface OBJ."""
    out_dir: Path = ctx.obj["out_dir"]
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = Manifest("convert", out_dir)
    manifest.add_input(input_mesh)
    if input_mesh.suffix.lower() in (".inp", ".deck"):
        hexmesh = read_fem_deck(input_mesh)
    else:
        hexmesh = read_neutral_mesh(input_mesh)
    if hexmesh.displacements is not None:
        from .meshconvert import apply_displacements

        hexmesh = apply_displacements(hexmesh)
    surface = hex_to_surface(hexmesh)
    obj_path = out_dir / (input_mesh.stem + "_surface.obj")
    write_obj(obj_path, surface, name=input_mesh.stem)
    manifest.add_output(obj_path)
    manifest.stage(
        "convert",
        input=str(input_mesh), elements=int(len(hexmesh.elements)),
        triangles=int(len(surface.triangles)),
        signed_volume=surface.signed_volume(),
        watertight=surface.is_watertight(),
    )
    manifest.write()
    click.echo(
        f"converted: {len(surface.triangles)} triangles, "
        f"volume {surface.signed_volume():.3f} mm^3, watertight={surface.is_watertight()}"
    )


@cli.command()
@click.option("--family", type=click.Choice(["flat", "cylindrical", "ellipsoid"]), default="flat")
@click.option("--width", type=float, default=35.0)
@click.option("--length", type=float, default=70.0)
@click.option("--thickness", type=float, default=4.0)
@click.option("--cyl-radius", type=float, default=None)
@click.option("--ellipsoid-radii", type=str, default=None)
@click.option("--resolution", type=str, default=None)
@click.option("--indenter", "indenter_kind", type=click.Choice(["cylinder", "cuboid", "sphere"]),
              default="cylinder")
@click.option("--dims", type=str, default="10,30", help="Indenter dims (kind-specific, mm).")
@click.option("--center", type=str, default=None, help="Indenter center x,y,z (pre-positioning).")
@click.option("--axis", type=str, default=None, help="Indenter axis x,y,z.")
@click.option("--depth", type=float, default=1.0)
@click.option("--smoothing-iterations", type=int, default=25)
@click.option("--smoothing-weight", type=float, default=0.5)
@click.pass_context
def indent(ctx, family, width, length, thickness, cyl_radius, ellipsoid_radii, resolution,
           indenter_kind, dims, center, axis, depth, smoothing_iterations, smoothing_weight):
    """Deform a pad surface with the approximate (non-FEM) indenter model."""
    out_dir: Path = ctx.obj["out_dir"]
    out_dir.mkdir(parents=True, exist_ok=True)
    spec = _parse_pad(family, width, length, thickness, cyl_radius, ellipsoid_radii, resolution)
    shape = _parse_indenter(indenter_kind, dims, center, axis)
    settings = DeformSettings(
        smoothing_iterations=smoothing_iterations, smoothing_weight=smoothing_weight
    )
    surface, hexmesh, node_ids = sensing_surface_with_nodes(spec, frame="rig")
    posed = position_indenter(shape, surface, depth)
    deformed = indent_surface(surface, posed, depth, settings)

    manifest = Manifest("indent", out_dir)
    displacements = np.zeros_like(hexmesh.nodes)
    displacements[node_ids] = deformed.vertices - surface.vertices
    hexmesh.displacements = displacements
    mesh_path = out_dir / "deformed_pad.mesh"
    write_neutral_mesh(
        mesh_path, hexmesh,
        comment="deformation source: approximate-deformer\n"
                f"indenter: {posed.to_dict()} depth: {depth} mm",
    )
    obj_path = out_dir / "deformed_surface.obj"
    write_obj(obj_path, deformed, name="deformed_surface")
    manifest.add_output(mesh_path)
    manifest.add_output(obj_path)
    manifest.stage(
        "indent",
        pad=spec.to_dict(), indenter=posed.to_dict(), depth=depth,
        smoothing_iterations=smoothing_iterations, smoothing_weight=smoothing_weight,
        provenance="approximate-deformer",
    )
    manifest.write()
    click.echo("provenance: approximate-deformer")
    click.echo(f"neutral mesh with displacements written to {mesh_path}")
    click.echo(f"deformed surface written to {obj_path}")


@cli.command("render")
@click.option("--exposure", type=float, default=None)
@click.pass_context
def render_cmd(ctx, exposure):
    """Render a scene file to PNG plus a raw float sidecar."""
    out_dir: Path = ctx.obj["out_dir"]
    out_dir.mkdir(parents=True, exist_ok=True)
    scene_path = ctx.obj.get("scene_path")
    manifest = Manifest("render", out_dir)
    if scene_path is not None:
        scene = load_scene(scene_path)
        manifest.add_input(scene_path)
    else:
        scene = _build_default_scene()
    settings = _render_settings(ctx.obj, scene)
    if exposure is not None:
        from dataclasses import replace

        settings = replace(settings, exposure=exposure)
    compiled = compile_scene(scene)
    result = render_compiled(compiled, settings)
    png = out_dir / "render.png"
    raw = out_dir / "render.raw"
    result.image.to_png(png)
    result.image.save_raw(raw)
    manifest.add_output(png)
    manifest.add_output(raw)
    manifest.stage("render", **settings.__dict__)
    manifest.write()
    click.echo(f"rendered {settings.width}x{settings.height} at {settings.samples_per_pixel} spp")


def _run_angle_sweep(ctx_obj: dict, spec: SweepSpec, out_dir: Path) -> Path:
    """Shared sweep core: one render per angle, CSV + SVG + PNGs."""
    manifest = Manifest("sweep-angle", out_dir)
    if spec.base_scene:
        scene = load_scene(spec.base_scene)
        manifest.add_input(spec.base_scene)
    else:
        scene = _build_default_scene(
            indenter=make_indenter("cylinder", (10.0, 30.0), (0.0, 0.0, 60.0)), depth=1.0
        )
    settings = _render_settings(ctx_obj, scene)
    compiled = compile_scene(scene)

    if spec.probe is None:
        preview = render_compiled(
            compiled,
            RenderSettings(samples_per_pixel=16, width=settings.width,
                           height=settings.height, seed=settings.seed),
        )
        target = (0.0, 0.0)
        if scene.indenter is not None:
            target = (scene.indenter.center[0], scene.indenter.center[1])
        probe = pad_probe_pixel(preview, target)
    else:
        probe = spec.probe

    rows = []
    failure: Exception | None = None
    for angle in spec.values:
        try:
            swapped = compiled.with_panels([make_led_panel("bottom", float(angle))])
            result = render_compiled(swapped, settings)
            intensity = probe_intensity(result.image, probe, spec.probe_window)
            png = out_dir / f"angle_{int(round(angle)):03d}.png"
            result.image.to_png(png)
            manifest.add_output(png)
            rows.append((angle, intensity))
        except SimulationError as exc:  # preserve partial results
            failure = exc
            break

    csv_path = out_dir / "sweep_angle.csv"
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["angle_deg", "probe_intensity"])
        for angle, intensity in rows:
            writer.writerow([f"{angle:g}", f"{intensity:.9g}"])
    manifest.add_output(csv_path)

    if rows:
        from .plots import plot_sweep

        svg_path = out_dir / "sweep_angle.svg"
        plot_sweep(np.array([r[0] for r in rows]), np.array([r[1] for r in rows]), svg_path)
        manifest.add_output(svg_path)

    manifest.stage(
        "sweep-angle",
        values=list(spec.values), probe=list(probe), probe_window=spec.probe_window,
        render=settings.__dict__,
    )
    manifest.write(status="ok" if failure is None else "partial")
    if failure is not None:
        raise failure
    return csv_path


@cli.command("sweep-angle")
@click.option("--angles", type=str, default=None,
              help="Comma-separated angles in degrees (default 10..150 step 10).")
@click.option("--probe", type=str, default=None, help="Probe pixel x,y (default: auto).")
@click.option("--probe-window", type=int, default=DEFAULT_PROBE_WINDOW)
@click.pass_context
def sweep_angle(ctx, angles, probe, probe_window):
    """Sweep the bottom light angle and plot probe intensity (design study)."""
    out_dir: Path = ctx.obj["out_dir"]
    out_dir.mkdir(parents=True, exist_ok=True)
    values = (
        [float(a) for a in angles.split(",")] if angles else list(DEFAULT_SWEEP_ANGLES)
    )
    probe_pt = None
    if probe:
        px, py = probe.split(",")
        probe_pt = (int(px), int(py))
    spec = SweepSpec(
        variable="light_angle", values=values,
        base_scene=str(ctx.obj["scene_path"]) if ctx.obj.get("scene_path") else None,
        probe=probe_pt, probe_window=probe_window,
    )
    csv_path = _run_angle_sweep(ctx.obj, spec, out_dir)
    click.echo(f"sweep written to {csv_path}")


@cli.command("compare-lights")
@click.option("--scene-one", type=click.Path(exists=True, path_type=Path), default=None,
              help="One-light scene file (default: built-in).")
@click.option("--scene-two", type=click.Path(exists=True, path_type=Path), default=None,
              help="Two-light scene file (default: built-in).")
@click.pass_context
def compare_lights(ctx, scene_one, scene_two):
    """Compare illumination uniformity between one- and two-light configs."""
    out_dir: Path = ctx.obj["out_dir"]
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = Manifest("compare-lights", out_dir)
    if scene_one is not None:
        one = load_scene(scene_one)
        manifest.add_input(scene_one)
    else:
        one = _build_default_scene(n_lights=1)
    if scene_two is not None:
        two = load_scene(scene_two)
        manifest.add_input(scene_two)
    else:
        two = _build_default_scene(n_lights=2)

    settings = _render_settings(ctx.obj, one)
    res_one = render_compiled(compile_scene(one), settings)
    res_two = render_compiled(compile_scene(two), settings)

    mask_one = res_one.first_hit_object == OBJ_GEL
    mask_two = res_two.first_hit_object == OBJ_GEL
    union = np.logical_or(mask_one, mask_two).sum()
    inter = np.logical_and(mask_one, mask_two).sum()
    if union == 0 or inter / union < 0.95:
        raise SimulationError(
            "region-mask mismatch: the two scenes expose different pad regions"
        )

    def cv(res, mask):
        lum = luminance(res.image.pixels)[mask]
        return float(lum.std() / lum.mean())

    cv_one = cv(res_one, mask_one)
    cv_two = cv(res_two, mask_two)
    report = out_dir / "uniformity.csv"
    with open(report, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["config", "luminance_cv"])
        writer.writerow(["one_light", f"{cv_one:.9g}"])
        writer.writerow(["two_lights", f"{cv_two:.9g}"])
        writer.writerow(["ratio_two_over_one", f"{cv_two / cv_one:.9g}"])
    manifest.add_output(report)

    from .plots import plot_uniformity

    svg = out_dir / "uniformity.svg"
    plot_uniformity(["one light", "two lights"], [cv_one, cv_two], svg)
    manifest.add_output(svg)
    manifest.stage("compare-lights", cv_one=cv_one, cv_two=cv_two,
                   ratio=cv_two / cv_one, render=settings.__dict__)
    manifest.write()
    click.echo(f"CV one light {cv_one:.4f}, two lights {cv_two:.4f} "
               f"(ratio {cv_two / cv_one:.3f})")


@cli.command()
@click.option("--family", type=click.Choice(["flat", "cylindrical", "ellipsoid"]), default="flat")
@click.option("--width", type=float, default=35.0)
@click.option("--length", type=float, default=70.0)
@click.option("--thickness", type=float, default=4.0)
@click.option("--cyl-radius", type=float, default=None)
@click.option("--ellipsoid-radii", type=str, default=None)
@click.option("--resolution", type=str, default=None)
@click.option("--indenter", "indenter_kind", type=click.Choice(["cylinder", "cuboid", "sphere"]),
              default="cylinder")
@click.option("--dims", type=str, default="10,30")
@click.option("--axis", type=str, default=None)
@click.option("--depth", type=float, default=1.0)
@click.option("--lights", type=int, default=1, help="1 = bottom only, 2 = bottom + top.")
@click.option("--angle", type=float, default=30.0, help="Bottom light tilt (deg).")
@click.option("--external-mesh", type=click.Path(exists=True, path_type=Path), default=None,
              help="Externally deformed mesh (neutral hex format or OBJ surface).")
@click.option("--exposure", type=float, default=None)
@click.option("--from-manifest", "manifest_path", type=click.Path(exists=True, path_type=Path),
              default=None, help="Re-run a previous pipeline from its manifest.")
@click.pass_context
def pipeline(ctx, family, width, length, thickness, cyl_radius, ellipsoid_radii, resolution,
             indenter_kind, dims, axis, depth, lights, angle, external_mesh, exposure,
             manifest_path):
    """End-to-end: generate pad, deform (or import), assemble, render."""
    out_dir: Path = ctx.obj["out_dir"]
    out_dir.mkdir(parents=True, exist_ok=True)

    if manifest_path is not None:
        with open(manifest_path) as fh:
            recorded = json.load(fh)
        stage = next(s for s in recorded["stages"] if s["name"] == "pipeline")
        params = stage["settings"]["params"]
        ctx.obj["seed"] = params.get("seed", ctx.obj.get("seed"))
        ctx.obj["spp"] = params.get("spp", ctx.obj.get("spp"))
        family = params["family"]
        width, length, thickness = params["width"], params["length"], params["thickness"]
        cyl_radius = params.get("cyl_radius")
        ellipsoid_radii = params.get("ellipsoid_radii")
        resolution = params.get("resolution")
        indenter_kind = params["indenter_kind"]
        dims = params["dims"]
        axis = params.get("axis")
        depth = params["depth"]
        lights = params["lights"]
        angle = params["angle"]
        exposure = params.get("exposure")
        external_mesh = Path(params["external_mesh"]) if params.get("external_mesh") else None

    manifest = Manifest("pipeline", out_dir)
    params = dict(
        family=family, width=width, length=length, thickness=thickness,
        cyl_radius=cyl_radius, ellipsoid_radii=ellipsoid_radii, resolution=resolution,
        indenter_kind=indenter_kind, dims=dims, axis=axis, depth=depth,
        lights=lights, angle=angle, exposure=exposure,
        external_mesh=str(external_mesh) if external_mesh else None,
        seed=ctx.obj.get("seed"), spp=ctx.obj.get("spp"),
    )

    stage_name = "gen-pad"
    try:
        pad = _parse_pad(family, width, length, thickness, cyl_radius, ellipsoid_radii,
                         resolution)
        manifest.stage("gen-pad", pad=pad.to_dict())

        stage_name = "deform"
        shape = _parse_indenter(indenter_kind, dims, None, axis)
        if external_mesh is not None:
            manifest.add_input(external_mesh)
            if external_mesh.suffix.lower() == ".obj":
                surface = read_obj(external_mesh)
            else:
                hexmesh = read_neutral_mesh(external_mesh)
                if hexmesh.displacements is not None:
                    from .meshconvert import apply_displacements

                    hexmesh = apply_displacements(hexmesh)
                surface = hex_to_surface(hexmesh)
            source = "external-fem"
            posed = shape
            manifest.stage("deform", source=source, mesh=str(external_mesh))
        else:
            base = sensing_surface(pad, frame="rig")
            posed = position_indenter(shape, base, depth)
            surface = indent_surface(base, posed, depth)
            source = "approximate-deformer"
            manifest.stage("deform", source=source, indenter=posed.to_dict(), depth=depth)

        stage_name = "assemble"
        panel_list = [make_led_panel("bottom", angle)]
        if lights >= 2:
            panel_list.append(make_led_panel("top", angle))
        scene = assemble_scene(
            pad, panel_list, indenter=posed, surface=surface,
            surface_source=source, render=_default_render(),
        )
        scene_path = out_dir / "scene.yaml"
        save_scene(scene, scene_path)
        manifest.add_output(scene_path)

        stage_name = "render"
        settings = _render_settings(ctx.obj, scene)
        if exposure is not None:
            from dataclasses import replace

            settings = replace(settings, exposure=exposure)
        result = render_compiled(compile_scene(scene), settings)
        png = out_dir / "final.png"
        raw = out_dir / "final.raw"
        result.image.to_png(png)
        result.image.save_raw(raw)
        manifest.add_output(png)
        manifest.add_output(raw)
        manifest.stage("render", **settings.__dict__)
        manifest.stage("pipeline", params=params)
        manifest.write()
    except SimulationError as exc:
        manifest.stage("failed", stage=stage_name, error=str(exc))
        manifest.write(status=f"failed at {stage_name}")
        raise
    click.echo(f"deformation source: {source}")
    click.echo(f"pipeline outputs in {out_dir}")


def main(argv=None) -> int:
    """Entry point with the documented exit-code mapping."""
    try:
        cli.main(args=argv, standalone_mode=False)
        return 0
    except click.UsageError as exc:
        click.echo(f"usage error: {exc.format_message()}", err=True)
        return 1
    except click.ClickException as exc:
        exc.show()
        return 1
    except click.exceptions.Abort:
        return 1
    except ImageNaN as exc:
        click.echo(f"runtime failure: {exc}", err=True)
        return 3
    except SimulationError as exc:
        click.echo(f"validation error: {exc}", err=True)
        return 2
    except ValueError as exc:
        click.echo(f"validation error: {exc}", err=True)
        return 2
    except OSError as exc:
        click.echo(f"runtime failure: {exc}", err=True)
        return 3


if __name__ == "__main__":
    sys.exit(main())
