"""Scene description for the sensor interior.

A Scene bundles everything the renderer consumes: pinhole camera,
specular mirror, the (possibly deformed) gel sensing surface, the
fluorescent paint strips along the pad sides, LED panels, the indenter
pose, a material table and render settings.  All geometry lives in one
right-handed millimeter frame; angles are degrees.

Scene files are YAML with a ``schema_version`` field.  Large meshes are
referenced by path (OBJ) or regenerated from their pad spec, so a file
round-trips losslessly.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .errors import SceneInvalid
from .meshconvert import TriMesh, write_obj
from .spectra import (
    FluorescentMaterial,
    SampledSpectrum,
    SkewCauchyParams,
    blue_led_spectrum,
    make_paint_preset,
)

SCHEMA_VERSION = 1

MATERIAL_KINDS = ("lambertian", "mirror_specular", "coated_flake", "fluorescent_emissive")


def _vec(x, n=3) -> np.ndarray:
    out = np.asarray(x, dtype=float).reshape(n)
    if not np.all(np.isfinite(out)):
        raise SceneInvalid(f"non-finite vector component in {x!r}")
    return out


@dataclass(frozen=True)
class RenderSettings:
    """Deterministic path-tracing controls (fixed seed implies fixed image)."""

    samples_per_pixel: int = 64
    max_depth: int = 6
    rr_start_depth: int = 3
    seed: int = 0
    exposure: float = 1.0
    width: int = 320
    height: int = 240

    def __post_init__(self) -> None:
        if self.samples_per_pixel < 1:
            raise SceneInvalid("samples_per_pixel must be >= 1")
        if self.max_depth < 1:
            raise SceneInvalid("max_depth must be >= 1")
        if self.width < 1 or self.height < 1:
            raise SceneInvalid("image dimensions must be positive")


@dataclass(frozen=True)
class SurfaceMaterial:
    """Reflectance model of one surface in the scene."""

    kind: str
    albedo_rgb: tuple[float, float, float] = (0.0, 0.0, 0.0)
    specular_fraction: float = 0.0
    roughness: float = 0.0

    def __post_init__(self) -> None:
        if self.kind not in MATERIAL_KINDS:
            raise SceneInvalid(f"unknown material kind {self.kind!r}")
        a = np.asarray(self.albedo_rgb, dtype=float)
        if np.any(a < 0.0) or np.any(a > 1.0):
            raise SceneInvalid("albedo components must lie in [0, 1]")
        if np.any(a + self.specular_fraction > 1.0 + 1e-12):
            raise SceneInvalid("albedo + specular_fraction must not exceed 1 per channel")
        if not (0.0 <= self.roughness <= 1.0):
            raise SceneInvalid("roughness must lie in [0, 1]")


@dataclass(frozen=True)
class CameraSpec:
    position: tuple[float, float, float]
    look_at: tuple[float, float, float]
    up: tuple[float, float, float] = (0.0, 0.0, 1.0)
    fov_deg: float = 120.0

    def __post_init__(self) -> None:
        if not (10.0 < self.fov_deg <= 170.0):
            raise SceneInvalid("camera FOV must lie in (10, 170] degrees")
        if np.allclose(self.position, self.look_at):
            raise SceneInvalid("camera position and look_at coincide")

    def basis(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        forward = _vec(self.look_at) - _vec(self.position)
        forward = forward / np.linalg.norm(forward)
        right = np.cross(forward, _vec(self.up))
        norm = np.linalg.norm(right)
        if norm < 1e-12:
            raise SceneInvalid("camera up vector parallel to view direction")
        right = right / norm
        true_up = np.cross(right, forward)
        return right, true_up, forward


@dataclass(frozen=True)
class RectPatch:
    """Planar rectangle: center plus two orthogonal half-edge vectors."""

    center: tuple[float, float, float]
    edge_u: tuple[float, float, float]
    edge_v: tuple[float, float, float]

    def normal(self) -> np.ndarray:
        n = np.cross(_vec(self.edge_u), _vec(self.edge_v))
        return n / np.linalg.norm(n)

    def corners(self) -> np.ndarray:
        c, u, v = _vec(self.center), _vec(self.edge_u), _vec(self.edge_v)
        return np.array([c - u - v, c + u - v, c + u + v, c - u + v])

    def to_trimesh(self) -> TriMesh:
        corners = self.corners()
        return TriMesh(corners, np.array([[0, 1, 2], [0, 2, 3]]))


@dataclass(frozen=True)
class MirrorSpec:
    rect: RectPatch
    material: str = "mirror"
    mesh: TriMesh | None = None  # deformed override (bowed or external FEM)

    def render_mesh(self) -> TriMesh:
        return self.mesh if self.mesh is not None else self.rect.to_trimesh()


@dataclass(frozen=True)
class PaintStrip:
    rect: RectPatch
    material: str  # id of a FluorescentMaterial in the scene table
    side: str      # free-form tag, e.g. "left" / "right"


@dataclass(frozen=True)
class LedPanel:
    """Rectangular area emitter.

    ``beam_exponent`` models the module lens: emitted radiance scales
    with cos^beam of the angle off the panel normal (0 = Lambertian).
    """

    center: tuple[float, float, float]
    normal: tuple[float, float, float]
    half_extents: tuple[float, float]
    emission: SampledSpectrum = field(default_factory=blue_led_spectrum)
    radiant_scale: float = 1.0
    tilt_angle_deg: float = 30.0
    placement: str = "bottom"
    beam_exponent: float = 0.0

    def __post_init__(self) -> None:
        n = _vec(self.normal)
        if abs(np.linalg.norm(n) - 1.0) > 1e-9:
            raise SceneInvalid("LED panel normal must be unit length")
        if self.half_extents[0] <= 0.0 or self.half_extents[1] <= 0.0:
            raise SceneInvalid("LED panel half extents must be positive")
        if not (0.0 <= self.tilt_angle_deg < 180.0):
            raise SceneInvalid("LED tilt angle must lie in [0, 180) degrees")
        if self.placement not in ("bottom", "top"):
            raise SceneInvalid("LED placement must be 'bottom' or 'top'")
        if self.beam_exponent < 0.0:
            raise SceneInvalid("beam_exponent must be >= 0")

    def rect(self) -> RectPatch:
        n = _vec(self.normal)
        helper = np.array([0.0, 1.0, 0.0]) if abs(n[1]) < 0.9 else np.array([1.0, 0.0, 0.0])
        u = np.cross(helper, n)
        u = u / np.linalg.norm(u)
        v = np.cross(n, u)
        return RectPatch(
            tuple(self.center),
            tuple(u * self.half_extents[0]),
            tuple(v * self.half_extents[1]),
        )

    def characteristic_size(self) -> float:
        return 0.5 * (self.half_extents[0] + self.half_extents[1])


@dataclass(frozen=True)
class GelSurface:
    """Sensing-face mesh plus how it was obtained (for provenance)."""

    mesh: TriMesh
    material: str = "coating"
    source: str = "generated"  # generated | approximate-deformer | external-fem
    pad_spec: "object | None" = None  # GelPadSpec; kept loose to avoid an import cycle
    mesh_path: str | None = None


@dataclass
class Scene:
    camera: CameraSpec
    mirror: MirrorSpec
    gel_surface: GelSurface
    paint_strips: list[PaintStrip]
    led_panels: list[LedPanel]
    materials: dict[str, SurfaceMaterial | FluorescentMaterial]
    indenter: "object | None" = None  # geometry.Indenter
    render: RenderSettings = field(default_factory=RenderSettings)

    def validate(self) -> None:
        referenced = {self.mirror.material, self.gel_surface.material}
        referenced.update(strip.material for strip in self.paint_strips)
        missing = referenced - set(self.materials)
        if missing:
            raise SceneInvalid(f"geometry references unknown material ids: {sorted(missing)}")
        for strip in self.paint_strips:
            if not isinstance(self.materials[strip.material], FluorescentMaterial):
                raise SceneInvalid(f"paint strip material {strip.material!r} is not fluorescent")
        if isinstance(self.materials[self.mirror.material], FluorescentMaterial):
            raise SceneInvalid("mirror material must be a surface material")
        if isinstance(self.materials[self.gel_surface.material], FluorescentMaterial):
            raise SceneInvalid("gel coating material must be a surface material")
        if not np.all(np.isfinite(self.gel_surface.mesh.vertices)):
            raise SceneInvalid("gel surface contains non-finite vertices")


# ---------------------------------------------------------------------------
# Serialization

def _spectrum_to_dict(s: SampledSpectrum) -> dict:
    return {
        "lambda_min": float(s.lambda_min),
        "lambda_max": float(s.lambda_max),
        "step": float(s.step),
        "values": [float(v) for v in s.values],
    }


def _spectrum_from_dict(d: dict) -> SampledSpectrum:
    return SampledSpectrum(d["lambda_min"], d["lambda_max"], d["step"], np.array(d["values"]))


def _lobe_to_dict(p: SkewCauchyParams) -> dict:
    return {"lambda0": p.lambda0, "gamma": p.gamma, "omega": p.omega, "h": p.h}


def _lobe_from_dict(d: dict) -> SkewCauchyParams:
    return SkewCauchyParams(d["lambda0"], d["gamma"], d["omega"], d["h"])


def _material_to_dict(m: SurfaceMaterial | FluorescentMaterial) -> dict:
    if isinstance(m, FluorescentMaterial):
        return {
            "type": "fluorescent",
            "absorption": _lobe_to_dict(m.absorption),
            "emission": _lobe_to_dict(m.emission),
            "stokes_shift": m.stokes_shift,
            "conversion_efficiency": m.conversion_efficiency,
            "base_reflectance": _spectrum_to_dict(m.base_reflectance),
        }
    return {
        "type": "surface",
        "kind": m.kind,
        "albedo_rgb": list(m.albedo_rgb),
        "specular_fraction": m.specular_fraction,
        "roughness": m.roughness,
    }


def _material_from_dict(d: dict) -> SurfaceMaterial | FluorescentMaterial:
    if "preset" in d:
        return make_paint_preset(d["preset"], d.get("conversion_efficiency", 0.035))
    if d["type"] == "fluorescent":
        return FluorescentMaterial(
            absorption=_lobe_from_dict(d["absorption"]),
            emission=_lobe_from_dict(d["emission"]),
            stokes_shift=d["stokes_shift"],
            conversion_efficiency=d["conversion_efficiency"],
            base_reflectance=_spectrum_from_dict(d["base_reflectance"]),
        )
    return SurfaceMaterial(
        kind=d["kind"],
        albedo_rgb=tuple(d["albedo_rgb"]),
        specular_fraction=d.get("specular_fraction", 0.0),
        roughness=d.get("roughness", 0.0),
    )


def _rect_to_dict(r: RectPatch) -> dict:
    return {"center": list(r.center), "edge_u": list(r.edge_u), "edge_v": list(r.edge_v)}


def _rect_from_dict(d: dict) -> RectPatch:
    return RectPatch(tuple(d["center"]), tuple(d["edge_u"]), tuple(d["edge_v"]))


def scene_to_dict(scene: Scene) -> dict:
    from .geometry import GelPadSpec, Indenter  # local import to avoid a cycle

    gel: dict = {"material": scene.gel_surface.material, "source": scene.gel_surface.source}
    if scene.gel_surface.mesh_path is not None:
        gel["mesh_path"] = scene.gel_surface.mesh_path
    if isinstance(scene.gel_surface.pad_spec, GelPadSpec):
        gel["pad_spec"] = scene.gel_surface.pad_spec.to_dict()
    if "mesh_path" not in gel and "pad_spec" not in gel:
        raise SceneInvalid("cannot serialize an in-memory gel mesh; save it to a file first")

    indenter = None
    if scene.indenter is not None:
        if not isinstance(scene.indenter, Indenter):
            raise SceneInvalid("scene indenter is not an Indenter")
        indenter = scene.indenter.to_dict()

    return {
        "schema_version": SCHEMA_VERSION,
        "camera": {
            "position": list(scene.camera.position),
            "look_at": list(scene.camera.look_at),
            "up": list(scene.camera.up),
            "fov_deg": scene.camera.fov_deg,
        },
        "render": {
            "samples_per_pixel": scene.render.samples_per_pixel,
            "max_depth": scene.render.max_depth,
            "rr_start_depth": scene.render.rr_start_depth,
            "seed": scene.render.seed,
            "exposure": scene.render.exposure,
            "width": scene.render.width,
            "height": scene.render.height,
        },
        "mirror": {"rect": _rect_to_dict(scene.mirror.rect), "material": scene.mirror.material},
        "gel_surface": gel,
        "paint_strips": [
            {"rect": _rect_to_dict(s.rect), "material": s.material, "side": s.side}
            for s in scene.paint_strips
        ],
        "led_panels": [
            {
                "center": list(p.center),
                "normal": list(p.normal),
                "half_extents": list(p.half_extents),
                "emission": _spectrum_to_dict(p.emission),
                "radiant_scale": p.radiant_scale,
                "tilt_angle_deg": p.tilt_angle_deg,
                "placement": p.placement,
                "beam_exponent": p.beam_exponent,
            }
            for p in scene.led_panels
        ],
        "indenter": indenter,
        "materials": {name: _material_to_dict(m) for name, m in scene.materials.items()},
    }


def scene_from_dict(data: dict, base_dir: Path | None = None) -> Scene:
    from .geometry import GelPadSpec, Indenter, sensing_surface
    from .meshconvert import read_obj

    version = data.get("schema_version")
    if version != SCHEMA_VERSION:
        raise SceneInvalid(f"unsupported scene schema_version {version!r}")

    cam = data["camera"]
    camera = CameraSpec(
        tuple(cam["position"]), tuple(cam["look_at"]), tuple(cam.get("up", (0, 0, 1))),
        cam.get("fov_deg", 120.0),
    )
    render = RenderSettings(**data.get("render", {}))

    gel = data["gel_surface"]
    pad_spec = GelPadSpec.from_dict(gel["pad_spec"]) if "pad_spec" in gel else None
    mesh_path = gel.get("mesh_path")
    if mesh_path is not None:
        path = Path(mesh_path)
        if base_dir is not None and not path.is_absolute():
            path = base_dir / path
        mesh = read_obj(path)
    elif pad_spec is not None:
        mesh = sensing_surface(pad_spec, frame="rig")
    else:
        raise SceneInvalid("gel_surface needs a mesh_path or a pad_spec")

    gel_surface = GelSurface(
        mesh=mesh,
        material=gel.get("material", "coating"),
        source=gel.get("source", "generated"),
        pad_spec=pad_spec,
        mesh_path=mesh_path,
    )

    panels = [
        LedPanel(
            center=tuple(p["center"]),
            normal=tuple(p["normal"]),
            half_extents=tuple(p["half_extents"]),
            emission=_spectrum_from_dict(p["emission"]),
            radiant_scale=p.get("radiant_scale", 1.0),
            tilt_angle_deg=p.get("tilt_angle_deg", 30.0),
            placement=p.get("placement", "bottom"),
            beam_exponent=p.get("beam_exponent", 0.0),
        )
        for p in data.get("led_panels", [])
    ]
    strips = [
        PaintStrip(_rect_from_dict(s["rect"]), s["material"], s.get("side", ""))
        for s in data.get("paint_strips", [])
    ]
    indenter = Indenter.from_dict(data["indenter"]) if data.get("indenter") else None
    materials = {name: _material_from_dict(m) for name, m in data["materials"].items()}

    scene = Scene(
        camera=camera,
        mirror=MirrorSpec(_rect_from_dict(data["mirror"]["rect"]),
                          data["mirror"].get("material", "mirror")),
        gel_surface=gel_surface,
        paint_strips=strips,
        led_panels=panels,
        materials=materials,
        indenter=indenter,
        render=render,
    )
    scene.validate()
    return scene


def _to_builtin(value):
    """Recursively coerce numpy scalars/arrays for YAML emission."""
    if isinstance(value, dict):
        return {k: _to_builtin(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_to_builtin(v) for v in value]
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    if isinstance(value, np.ndarray):
        return _to_builtin(value.tolist())
    return value


def save_scene(scene: Scene, path: str | Path, mesh_path: str | Path | None = None) -> None:
    """Write the scene as YAML.

    A gel mesh that cannot be regenerated from a pad spec is written to
    ``mesh_path`` (default: sibling OBJ file) and referenced.
    """
    path = Path(path)
    gel = scene.gel_surface
    if gel.mesh_path is None and gel.source != "generated":
        mesh_file = Path(mesh_path) if mesh_path else path.with_suffix(".surface.obj")
        write_obj(mesh_file, gel.mesh, name="gel_surface")
        scene = Scene(
            camera=scene.camera,
            mirror=scene.mirror,
            gel_surface=GelSurface(gel.mesh, gel.material, gel.source, gel.pad_spec,
                                   mesh_file.name if mesh_file.parent == path.parent
                                   else str(mesh_file)),
            paint_strips=scene.paint_strips,
            led_panels=scene.led_panels,
            materials=scene.materials,
            indenter=scene.indenter,
            render=scene.render,
        )
    with open(path, "w") as fh:
        yaml.safe_dump(_to_builtin(scene_to_dict(scene)), fh, sort_keys=False)


def load_scene(path: str | Path) -> Scene:
    path = Path(path)
    with open(path) as fh:
        data = yaml.safe_load(fh)
    return scene_from_dict(data, base_dir=path.parent)
