"""Parametric gel pads, rigid indenters and sensor-rig assembly.

Gel pads come in three families: a flat slab, a section of a cylinder
surface, and a section of an ellipsoid (a unit sphere scaled by three
radii).  Each pad is a W x L patch of the outer surface extruded inward
by the thickness t along local normals, which yields a hexahedral
volume plus its watertight triangle hull.

Pads are generated in a shape-canonical frame:

* flat       - sensing face on z = 0
* cylindrical- axis along x through the origin, surface at radius r
* ellipsoid  - centered at the origin, patch around the +z pole

``sensing_surface(..., frame="rig")`` translates the patch so its apex
sits at the rig height used by ``assemble_scene``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import PatchDoesNotFit, SceneInvalid
from .meshconvert import HexMesh, TriMesh, hex_to_surface
from .scene import (
    CameraSpec,
    GelSurface,
    LedPanel,
    MirrorSpec,
    PaintStrip,
    RectPatch,
    RenderSettings,
    Scene,
    SurfaceMaterial,
)
from .spectra import FluorescentMaterial, make_paint_preset

__all__ = [
    "GelPadSpec",
    "Indenter",
    "generate_gelpad",
    "sensing_surface",
    "sensing_surface_with_nodes",
    "pad_apex_height",
    "make_indenter",
    "make_led_panel",
    "default_materials",
    "assemble_scene",
    "RIG",
]

PAD_FAMILIES = ("flat", "cylindrical", "ellipsoid")
DEFAULT_EDGE_LENGTH_MM = 0.4  # mirrors the FEM surface element size


@dataclass(frozen=True)
class GelPadSpec:
    """Parametric gel pad: family, footprint W x L, thickness t (mm).

    ``width`` spans y (the curved direction for cylinders), ``length``
    spans x.  ``resolution`` is the surface quad count (along length,
    along width); when omitted it targets 0.4 mm edges.
    """

    family: str
    width: float
    length: float
    thickness: float
    cyl_radius: float | None = None
    ellipsoid_radii: tuple[float, float, float] | None = None
    resolution: tuple[int, int] | None = None
    layers: int = 2

    def __post_init__(self) -> None:
        if self.family not in PAD_FAMILIES:
            raise ValueError(f"unknown pad family {self.family!r}")
        if min(self.width, self.length, self.thickness) <= 0.0:
            raise ValueError("width, length and thickness must be positive")
        if self.family == "cylindrical":
            if self.cyl_radius is None:
                raise ValueError("cylindrical pad needs cyl_radius")
            if self.cyl_radius < self.width / 2.0:
                raise ValueError("cyl_radius must be at least width/2")
        if self.family == "ellipsoid":
            if self.ellipsoid_radii is None:
                raise ValueError("ellipsoid pad needs ellipsoid_radii (a, b, c)")
            if min(self.ellipsoid_radii) <= 0.0:
                raise ValueError("ellipsoid radii must be positive")
        if self.layers < 1:
            raise ValueError("need at least one hex layer")

    def grid_resolution(self) -> tuple[int, int]:
        if self.resolution is not None:
            nu, nv = self.resolution
            if nu < 1 or nv < 1:
                raise ValueError("resolution counts must be >= 1")
            return int(nu), int(nv)
        nu = max(2, round(self.length / DEFAULT_EDGE_LENGTH_MM))
        nv = max(2, round(self.width / DEFAULT_EDGE_LENGTH_MM))
        return nu, nv

    def to_dict(self) -> dict:
        out = {
            "family": self.family,
            "width": self.width,
            "length": self.length,
            "thickness": self.thickness,
            "layers": self.layers,
        }
        if self.cyl_radius is not None:
            out["cyl_radius"] = self.cyl_radius
        if self.ellipsoid_radii is not None:
            out["ellipsoid_radii"] = list(self.ellipsoid_radii)
        if self.resolution is not None:
            out["resolution"] = list(self.resolution)
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "GelPadSpec":
        return cls(
            family=d["family"],
            width=d["width"],
            length=d["length"],
            thickness=d["thickness"],
            cyl_radius=d.get("cyl_radius"),
            ellipsoid_radii=tuple(d["ellipsoid_radii"]) if "ellipsoid_radii" in d else None,
            resolution=tuple(d["resolution"]) if "resolution" in d else None,
            layers=d.get("layers", 2),
        )


def _surface_points_and_normals(spec: GelPadSpec) -> tuple[np.ndarray, np.ndarray]:
    """Outer-surface sample grid (nu+1, nv+1, 3) plus outward unit normals."""
    nu, nv = spec.grid_resolution()
    x = np.linspace(-spec.length / 2.0, spec.length / 2.0, nu + 1)

    if spec.family == "flat":
        y = np.linspace(-spec.width / 2.0, spec.width / 2.0, nv + 1)
        gx, gy = np.meshgrid(x, y, indexing="ij")
        pts = np.stack([gx, gy, np.zeros_like(gx)], axis=-1)
        normals = np.zeros_like(pts)
        normals[..., 2] = 1.0
        return pts, normals

    if spec.family == "cylindrical":
        r = float(spec.cyl_radius)
        phi_max = spec.width / (2.0 * r)  # arc-length parametrization
        if phi_max >= math.pi:
            raise PatchDoesNotFit("pad width exceeds half the cylinder circumference")
        phi = np.linspace(-phi_max, phi_max, nv + 1)
        gx, gphi = np.meshgrid(x, phi, indexing="ij")
        pts = np.stack([gx, r * np.sin(gphi), r * np.cos(gphi)], axis=-1)
        normals = np.stack([np.zeros_like(gphi), np.sin(gphi), np.cos(gphi)], axis=-1)
        return pts, normals

    a, b, c = spec.ellipsoid_radii  # type: ignore[misc]
    if (spec.length / (2.0 * a)) ** 2 + (spec.width / (2.0 * b)) ** 2 >= 1.0:
        raise PatchDoesNotFit("W x L patch does not fit on the ellipsoid around its pole")
    y = np.linspace(-spec.width / 2.0, spec.width / 2.0, nv + 1)
    gx, gy = np.meshgrid(x, y, indexing="ij")
    gz = c * np.sqrt(1.0 - (gx / a) ** 2 - (gy / b) ** 2)
    pts = np.stack([gx, gy, gz], axis=-1)
    grad = np.stack([gx / a**2, gy / b**2, gz / c**2], axis=-1)
    normals = grad / np.linalg.norm(grad, axis=-1, keepdims=True)
    return pts, normals


def pad_apex_height(spec: GelPadSpec) -> float:
    """z of the sensing-face apex in the canonical frame."""
    if spec.family == "flat":
        return 0.0
    if spec.family == "cylindrical":
        return float(spec.cyl_radius)
    return float(spec.ellipsoid_radii[2])  # type: ignore[index]


def pad_edge_height(spec: GelPadSpec) -> float:
    """z of the sensing face at the y = +-W/2 side walls (canonical frame)."""
    pts, _ = _surface_points_and_normals(spec)
    return float(pts[pts.shape[0] // 2, -1, 2])


def generate_gelpad(spec: GelPadSpec) -> tuple[TriMesh, HexMesh]:
    """Build the pad volume and its watertight outward-oriented hull.

    Deterministic: the same spec yields bit-identical meshes.  Node ids
    are layered with the sensing surface last, which is what
    ``sensing_surface`` relies on.
    """
    pts, normals = _surface_points_and_normals(spec)
    nu1, nv1 = pts.shape[0], pts.shape[1]
    nw = spec.layers

    # layer k=0 innermost ... k=nw outer sensing surface
    depth = (np.arange(nw + 1, dtype=float)[::-1] / nw) * spec.thickness
    nodes = pts[None, :, :, :] - depth[:, None, None, None] * normals[None, :, :, :]
    nodes = nodes.reshape(-1, 3)

    def nid(i: np.ndarray, j: np.ndarray, k: np.ndarray) -> np.ndarray:
        # nodes flatten as (layer, length index, width index)
        return (k * nu1 + i) * nv1 + j

    i, j, k = np.meshgrid(
        np.arange(nu1 - 1), np.arange(nv1 - 1), np.arange(nw), indexing="ij"
    )
    elements = np.stack(
        [
            nid(i, j, k), nid(i + 1, j, k), nid(i + 1, j + 1, k), nid(i, j + 1, k),
            nid(i, j, k + 1), nid(i + 1, j, k + 1), nid(i + 1, j + 1, k + 1), nid(i, j + 1, k + 1),
        ],
        axis=-1,
    ).reshape(-1, 8)

    hexmesh = HexMesh(nodes, elements)
    hexmesh.validate()
    return hex_to_surface(hexmesh), hexmesh


def sensing_surface_with_nodes(
    spec: GelPadSpec, frame: str = "canonical"
) -> tuple[TriMesh, HexMesh, np.ndarray]:
    """Sensing-face mesh plus the pad volume and the hex node ids.

    Row k of the returned surface corresponds to hex node
    ``node_ids[k]``, which is what the neutral-format displacement
    export relies on.
    """
    surface, hexmesh = generate_gelpad(spec)
    nu, nv = spec.grid_resolution()
    outer_start = spec.layers * (nu + 1) * (nv + 1)
    mask = np.all(surface.triangles >= outer_start, axis=1)
    tris = surface.triangles[mask]
    used = np.unique(tris)
    remap = np.full(len(surface.vertices), -1, dtype=np.int64)
    remap[used] = np.arange(used.size)
    mesh = TriMesh(surface.vertices[used], remap[tris])
    if frame == "rig":
        mesh = mesh.translated([0.0, 0.0, RIG.pad_apex_z - pad_apex_height(spec)])
    elif frame != "canonical":
        raise ValueError("frame must be 'canonical' or 'rig'")
    return mesh, hexmesh, used


def sensing_surface(spec: GelPadSpec, frame: str = "canonical") -> TriMesh:
    """Open TriMesh of just the sensing face (outer layer).

    ``frame="rig"`` places the apex at the assembly height used by
    ``assemble_scene``; vertices are compacted to the referenced set.
    """
    return sensing_surface_with_nodes(spec, frame)[0]


# ---------------------------------------------------------------------------
# Rigid indenters with exact signed distance

@dataclass(frozen=True)
class Indenter:
    """Rigid shape with exact signed distance and outward surface normals."""

    kind: str  # cylinder | cuboid | sphere
    dims: tuple[float, ...]
    center: tuple[float, float, float] = (0.0, 0.0, 0.0)
    axis: tuple[float, float, float] = (1.0, 0.0, 0.0)

    def __post_init__(self) -> None:
        if self.kind not in ("cylinder", "cuboid", "sphere"):
            raise ValueError(f"unknown indenter kind {self.kind!r}")
        if min(self.dims) <= 0.0:
            raise ValueError("indenter dimensions must be positive")
        n = np.linalg.norm(np.asarray(self.axis, dtype=float))
        if abs(n - 1.0) > 1e-9:
            object.__setattr__(self, "axis", tuple(np.asarray(self.axis) / n))

    def signed_distance(self, points: np.ndarray) -> np.ndarray:
        p = np.atleast_2d(np.asarray(points, dtype=float)) - np.asarray(self.center)
        if self.kind == "sphere":
            (radius,) = self.dims
            d = np.linalg.norm(p, axis=1) - radius
        elif self.kind == "cylinder":
            radius, half_len = self.dims
            ax = np.asarray(self.axis)
            along = p @ ax
            radial = np.linalg.norm(p - np.outer(along, ax), axis=1)
            dr = radial - radius
            da = np.abs(along) - half_len
            outside = np.hypot(np.maximum(dr, 0.0), np.maximum(da, 0.0))
            d = outside + np.minimum(np.maximum(dr, da), 0.0)
        else:
            hx, hy, hz = self.dims
            q = np.abs(p) - np.array([hx, hy, hz])
            outside = np.linalg.norm(np.maximum(q, 0.0), axis=1)
            d = outside + np.minimum(q.max(axis=1), 0.0)
        return d if np.ndim(points) > 1 else d

    def surface_normal(self, points: np.ndarray) -> np.ndarray:
        """Exact outward distance gradient (nearest-feature direction)."""
        p = np.atleast_2d(np.asarray(points, dtype=float)) - np.asarray(self.center)
        fallback = np.array([0.0, 0.0, 1.0])
        if self.kind == "sphere":
            norm = np.linalg.norm(p, axis=1, keepdims=True)
            return np.where(norm > 1e-12, p / np.maximum(norm, 1e-300), fallback)

        if self.kind == "cylinder":
            radius, half_len = self.dims
            ax = np.asarray(self.axis)
            along = p @ ax
            radial_vec = p - np.outer(along, ax)
            radial_len = np.linalg.norm(radial_vec, axis=1)
            # degenerate on-axis points: pick any perpendicular direction
            perp = np.cross(np.broadcast_to(ax, p.shape), fallback)
            if np.linalg.norm(perp[0]) < 1e-9:
                perp = np.cross(np.broadcast_to(ax, p.shape), [0.0, 1.0, 0.0])
            perp = perp / np.linalg.norm(perp, axis=1, keepdims=True)
            radial_dir = np.where(
                radial_len[:, None] > 1e-12,
                radial_vec / np.maximum(radial_len[:, None], 1e-300),
                perp,
            )
            dr = radial_len - radius
            da = np.abs(along) - half_len
            axial_dir = np.sign(along)[:, None] * ax
            grad = np.where(
                ((dr > 0) & (da > 0))[:, None],
                np.maximum(dr, 0)[:, None] * radial_dir + np.maximum(da, 0)[:, None] * axial_dir,
                np.where((dr > da)[:, None], radial_dir, axial_dir),
            )
            norm = np.linalg.norm(grad, axis=1, keepdims=True)
            return np.where(norm > 1e-12, grad / np.maximum(norm, 1e-300), fallback)

        half = np.asarray(self.dims)
        q = np.abs(p) - half
        outside = np.maximum(q, 0.0)
        out_norm = np.linalg.norm(outside, axis=1, keepdims=True)
        outward = np.sign(p) * outside
        # inside: gradient along the axis of the nearest face
        nearest = np.argmax(q, axis=1)
        inside_grad = np.zeros_like(p)
        rows = np.arange(len(p))
        inside_grad[rows, nearest] = np.where(np.sign(p[rows, nearest]) == 0, 1.0,
                                              np.sign(p[rows, nearest]))
        grad = np.where(out_norm > 1e-12, outward / np.maximum(out_norm, 1e-300), inside_grad)
        return grad

    def translated(self, offset) -> "Indenter":
        c = tuple(np.asarray(self.center, dtype=float) + np.asarray(offset, dtype=float))
        return Indenter(self.kind, self.dims, c, self.axis)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "dims": list(self.dims),
            "center": list(self.center),
            "axis": list(self.axis),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Indenter":
        return cls(d["kind"], tuple(d["dims"]), tuple(d.get("center", (0, 0, 0))),
                   tuple(d.get("axis", (1, 0, 0))))


def make_indenter(kind: str, dims, center=(0.0, 0.0, 0.0), axis=(1.0, 0.0, 0.0)) -> Indenter:
    """Convenience constructor; ``dims`` per kind:

    * sphere:   (radius,)
    * cylinder: (radius, half_length), axis along ``axis``
    * cuboid:   (half_x, half_y, half_z), axis-aligned
    """
    dims = tuple(float(v) for v in np.atleast_1d(dims))
    expected = {"sphere": 1, "cylinder": 2, "cuboid": 3}[kind]
    if len(dims) != expected:
        raise ValueError(f"{kind} indenter expects {expected} dimension(s), got {len(dims)}")
    return Indenter(kind, dims, tuple(center), tuple(axis))


# ---------------------------------------------------------------------------
# Default sensor rig

@dataclass(frozen=True)
class RigLayout:
    """Fixed assembly constants of the default finger (mm).

    The diagonal mirror plus the camera's direct view of the pad's near
    half together cover the full sensing face; constants were chosen by
    sweeping the layout against that coverage requirement.
    """

    pad_apex_z: float = 30.0
    mirror_near: tuple[float, float] = (-34.0, 3.0)   # (x, z) at the camera end
    mirror_far: tuple[float, float] = (40.0, 24.0)    # (x, z) at the fingertip
    mirror_half_width: float = 22.0
    camera_position: tuple[float, float, float] = (-55.0, 0.0, 8.0)
    led_bottom: tuple[float, float, float] = (-40.0, 0.0, 5.0)  # behind the mirror edge
    led_top: tuple[float, float, float] = (50.0, 0.0, 26.0)
    led_half_extents: tuple[float, float] = (4.0, 10.0)
    led_beam_exponent: float = 6.0  # lensed module, ~ +-25 deg beam

    def mirror_rect(self) -> RectPatch:
        (x0, z0), (x1, z1) = self.mirror_near, self.mirror_far
        center = ((x0 + x1) / 2.0, 0.0, (z0 + z1) / 2.0)
        edge_u = ((x1 - x0) / 2.0, 0.0, (z1 - z0) / 2.0)
        edge_v = (0.0, self.mirror_half_width, 0.0)
        return RectPatch(center, edge_u, edge_v)

    def camera(self) -> CameraSpec:
        return CameraSpec(self.camera_position, self.mirror_rect().center)


RIG = RigLayout()


def make_led_panel(
    placement: str = "bottom",
    tilt_deg: float = 30.0,
    radiant_scale: float = 1.0,
    half_extents: tuple[float, float] | None = None,
    emission=None,
    beam_exponent: float | None = None,
) -> LedPanel:
    """Blue panel at the rig's bottom (base) or top (fingertip) position.

    The tilt angle is measured against the gel-pad plane: 0 deg points
    the panel along +x (bottom) / -x (top), 90 deg points it straight up.
    """
    from .spectra import blue_led_spectrum

    theta = math.radians(tilt_deg)
    if placement == "bottom":
        center = RIG.led_bottom
        normal = (math.cos(theta), 0.0, math.sin(theta))
    elif placement == "top":
        center = RIG.led_top
        normal = (-math.cos(theta), 0.0, math.sin(theta))
    else:
        raise SceneInvalid("LED placement must be 'bottom' or 'top'")
    return LedPanel(
        center=center,
        normal=normal,
        half_extents=half_extents or RIG.led_half_extents,
        emission=emission if emission is not None else blue_led_spectrum(),
        radiant_scale=radiant_scale,
        tilt_angle_deg=tilt_deg,
        placement=placement,
        beam_exponent=RIG.led_beam_exponent if beam_exponent is None else beam_exponent,
    )


def default_materials() -> dict[str, SurfaceMaterial | FluorescentMaterial]:
    return {
        # aluminum-flake coating: matte gray, optional gloss stays off
        "coating": SurfaceMaterial("coated_flake", (0.6, 0.6, 0.6), 0.0, 0.3),
        "mirror": SurfaceMaterial("mirror_specular", (0.0, 0.0, 0.0), 0.9, 0.0),
        "paint_red": make_paint_preset("red"),
        "paint_green": make_paint_preset("green"),
    }


def assemble_scene(
    pad: GelPadSpec,
    lights: list[LedPanel],
    indenter: Indenter | None = None,
    materials: dict | None = None,
    surface: TriMesh | None = None,
    surface_source: str = "generated",
    render: RenderSettings | None = None,
    strip_height: float | None = None,
) -> Scene:
    """Assemble the full sensor scene around a gel pad.

    Paint strips are auto-placed along the two long side walls (red on
    +y, green on -y).  ``surface`` overrides the generated sensing face
    with a deformed or externally computed mesh (rig frame).
    """
    materials = dict(materials) if materials is not None else default_materials()
    missing = {"coating", "mirror", "paint_red", "paint_green"} - set(materials)
    if missing:
        raise SceneInvalid(f"material table lacks required entries: {sorted(missing)}")

    if surface is None:
        mesh = sensing_surface(pad, frame="rig")
        source = "generated"
    else:
        mesh = surface
        source = surface_source
    gel = GelSurface(mesh=mesh, material="coating", source=source, pad_spec=pad)

    z_edge = pad_edge_height(pad) + RIG.pad_apex_z - pad_apex_height(pad)
    h = strip_height if strip_height is not None else pad.thickness
    margin = 0.02 * pad.length
    strips = []
    for side, sign, paint in (("right", 1.0, "paint_red"), ("left", -1.0, "paint_green")):
        # wound so the strip normal points inward (-sign * y)
        rect = RectPatch(
            center=(0.0, sign * pad.width / 2.0, z_edge - h / 2.0),
            edge_u=(sign * (pad.length / 2.0 - margin), 0.0, 0.0),
            edge_v=(0.0, 0.0, h / 2.0),
        )
        strips.append(PaintStrip(rect=rect, material=paint, side=side))

    scene = Scene(
        camera=RIG.camera(),
        mirror=MirrorSpec(RIG.mirror_rect()),
        gel_surface=gel,
        paint_strips=strips,
        led_panels=list(lights),
        materials=materials,
        indenter=indenter,
        render=render if render is not None else RenderSettings(),
    )
    scene.validate()
    return scene
