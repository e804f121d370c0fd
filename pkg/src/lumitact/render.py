"""Monte Carlo path tracer for predicted tactile images.

Unidirectional tracing with next-event estimation toward all emissive
triangles (LED panels and fluorescent paint strips), Russian roulette
past a configurable depth, and spectra pre-integrated to linear RGB.
Rendering is deterministic per (seed, settings): the RNG stream is
keyed on (seed, pixel, sample), so thread scheduling cannot change a
single bit of the output.

Fluorescent strips use the fast approximation: instead of wavelength-
shifting transport each strip becomes a textured area light whose
radiance falls off with distance from the blue source and scales with
the overlap between the source spectrum and the paint absorption lobe.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import kernels
from .bvh import BVH, build_bvh
from .errors import ImageNaN, SceneInvalid
from .meshconvert import TriMesh
from .scene import LedPanel, RectPatch, RenderSettings, Scene, SurfaceMaterial
from .spectra import FluorescentMaterial, absorbed_fraction, sample_model, spectrum_to_rgb

__all__ = [
    "Image",
    "EmissionTexture",
    "fluorescent_emission_texture",
    "CompiledScene",
    "compile_scene",
    "render",
    "render_with_aux",
    "RenderResult",
    "probe_intensity",
    "luminance",
    "set_thread_count",
    "OBJ_BACKGROUND",
    "OBJ_GEL",
    "OBJ_MIRROR",
    "OBJ_STRIP_BASE",
    "OBJ_PANEL_BASE",
]

LUMA_WEIGHTS = np.array([0.2126, 0.7152, 0.0722])

OBJ_BACKGROUND = 0
OBJ_GEL = 1
OBJ_MIRROR = 2
OBJ_STRIP_BASE = 10
OBJ_PANEL_BASE = 100

_KIND_DIFFUSE = 0
_KIND_MIRROR = 1
_KIND_COATED = 2


def set_thread_count(n: int) -> int:
    """Clamp and apply the worker thread count; returns the value in use."""
    import numba

    n = max(1, min(int(n), numba.config.NUMBA_NUM_THREADS))
    numba.set_num_threads(n)
    return n


def luminance(rgb: np.ndarray) -> np.ndarray:
    return np.asarray(rgb) @ LUMA_WEIGHTS


@dataclass
class Image:
    """Linear-RGB framebuffer (values are radiance scaled by exposure)."""

    width: int
    height: int
    pixels: np.ndarray  # (H, W, 3) float

    def __post_init__(self) -> None:
        self.pixels = np.asarray(self.pixels, dtype=np.float64).reshape(
            self.height, self.width, 3
        )

    def to_png(self, path) -> None:
        """Tone map (clip + sRGB transfer) and write an 8-bit PNG."""
        from PIL import Image as PILImage

        x = np.clip(self.pixels, 0.0, 1.0)
        srgb = np.where(x <= 0.0031308, 12.92 * x, 1.055 * np.power(x, 1.0 / 2.4) - 0.055)
        data = (srgb * 255.0 + 0.5).astype(np.uint8)
        PILImage.fromarray(data, mode="RGB").save(path)

    def save_raw(self, path) -> None:
        """Sidecar float dump: ASCII header then row-major float32 LE."""
        with open(path, "wb") as fh:
            fh.write(f"LTRAW 1 {self.width} {self.height}\n".encode())
            fh.write(self.pixels.astype("<f4").tobytes())

    @classmethod
    def load_raw(cls, path) -> "Image":
        with open(path, "rb") as fh:
            header = fh.readline().decode().split()
            if len(header) != 4 or header[0] != "LTRAW" or header[1] != "1":
                raise ValueError(f"{path}: not a raw float image")
            width, height = int(header[2]), int(header[3])
            data = np.frombuffer(fh.read(), dtype="<f4").astype(np.float64)
        return cls(width, height, data.reshape(height, width, 3))


# ---------------------------------------------------------------------------
# Fluorescent strip emission

@dataclass(frozen=True)
class EmissionTexture:
    """Position-dependent RGB radiance over one paint strip."""

    color: np.ndarray                       # unit-max emission color
    efficiency: float
    source_centers: np.ndarray              # (S, 3)
    source_normals: np.ndarray              # (S, 3)
    source_gains: np.ndarray                # (S,) radiant_scale * absorbed fraction
    source_sizes: np.ndarray                # (S,) characteristic size d0

    def radiance(self, points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        total = np.zeros(len(pts))
        for c, n, gain, d0 in zip(
            self.source_centers, self.source_normals, self.source_gains, self.source_sizes
        ):
            delta = pts - c
            dist = np.linalg.norm(delta, axis=1)
            cos = np.where(
                dist > 1e-9,
                np.clip((delta @ n) / np.maximum(dist, 1e-300), 0.0, None),
                1.0,
            )
            total += gain * cos / (1.0 + (dist / d0) ** 2)
        return self.efficiency * np.outer(total, self.color)


def fluorescent_emission_texture(
    strip: RectPatch,
    paint: FluorescentMaterial,
    blue_sources: list[LedPanel],
) -> EmissionTexture:
    """Bake the textured-light approximation for one strip.

    Radiance at a strip point is conversion efficiency times the summed
    blue irradiance estimate (cosine times smooth inverse-square falloff
    from each source center) times the paint's unit-max emission color.
    """
    if not blue_sources:
        raise ValueError("need at least one blue source to excite the paint")
    color = np.clip(spectrum_to_rgb(sample_model(paint.emission)), 0.0, None)
    peak = color.max()
    if peak <= 0.0:
        raise SceneInvalid("paint emission maps to a black RGB color")
    color = color / peak
    centers = np.array([s.center for s in blue_sources], dtype=float)
    normals = np.array([s.normal for s in blue_sources], dtype=float)
    gains = np.array(
        [s.radiant_scale * absorbed_fraction(s.emission, paint.absorption) for s in blue_sources]
    )
    sizes = np.array([s.characteristic_size() for s in blue_sources])
    return EmissionTexture(color, paint.conversion_efficiency, centers, normals, gains, sizes)


def tessellate_rect(rect: RectPatch, target_edge: float = 2.0) -> TriMesh:
    """Grid-triangulate a rectangle at roughly the requested edge length."""
    c = np.asarray(rect.center, dtype=float)
    u = np.asarray(rect.edge_u, dtype=float)
    v = np.asarray(rect.edge_v, dtype=float)
    nu = max(1, int(np.ceil(2.0 * np.linalg.norm(u) / target_edge)))
    nv = max(1, int(np.ceil(2.0 * np.linalg.norm(v) / target_edge)))
    s = np.linspace(-1.0, 1.0, nu + 1)
    t = np.linspace(-1.0, 1.0, nv + 1)
    gs, gt = np.meshgrid(s, t, indexing="ij")
    pts = c + gs[..., None] * u + gt[..., None] * v
    pts = pts.reshape(-1, 3)
    tris = []
    for i in range(nu):
        for j in range(nv):
            a = i * (nv + 1) + j
            b = (i + 1) * (nv + 1) + j
            tris.append([a, b, b + 1])
            tris.append([a, b + 1, a + 1])
    return TriMesh(pts, np.array(tris, dtype=np.int64))


# ---------------------------------------------------------------------------
# Scene compilation

@dataclass
class CompiledScene:
    """Flat arrays the kernels consume; static geometry owns the BVH."""

    tv: np.ndarray
    tn: np.ndarray
    tmat: np.ndarray
    temit: np.ndarray
    tobj: np.ndarray
    tbeam: np.ndarray
    xv: np.ndarray
    xn: np.ndarray
    xmat: np.ndarray
    xemit: np.ndarray
    xobj: np.ndarray
    xbeam: np.ndarray
    tpoa: np.ndarray
    xpoa: np.ndarray
    bvh: BVH
    mkind: np.ndarray
    malbedo: np.ndarray
    mspec: np.ndarray
    mrough: np.ndarray
    lights: tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray, np.ndarray]
    scene: Scene | None = None
    strip_ranges: list[tuple[int, int, str]] = field(default_factory=list)

    def with_panels(self, panels: list[LedPanel]) -> "CompiledScene":
        """Swap LED panels without rebuilding the BVH.

        Strip emissions are re-baked (they depend on the blue sources)
        and the light table is rebuilt.
        """
        if self.scene is None:
            raise ValueError("this compiled scene was not built from a Scene")
        new_scene = Scene(
            camera=self.scene.camera,
            mirror=self.scene.mirror,
            gel_surface=self.scene.gel_surface,
            paint_strips=self.scene.paint_strips,
            led_panels=list(panels),
            materials=self.scene.materials,
            indenter=self.scene.indenter,
            render=self.scene.render,
        )
        temit = self.temit.copy()
        for start, end, material in self.strip_ranges:
            paint = new_scene.materials[material]
            strip_rect = next(
                s.rect for s in new_scene.paint_strips if s.material == material
            )
            texture = fluorescent_emission_texture(strip_rect, paint, panels)
            centroids = self.tv[start:end].reshape(-1, 3, 3).mean(axis=1)
            temit[start:end] = texture.radiance(centroids)

        xv, xn, xmat, xemit, xobj, xbeam = _panel_arrays(new_scene, self._panel_mat_index)
        lights, tpoa, xpoa = _build_lights(
            self.tv, self.tn, temit, self.tbeam, xv, xn, xemit, xbeam
        )
        out = replace(
            self, temit=temit, xv=xv, xn=xn, xmat=xmat, xemit=xemit, xobj=xobj,
            xbeam=xbeam, tpoa=tpoa, xpoa=xpoa, lights=lights, scene=new_scene,
        )
        return out

    @property
    def _panel_mat_index(self) -> int:
        return int(self.mkind.size - 1)


def _material_arrays(materials: list[SurfaceMaterial | FluorescentMaterial]):
    kinds = np.zeros(len(materials), dtype=np.int32)
    albedo = np.zeros((len(materials), 3))
    spec = np.zeros(len(materials))
    rough = np.zeros(len(materials))
    for i, m in enumerate(materials):
        if isinstance(m, FluorescentMaterial):
            kinds[i] = _KIND_DIFFUSE
            albedo[i] = np.clip(spectrum_to_rgb(m.base_reflectance), 0.0, 1.0)
            continue
        if m.kind == "mirror_specular":
            kinds[i] = _KIND_MIRROR
            spec[i] = m.specular_fraction
        elif m.kind == "coated_flake" and m.specular_fraction > 0.0:
            kinds[i] = _KIND_COATED
            albedo[i] = m.albedo_rgb
            spec[i] = m.specular_fraction
            rough[i] = m.roughness
        else:
            kinds[i] = _KIND_DIFFUSE
            albedo[i] = m.albedo_rgb
    return kinds, albedo, spec, rough


def _mesh_rows(mesh: TriMesh) -> tuple[np.ndarray, np.ndarray]:
    a, b, c = mesh.corner_positions()
    tv = np.hstack([a, b, c])
    n = np.cross(b - a, c - a)
    n = n / np.maximum(np.linalg.norm(n, axis=1, keepdims=True), 1e-300)
    return tv, n


def _panel_arrays(scene: Scene, panel_mat: int):
    rows = []
    norms = []
    emits = []
    objs = []
    beams = []
    for i, panel in enumerate(scene.led_panels):
        mesh = panel.rect().to_trimesh()
        tv, tn = _mesh_rows(mesh)
        # wind panel triangles to emit along the declared normal
        n = np.asarray(panel.normal, dtype=float)
        for row, gn in zip(tv, tn):
            if gn @ n < 0.0:
                row = np.concatenate([row[0:3], row[6:9], row[3:6]])
                gn = -gn
            rows.append(row)
            norms.append(n)  # exact panel normal
            emits.append(np.asarray(spectrum_to_rgb(panel.emission)) * panel.radiant_scale)
            objs.append(OBJ_PANEL_BASE + i)
            beams.append(panel.beam_exponent)
    if rows:
        xv = np.array(rows)
        xn = np.array(norms)
        xemit = np.clip(np.array(emits), 0.0, None)
        xobj = np.array(objs, dtype=np.int32)
        xbeam = np.array(beams)
    else:
        xv = np.zeros((0, 9))
        xn = np.zeros((0, 3))
        xemit = np.zeros((0, 3))
        xobj = np.zeros(0, dtype=np.int32)
        xbeam = np.zeros(0)
    xmat = np.full(len(xv), panel_mat, dtype=np.int32)
    return xv, xn, xmat, xemit, xobj, xbeam


def _build_lights(tv, tn, temit, tbeam, xv, xn, xemit, xbeam):
    """Light table plus per-triangle pmf/area maps (for MIS weights)."""
    tmask = temit.max(axis=1) > 0.0
    xmask = xemit.max(axis=1) > 0.0 if len(xemit) else np.zeros(0, dtype=bool)
    tpoa = np.zeros(len(tv))
    xpoa = np.zeros(len(xv))
    parts = []
    if np.any(tmask):
        parts.append((tv[tmask], tn[tmask], temit[tmask], tbeam[tmask]))
    if np.any(xmask):
        parts.append((xv[xmask], xn[xmask], xemit[xmask], xbeam[xmask]))
    if not parts:
        zero = np.zeros((0, 3))
        empty = (np.zeros((0, 9)), zero, zero, np.zeros(0), np.zeros(0), np.zeros(0))
        return empty, tpoa, xpoa
    lv = np.vstack([p[0] for p in parts])
    ln = np.vstack([p[1] for p in parts])
    lemit = np.vstack([p[2] for p in parts])
    lbeam = np.concatenate([p[3] for p in parts])
    edge1 = lv[:, 3:6] - lv[:, 0:3]
    edge2 = lv[:, 6:9] - lv[:, 0:3]
    areas = 0.5 * np.linalg.norm(np.cross(edge1, edge2), axis=1)
    power = luminance(lemit) * areas
    total = power.sum()
    if total <= 0.0:
        zero = np.zeros((0, 3))
        empty = (np.zeros((0, 9)), zero, zero, np.zeros(0), np.zeros(0), np.zeros(0))
        return empty, tpoa, xpoa
    pmf = power / total
    cdf = np.cumsum(pmf)
    cdf[-1] = 1.0
    pmf_over_area = pmf / np.maximum(areas, 1e-300)
    n_static = int(tmask.sum())
    tpoa[tmask] = pmf_over_area[:n_static]
    if np.any(xmask):
        xpoa[xmask] = pmf_over_area[n_static:]
    return (lv, ln, lemit, cdf, pmf_over_area, lbeam), tpoa, xpoa


def compile_scene(scene: Scene) -> CompiledScene:
    """Flatten a Scene into kernel arrays and build the BVH."""
    scene.validate()

    material_ids = list(scene.materials)
    mat_index = {name: i for i, name in enumerate(material_ids)}
    material_list = [scene.materials[name] for name in material_ids]
    # one extra slot for the (emission-only, black-bodied) LED panel surface
    material_list.append(SurfaceMaterial("lambertian", (0.0, 0.0, 0.0)))
    panel_mat = len(material_list) - 1
    mkind, malbedo, mspec, mrough = _material_arrays(material_list)

    tv_parts: list[np.ndarray] = []
    tn_parts: list[np.ndarray] = []
    tmat_parts: list[np.ndarray] = []
    temit_parts: list[np.ndarray] = []
    tobj_parts: list[np.ndarray] = []
    strip_ranges: list[tuple[int, int, str]] = []
    offset = 0

    def push(mesh_tv, mesh_tn, mat, emit, obj) -> None:
        nonlocal offset
        n = len(mesh_tv)
        tv_parts.append(mesh_tv)
        tn_parts.append(mesh_tn)
        tmat_parts.append(np.full(n, mat, dtype=np.int32))
        temit_parts.append(emit if emit is not None else np.zeros((n, 3)))
        tobj_parts.append(np.full(n, obj, dtype=np.int32))
        offset += n

    gel_tv, gel_tn = _mesh_rows(scene.gel_surface.mesh)
    push(gel_tv, gel_tn, mat_index[scene.gel_surface.material], None, OBJ_GEL)

    mirror_tv, mirror_tn = _mesh_rows(scene.mirror.render_mesh())
    push(mirror_tv, mirror_tn, mat_index[scene.mirror.material], None, OBJ_MIRROR)

    for i, strip in enumerate(scene.paint_strips):
        paint = scene.materials[strip.material]
        mesh = tessellate_rect(strip.rect, target_edge=2.0)
        stv, stn = _mesh_rows(mesh)
        # orient triangle normals along the strip plane normal
        plane_n = strip.rect.normal()
        flip = stn @ plane_n < 0.0
        stv[flip] = np.hstack([stv[flip][:, 0:3], stv[flip][:, 6:9], stv[flip][:, 3:6]])
        stn = np.broadcast_to(plane_n, stn.shape).copy()
        if scene.led_panels:
            texture = fluorescent_emission_texture(strip.rect, paint, scene.led_panels)
            centroids = stv.reshape(-1, 3, 3).mean(axis=1)
            emit = texture.radiance(centroids)
        else:
            emit = np.zeros((len(stv), 3))
        start = offset
        push(stv, stn, mat_index[strip.material], emit, OBJ_STRIP_BASE + i)
        strip_ranges.append((start, offset, strip.material))

    tv = np.ascontiguousarray(np.vstack(tv_parts))
    tn = np.ascontiguousarray(np.vstack(tn_parts))
    tmat = np.concatenate(tmat_parts)
    temit = np.ascontiguousarray(np.vstack(temit_parts))
    tobj = np.concatenate(tobj_parts)
    tbeam = np.zeros(len(tv))  # strips are Lambertian emitters

    xv, xn, xmat, xemit, xobj, xbeam = _panel_arrays(scene, panel_mat)
    bvh = build_bvh(tv.reshape(-1, 3, 3))
    lights, tpoa, xpoa = _build_lights(tv, tn, temit, tbeam, xv, xn, xemit, xbeam)

    return CompiledScene(
        tv=tv, tn=tn, tmat=tmat, temit=temit, tobj=tobj, tbeam=tbeam,
        xv=xv, xn=xn, xmat=xmat, xemit=xemit, xobj=xobj, xbeam=xbeam,
        tpoa=tpoa, xpoa=xpoa,
        bvh=bvh, mkind=mkind, malbedo=malbedo, mspec=mspec, mrough=mrough,
        lights=lights, scene=scene, strip_ranges=strip_ranges,
    )


@dataclass
class RenderResult:
    image: Image
    first_hit_position: np.ndarray  # (H, W, 3) world position of first diffuse hit
    first_hit_object: np.ndarray    # (H, W) int32 object id (0 = background)


def render_compiled(
    compiled: CompiledScene,
    settings: RenderSettings,
    camera=None,
) -> RenderResult:
    """Run the kernel; raises ImageNaN if any non-finite pixel appears."""
    cam = camera if camera is not None else compiled.scene.camera
    right, up, forward = cam.basis()
    tan_x = np.tan(np.radians(cam.fov_deg) / 2.0)
    tan_y = tan_x * settings.height / settings.width

    out = np.zeros((settings.width * settings.height, 3))
    aux_pos = np.zeros((settings.width * settings.height, 3))
    aux_obj = np.zeros(settings.width * settings.height, dtype=np.int32)
    lv, ln, lemit, lcdf, lpoa, lbeam = compiled.lights

    kernels.render_kernel(
        settings.width, settings.height, settings.samples_per_pixel,
        settings.max_depth, settings.rr_start_depth, settings.seed,
        float(cam.position[0]), float(cam.position[1]), float(cam.position[2]),
        right[0], right[1], right[2],
        up[0], up[1], up[2],
        forward[0], forward[1], forward[2],
        tan_x, tan_y,
        compiled.tv, compiled.tn, compiled.tmat, compiled.temit, compiled.tbeam,
        compiled.xv, compiled.xn, compiled.xmat, compiled.xemit, compiled.xbeam,
        compiled.tobj, compiled.xobj, compiled.tpoa, compiled.xpoa,
        compiled.bvh.bounds_min, compiled.bvh.bounds_max,
        compiled.bvh.left, compiled.bvh.right, compiled.bvh.order,
        compiled.mkind, compiled.malbedo, compiled.mspec, compiled.mrough,
        lv, ln, lemit, lcdf, lpoa, lbeam,
        out, aux_pos, aux_obj,
    )

    if not np.all(np.isfinite(out)):
        raise ImageNaN("renderer produced non-finite pixel values")

    pixels = out.reshape(settings.height, settings.width, 3) * settings.exposure
    return RenderResult(
        image=Image(settings.width, settings.height, pixels),
        first_hit_position=aux_pos.reshape(settings.height, settings.width, 3),
        first_hit_object=aux_obj.reshape(settings.height, settings.width),
    )


def render_with_aux(scene: Scene, settings: RenderSettings | None = None) -> RenderResult:
    compiled = compile_scene(scene)
    return render_compiled(compiled, settings if settings is not None else scene.render)


def render(scene: Scene, settings: RenderSettings | None = None) -> Image:
    """Render the scene to a linear image (exposure already applied)."""
    return render_with_aux(scene, settings).image


def probe_intensity(image: Image, point: tuple[int, int], window: int = 9) -> float:
    """Mean luminance over a window x window block centered on ``point``."""
    px, py = int(point[0]), int(point[1])
    half = window // 2
    x0, x1 = px - half, px + half + 1
    y0, y1 = py - half, py + half + 1
    if x0 < 0 or y0 < 0 or x1 > image.width or y1 > image.height:
        raise ValueError("probe window does not fit inside the image")
    block = image.pixels[y0:y1, x0:x1]
    return float(luminance(block).mean())


def pad_probe_pixel(result: RenderResult, target_xy=(0.0, 0.0)) -> tuple[int, int]:
    """Pixel whose first gel hit lies nearest a pad-plane point (x, y)."""
    mask = result.first_hit_object == OBJ_GEL
    if not np.any(mask):
        raise ValueError("gel surface is not visible in the render")
    pos = result.first_hit_position[mask][:, :2]
    d2 = ((pos - np.asarray(target_xy)) ** 2).sum(axis=1)
    ys, xs = np.nonzero(mask)
    best = int(np.argmin(d2))
    return int(xs[best]), int(ys[best])
