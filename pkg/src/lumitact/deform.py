"""Desk-scale stand-in for the external mechanical simulation.

Two unrelated jobs live here.  First, analytic evaluators for the
constitutive energy densities of the sensor's materials (two-term Ogden
for the printed TPU skeleton, Neo-Hookean for the silicone pad, linear
elastic for the stiff parts), with gradients for verification.  Second,
an approximate surface deformer: vertices penetrating a rigid indenter
are projected onto its surface and the displacement field is spread by
Laplacian smoothing, so renders can be produced without an external FEM
run.  Results are flagged ``approximate-deformer`` downstream.

The Ogden energy is implemented in normalized form (with the "-3" term)
so the rest state carries zero energy.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import IndenterSwallowsMesh, NonPositiveStretch
from .geometry import Indenter
from .meshconvert import TriMesh
from .scene import RectPatch

__all__ = [
    "ConstitutiveParams",
    "DeformSettings",
    "MATERIAL_PRESETS",
    "ogden_energy",
    "ogden_gradient",
    "neo_hookean_energy",
    "neo_hookean_gradient",
    "linear_elastic_energy",
    "indent_surface",
    "position_indenter",
    "deform_mirror",
]


@dataclass(frozen=True)
class ConstitutiveParams:
    """Parameters for one constitutive model (MPa / unitless)."""

    model: str  # ogden2 | neo_hookean | linear_elastic
    ogden_mu: tuple[float, float] = (0.0, 0.0)
    ogden_alpha: tuple[float, float] = (0.0, 0.0)
    neo_hookean_c10: float = 0.0
    youngs_modulus: float = 0.0
    poisson_ratio: float = 0.0

    def __post_init__(self) -> None:
        if self.model not in ("ogden2", "neo_hookean", "linear_elastic"):
            raise ValueError(f"unknown constitutive model {self.model!r}")
        if self.model == "neo_hookean" and self.neo_hookean_c10 <= 0.0:
            raise ValueError("C10 must be positive")
        if self.model == "linear_elastic":
            if self.youngs_modulus <= 0.0:
                raise ValueError("Young's modulus must be positive")
            if not (-1.0 < self.poisson_ratio < 0.5):
                raise ValueError("Poisson ratio must lie in (-1, 0.5)")


# Calibrated material table of the sensor's components.
MATERIAL_PRESETS = {
    "tpu95a": ConstitutiveParams(
        "ogden2", ogden_mu=(6.279, 1.639), ogden_alpha=(1.6663, -7.136)
    ),
    "pdms": ConstitutiveParams("neo_hookean", neo_hookean_c10=0.1333),
    "onyx": ConstitutiveParams("linear_elastic", youngs_modulus=2100.0, poisson_ratio=0.38),
    "petg": ConstitutiveParams("linear_elastic", youngs_modulus=2800.0, poisson_ratio=0.4),
    "mylar": ConstitutiveParams("linear_elastic", youngs_modulus=5000.0, poisson_ratio=0.38),
}


def _check_stretches(stretches) -> np.ndarray:
    lam = np.asarray(stretches, dtype=float)
    if lam.shape != (3,):
        raise ValueError("expected three principal stretches")
    if np.any(lam <= 0.0):
        raise NonPositiveStretch("principal stretches must be > 0")
    return lam


def ogden_energy(stretches, p: ConstitutiveParams) -> float:
    """Two-term Ogden energy density, zero at the identity."""
    lam = _check_stretches(stretches)
    if p.model != "ogden2":
        raise ValueError("params are not an Ogden model")
    psi = 0.0
    for mu, alpha in zip(p.ogden_mu, p.ogden_alpha):
        psi += mu / alpha * (np.sum(lam**alpha) - 3.0)
    return float(psi)


def ogden_gradient(stretches, p: ConstitutiveParams) -> np.ndarray:
    lam = _check_stretches(stretches)
    grad = np.zeros(3)
    for mu, alpha in zip(p.ogden_mu, p.ogden_alpha):
        grad += mu * lam ** (alpha - 1.0)
    return grad


def neo_hookean_energy(stretches, p: ConstitutiveParams) -> float:
    """Psi = C10 * (l1^2 + l2^2 + l3^2 - 3)."""
    lam = _check_stretches(stretches)
    if p.model != "neo_hookean":
        raise ValueError("params are not a Neo-Hookean model")
    return float(p.neo_hookean_c10 * (np.sum(lam**2) - 3.0))


def neo_hookean_gradient(stretches, p: ConstitutiveParams) -> np.ndarray:
    lam = _check_stretches(stretches)
    return 2.0 * p.neo_hookean_c10 * lam


def linear_elastic_energy(stretches, p: ConstitutiveParams) -> float:
    """Small-strain energy density from principal stretches (eps = l - 1)."""
    lam = _check_stretches(stretches)
    if p.model != "linear_elastic":
        raise ValueError("params are not a linear elastic model")
    eps = lam - 1.0
    e, nu = p.youngs_modulus, p.poisson_ratio
    lame_lambda = e * nu / ((1.0 + nu) * (1.0 - 2.0 * nu))
    lame_mu = e / (2.0 * (1.0 + nu))
    return float(0.5 * lame_lambda * eps.sum() ** 2 + lame_mu * np.sum(eps**2))


@dataclass(frozen=True)
class DeformSettings:
    smoothing_iterations: int = 25
    smoothing_weight: float = 0.5
    contact_margin: float = 1e-6
    projection_mode: str = "normal"  # normal | vertical

    def __post_init__(self) -> None:
        if not (0.0 <= self.smoothing_weight <= 1.0):
            raise ValueError("smoothing_weight must lie in [0, 1]")
        if self.smoothing_iterations < 0:
            raise ValueError("smoothing_iterations must be >= 0")
        if self.projection_mode not in ("normal", "vertical"):
            raise ValueError("projection_mode must be 'normal' or 'vertical'")


def _project_out(indenter: Indenter, points: np.ndarray, passes: int = 4) -> np.ndarray:
    """Move points onto the indenter surface along the distance gradient."""
    out = points.copy()
    for _ in range(passes):
        d = indenter.signed_distance(out)
        inside = d < 0.0
        if not np.any(inside):
            break
        normals = indenter.surface_normal(out[inside])
        out[inside] -= d[inside, None] * normals
    return out


def _project_vertical(
    indenter: Indenter, points: np.ndarray, direction: np.ndarray
) -> np.ndarray:
    """Push points out of the indenter along a fixed direction (bisection)."""
    out = points.copy()
    d = indenter.signed_distance(out)
    inside = np.flatnonzero(d < 0.0)
    if inside.size == 0:
        return out
    lo = np.zeros(inside.size)
    hi = np.full(inside.size, 1.0)
    # grow hi until every point has exited
    for _ in range(60):
        probe = out[inside] + hi[:, None] * direction
        still_in = indenter.signed_distance(probe) < 0.0
        if not np.any(still_in):
            break
        hi[still_in] *= 2.0
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        probe = out[inside] + mid[:, None] * direction
        is_in = indenter.signed_distance(probe) < 0.0
        lo = np.where(is_in, mid, lo)
        hi = np.where(is_in, hi, mid)
    out[inside] += hi[:, None] * direction
    return out


def _vertex_adjacency(mesh: TriMesh) -> tuple[np.ndarray, np.ndarray]:
    """Directed edge list plus vertex degrees (for neighbor averaging)."""
    t = mesh.triangles
    und = np.unique(np.sort(np.concatenate([t[:, (0, 1)], t[:, (1, 2)], t[:, (2, 0)]]), axis=1), axis=0)
    directed = np.concatenate([und, und[:, ::-1]])
    degrees = np.bincount(directed[:, 0], minlength=len(mesh.vertices)).astype(float)
    return directed, degrees


def indent_surface(
    surface: TriMesh,
    indenter: Indenter,
    depth: float,
    settings: DeformSettings | None = None,
) -> TriMesh:
    """Deform a surface under a rigid indenter already posed at ``depth``.

    Penetrating vertices are projected onto the indenter surface; the
    displacement field is then relaxed over the mesh so the imprint
    blends smoothly into the untouched region.  Topology is unchanged
    and no vertex ends up inside the indenter (within contact_margin).
    """
    if depth < 0.0:
        raise ValueError("depth must be >= 0")
    settings = settings or DeformSettings()
    verts = surface.vertices

    if depth == 0.0:
        return TriMesh(verts.copy(), surface.triangles.copy())

    dist = indenter.signed_distance(verts)
    penetrating = dist < 0.0
    if penetrating.mean() > 0.5:
        raise IndenterSwallowsMesh(
            f"{penetrating.sum()} of {len(verts)} vertices penetrate; check the pose"
        )

    if settings.projection_mode == "normal":
        projected = _project_out(indenter, verts[penetrating])
    else:
        projected = _project_vertical(indenter, verts[penetrating], np.array([0.0, 0.0, -1.0]))

    target = np.zeros_like(verts)
    target[penetrating] = projected - verts[penetrating]

    directed, degrees = _vertex_adjacency(surface)
    safe_deg = np.maximum(degrees, 1.0)
    disp = target.copy()
    w = settings.smoothing_weight
    for _ in range(settings.smoothing_iterations):
        neighbor_sum = np.zeros_like(disp)
        for c in range(3):
            neighbor_sum[:, c] = np.bincount(
                directed[:, 0], weights=disp[directed[:, 1], c], minlength=len(verts)
            )
        disp = (1.0 - w) * disp + w * neighbor_sum / safe_deg[:, None]
        disp[penetrating] = target[penetrating]  # contact stays pinned

    moved = verts + disp
    moved = _project_out(indenter, moved)  # smoothing must not re-penetrate

    residual = float(indenter.signed_distance(moved).min())
    if residual < -settings.contact_margin:
        raise RuntimeError(f"projection left {-residual:.2e} mm of penetration")
    return TriMesh(moved, surface.triangles.copy())


def position_indenter(
    indenter: Indenter,
    surface: TriMesh,
    depth: float,
    axis=(0.0, 0.0, 1.0),
) -> Indenter:
    """Translate the indenter along -axis until max penetration equals depth.

    Sphere-traces the translation to first contact (the signed distance
    is 1-Lipschitz in the offset), then bisects inside the post-contact
    window where penetration grows monotonically.  Exact to ~1e-9 mm
    for the analytic shapes used here.
    """
    axis = np.asarray(axis, dtype=float)
    axis = axis / np.linalg.norm(axis)
    verts = surface.vertices

    def min_distance(offset: float) -> float:
        moved = indenter.translated(-offset * axis)
        return float(moved.signed_distance(verts).min())

    def max_penetration(offset: float) -> float:
        return max(0.0, -min_distance(offset))

    # march to first contact; each step is a guaranteed-safe advance
    offset = 0.0
    gap = min_distance(0.0)
    if gap > 0.0:
        for _ in range(200):
            offset += gap
            gap = min_distance(offset)
            if gap <= 1e-9:
                break
        if gap > 1e-9:
            raise ValueError("indenter never reaches the surface along the axis")

    lo = offset
    hi = offset
    for _ in range(1000):
        if max_penetration(hi) >= depth:
            break
        hi += max(0.5 * depth, 1e-3)
    if max_penetration(hi) < depth:
        raise ValueError("indenter never reaches the requested depth along the axis")
    for _ in range(90):
        mid = 0.5 * (lo + hi)
        if max_penetration(mid) < depth:
            lo = mid
        else:
            hi = mid
    return indenter.translated(-hi * axis)


def deform_mirror(rect: RectPatch, deflection: float, resolution: int = 32) -> TriMesh:
    """Bow a rectangle into a circular arc with sagitta = deflection.

    The bow runs along the rect's u direction and bulges along the rect
    normal; deflection 0 returns the flat rectangle mesh.
    """
    if deflection < 0.0:
        raise ValueError("deflection must be >= 0")
    center = np.asarray(rect.center, dtype=float)
    u = np.asarray(rect.edge_u, dtype=float)
    v = np.asarray(rect.edge_v, dtype=float)
    normal = rect.normal()
    half_chord = np.linalg.norm(u)

    s = np.linspace(-1.0, 1.0, resolution + 1)
    t = np.linspace(-1.0, 1.0, 2)
    if deflection == 0.0:
        offsets = np.zeros_like(s)
    else:
        radius = (half_chord**2 + deflection**2) / (2.0 * deflection)
        offsets = np.sqrt(radius**2 - (s * half_chord) ** 2) - (radius - deflection)
    gs, gt = np.meshgrid(s, t, indexing="ij")
    pts = (
        center[None, None, :]
        + gs[:, :, None] * u[None, None, :]
        + gt[:, :, None] * v[None, None, :]
        + offsets[:, None, None] * normal[None, None, :]
    ).reshape(-1, 3)

    tris = []
    cols = 2
    for i in range(resolution):
        a = i * cols
        b = (i + 1) * cols
        tris.append([a, b, b + 1])
        tris.append([a, b + 1, a + 1])
    return TriMesh(pts, np.array(tris, dtype=np.int64))


def arc_length(half_chord: float, deflection: float) -> float:
    """Closed-form length of the bowed mirror's arc."""
    if deflection == 0.0:
        return 2.0 * half_chord
    radius = (half_chord**2 + deflection**2) / (2.0 * deflection)
    return 2.0 * radius * math.asin(min(1.0, half_chord / radius))
