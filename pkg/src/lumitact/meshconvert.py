"""Hexahedral-to-surface mesh conversion.

Volumetric FEM meshes (native or externally exported deformed states)
become oriented triangle surfaces for rendering: find the quadrilateral
faces owned by exactly one element, split each along a fixed diagonal,
and wind every triangle away from its owner's centroid.

Boundary detection counts occurrences of sorted node-id quadruples,
which is exact on topology and immune to coordinate ties.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import NonManifoldInput, OrientationConflict

__all__ = [
    "HexMesh",
    "TriMesh",
    "BoundaryQuads",
    "extract_boundary",
    "triangulate_quads",
    "orient_consistently",
    "apply_displacements",
    "hex_to_surface",
    "read_neutral_mesh",
    "write_neutral_mesh",
    "read_fem_deck",
    "write_obj",
    "read_obj",
]

# Local node indices of the six faces of a trilinear hex, wound so the
# face normal points out of the element for a positively oriented hex.
HEX_FACES = np.array([
    [0, 3, 2, 1],  # bottom
    [4, 5, 6, 7],  # top
    [0, 1, 5, 4],
    [1, 2, 6, 5],
    [2, 3, 7, 6],
    [3, 0, 4, 7],
], dtype=np.int64)

# Sign pattern of the eight trilinear shape functions, for the centroid
# Jacobian check.
_HEX_SIGNS = np.array([
    [-1, -1, -1], [1, -1, -1], [1, 1, -1], [-1, 1, -1],
    [-1, -1, 1], [1, -1, 1], [1, 1, 1], [-1, 1, 1],
], dtype=float)


@dataclass
class HexMesh:
    """Volumetric mesh: nodes (mm), 8-node bricks, optional displacements."""

    nodes: np.ndarray                      # (N, 3) float
    elements: np.ndarray                   # (M, 8) int
    displacements: np.ndarray | None = None  # (N, 3) float

    def __post_init__(self) -> None:
        self.nodes = np.ascontiguousarray(self.nodes, dtype=float)
        self.elements = np.ascontiguousarray(self.elements, dtype=np.int64)

    def validate(self) -> None:
        if self.elements.size and (
            self.elements.min() < 0 or self.elements.max() >= len(self.nodes)
        ):
            raise ValueError("element connectivity references a missing node")
        sorted_conn = np.sort(self.elements, axis=1)
        if np.any(sorted_conn[:, :-1] == sorted_conn[:, 1:]):
            raise ValueError("degenerate element: repeated node in connectivity")
        if np.any(self.centroid_jacobians() <= 0.0):
            raise ValueError("element with non-positive Jacobian at centroid")
        if self.displacements is not None and len(self.displacements) != len(self.nodes):
            raise ValueError("displacement field cardinality does not match nodes")

    def centroid_jacobians(self) -> np.ndarray:
        corners = self.nodes[self.elements]            # (M, 8, 3)
        jac = np.einsum("mkc,kp->mcp", corners, _HEX_SIGNS) / 8.0
        return np.linalg.det(jac)

    def element_volumes(self) -> np.ndarray:
        """Hull volumes via the divergence theorem on each element.

        Faces are split along the same canonical diagonal the surface
        pipeline uses, so contributions of interior faces cancel exactly
        between neighbors and the summed volume equals the signed volume
        of the extracted boundary surface.
        """
        faces = _canonical_cycles(self.elements[:, HEX_FACES].reshape(-1, 4))
        quads = self.nodes[faces].reshape(len(self.elements), 6, 4, 3)
        tri_a = quads[:, :, (0, 1, 2), :]
        tri_b = quads[:, :, (0, 2, 3), :]
        tris = np.concatenate([tri_a, tri_b], axis=1)  # (M, 12, 3, 3)
        vol = np.einsum(
            "mtj,mtj->mt",
            tris[:, :, 0, :],
            np.cross(tris[:, :, 1, :], tris[:, :, 2, :]),
        )
        return vol.sum(axis=1) / 6.0


@dataclass
class TriMesh:
    """Triangle surface with per-triangle outward unit normals."""

    vertices: np.ndarray                 # (V, 3) float
    triangles: np.ndarray                # (F, 3) int
    normals: np.ndarray | None = None    # (F, 3) float, unit
    repairs: int = 0                     # winding flips applied by orientation

    def __post_init__(self) -> None:
        self.vertices = np.ascontiguousarray(self.vertices, dtype=float)
        self.triangles = np.ascontiguousarray(self.triangles, dtype=np.int64)
        if self.normals is None:
            self.normals = self.compute_normals()
        else:
            self.normals = np.ascontiguousarray(self.normals, dtype=float)

    def corner_positions(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        v = self.vertices
        t = self.triangles
        return v[t[:, 0]], v[t[:, 1]], v[t[:, 2]]

    def compute_normals(self) -> np.ndarray:
        a, b, c = self.corner_positions()
        n = np.cross(b - a, c - a)
        length = np.linalg.norm(n, axis=1, keepdims=True)
        return n / np.maximum(length, 1e-300)

    def areas(self) -> np.ndarray:
        a, b, c = self.corner_positions()
        return 0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=1)

    def signed_volume(self) -> float:
        a, b, c = self.corner_positions()
        return float(np.einsum("ij,ij->i", a, np.cross(b, c)).sum() / 6.0)

    def edges(self) -> np.ndarray:
        """Undirected edges as sorted index pairs, one row per unique edge."""
        t = self.triangles
        raw = np.concatenate([t[:, (0, 1)], t[:, (1, 2)], t[:, (2, 0)]])
        return np.unique(np.sort(raw, axis=1), axis=0)

    def edge_incidence_counts(self) -> np.ndarray:
        t = self.triangles
        raw = np.sort(np.concatenate([t[:, (0, 1)], t[:, (1, 2)], t[:, (2, 0)]]), axis=1)
        _, counts = np.unique(raw, axis=0, return_counts=True)
        return counts

    def euler_characteristic(self) -> int:
        referenced = np.unique(self.triangles)
        return int(referenced.size - len(self.edges()) + len(self.triangles))

    def is_watertight(self) -> bool:
        counts = self.edge_incidence_counts()
        return bool(np.all(counts == 2))

    def has_consistent_winding(self) -> bool:
        """Every undirected edge traversed at most once in each direction."""
        t = self.triangles
        directed = np.concatenate([t[:, (0, 1)], t[:, (1, 2)], t[:, (2, 0)]])
        unique_directed = np.unique(directed, axis=0)
        return len(unique_directed) == len(directed)

    def translated(self, offset: np.ndarray) -> "TriMesh":
        return TriMesh(self.vertices + np.asarray(offset, dtype=float), self.triangles.copy(),
                       None if self.normals is None else self.normals.copy())


@dataclass
class BoundaryQuads:
    """Boundary faces with their original winding and owning elements."""

    quads: np.ndarray    # (Q, 4) int, wound outward per HEX_FACES
    owners: np.ndarray   # (Q,) int element ids


def _canonical_cycles(quads: np.ndarray) -> np.ndarray:
    """Rotate each 4-cycle to start at its minimum node id.

    A pure rotation: winding (hence orientation) is preserved, and the
    n0-n2 split diagonal becomes identical for the two elements sharing
    a face, which is what makes volume bookkeeping exact.
    """
    start = np.argmin(quads, axis=1)
    cols = (start[:, None] + np.arange(4)[None, :]) % 4
    return np.take_along_axis(quads, cols, axis=1)


def extract_boundary(hexmesh: HexMesh) -> BoundaryQuads:
    """Faces appearing in exactly one element; identity = sorted node quadruple."""
    elements = hexmesh.elements
    faces = elements[:, HEX_FACES]                       # (M, 6, 4)
    flat = _canonical_cycles(faces.reshape(-1, 4))
    owners = np.repeat(np.arange(len(elements), dtype=np.int64), 6)
    keys = np.sort(flat, axis=1)
    _, inverse, counts = np.unique(keys, axis=0, return_inverse=True, return_counts=True)
    if np.any(counts > 2):
        raise NonManifoldInput("a quadrilateral face occurs in more than two elements")
    boundary = counts[inverse] == 1
    return BoundaryQuads(quads=flat[boundary], owners=owners[boundary])


def triangulate_quads(boundary: BoundaryQuads, nodes: np.ndarray) -> tuple[TriMesh, np.ndarray]:
    """Split each quad (n0,n1,n2,n3) along the fixed n0-n2 diagonal.

    Returns the triangle soup over the full node array plus the owning
    element id of every triangle.  No new vertices are introduced.
    """
    q = boundary.quads
    tris = np.concatenate([q[:, (0, 1, 2)], q[:, (0, 2, 3)]])
    owners = np.concatenate([boundary.owners, boundary.owners])
    return TriMesh(vertices=nodes, triangles=tris), owners


def orient_consistently(
    tris: TriMesh,
    owners: np.ndarray,
    hexmesh: HexMesh,
    strict: bool = False,
) -> TriMesh:
    """Wind every triangle so its normal points away from its owner centroid.

    The result carries the number of flips applied in ``repairs``.  With
    ``strict=True`` any needed flip raises.  If the centroid rule and
    shared-edge consistency disagree (an inverted element), the conflict
    always raises.
    """
    centroids = hexmesh.nodes[hexmesh.elements].mean(axis=1)    # (M, 3)
    a, b, c = tris.corner_positions()
    normals = np.cross(b - a, c - a)
    outward = np.einsum("ij,ij->i", normals, (a + b + c) / 3.0 - centroids[owners])
    flip = outward < 0.0
    repairs = int(flip.sum())
    if strict and repairs:
        raise OrientationConflict(f"{repairs} triangle(s) wound toward their owning element")

    fixed = tris.triangles.copy()
    fixed[flip] = fixed[flip][:, (0, 2, 1)]
    result = TriMesh(vertices=tris.vertices, triangles=fixed, repairs=repairs)
    if not result.has_consistent_winding():
        raise OrientationConflict(
            "centroid rule conflicts with shared-edge consistency (inverted element?)"
        )
    return result


def apply_displacements(hexmesh: HexMesh) -> HexMesh:
    """Translate nodes by the stored displacement field."""
    if hexmesh.displacements is None:
        raise ValueError("mesh carries no displacement field")
    if len(hexmesh.displacements) != len(hexmesh.nodes):
        raise ValueError("displacement field cardinality does not match nodes")
    return HexMesh(
        nodes=hexmesh.nodes + np.asarray(hexmesh.displacements, dtype=float),
        elements=hexmesh.elements.copy(),
    )


def hex_to_surface(hexmesh: HexMesh, strict: bool = False) -> TriMesh:
    """Full pipeline: extract boundary, triangulate, orient outward."""
    boundary = extract_boundary(hexmesh)
    soup, owners = triangulate_quads(boundary, hexmesh.nodes)
    return orient_consistently(soup, owners, hexmesh, strict=strict)


# ---------------------------------------------------------------------------
# Neutral mesh format: whitespace-delimited text with `nodes`, `hexes`
# and optional `displacements` sections; `#` starts a comment.

def write_neutral_mesh(path: str | Path, hexmesh: HexMesh, comment: str | None = None) -> None:
    with open(path, "w") as fh:
        if comment:
            for line in comment.splitlines():
                fh.write(f"# {line}\n")
        fh.write("nodes\n")
        for i, (x, y, z) in enumerate(hexmesh.nodes):
            fh.write(f"{i} {x:.17g} {y:.17g} {z:.17g}\n")
        fh.write("hexes\n")
        for i, conn in enumerate(hexmesh.elements):
            fh.write(f"{i} " + " ".join(str(n) for n in conn) + "\n")
        if hexmesh.displacements is not None:
            fh.write("displacements\n")
            for i, (dx, dy, dz) in enumerate(hexmesh.displacements):
                fh.write(f"{i} {dx:.17g} {dy:.17g} {dz:.17g}\n")


def read_neutral_mesh(path: str | Path) -> HexMesh:
    nodes: dict[int, tuple[float, float, float]] = {}
    hexes: dict[int, tuple[int, ...]] = {}
    disps: dict[int, tuple[float, float, float]] = {}
    section = None
    with open(path) as fh:
        for raw in fh:
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if line in ("nodes", "hexes", "displacements"):
                section = line
                continue
            parts = line.split()
            if section == "nodes":
                nodes[int(parts[0])] = (float(parts[1]), float(parts[2]), float(parts[3]))
            elif section == "hexes":
                hexes[int(parts[0])] = tuple(int(p) for p in parts[1:9])
            elif section == "displacements":
                disps[int(parts[0])] = (float(parts[1]), float(parts[2]), float(parts[3]))
            else:
                raise ValueError(f"{path}: data before any section header")
    return _assemble(nodes, hexes, disps, str(path))


def _assemble(
    nodes: dict[int, tuple[float, float, float]],
    hexes: dict[int, tuple[int, ...]],
    disps: dict[int, tuple[float, float, float]],
    origin: str,
) -> HexMesh:
    if not nodes:
        raise ValueError(f"{origin}: no nodes found")
    ids = sorted(nodes)
    remap = {node_id: i for i, node_id in enumerate(ids)}
    node_arr = np.array([nodes[i] for i in ids])
    elem_arr = np.array(
        [[remap[n] for n in hexes[e]] for e in sorted(hexes)], dtype=np.int64
    ).reshape(-1, 8)
    disp_arr = None
    if disps:
        disp_arr = np.zeros_like(node_arr)
        for node_id, d in disps.items():
            disp_arr[remap[node_id]] = d
    mesh = HexMesh(node_arr, elem_arr, disp_arr)
    mesh.validate()
    return mesh


def read_fem_deck(path: str | Path) -> HexMesh:
    """Read the text subset of a FEM input deck: *NODE and *ELEMENT cards.

    Only 8-node brick elements (TYPE=C3D8R or C3D8) are accepted; every
    other card is skipped with a warning.
    """
    nodes: dict[int, tuple[float, float, float]] = {}
    hexes: dict[int, tuple[int, ...]] = {}
    mode = None
    skipped: set[str] = set()
    with open(path) as fh:
        for raw in fh:
            line = raw.strip()
            if not line or line.startswith("**"):
                continue
            if line.startswith("*"):
                parts = [p.strip().upper() for p in line.split(",")]
                card = parts[0]
                if card == "*NODE":
                    mode = "node"
                elif card == "*ELEMENT":
                    elem_type = ""
                    for p in parts[1:]:
                        if p.startswith("TYPE="):
                            elem_type = p.split("=", 1)[1]
                    if elem_type in ("C3D8R", "C3D8"):
                        mode = "element"
                    else:
                        mode = None
                        skipped.add(line)
                else:
                    mode = None
                    skipped.add(card)
                continue
            fields = [p for p in line.replace(",", " ").split() if p]
            if mode == "node":
                nodes[int(fields[0])] = tuple(float(v) for v in fields[1:4])
            elif mode == "element":
                hexes[int(fields[0])] = tuple(int(v) for v in fields[1:9])
    for card in sorted(skipped):
        warnings.warn(f"{path}: ignoring unsupported card {card}", stacklevel=2)
    return _assemble(nodes, hexes, {}, str(path))


def write_obj(path: str | Path, mesh: TriMesh, name: str = "surface") -> None:
    """ASCII vertex/face export for external viewers (1-based indices)."""
    with open(path, "w") as fh:
        fh.write(f"o {name}\n")
        for x, y, z in mesh.vertices:
            fh.write(f"v {x:.17g} {y:.17g} {z:.17g}\n")
        for i, j, k in mesh.triangles:
            fh.write(f"f {i + 1} {j + 1} {k + 1}\n")


def read_obj(path: str | Path) -> TriMesh:
    """Read the vertex/face subset of an OBJ file (triangles only)."""
    vertices: list[tuple[float, float, float]] = []
    triangles: list[tuple[int, int, int]] = []
    with open(path) as fh:
        for line in fh:
            parts = line.split()
            if not parts:
                continue
            if parts[0] == "v":
                vertices.append((float(parts[1]), float(parts[2]), float(parts[3])))
            elif parts[0] == "f":
                ids = [int(p.split("/")[0]) - 1 for p in parts[1:]]
                if len(ids) != 3:
                    raise ValueError(f"{path}: only triangle faces are supported")
                triangles.append(tuple(ids))
    if not vertices or not triangles:
        raise ValueError(f"{path}: no triangle geometry found")
    return TriMesh(np.array(vertices), np.array(triangles, dtype=np.int64))
