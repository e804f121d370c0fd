import numpy as np

from lumitact.bvh import build_bvh
from lumitact.meshconvert import HexMesh, TriMesh, hex_to_surface
from lumitact.render import CompiledScene, _build_lights, _mesh_rows
from lumitact.scene import CameraSpec


def furnace_box(emission=0.7, albedo=0.5, size=2.0):
    """Closed Lambertian box with uniformly emitting inward walls.

    The analytic interior radiance truncated at d bounces is
    emission * sum(albedo**k for k in 0..d).
    """
    nodes = np.array([(x, y, z) for z in (0.0, size) for y in (0.0, size) for x in (0.0, size)])
    hexmesh = HexMesh(nodes, np.array([[0, 1, 3, 2, 4, 5, 7, 6]]))
    surface = hex_to_surface(hexmesh)
    box = TriMesh(surface.vertices, surface.triangles[:, ::-1])  # wind inward

    tv, tn = _mesh_rows(box)
    temit = np.full((len(tv), 3), emission)
    tbeam = np.zeros(len(tv))
    xv = np.zeros((0, 9))
    xn = np.zeros((0, 3))
    xmat = np.zeros(0, dtype=np.int32)
    xemit = np.zeros((0, 3))
    xobj = np.zeros(0, dtype=np.int32)
    xbeam = np.zeros(0)
    lights, tpoa, xpoa = _build_lights(tv, tn, temit, tbeam, xv, xn, xemit, xbeam)
    compiled = CompiledScene(
        tv=tv, tn=tn, tmat=np.zeros(len(tv), dtype=np.int32), temit=temit,
        tobj=np.ones(len(tv), dtype=np.int32), tbeam=tbeam,
        xv=xv, xn=xn, xmat=xmat, xemit=xemit, xobj=xobj, xbeam=xbeam,
        tpoa=tpoa, xpoa=xpoa,
        bvh=build_bvh(tv.reshape(-1, 3, 3)),
        mkind=np.zeros(1, dtype=np.int32),
        malbedo=np.full((1, 3), albedo),
        mspec=np.zeros(1), mrough=np.zeros(1),
        lights=lights, scene=None, strip_ranges=[],
    )
    camera = CameraSpec(
        (size / 2, size / 2, size / 2),
        (size * 0.95, size * 0.65, size * 0.6),
        fov_deg=90.0,
    )
    return compiled, camera


def furnace_series(emission, albedo, max_depth):
    return emission * sum(albedo**k for k in range(max_depth + 1))
