import numpy as np
import pytest

from lumitact.errors import PatchDoesNotFit, SceneInvalid
from lumitact.geometry import (
    GelPadSpec,
    assemble_scene,
    generate_gelpad,
    make_indenter,
    make_led_panel,
    sensing_surface,
)
from lumitact.scene import LedPanel, load_scene, save_scene, scene_to_dict


def flat_spec(**kw):
    base = dict(family="flat", width=35.0, length=70.0, thickness=4.0, resolution=(35, 18))
    base.update(kw)
    return GelPadSpec(**base)


class TestGelPadGeneration:
    def test_flat_slab_exact(self):
        surface, hexmesh = generate_gelpad(flat_spec())
        assert surface.is_watertight()
        assert surface.signed_volume() == pytest.approx(70 * 35 * 4, rel=1e-12)
        sens = sensing_surface(flat_spec())
        assert sens.areas().sum() == pytest.approx(2450.0, rel=1e-12)

    def test_flat_area_scales_quadratically(self):
        a1 = sensing_surface(flat_spec(width=20, length=40)).areas().sum()
        a2 = sensing_surface(flat_spec(width=40, length=80)).areas().sum()
        assert a2 / a1 == pytest.approx(4.0, rel=1e-12)

    def test_cylindrical_vertices_on_radius(self):
        spec = GelPadSpec("cylindrical", width=35, length=70, thickness=4,
                          cyl_radius=30.0, resolution=(30, 16))
        sens = sensing_surface(spec)
        radii = np.hypot(sens.vertices[:, 1], sens.vertices[:, 2])
        assert np.abs(radii - 30.0).max() < 1e-6

    def test_ellipsoid_vertices_on_surface(self):
        spec = GelPadSpec("ellipsoid", width=35, length=70, thickness=4,
                          ellipsoid_radii=(60.0, 45.0, 25.0), resolution=(30, 16))
        sens = sensing_surface(spec)
        v = sens.vertices
        implicit = (v[:, 0] / 60) ** 2 + (v[:, 1] / 45) ** 2 + (v[:, 2] / 25) ** 2
        assert np.abs(implicit - 1.0).max() < 1e-6

    def test_patch_must_fit(self):
        with pytest.raises(PatchDoesNotFit):
            generate_gelpad(GelPadSpec("ellipsoid", width=80, length=100, thickness=4,
                                       ellipsoid_radii=(55.0, 45.0, 25.0)))

    def test_cylinder_radius_invariant(self):
        with pytest.raises(ValueError):
            GelPadSpec("cylindrical", width=35, length=70, thickness=4, cyl_radius=10.0)

    def test_deterministic(self):
        spec = flat_spec()
        s1, h1 = generate_gelpad(spec)
        s2, h2 = generate_gelpad(spec)
        assert s1.vertices.tobytes() == s2.vertices.tobytes()
        assert h1.elements.tobytes() == h2.elements.tobytes()

    def test_open_strip_edge_incidence(self):
        sens = sensing_surface(flat_spec())
        counts = sens.edge_incidence_counts()
        assert set(np.unique(counts)) <= {1, 2}

    def test_paper_size_envelope(self):
        for w, l in ((18, 48), (35, 70), (50, 60)):
            spec = GelPadSpec("flat", width=w, length=l, thickness=4, resolution=(10, 6))
            surface, _ = generate_gelpad(spec)
            assert surface.signed_volume() > 0


class TestIndenters:
    def test_cylinder_axis_point(self):
        ind = make_indenter("cylinder", (10.0, 40.0))
        assert ind.signed_distance(np.array([[0.0, 0.0, 0.0]]))[0] == pytest.approx(-10.0)

    def test_cuboid_corner_distance(self):
        ind = make_indenter("cuboid", (5.0, 5.0, 5.0))
        point = np.array([[8.0, 9.0, 10.0]])
        expected = np.linalg.norm(point[0] - [5.0, 5.0, 5.0])
        assert ind.signed_distance(point)[0] == pytest.approx(expected, rel=1e-12)

    def test_sphere_on_surface(self):
        ind = make_indenter("sphere", (5.0,))
        assert ind.signed_distance(np.array([[3.0, 4.0, 0.0]]))[0] == pytest.approx(0.0, abs=1e-12)

    def test_normals_unit(self):
        rng = np.random.default_rng(0)
        for ind in (make_indenter("sphere", (5.0,)),
                    make_indenter("cylinder", (8.0, 20.0)),
                    make_indenter("cuboid", (4.0, 6.0, 3.0))):
            pts = rng.uniform(-15, 15, (50, 3))
            normals = ind.surface_normal(pts)
            assert np.allclose(np.linalg.norm(normals, axis=1), 1.0, atol=1e-6)

    def test_dims_validated(self):
        with pytest.raises(ValueError):
            make_indenter("sphere", (5.0, 1.0))
        with pytest.raises(ValueError):
            make_indenter("cylinder", (-1.0, 5.0))


class TestSceneAssembly:
    def test_default_config_validates(self):
        scene = assemble_scene(flat_spec(), [make_led_panel("bottom", 30.0)])
        scene.validate()
        # camera at the base, mirror between camera and pad
        assert scene.camera.position[0] < scene.mirror.rect.center[0]
        assert scene.mirror.rect.center[2] < 30.0

    def test_strips_on_both_sides(self):
        scene = assemble_scene(flat_spec(), [make_led_panel("bottom", 30.0)])
        sides = {s.side for s in scene.paint_strips}
        assert sides == {"left", "right"}
        mats = {s.material for s in scene.paint_strips}
        assert mats == {"paint_red", "paint_green"}

    def test_zero_lights_valid(self):
        scene = assemble_scene(flat_spec(), [])
        scene.validate()
        assert scene.led_panels == []

    def test_two_light_tags(self):
        scene = assemble_scene(
            flat_spec(), [make_led_panel("bottom", 30.0), make_led_panel("top", 30.0)]
        )
        assert sorted(p.placement for p in scene.led_panels) == ["bottom", "top"]

    def test_missing_material_rejected(self):
        with pytest.raises(SceneInvalid):
            assemble_scene(flat_spec(), [], materials={"coating": None})

    def test_led_invariants(self):
        with pytest.raises(SceneInvalid):
            LedPanel(center=(0, 0, 0), normal=(0, 0, 2.0), half_extents=(1, 1))
        with pytest.raises(SceneInvalid):
            LedPanel(center=(0, 0, 0), normal=(0, 0, 1.0), half_extents=(0, 1))
        with pytest.raises(SceneInvalid):
            LedPanel(center=(0, 0, 0), normal=(0, 0, 1.0), half_extents=(1, 1),
                     tilt_angle_deg=180.0)

    def test_panel_normal_unit_within_tolerance(self):
        panel = make_led_panel("bottom", 37.5)
        assert abs(np.linalg.norm(panel.normal) - 1.0) < 1e-9


class TestSceneFile:
    def test_round_trip_lossless(self, tmp_path):
        spec = GelPadSpec("ellipsoid", width=35, length=70, thickness=4,
                          ellipsoid_radii=(80.0, 60.0, 30.0), resolution=(20, 10))
        scene = assemble_scene(
            spec,
            [make_led_panel("bottom", 30.0), make_led_panel("top", 40.0)],
            indenter=make_indenter("cylinder", (10.0, 30.0), center=(0, 0, 40)),
        )
        path = tmp_path / "scene.yaml"
        save_scene(scene, path)
        loaded = load_scene(path)
        assert scene_to_dict(loaded) == scene_to_dict(scene)
        assert loaded.render == scene.render

    def test_schema_version_checked(self, tmp_path):
        path = tmp_path / "scene.yaml"
        scene = assemble_scene(flat_spec(), [])
        save_scene(scene, path)
        text = path.read_text().replace("schema_version: 1", "schema_version: 99")
        path.write_text(text)
        with pytest.raises(SceneInvalid):
            load_scene(path)

    def test_deformed_mesh_sidecar(self, tmp_path):
        from lumitact.deform import indent_surface, position_indenter

        spec = flat_spec(resolution=(40, 20))
        surface = sensing_surface(spec, frame="rig")
        ind = make_indenter("sphere", (8.0,), center=(0, 0, 60))
        posed = position_indenter(ind, surface, 1.0)
        deformed = indent_surface(surface, posed, 1.0)
        scene = assemble_scene(spec, [], surface=deformed,
                               surface_source="approximate-deformer")
        path = tmp_path / "scene.yaml"
        save_scene(scene, path)
        assert (tmp_path / "scene.surface.obj").exists()
        loaded = load_scene(path)
        assert loaded.gel_surface.source == "approximate-deformer"
        assert np.allclose(loaded.gel_surface.mesh.vertices, deformed.vertices)
