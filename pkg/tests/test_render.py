import numpy as np
import pytest

from conftest import furnace_box, furnace_series

from lumitact.bvh import build_bvh
from lumitact.geometry import GelPadSpec, assemble_scene, make_led_panel
from lumitact.render import (
    OBJ_GEL,
    CompiledScene,
    Image,
    _build_lights,
    _mesh_rows,
    compile_scene,
    fluorescent_emission_texture,
    luminance,
    probe_intensity,
    render_compiled,
    render_with_aux,
    set_thread_count,
    tessellate_rect,
)
from lumitact.scene import CameraSpec, RectPatch, RenderSettings
from lumitact.spectra import make_paint_preset


def default_pad():
    return GelPadSpec("ellipsoid", width=35, length=70, thickness=4,
                      ellipsoid_radii=(80.0, 60.0, 30.0), resolution=(70, 35))


def small_settings(**kw):
    base = dict(samples_per_pixel=16, width=160, height=120, seed=1)
    base.update(kw)
    return RenderSettings(**base)


class TestFurnace:
    def test_truncated_series(self):
        compiled, camera = furnace_box(emission=0.7, albedo=0.5)
        settings = RenderSettings(samples_per_pixel=256, max_depth=6,
                                  rr_start_depth=3, seed=2, width=48, height=48)
        result = render_compiled(compiled, settings, camera=camera)
        expected = furnace_series(0.7, 0.5, 6)
        assert result.image.pixels.mean() == pytest.approx(expected, rel=0.02)

    def test_energy_conservation_bound(self):
        compiled, camera = furnace_box(emission=0.7, albedo=0.5)
        settings = RenderSettings(samples_per_pixel=64, max_depth=6, seed=3,
                                  width=32, height=32)
        result = render_compiled(compiled, settings, camera=camera)
        assert result.image.pixels.max() <= 0.7 * (6 + 1)

    def test_spp_variance_scaling(self):
        # doubling spp should shrink the per-pixel standard error by ~1/sqrt(2)
        compiled, camera = furnace_box(emission=0.7, albedo=0.5)
        stacks = {}
        for spp in (8, 16):
            frames = []
            for seed in range(16):
                settings = RenderSettings(samples_per_pixel=spp, max_depth=4,
                                          rr_start_depth=2, seed=seed,
                                          width=24, height=24)
                frames.append(render_compiled(compiled, settings, camera=camera).image.pixels)
            stacks[spp] = np.stack(frames)
        err_lo = stacks[8].std(axis=0).mean()
        err_hi = stacks[16].std(axis=0).mean()
        assert err_lo / err_hi == pytest.approx(np.sqrt(2.0), rel=0.15)


class TestMirror:
    def test_reflected_patch_position(self):
        # camera -> 45 deg mirror -> emissive patch overhead; the patch
        # image must straddle the image centre (law of reflection)
        mirror = RectPatch((10.0, 0.0, 0.0), (np.sqrt(2), 0, np.sqrt(2)), (0, 2.0, 0))
        # edge order chosen so the emitter faces down toward the mirror
        patch = RectPatch((10.0, 0.0, 30.0), (0, 1.5, 0), (1.5, 0, 0))
        mirror_tv, mirror_tn = _mesh_rows(mirror.to_trimesh())
        patch_tv, patch_tn = _mesh_rows(patch.to_trimesh())
        tv = np.vstack([mirror_tv, patch_tv])
        tn = np.vstack([mirror_tn, patch_tn])
        tmat = np.array([0, 0, 1, 1], dtype=np.int32)
        temit = np.zeros((4, 3))
        temit[2:] = 5.0
        tobj = np.array([2, 2, 3, 3], dtype=np.int32)
        tbeam = np.zeros(4)
        xv = np.zeros((0, 9)); xn = np.zeros((0, 3)); xm = np.zeros(0, dtype=np.int32)
        xe = np.zeros((0, 3)); xo = np.zeros(0, dtype=np.int32); xb = np.zeros(0)
        lights, tpoa, xpoa = _build_lights(tv, tn, temit, tbeam, xv, xn, xe, xb)
        compiled = CompiledScene(
            tv=tv, tn=tn, tmat=tmat, temit=temit, tobj=tobj, tbeam=tbeam,
            xv=xv, xn=xn, xmat=xm, xemit=xe, xobj=xo, xbeam=xb,
            tpoa=tpoa, xpoa=xpoa, bvh=build_bvh(tv.reshape(-1, 3, 3)),
            mkind=np.array([1, 0], dtype=np.int32),
            malbedo=np.array([[0.0, 0.0, 0.0], [0.1, 0.1, 0.1]]),
            mspec=np.array([0.9, 0.0]), mrough=np.zeros(2),
            lights=lights, scene=None, strip_ranges=[],
        )
        camera = CameraSpec((0.0, 0.0, 0.0), (10.0, 0.0, 0.0), fov_deg=60.0)
        settings = RenderSettings(samples_per_pixel=64, max_depth=3, seed=0,
                                  width=101, height=101)
        result = render_compiled(compiled, settings, camera=camera)
        lum = luminance(result.image.pixels)
        ys, xs = np.mgrid[0:101, 0:101]
        cx = (lum * xs).sum() / lum.sum()
        cy = (lum * ys).sum() / lum.sum()
        assert abs(cx - 50.0) < 1.0
        assert abs(cy - 50.0) < 1.0


class TestDeterminism:
    def test_same_seed_bit_identical(self):
        scene = assemble_scene(default_pad(), [make_led_panel("bottom", 30.0)])
        a = render_with_aux(scene, small_settings()).image.pixels
        b = render_with_aux(scene, small_settings()).image.pixels
        assert a.tobytes() == b.tobytes()

    def test_different_seed_differs(self):
        scene = assemble_scene(default_pad(), [make_led_panel("bottom", 30.0)])
        a = render_with_aux(scene, small_settings(seed=1)).image.pixels
        b = render_with_aux(scene, small_settings(seed=2)).image.pixels
        assert a.tobytes() != b.tobytes()

    def test_thread_count_invariance(self):
        scene = assemble_scene(default_pad(), [make_led_panel("bottom", 30.0)])
        compiled = compile_scene(scene)
        frames = []
        for threads in (1, 2):
            set_thread_count(threads)
            frames.append(render_compiled(compiled, small_settings()).image.pixels)
        set_thread_count(64)  # restore the default (clamped to hardware)
        assert frames[0].tobytes() == frames[1].tobytes()


class TestLinearity:
    def test_radiant_scale_scales_pixels_exactly(self):
        pad = default_pad()
        one = assemble_scene(pad, [make_led_panel("bottom", 30.0, radiant_scale=1.0)])
        two = assemble_scene(pad, [make_led_panel("bottom", 30.0, radiant_scale=2.0)])
        a = render_with_aux(one, small_settings()).image.pixels
        b = render_with_aux(two, small_settings()).image.pixels
        # identical light-selection pmf, identical paths: exact doubling
        mask = a > 1e-12
        assert np.allclose(b[mask] / a[mask], 2.0, rtol=1e-9)


class TestSensorScene:
    def test_pad_fully_visible(self):
        scene = assemble_scene(default_pad(), [make_led_panel("bottom", 30.0)])
        result = render_with_aux(scene, small_settings(width=320, height=240))
        gel = result.first_hit_object == OBJ_GEL
        assert gel.mean() > 0.04
        x = result.first_hit_position[gel][:, 0]
        counts = np.histogram(x, bins=35, range=(-35, 35))[0]
        assert np.all(counts > 0)

    def test_zero_lights_near_black(self):
        scene = assemble_scene(default_pad(), [])
        image = render_with_aux(scene, small_settings()).image
        assert image.pixels.max() < 1e-9

    def test_imprint_visible(self):
        from lumitact.deform import indent_surface, position_indenter
        from lumitact.geometry import make_indenter, sensing_surface

        pad = default_pad()
        surface = sensing_surface(pad, frame="rig")
        ind = position_indenter(
            make_indenter("cylinder", (10.0, 40.0), center=(0, 0, 60)), surface, 1.5
        )
        deformed = indent_surface(surface, ind, 1.5)
        flat_scene = assemble_scene(pad, [make_led_panel("bottom", 30.0)])
        dent_scene = assemble_scene(pad, [make_led_panel("bottom", 30.0)],
                                    indenter=ind, surface=deformed,
                                    surface_source="approximate-deformer")
        st = small_settings(samples_per_pixel=32, width=320, height=240)
        flat_img = render_with_aux(flat_scene, st)
        dent_img = render_with_aux(dent_scene, st)
        mask = flat_img.first_hit_object == OBJ_GEL
        flat_lum = luminance(flat_img.image.pixels)
        dent_lum = luminance(dent_img.image.pixels)
        gel_mean = flat_lum[mask].mean()
        diff = np.abs(dent_lum - flat_lum)[mask]
        # the imprint rim must visibly restructure the image
        assert diff.max() > 0.5 * gel_mean
        assert (diff > 0.2 * gel_mean).mean() > 0.01


class TestProbe:
    def test_uniform_white(self):
        img = Image(8, 8, np.ones((8, 8, 3)))
        assert probe_intensity(img, (4, 4), 3) == pytest.approx(1.0)

    def test_pure_red_luma(self):
        pixels = np.zeros((8, 8, 3))
        pixels[:, :, 0] = 1.0
        img = Image(8, 8, pixels)
        assert probe_intensity(img, (4, 4), 3) == pytest.approx(0.2126)

    def test_out_of_bounds(self):
        img = Image(8, 8, np.ones((8, 8, 3)))
        with pytest.raises(ValueError):
            probe_intensity(img, (0, 0), 5)

    def test_matches_full_window_mean(self):
        rng = np.random.default_rng(0)
        pixels = rng.uniform(0, 1, (16, 16, 3))
        img = Image(16, 16, pixels)
        got = probe_intensity(img, (8, 8), 5)
        block = pixels[6:11, 6:11]
        expected = (block @ np.array([0.2126, 0.7152, 0.0722])).mean()
        assert got == pytest.approx(expected, rel=1e-12)


class TestEmissionTexture:
    def strip(self):
        return RectPatch((0.0, 17.5, 28.0), (30.0, 0, 0), (0, 0, 2.0))

    def test_requires_sources(self):
        with pytest.raises(ValueError):
            fluorescent_emission_texture(self.strip(), make_paint_preset("red"), [])

    def test_max_at_source_centre_projection(self):
        # source facing the strip head-on: at the projection of its
        # centre both d and theta are minimal, so emission peaks there
        from lumitact.scene import LedPanel

        source = LedPanel(center=(0.0, -10.0, 28.0), normal=(0.0, 1.0, 0.0),
                          half_extents=(4.0, 10.0))
        texture = fluorescent_emission_texture(self.strip(), make_paint_preset("red"), [source])
        pts = tessellate_rect(self.strip(), target_edge=1.0).vertices
        radiance = luminance(texture.radiance(pts))
        projection = np.array([0.0, 17.5, 28.0])
        expected = np.linalg.norm(pts - projection, axis=1).argmin()
        assert radiance.argmax() == expected

    def test_doubling_scale_doubles_emission(self):
        paint = make_paint_preset("red")
        one = fluorescent_emission_texture(self.strip(), paint, [make_led_panel("bottom", 30.0)])
        two = fluorescent_emission_texture(
            self.strip(), paint, [make_led_panel("bottom", 30.0, radiant_scale=2.0)]
        )
        pts = tessellate_rect(self.strip()).vertices
        assert np.allclose(two.radiance(pts), 2.0 * one.radiance(pts), rtol=1e-12)

    def test_red_channel_dominant_under_blue(self):
        texture = fluorescent_emission_texture(
            self.strip(), make_paint_preset("red"), [make_led_panel("bottom", 30.0)]
        )
        rgb = texture.radiance(np.array([[0.0, 17.5, 28.0]]))[0]
        assert rgb[0] > rgb[1] and rgb[0] > rgb[2]

    def test_efficiency_scales_linearly(self):
        strip = self.strip()
        lo = fluorescent_emission_texture(strip, make_paint_preset("red", 0.02),
                                          [make_led_panel("bottom", 30.0)])
        hi = fluorescent_emission_texture(strip, make_paint_preset("red", 0.04),
                                          [make_led_panel("bottom", 30.0)])
        pts = np.array([[5.0, 17.5, 28.0]])
        assert np.allclose(hi.radiance(pts), 2.0 * lo.radiance(pts), rtol=1e-12)


class TestImageIo:
    def test_raw_round_trip(self, tmp_path):
        rng = np.random.default_rng(2)
        img = Image(7, 5, rng.uniform(0, 3, (5, 7, 3)))
        path = tmp_path / "img.raw"
        img.save_raw(path)
        loaded = Image.load_raw(path)
        assert loaded.width == 7 and loaded.height == 5
        assert np.allclose(loaded.pixels, img.pixels, atol=1e-6)

    def test_png_written(self, tmp_path):
        img = Image(4, 4, np.full((4, 4, 3), 0.5))
        path = tmp_path / "img.png"
        img.to_png(path)
        from PIL import Image as PILImage

        with PILImage.open(path) as reloaded:
            assert reloaded.size == (4, 4)
