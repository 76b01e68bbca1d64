import io
import json
import math

import numpy as np
import pytest

from conftest import uniform_scene
from meltpyro.frame_io import decode_stream, split_frame
from meltpyro.radiometry import OpticsConfig, ratio_from_temperature, wien_radiance
from meltpyro.registration import SimilarityTransform
from meltpyro.segmentation import segment
from meltpyro.synth import (
    EllipseFootprint,
    FieldFootprint,
    GaussianFootprint,
    SceneSchemaError,
    SyntheticLayerScript,
    SyntheticScene,
    exposure_for_peak_counts,
    footprint_mask,
    render_channel_counts,
    render_pair,
    render_stream,
    scene_from_dict,
    script_from_dict,
)

CFG = OpticsConfig()


class TestRenderPair:
    def test_uniform_scene_ratio_matches_forward_model(self):
        scene = uniform_scene(3000.0, peak_counts=3000.0, optics=CFG)
        frame = render_pair(scene, CFG)
        left620, right550 = split_frame(frame)
        expected = ratio_from_temperature(3000.0, CFG)
        p550 = np.asarray(right550.pixels, float)
        p620 = np.asarray(left620.pixels, float)
        interior = (p550 > 16 * 500) & (p620 > 16 * 500)
        ratios = p550[interior] / p620[interior]
        # exact up to 12-bit quantization of each channel
        assert np.abs(ratios - expected).max() < 2.5 / 500

    def test_dark_scene_yields_no_melt_pool(self):
        scene = SyntheticScene(
            footprint=FieldFootprint(kelvin=np.zeros((48, 64))), exposure_scale=1.0
        )
        frame = render_pair(scene, CFG)
        assert frame.pixels.max() == 0
        left, right = split_frame(frame)
        assert segment(left) is None and segment(right) is None

    def test_seeded_determinism(self):
        scene = uniform_scene(2800.0, noise_sigma=25.0, seed=11)
        a = render_pair(scene, CFG, frame_index=3)
        b = render_pair(scene, CFG, frame_index=3)
        np.testing.assert_array_equal(a.pixels, b.pixels)
        c = render_pair(scene, CFG, frame_index=4)
        assert (c.pixels != a.pixels).any()

    def test_saturation_flag_and_clip(self):
        fp = EllipseFootprint(kelvin=3000.0)
        hot = SyntheticScene(
            footprint=fp,
            exposure_scale=exposure_for_peak_counts(fp, 6000.0, CFG),
        )
        frame = render_pair(hot, CFG)
        assert frame.saturated
        assert frame.pixels.max() == 4095 * 16

    def test_values_are_multiples_of_sixteen(self):
        frame = render_pair(uniform_scene(3000.0), CFG)
        assert (frame.pixels % 16 == 0).all()

    def test_transform_moves_550_channel_only(self):
        base = uniform_scene(3000.0, optics=CFG)
        moved = SyntheticScene(
            footprint=base.footprint,
            exposure_scale=base.exposure_scale,
            applied_transform=SimilarityTransform(translation=(6.0, 0.0)),
        )
        f0 = render_pair(base, CFG)
        f1 = render_pair(moved, CFG)
        left0, right0 = split_frame(f0)
        left1, right1 = split_frame(f1)
        np.testing.assert_array_equal(left0.pixels, left1.pixels)
        assert (right0.pixels != right1.pixels).any()

    def test_wien_vs_planck_mode_gap(self):
        # the inversion assumes the short-wavelength form; the renderer's
        # planck switch quantifies that approximation separately
        scene = uniform_scene(3000.0, peak_counts=3000.0, optics=CFG)
        shape = (48, 64)
        wien_counts = render_channel_counts(scene, CFG, "wl620", shape)
        planck_counts = render_channel_counts(scene, CFG, "wl620", shape, planck=True)
        hot = wien_counts > 100
        rel = np.abs(planck_counts[hot] - wien_counts[hot]) / planck_counts[hot]
        expected = math.exp(-CFG.constants.hc_over_kb / (CFG.lambda2 * 3000.0))
        assert rel.max() == pytest.approx(expected, rel=1e-6)

    def test_channel_levels_follow_radiance_model(self):
        scene = uniform_scene(3000.0, peak_counts=3000.0, optics=CFG)
        shape = (48, 64)
        c550 = render_channel_counts(scene, CFG, "wl550", shape).max()
        expected = scene.exposure_scale * wien_radiance(
            CFG.lambda1, 3000.0, scene.eps1, scene.a1, CFG.constants
        )
        assert c550 == pytest.approx(expected, rel=1e-9)

    def test_footprint_mask_matches_floor(self):
        scene = uniform_scene(3000.0, peak_counts=2000.0, optics=CFG)
        mask = footprint_mask(scene, CFG, (48, 64), "wl620", 100.0)
        counts = render_channel_counts(scene, CFG, "wl620", (48, 64))
        np.testing.assert_array_equal(mask, counts >= 100.0)
        assert 0 < mask.sum() < mask.size


class TestFootprints:
    def test_gaussian_profile(self):
        fp = GaussianFootprint(peak_kelvin=3000.0, center=(10.0, 8.0), sigma_x_px=2.0, sigma_y_px=1.0)
        x = np.array([10.0, 12.0])
        y = np.array([8.0, 8.0])
        kelvin, cov = fp.evaluate(x, y, (16, 20))
        assert kelvin[0] == pytest.approx(3000.0)
        assert kelvin[1] == pytest.approx(3000.0 * math.exp(-0.5), rel=1e-12)
        assert cov.tolist() == [1.0, 1.0]

    def test_ellipse_uniform_interior(self):
        fp = EllipseFootprint(kelvin=2500.0, center=(10.0, 10.0), ax_px=5.0, ay_px=3.0)
        kelvin, cov = fp.evaluate(np.array([10.0]), np.array([10.0]), (21, 21))
        assert kelvin[0] == 2500.0 and cov[0] == 1.0
        _, cov_out = fp.evaluate(np.array([19.0]), np.array([10.0]), (21, 21))
        assert cov_out[0] == 0.0

    def test_field_bilinear_sampling(self):
        grid = np.array([[1000.0, 2000.0], [3000.0, 4000.0]])
        fp = FieldFootprint(kelvin=grid)
        kelvin, _ = fp.evaluate(np.array([0.5]), np.array([0.5]), (2, 2))
        assert kelvin[0] == pytest.approx(2500.0)

    def test_field_validation(self):
        with pytest.raises(ValueError):
            FieldFootprint(kelvin=np.array([1.0, 2.0]))
        with pytest.raises(ValueError):
            FieldFootprint(kelvin=np.array([[-5.0]]))

    def test_exposure_helper_places_peak(self):
        # pixel-centered peak so the sampled maximum is the analytic one;
        # the target applies to the brighter channel so nothing saturates
        fp = GaussianFootprint(peak_kelvin=2600.0, center=(32.0, 24.0))
        scale = exposure_for_peak_counts(fp, 1500.0, CFG)
        scene = SyntheticScene(footprint=fp, exposure_scale=scale)
        c550 = render_channel_counts(scene, CFG, "wl550", (48, 64)).max()
        c620 = render_channel_counts(scene, CFG, "wl620", (48, 64)).max()
        assert max(c550, c620) == pytest.approx(1500.0, rel=1e-6)
        assert c620 > c550  # below ~2763 K the long wavelength dominates

    def test_exposure_helper_never_saturates_either_channel(self):
        for kelvin in (1800.0, 2400.0, 3000.0, 3800.0):
            fp = EllipseFootprint(kelvin=kelvin)
            scene = SyntheticScene(
                footprint=fp, exposure_scale=exposure_for_peak_counts(fp, 3500.0, CFG)
            )
            frame = render_pair(scene, CFG)
            assert not frame.saturated, f"{kelvin} K saturated"


class TestRenderStream:
    def test_round_trip_bit_identical(self):
        script = SyntheticLayerScript(
            segments=((10.0, uniform_scene(2900.0, noise_sigma=12.0, seed=5)),),
            fps=1000,
        )
        buf = io.BytesIO()
        header = render_stream(script, buf, CFG)
        assert header.frame_count == 10
        buf.seek(0)
        back, frames = decode_stream(buf)
        frames = list(frames)
        assert len(frames) == 10
        direct = render_pair(
            script.segments[0][1], CFG, frame_index=7, fps=script.fps
        )
        np.testing.assert_array_equal(frames[7].pixels, direct.pixels)

    def test_segment_frame_counts(self):
        script = SyntheticLayerScript(
            segments=(
                (2900.0, uniform_scene(3000.0)),
                (200.0, None),
                (2900.0, uniform_scene(3000.0)),
            ),
            fps=30000,
        )
        assert script.frame_counts() == [87000, 6000, 87000]
        assert script.total_frames == 180000

    def test_laser_off_frames_dark(self):
        script = SyntheticLayerScript(segments=((5.0, None),), fps=1000)
        buf = io.BytesIO()
        render_stream(script, buf, CFG)
        buf.seek(0)
        _, frames = decode_stream(buf)
        for frame in frames:
            assert frame.pixels.max() == 0

    def test_invalid_duration(self):
        with pytest.raises(ValueError):
            SyntheticLayerScript(segments=((0.0, None),), fps=100)


class TestSchema:
    def scene_doc(self, **overrides):
        doc = {
            "footprint": {"kind": "gaussian", "peak_kelvin": 3000.0, "center": [32, 24]},
            "peak_counts": 2500.0,
            "seed": 3,
        }
        doc.update(overrides)
        return doc

    def test_scene_from_dict(self):
        scene = scene_from_dict(self.scene_doc(), optics=CFG)
        assert isinstance(scene.footprint, GaussianFootprint)
        assert scene.seed == 3
        counts = render_channel_counts(scene, CFG, "wl550", (48, 64))
        assert counts.max() == pytest.approx(2500.0, rel=1e-6)

    def test_transform_parsing(self):
        doc = self.scene_doc(
            transform={"scale": 1.05, "rotation_deg": 3.0, "translation": [1.0, -0.5]}
        )
        scene = scene_from_dict(doc, optics=CFG)
        assert scene.applied_transform.scale == pytest.approx(1.05)
        assert scene.applied_transform.rotation == pytest.approx(math.radians(3.0))

    def test_missing_field_carries_path(self):
        doc = self.scene_doc()
        del doc["footprint"]["peak_kelvin"]
        with pytest.raises(SceneSchemaError) as err:
            scene_from_dict(doc, optics=CFG)
        assert "footprint.peak_kelvin" in err.value.path

    def test_unknown_kind(self):
        doc = self.scene_doc(footprint={"kind": "square", "peak_kelvin": 1.0})
        with pytest.raises(SceneSchemaError) as err:
            scene_from_dict(doc, optics=CFG)
        assert err.value.path.endswith("kind")

    def test_needs_exposure_or_peak(self):
        doc = self.scene_doc()
        del doc["peak_counts"]
        with pytest.raises(SceneSchemaError):
            scene_from_dict(doc, optics=CFG)

    def test_script_from_dict(self):
        doc = {
            "fps": 1000,
            "segments": [
                {"duration_ms": 5.0, "scene": self.scene_doc()},
                {"duration_ms": 2.0, "scene": None},
            ],
        }
        script = script_from_dict(doc, optics=CFG)
        assert script.total_frames == 7
        assert script.segments[1][1] is None

    def test_script_segment_error_path(self):
        doc = {"segments": [{"scene": None}]}
        with pytest.raises(SceneSchemaError) as err:
            script_from_dict(doc, optics=CFG)
        assert "segments[0]" in err.value.path

    def test_json_round_trip_through_text(self):
        doc = {
            "fps": 500,
            "width": 64,
            "height": 24,
            "segments": [{"duration_ms": 4.0, "scene": self.scene_doc()}],
        }
        script = script_from_dict(json.loads(json.dumps(doc)), optics=CFG)
        assert script.width == 64
        assert script.total_frames == 2
