import io

import numpy as np
import pytest

from conftest import uniform_scene
from meltpyro.frame_io import Frame, decode_stream
from meltpyro.pipeline import benchmark_stream, process_frames
from meltpyro.radiometry import OpticsConfig
from meltpyro.synth import SyntheticLayerScript, render_pair, render_stream
from meltpyro.thermography import ObservationStatus, PipelineParams

CFG = OpticsConfig()


def make_frames(n=40, noise_sigma=15.0, seed=3):
    scene = uniform_scene(3000.0, peak_counts=2600.0, optics=CFG, noise_sigma=noise_sigma, seed=seed)
    return [render_pair(scene, CFG, frame_index=i) for i in range(n)]


def rows(observations):
    return [
        (o.frame_index, o.timestamp_ms, o.status, o.i12, o.t_kelvin, o.u_t_kelvin)
        for o in observations
    ]


class TestProcessFrames:
    def test_single_worker_order(self):
        frames = make_frames(20)
        out = list(process_frames(frames, CFG))
        assert [o.frame_index for o in out] == list(range(20))
        assert all(o.status is ObservationStatus.OK for o in out)

    def test_multi_worker_identical_to_single(self):
        frames = make_frames(50)
        single = rows(process_frames(frames, CFG))
        multi = rows(process_frames(frames, CFG, workers=2, chunk_frames=8))
        assert single == multi

    def test_window_restriction(self):
        frames = make_frames(30)
        window = (frames[10].timestamp_ms, frames[20].timestamp_ms)
        out = list(process_frames(frames, CFG, window_ms=window))
        assert [o.frame_index for o in out] == list(range(10, 20))

    def test_every_frame_accounted_for(self):
        frames = make_frames(15)
        frames[7] = Frame(index=7, timestamp_ms=frames[7].timestamp_ms,
                          pixels=np.zeros((48, 128), np.uint16))
        out = list(process_frames(frames, CFG))
        assert len(out) == 15
        assert out[7].status is ObservationStatus.LASER_OFF

    def test_bad_frame_becomes_error_row(self):
        frames = make_frames(5)
        # width-1 frame: split_frame cannot produce two halves
        frames[2] = Frame(index=2, timestamp_ms=0.0, pixels=np.zeros((48, 1), np.uint16))
        out = list(process_frames(frames, CFG))
        assert len(out) == 5
        assert out[2].status is ObservationStatus.ERROR
        assert out[3].status is ObservationStatus.OK

    def test_stream_integration(self):
        script = SyntheticLayerScript(
            segments=(
                (8.0, uniform_scene(3000.0, peak_counts=2500.0, optics=CFG)),
                (4.0, None),
            ),
            fps=1000,
        )
        buf = io.BytesIO()
        render_stream(script, buf, CFG)
        buf.seek(0)
        header, frames = decode_stream(buf)
        out = list(process_frames(frames, CFG))
        assert len(out) == 12
        assert sum(o.status is ObservationStatus.LASER_OFF for o in out) == 4

    def test_invalid_workers(self):
        with pytest.raises(ValueError):
            list(process_frames([], CFG, workers=0))


class TestBenchmark:
    def test_fast_and_full_paths(self):
        frames = make_frames(30, noise_sigma=0.0)
        fast = benchmark_stream(frames, CFG, PipelineParams(), [1])
        assert fast[0].path == "fast"
        assert fast[0].frames == 30
        assert fast[0].fps > 0
        full = benchmark_stream(
            frames, CFG, PipelineParams(), [1], full_path=True, full_path_frames=6
        )
        assert full[0].path == "full"
        assert full[0].frames == 6
        assert full[0].fps < fast[0].fps
