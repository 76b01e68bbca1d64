"""Command-line front end.

Subcommands: calibrate, synth, process, analyze, validate-tc, bench,
uncertainty-curve. Exit codes are a stable contract: 0 success, 2 missing
input, 3 parse error, 4 config validation error.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import os
import sys
from pathlib import Path

from . import calibration, pipeline, synth, tc_validation, thermography, uncertainty
from .config import ConfigError, PipelineConfig, load_config
from .frame_io import StreamFormatError, open_pgm_dir, open_stream
from .synth import SceneSchemaError
from .thermography import (
    MeltPoolObservation,
    ObservationStatus,
    observation_csv_row,
    OBSERVATION_CSV_HEADER,
)

__all__ = ["main"]

EXIT_OK = 0
EXIT_MISSING_INPUT = 2
EXIT_PARSE_ERROR = 3
EXIT_CONFIG_ERROR = 4


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


def _fail(message: str, code: int) -> CliError:
    return CliError(message, code)


def _load_cfg(path: str | None) -> PipelineConfig:
    try:
        return load_config(path)
    except FileNotFoundError as exc:
        raise _fail(f"config not found: {exc.filename}", EXIT_MISSING_INPUT) from exc
    except ConfigError as exc:
        raise _fail(f"invalid config: {exc}", EXIT_CONFIG_ERROR) from exc


def _write_text(path: str | None, text: str) -> None:
    if path is None or path == "-":
        sys.stdout.write(text if text.endswith("\n") else text + "\n")
    else:
        Path(path).write_text(text if text.endswith("\n") else text + "\n")


# --------------------------------------------------------------------------
# calibrate


def _read_manifest(path: Path) -> list[tuple[str, Path, Path]]:
    rows = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        expected = {"location", "inlet", "outlet"}
        if reader.fieldnames is None or set(reader.fieldnames) != expected:
            raise _fail(
                f"{path}: manifest header must be location,inlet,outlet",
                EXIT_PARSE_ERROR,
            )
        for row in reader:
            rows.append(
                (
                    row["location"].strip(),
                    path.parent / row["inlet"].strip(),
                    path.parent / row["outlet"].strip(),
                )
            )
    if not rows:
        raise _fail(f"{path}: manifest has no measurements", EXIT_MISSING_INPUT)
    return rows


def cmd_calibrate(args: argparse.Namespace) -> int:
    cfg = _load_cfg(args.config)
    response = calibration.LensCameraResponse()
    try:
        if args.response:
            response = calibration.read_response_csv(args.response)
        if args.group_by_location:
            measurements = []
            groups: dict[str, list[float]] = {}
            for location, inlet_path, outlet_path in _read_manifest(
                Path(args.group_by_location)
            ):
                inlet = calibration.read_spectrum_csv(inlet_path)
                outlet = calibration.read_spectrum_csv(outlet_path)
                a12 = calibration.a12_from_spectra(inlet, outlet, response, cfg.optics)
                measurements.append((location, a12))
                groups.setdefault(location, []).append(a12)
            aggregate = calibration.aggregate_a12(measurements)
            anova = None
            group_values = [v for v in groups.values() if len(v) >= 2]
            if len(group_values) >= 2 and len(group_values) == len(groups):
                anova = calibration.one_way_anova(list(groups.values()))
            result = calibration.CalibrationResult(
                a12_mean=aggregate.mean,
                a12_sd=aggregate.sd,
                per_location=aggregate.per_location,
                anova=anova,
            )
        else:
            if not args.inlet or not args.outlet:
                raise _fail(
                    "calibrate needs --inlet and --outlet (or --group-by-location)",
                    EXIT_MISSING_INPUT,
                )
            inlet = calibration.read_spectrum_csv(args.inlet)
            outlet = calibration.read_spectrum_csv(args.outlet)
            a12 = calibration.a12_from_spectra(inlet, outlet, response, cfg.optics)
            result = calibration.CalibrationResult(
                a12_mean=a12, a12_sd=0.0, per_location=(("all", a12),), anova=None
            )
    except FileNotFoundError as exc:
        raise _fail(f"missing input: {exc.filename}", EXIT_MISSING_INPUT) from exc
    except calibration.SpectrumFormatError as exc:
        raise _fail(f"malformed CSV: {exc}", EXIT_PARSE_ERROR) from exc
    except (ValueError, ZeroDivisionError) as exc:
        raise _fail(f"calibration failed: {exc}", EXIT_CONFIG_ERROR) from exc
    _write_text(args.output, calibration.calibration_report(result))
    return EXIT_OK


# --------------------------------------------------------------------------
# synth


def cmd_synth(args: argparse.Namespace) -> int:
    cfg = _load_cfg(args.config)
    try:
        with open(args.script, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except FileNotFoundError as exc:
        raise _fail(f"missing script: {exc.filename}", EXIT_MISSING_INPUT) from exc
    except json.JSONDecodeError as exc:
        raise _fail(
            f"{args.script}: invalid JSON at line {exc.lineno}", EXIT_PARSE_ERROR
        ) from exc
    try:
        script = synth.script_from_dict(doc, cfg.optics)
        if args.seed is not None:
            script = dataclasses.replace(
                script,
                seed=args.seed,
                segments=tuple(
                    (d, None if s is None else dataclasses.replace(s, seed=args.seed))
                    for d, s in script.segments
                ),
            )
    except SceneSchemaError as exc:
        raise _fail(f"script schema violation at {exc.path}: {exc}", EXIT_PARSE_ERROR) from exc
    header = synth.write_stream_file(script, args.output, cfg.optics)
    print(
        f"wrote {header.frame_count} frames "
        f"({header.width}x{header.height} @ {header.fps} fps) to {args.output}"
    )
    return EXIT_OK


# --------------------------------------------------------------------------
# process


def _open_input(path: str, cfg: PipelineConfig):
    p = Path(path)
    if p.is_dir():
        return open_pgm_dir(p, pixel_pitch_um=cfg.pixel_pitch_um)
    if not p.exists():
        raise _fail(f"missing input: {path}", EXIT_MISSING_INPUT)
    try:
        return open_stream(p)
    except StreamFormatError as exc:
        raise _fail(f"{path}: {exc}", EXIT_PARSE_ERROR) from exc


def _parse_window(spec: str) -> tuple[float, float]:
    try:
        start_s, end_s = spec.split(":", 1)
        window = (float(start_s), float(end_s))
    except ValueError:
        raise _fail(
            f"--window must be start_ms:end_ms, got {spec!r}", EXIT_CONFIG_ERROR
        ) from None
    if window[0] >= window[1]:
        raise _fail(f"--window start must precede end, got {spec!r}", EXIT_CONFIG_ERROR)
    return window


def cmd_process(args: argparse.Namespace) -> int:
    cfg = _load_cfg(args.config)
    params = cfg.params
    if args.maps:
        params = dataclasses.replace(params, compute_maps=True, map_uncertainty=True)
    header, frames = _open_input(args.input, cfg)
    workers = args.workers if args.workers is not None else cfg.resolved_workers()
    window = _parse_window(args.window) if args.window else None

    observations = pipeline.process_frames(
        frames,
        cfg.optics,
        params,
        pixel_pitch_um=header.pixel_pitch_um,
        workers=workers,
        window_ms=window,
        window_frames=cfg.window_frames,
    )
    maps_dir = Path(args.maps) if args.maps else None
    slim: list[MeltPoolObservation] = []
    rows = 0
    decode_error: str | None = None
    reg_fh = open(args.reg_diagnostics, "w", newline="") if args.reg_diagnostics else None
    try:
        reg_writer = None
        if reg_fh is not None:
            reg_writer = csv.writer(reg_fh, lineterminator="\n")
            reg_writer.writerow(thermography.REGISTRATION_CSV_HEADER)
        with open(args.output, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(OBSERVATION_CSV_HEADER)
            try:
                for obs in observations:
                    if maps_dir is not None and obs.temperature_map is not None:
                        thermography.write_temperature_map(
                            maps_dir, obs.frame_index, obs.temperature_map
                        )
                    writer.writerow(observation_csv_row(obs))
                    rows += 1
                    if reg_writer is not None:
                        reg_row = thermography.registration_csv_row(obs)
                        if reg_row is not None:
                            reg_writer.writerow(reg_row)
                    if args.summary:
                        slim.append(
                            dataclasses.replace(
                                obs, temperature_map=None, morphology=None
                            )
                        )
            except IOError as exc:
                decode_error = str(exc)
    finally:
        if reg_fh is not None:
            reg_fh.close()
    if decode_error is not None:
        print(f"warning: {decode_error}; wrote {rows} rows", file=sys.stderr)
    if args.summary:
        doc = thermography.summarize_layer(slim, gap_min_ms=cfg.gap_min_ms)
        doc["source"] = args.input
        doc["fps"] = header.fps
        _write_text(args.summary, json.dumps(doc, indent=2))
    print(f"wrote {rows} observation rows to {args.output}")
    return EXIT_OK


# --------------------------------------------------------------------------
# analyze


def _read_observations_csv(path: str) -> list[MeltPoolObservation]:
    def opt_float(s: str) -> float | None:
        return float(s) if s else None

    observations = []
    try:
        with open(path, "r", encoding="utf-8", newline="") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames is None or "frame_idx" not in reader.fieldnames:
                raise _fail(f"{path}: not a per-frame CSV", EXIT_PARSE_ERROR)
            for row in reader:
                observations.append(
                    MeltPoolObservation(
                        frame_index=int(row["frame_idx"]),
                        timestamp_ms=float(row["t_ms"]),
                        status=ObservationStatus(row["status"]),
                        mean_i550=opt_float(row["mean_i550"]),
                        mean_i620=opt_float(row["mean_i620"]),
                        i12=opt_float(row["i12"]),
                        t_kelvin=opt_float(row["T_K"]),
                        u_t_kelvin=opt_float(row["U_T_K"]),
                    )
                )
    except FileNotFoundError as exc:
        raise _fail(f"missing input: {exc.filename}", EXIT_MISSING_INPUT) from exc
    except (KeyError, ValueError) as exc:
        raise _fail(f"{path}: malformed per-frame CSV ({exc})", EXIT_PARSE_ERROR) from exc
    return observations


def cmd_analyze(args: argparse.Namespace) -> int:
    observations = _read_observations_csv(args.input)
    if not observations:
        raise _fail(f"{args.input}: no observation rows", EXIT_MISSING_INPUT)
    report: dict = {"source": args.input, "observations": len(observations)}
    if args.window:
        start, end = _parse_window(args.window)
        observations = thermography.extract_window(observations, start, end)
        report["window_ms"] = [start, end]
        report["observations_in_window"] = len(observations)
    if args.bars:
        bars = thermography.segment_bars(observations, args.gap_min_ms)
        report["bars"] = thermography.summarize_layer(
            observations, bars, args.gap_min_ms
        )["bars"]
    if args.histogram:
        try:
            lo_s, hi_s, n_s = args.histogram.split(":")
            lo, hi, n = float(lo_s), float(hi_s), int(n_s)
        except ValueError:
            raise _fail(
                f"--histogram must be min:max:nbins, got {args.histogram!r}",
                EXIT_CONFIG_ERROR,
            ) from None
        import numpy as np

        try:
            hist = thermography.i12_histogram(observations, np.linspace(lo, hi, n + 1))
        except ValueError as exc:
            raise _fail(str(exc), EXIT_CONFIG_ERROR) from exc
        report["i12_histogram"] = {
            "bin_edges": hist.bin_edges.tolist(),
            "values": hist.values.tolist(),
            "underflow": hist.underflow,
            "overflow": hist.overflow,
            "total_count": hist.total_count,
        }
    _write_text(args.output, json.dumps(report, indent=2))
    return EXIT_OK


# --------------------------------------------------------------------------
# validate-tc


def cmd_validate_tc(args: argparse.Namespace) -> int:
    model = tc_validation.ThermocoupleModel(
        tau_s=args.tau, ambient_C=args.ambient
    )
    try:
        records = tc_validation.read_validation_csv(args.input, model)
    except FileNotFoundError as exc:
        raise _fail(f"missing input: {exc.filename}", EXIT_MISSING_INPUT) from exc
    except ValueError as exc:
        raise _fail(f"malformed CSV: {exc}", EXIT_PARSE_ERROR) from exc
    if not records:
        raise _fail(f"{args.input}: no validation rows", EXIT_MISSING_INPUT)
    _write_text(args.output, tc_validation.summary_report(records))
    return EXIT_OK


# --------------------------------------------------------------------------
# bench


def _default_bench_frames(cfg: PipelineConfig, n_frames: int):
    footprint = synth.GaussianFootprint(peak_kelvin=3000.0)
    scene = synth.SyntheticScene(
        footprint=footprint,
        exposure_scale=synth.exposure_for_peak_counts(footprint, 2500.0, cfg.optics),
        noise_sigma=8.0,
        seed=20,
    )
    return [
        synth.render_pair(scene, cfg.optics, frame_index=i) for i in range(n_frames)
    ]


def cmd_bench(args: argparse.Namespace) -> int:
    cfg = _load_cfg(args.config)
    if args.input:
        header, frame_iter = _open_input(args.input, cfg)
        frames = list(frame_iter)
        if args.frames and len(frames) > args.frames:
            frames = frames[: args.frames]
    else:
        frames = _default_bench_frames(cfg, args.frames or 4000)
    worker_counts = [int(w) for w in args.workers.split(",")]
    results = pipeline.benchmark_stream(
        frames, cfg.optics, cfg.params, worker_counts, cfg.pixel_pitch_um
    )
    if args.full:
        results += pipeline.benchmark_stream(
            frames,
            cfg.optics,
            cfg.params,
            worker_counts,
            cfg.pixel_pitch_um,
            full_path=True,
            full_path_frames=min(len(frames), args.full_frames),
        )
    lines = []
    doc = {"cpu_count": os.cpu_count(), "frame_count": len(frames), "runs": []}
    for r in results:
        doc["runs"].append(
            {
                "path": r.path,
                "workers": r.workers,
                "frames": r.frames,
                "seconds": r.seconds,
                "fps": r.fps,
            }
        )
        lines.append(
            f"{r.path:4s} path | workers {r.workers:2d} | "
            f"{r.frames:6d} frames in {r.seconds:7.2f} s | {r.fps:9.1f} fps"
        )
    print("\n".join(lines))
    if args.output:
        _write_text(args.output, json.dumps(doc, indent=2))
    return EXIT_OK


# --------------------------------------------------------------------------
# uncertainty-curve


def cmd_uncertainty_curve(args: argparse.Namespace) -> int:
    cfg = _load_cfg(args.config)
    try:
        curve = uncertainty.uncertainty_curve(
            (args.min, args.max),
            args.points,
            args.u_a12 if args.u_a12 is not None else cfg.optics.u_a12,
            args.u_i12,
            cfg.optics,
        )
    except ValueError as exc:
        raise _fail(str(exc), EXIT_CONFIG_ERROR) from exc
    uncertainty.write_uncertainty_curve_csv(curve, args.output)
    note = " (range clipped at the singular ratio)" if curve.clipped else ""
    print(f"wrote {len(curve)} samples to {args.output}{note}")
    return EXIT_OK


# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="meltpyro",
        description="Two-wavelength melt-pool imaging pyrometry toolkit",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("calibrate", help="characterize the transmission ratio A12")
    p.add_argument("--inlet", help="inlet spectrum CSV (wavelength_nm,intensity)")
    p.add_argument("--outlet", help="outlet spectrum CSV")
    p.add_argument("--response", help="lens/camera response CSV (parameter,value)")
    p.add_argument(
        "--group-by-location",
        help="manifest CSV (location,inlet,outlet) of repeated measurements",
    )
    p.add_argument("--config", help="pipeline config JSON")
    p.add_argument("--output", "-o", default="-", help="report path (default stdout)")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("synth", help="render a synthetic melt-pool stream")
    p.add_argument("--script", required=True, help="scene script JSON")
    p.add_argument("--output", "-o", required=True, help="MPV1 output path")
    p.add_argument("--seed", type=int, help="override every scene seed")
    p.add_argument("--config", help="pipeline config JSON")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("process", help="convert a frame stream to observations")
    p.add_argument("--input", "-i", required=True, help="MPV1 file or PGM directory")
    p.add_argument("--output", "-o", required=True, help="per-frame CSV path")
    p.add_argument("--config", help="pipeline config JSON")
    p.add_argument("--maps", help="directory for per-frame temperature maps")
    p.add_argument("--window", help="restrict to start_ms:end_ms")
    p.add_argument("--workers", type=int, help="worker processes (default config/cores)")
    p.add_argument("--summary", help="layer summary JSON path")
    p.add_argument(
        "--reg-diagnostics",
        help="CSV of per-frame registration diagnostics (needs --maps)",
    )
    p.set_defaults(func=cmd_process)

    p = sub.add_parser("analyze", help="histogram/bars/windows over an existing CSV")
    p.add_argument("--input", "-i", required=True, help="per-frame CSV")
    p.add_argument("--output", "-o", default="-", help="report JSON (default stdout)")
    p.add_argument("--bars", action="store_true", help="detect bar boundaries")
    p.add_argument("--gap-min-ms", type=float, default=100.0)
    p.add_argument("--histogram", help="i12 histogram as min:max:nbins")
    p.add_argument("--window", help="restrict to start_ms:end_ms first")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("validate-tc", help="thermocouple comparison report")
    p.add_argument("--input", "-i", required=True, help="validation CSV")
    p.add_argument("--output", "-o", default="-", help="report JSON (default stdout)")
    p.add_argument("--tau", type=float, default=tc_validation.DEFAULT_TAU_S)
    p.add_argument("--ambient", type=float, default=None)
    p.set_defaults(func=cmd_validate_tc)

    p = sub.add_parser("bench", help="throughput benchmark")
    p.add_argument("--input", help="existing MPV1 stream (default: generate)")
    p.add_argument("--frames", type=int, default=4000)
    p.add_argument("--workers", default="1,2,4")
    p.add_argument("--full", action="store_true", help="also run the map path")
    p.add_argument("--full-frames", type=int, default=60)
    p.add_argument("--config", help="pipeline config JSON")
    p.add_argument("--output", "-o", help="report JSON path")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("uncertainty-curve", help="tabulate U_T over a ratio range")
    p.add_argument("--min", type=float, default=0.5)
    p.add_argument("--max", type=float, default=2.0)
    p.add_argument("--points", type=int, default=151)
    p.add_argument("--u-a12", type=float, default=None, help="default: config value")
    p.add_argument("--u-i12", type=float, default=0.0003)
    p.add_argument("--config", help="pipeline config JSON")
    p.add_argument("--output", "-o", required=True, help="CSV path")
    p.set_defaults(func=cmd_uncertainty_curve)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
