"""File formats: grayscale image loading, CSV traces, run records.

Images come in as binary PGM (P5, single-byte samples) or 8-bit
grayscale PNG and are mapped to unit-range float grids by dividing by
the file's maxval. Per-step traces go out as UTF-8 CSV with LF line
endings and full double precision (shortest round-trip repr), so a run
with the same config and seed produces byte-identical files.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
from PIL import Image

from .core import NoiseSchedule, Trajectory, as_grid, sigma_at

PHANTOM_KINDS = ("ramp", "checkerboard", "disk", "piecewise")
CSV_HEADER = "step,stepDiff,psnr,ssim,sigma_t"


class ImageFormatError(ValueError):
    """Malformed image file; `offset` points at the offending byte."""

    def __init__(self, message: str, offset: int = 0):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


# ---- image files ----------------------------------------------------------


def load_image(path: str) -> np.ndarray:
    """Load a PGM (P5) or 8-bit grayscale PNG file as a unit-range grid."""
    with open(path, "rb") as handle:
        data = handle.read()
    if data[:4] == b"\x89PNG":
        return _load_png(path)
    if data[:2] == b"P5":
        return _load_pgm(data)
    raise ImageFormatError("not a P5 PGM or PNG file", offset=0)


def _load_png(path: str) -> np.ndarray:
    with Image.open(path) as img:
        if img.mode != "L":
            raise ImageFormatError(
                f"PNG must be 8-bit grayscale, got mode {img.mode!r}")
        pixels = np.asarray(img, dtype=np.float64)
    return as_grid(pixels / 255.0)


def _load_pgm(data: bytes) -> np.ndarray:
    pos = 0

    def next_token() -> bytes:
        nonlocal pos
        while pos < len(data):
            byte = data[pos:pos + 1]
            if byte in (b" ", b"\t", b"\r", b"\n"):
                pos += 1
            elif byte == b"#":
                while pos < len(data) and data[pos:pos + 1] not in (b"\r",
                                                                    b"\n"):
                    pos += 1
            else:
                break
        start = pos
        while pos < len(data) and data[pos:pos + 1] not in (b" ", b"\t",
                                                            b"\r", b"\n"):
            pos += 1
        if start == pos:
            raise ImageFormatError("truncated PGM header", offset=pos)
        return data[start:pos]

    if next_token() != b"P5":
        raise ImageFormatError("not a binary (P5) PGM", offset=0)

    def next_int(name: str) -> int:
        where = pos
        token = next_token()
        try:
            return int(token)
        except ValueError:
            raise ImageFormatError(
                f"invalid {name} field {token!r}", offset=where) from None

    width = next_int("width")
    height = next_int("height")
    maxval = next_int("maxval")
    if width < 1 or height < 1:
        raise ImageFormatError("image dimensions must be positive",
                               offset=pos)
    if not 0 < maxval <= 255:
        raise ImageFormatError(
            f"unsupported maxval {maxval}, need 1..255", offset=pos)
    pos += 1
    raster = data[pos:pos + width * height]
    if len(raster) < width * height:
        raise ImageFormatError("truncated PGM raster", offset=len(data))
    pixels = np.frombuffer(raster, dtype=np.uint8).astype(np.float64)
    return pixels.reshape(height, width) / maxval


def save_pgm(grid: np.ndarray, path: str) -> None:
    """Write a unit-range grid as binary PGM, clamping and quantizing."""
    grid = as_grid(grid)
    quantized = np.rint(np.clip(grid, 0.0, 1.0) * 255.0).astype(np.uint8)
    header = f"P5\n{grid.shape[1]} {grid.shape[0]}\n255\n".encode("ascii")
    with open(path, "wb") as handle:
        handle.write(header)
        handle.write(quantized.tobytes())


# ---- synthetic phantoms -----------------------------------------------------


def synth_phantom(kind: str, height: int, width: int) -> np.ndarray:
    """Deterministic unit-range test image of the requested kind.

    ramp: row-major linear ramp from 0 to 1; checkerboard: alternating
    0/1 with a 0 corner; disk: filled disk of radius min(h, w)/3 on a
    zero background; piecewise: four constant quadrants.
    """
    if kind not in PHANTOM_KINDS:
        raise ValueError(f"unknown phantom kind {kind!r}.")
    if height < 2 or width < 2:
        raise ValueError("phantoms need at least 2x2 pixels.")
    if kind == "ramp":
        flat = np.arange(height * width, dtype=np.float64)
        return (flat / (height * width - 1)).reshape(height, width)
    if kind == "checkerboard":
        ii, jj = np.meshgrid(np.arange(height), np.arange(width),
                             indexing="ij")
        return ((ii + jj) % 2).astype(np.float64)
    if kind == "disk":
        ci = (height - 1) / 2.0
        cj = (width - 1) / 2.0
        radius = min(height, width) / 3.0
        ii, jj = np.meshgrid(np.arange(height), np.arange(width),
                             indexing="ij")
        inside = (ii - ci) ** 2 + (jj - cj) ** 2 <= radius * radius
        return inside.astype(np.float64)
    out = np.empty((height, width))
    out[:height // 2, :width // 2] = 0.2
    out[:height // 2, width // 2:] = 0.9
    out[height // 2:, :width // 2] = 0.6
    out[height // 2:, width // 2:] = 0.35
    return out


# ---- run records ------------------------------------------------------------


@dataclass(frozen=True)
class StepRow:
    """One CSV row: the transition that produced iterate `step`."""

    step: int
    step_diff: float
    psnr: float
    ssim: float
    sigma: float


@dataclass
class ExperimentRecord:
    """Everything one run produced: config snapshot, rows, summary."""

    config: dict
    rows: List[StepRow] = field(default_factory=list)
    summary: dict = field(default_factory=dict)
    certificate: Optional[dict] = None
    duration_seconds: float = 0.0


def build_record(trajectory: Trajectory, schedule: NoiseSchedule,
                 config: dict, duration_seconds: float = 0.0,
                 certificate: Optional[dict] = None) -> ExperimentRecord:
    """Flatten a trajectory into per-step rows plus a terminal summary."""
    rows = []
    for t in range(1, len(trajectory.iterates)):
        if trajectory.metrics is not None:
            sample = trajectory.metrics[t]
            row_psnr, row_ssim = sample.psnr, sample.ssim
        else:
            row_psnr = row_ssim = math.nan
        rows.append(StepRow(step=t, step_diff=trajectory.step_diffs[t - 1],
                            psnr=row_psnr, ssim=row_ssim,
                            sigma=sigma_at(schedule, t - 1)))
    summary = {
        "terminated": trajectory.terminated,
        "steps": trajectory.steps,
        "terminal_step_diff": trajectory.step_diffs[-1]
        if trajectory.step_diffs else math.nan,
        "terminal_psnr": rows[-1].psnr if rows else math.nan,
        "terminal_ssim": rows[-1].ssim if rows else math.nan,
    }
    return ExperimentRecord(config=config, rows=rows, summary=summary,
                            certificate=certificate,
                            duration_seconds=duration_seconds)


def _fmt(value: float) -> str:
    return repr(float(value))


def save_csv(record: ExperimentRecord, path: str) -> None:
    """Write per-step rows as UTF-8 CSV with LF endings.

    Floats are written with shortest round-trip repr, so parsing the
    file recovers the exact double values. An empty record produces a
    header-only file.
    """
    lines = [CSV_HEADER]
    for row in record.rows:
        lines.append(",".join([str(row.step), _fmt(row.step_diff),
                               _fmt(row.psnr), _fmt(row.ssim),
                               _fmt(row.sigma)]))
    payload = "\n".join(lines) + "\n"
    with open(path, "wb") as handle:
        handle.write(payload.encode("utf-8"))


def load_csv_rows(path: str) -> List[StepRow]:
    """Parse a CSV trace back into rows (exact float round trip)."""
    with open(path, "rb") as handle:
        text = handle.read().decode("utf-8")
    lines = [line for line in text.split("\n") if line]
    if not lines or lines[0] != CSV_HEADER:
        raise ImageFormatError("unexpected CSV header", offset=0)
    rows = []
    for line in lines[1:]:
        parts = line.split(",")
        if len(parts) != 5:
            raise ImageFormatError(f"malformed CSV row {line!r}", offset=0)
        rows.append(StepRow(step=int(parts[0]), step_diff=float(parts[1]),
                            psnr=float(parts[2]), ssim=float(parts[3]),
                            sigma=float(parts[4])))
    return rows


def record_to_dict(record: ExperimentRecord) -> dict:
    return {
        "config": record.config,
        "rows": [[r.step, r.step_diff, r.psnr, r.ssim, r.sigma]
                 for r in record.rows],
        "summary": record.summary,
        "certificate": record.certificate,
        "duration_seconds": record.duration_seconds,
    }


def record_from_dict(payload: dict) -> ExperimentRecord:
    rows = [StepRow(step=int(r[0]), step_diff=float(r[1]), psnr=float(r[2]),
                    ssim=float(r[3]), sigma=float(r[4]))
            for r in payload["rows"]]
    return ExperimentRecord(config=payload["config"], rows=rows,
                            summary=payload["summary"],
                            certificate=payload.get("certificate"),
                            duration_seconds=payload.get(
                                "duration_seconds", 0.0))


def save_record(record: ExperimentRecord, path: str) -> None:
    """Serialize a record as JSON (non-finite floats use Python literals)."""
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        json.dump(record_to_dict(record), handle, indent=2)
        handle.write("\n")


def load_record(path: str) -> ExperimentRecord:
    with open(path, "r", encoding="utf-8") as handle:
        return record_from_dict(json.load(handle))
