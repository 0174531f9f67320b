"""On-disk demonstration format: recorder, loader, validator, statistics.

Layout (one directory per trial):

    manifest.txt      key=value metadata, including frame_count
    records.txt       one text line per frame, fields in schema order
    depth/NNNNNN.pgm  16-bit big-endian PGM, millimeters

Record line fields (space separated):

    t depth_ref w0 w1 w2 w3 g_dx g_dy g_z g_flag_speed g_flag_z
    d_front d_rear s v omega

Floats are written with 9 significant digits and booleans as 0/1; the
decimal form is the stored truth, so the recorder normalizes values
through the same formatting at record time and a write-then-load round
trip reproduces every field bit-exactly (depth is quantized to integer
millimeters the same way).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError, StorageError
from .pgm import PgmError, read_pgm16, write_pgm16

FORMAT_VERSION = 1
TICK_HZ = 20
DEPTH_SCALE_MM = 1000.0
VEHICLES = ("V6W", "V4W")


class ValidationError(DataError):
    """Base for dataset integrity failures."""


class ManifestError(ValidationError):
    pass


class VersionError(ManifestError):
    pass


class CountMismatchError(ValidationError):
    pass


class TimestampError(ValidationError):
    pass


class DepthRefError(ValidationError):
    pass


class RecordFormatError(ValidationError):
    pass


def _q(x: float) -> float:
    """Quantize to the on-disk decimal precision (9 significant digits)."""
    return float(f"{float(x):.9g}")


def _fmt(x: float) -> str:
    return f"{float(x):.9g}"


@dataclass(frozen=True)
class DataFrame:
    t: float
    depth_ref: str
    w: tuple[float, float, float, float]
    g: tuple[float, float, float, bool, bool]  # dx, dy, z, flag_speed, flag_z
    d: tuple[bool, bool]
    s: bool
    v: float
    omega: float

    def to_line(self) -> str:
        parts = [
            _fmt(self.t),
            self.depth_ref,
            *(_fmt(v) for v in self.w),
            _fmt(self.g[0]),
            _fmt(self.g[1]),
            _fmt(self.g[2]),
            "1" if self.g[3] else "0",
            "1" if self.g[4] else "0",
            "1" if self.d[0] else "0",
            "1" if self.d[1] else "0",
            "1" if self.s else "0",
            _fmt(self.v),
            _fmt(self.omega),
        ]
        return " ".join(parts)

    @staticmethod
    def from_line(line: str, index: int) -> "DataFrame":
        parts = line.split()
        if len(parts) != 16:
            raise RecordFormatError(
                f"frame {index}: expected 16 fields, got {len(parts)}"
            )
        try:
            floats = [float(parts[i]) for i in (0, 2, 3, 4, 5, 6, 7, 8, 14, 15)]
            flags = [parts[i] for i in (9, 10, 11, 12, 13)]
        except ValueError as e:
            raise RecordFormatError(f"frame {index}: {e}") from None
        if any(not math.isfinite(v) for v in floats):
            raise RecordFormatError(f"frame {index}: non-finite numeric field")
        if any(f not in ("0", "1") for f in flags):
            raise RecordFormatError(f"frame {index}: boolean fields must be 0/1")
        b = [f == "1" for f in flags]
        return DataFrame(
            t=floats[0],
            depth_ref=parts[1],
            w=(floats[1], floats[2], floats[3], floats[4]),
            g=(floats[5], floats[6], floats[7], b[0], b[1]),
            d=(b[2], b[3]),
            s=b[4],
            v=floats[8],
            omega=floats[9],
        )


@dataclass
class Manifest:
    vehicle: str
    frame_count: int
    tick_hz: int = TICK_HZ
    format_version: int = FORMAT_VERSION
    course_seed: int | None = None
    course_difficulty: str | None = None
    trial_id: str | None = None
    rgb_present: bool = False  # reserved; the simulator records depth only

    def to_text(self) -> str:
        lines = [
            f"format_version={self.format_version}",
            f"vehicle={self.vehicle}",
            f"tick_hz={self.tick_hz}",
            f"frame_count={self.frame_count}",
        ]
        if self.course_seed is not None:
            lines.append(f"course_seed={self.course_seed}")
        if self.course_difficulty is not None:
            lines.append(f"course_difficulty={self.course_difficulty}")
        if self.trial_id is not None:
            lines.append(f"trial_id={self.trial_id}")
        lines.append(f"rgb_present={1 if self.rgb_present else 0}")
        return "\n".join(lines) + "\n"

    @staticmethod
    def from_text(text: str) -> "Manifest":
        kv: dict[str, str] = {}
        for line in text.splitlines():
            line = line.strip()
            if not line:
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise ManifestError(f"malformed manifest line: {line!r}")
            kv[key] = value
        try:
            version = int(kv["format_version"])
        except KeyError:
            raise ManifestError("manifest missing format_version") from None
        if version != FORMAT_VERSION:
            raise VersionError(f"unsupported format_version {version}")
        try:
            vehicle = kv["vehicle"]
            frame_count = int(kv["frame_count"])
            tick_hz = int(kv.get("tick_hz", TICK_HZ))
        except (KeyError, ValueError) as e:
            raise ManifestError(f"bad manifest: {e}") from None
        if vehicle not in VEHICLES:
            raise ManifestError(f"unknown vehicle {vehicle!r}")
        seed = kv.get("course_seed")
        return Manifest(
            vehicle=vehicle,
            frame_count=frame_count,
            tick_hz=tick_hz,
            course_seed=int(seed) if seed is not None else None,
            course_difficulty=kv.get("course_difficulty"),
            trial_id=kv.get("trial_id"),
            rgb_present=kv.get("rgb_present", "0") == "1",
        )


@dataclass
class Demonstration:
    path: Path
    manifest: Manifest
    frames: list[DataFrame]

    def depth(self, index: int) -> np.ndarray:
        """Depth image of frame index, meters (float64)."""
        ref = self.frames[index].depth_ref
        return read_pgm16(self.path / ref).astype(np.float64) / DEPTH_SCALE_MM

    def __len__(self) -> int:
        return len(self.frames)


class RecordingSession:
    """Writes one demonstration directory; one writer per session."""

    def __init__(
        self,
        path,
        vehicle: str,
        course_seed: int | None = None,
        course_difficulty: str | None = None,
        trial_id: str | None = None,
        tick_hz: int = TICK_HZ,
    ):
        if vehicle not in VEHICLES:
            raise DataError(f"unknown vehicle {vehicle!r}")
        self.path = Path(path)
        self.vehicle = vehicle
        self.tick_hz = tick_hz
        self.course_seed = course_seed
        self.course_difficulty = course_difficulty
        self.trial_id = trial_id
        self.frames: list[DataFrame] = []
        self._closed = False
        try:
            (self.path / "depth").mkdir(parents=True, exist_ok=True)
            self._records = open(self.path / "records.txt", "w", encoding="ascii")
        except OSError as e:
            raise StorageError(f"cannot open recording session: {e}") from e

    def record_frame(self, obs, act) -> DataFrame:
        """Append one frame; the depth image is quantized to millimeters."""
        if self._closed:
            raise StorageError("session already closed")
        if obs.depth is None:
            raise DataError("recording requires a depth image")
        index = len(self.frames)
        ref = f"depth/{index:06d}.pgm"
        data = obs.depth.data if hasattr(obs.depth, "data") else np.asarray(obs.depth)
        mm = np.clip(np.rint(np.asarray(data) * DEPTH_SCALE_MM), 0, 65535)
        try:
            write_pgm16(self.path / ref, mm.astype(np.uint16))
        except OSError as e:
            raise StorageError(f"cannot write depth frame {index}: {e}") from e
        frame = DataFrame(
            t=_q(obs.t),
            depth_ref=ref,
            w=tuple(_q(v) for v in obs.w),
            g=(_q(obs.g.dx), _q(obs.g.dy), _q(obs.g.z_clearance), obs.g.flag_speed, obs.g.flag_z),
            d=(bool(act.d[0]), bool(act.d[1])),
            s=bool(act.s),
            v=_q(act.v),
            omega=_q(act.omega),
        )
        if self.frames and frame.t <= self.frames[-1].t:
            raise DataError("frame timestamps must be strictly increasing")
        self.frames.append(frame)
        self._records.write(frame.to_line() + "\n")
        return frame

    def close(self) -> Demonstration:
        """Flush records and write the manifest."""
        if not self._closed:
            self._records.close()
            manifest = Manifest(
                vehicle=self.vehicle,
                frame_count=len(self.frames),
                tick_hz=self.tick_hz,
                course_seed=self.course_seed,
                course_difficulty=self.course_difficulty,
                trial_id=self.trial_id,
            )
            try:
                with open(self.path / "manifest.txt", "w", encoding="ascii") as f:
                    f.write(manifest.to_text())
            except OSError as e:
                raise StorageError(f"cannot write manifest: {e}") from e
            self._closed = True
            self._manifest = manifest
        return Demonstration(self.path, self._manifest, list(self.frames))


def load(path) -> Demonstration:
    """Load and validate a demonstration directory.

    Raises a distinct ValidationError subclass per corruption class:
    VersionError, ManifestError, CountMismatchError, TimestampError,
    DepthRefError (naming the frame), RecordFormatError.
    """
    path = Path(path)
    try:
        manifest_text = (path / "manifest.txt").read_text(encoding="ascii")
    except OSError as e:
        raise ManifestError(f"cannot read manifest: {e}") from e
    manifest = Manifest.from_text(manifest_text)
    try:
        lines = (path / "records.txt").read_text(encoding="ascii").splitlines()
    except OSError as e:
        raise RecordFormatError(f"cannot read records: {e}") from e
    lines = [ln for ln in lines if ln.strip()]
    if len(lines) != manifest.frame_count:
        raise CountMismatchError(
            f"manifest says {manifest.frame_count} frames, records.txt has {len(lines)}"
        )
    frames = [DataFrame.from_line(line, i) for i, line in enumerate(lines)]
    prev_t = -math.inf
    for i, frame in enumerate(frames):
        if frame.t <= prev_t:
            raise TimestampError(f"frame {i}: t={frame.t} not strictly increasing")
        prev_t = frame.t
        depth_path = path / frame.depth_ref
        if not depth_path.is_file():
            raise DepthRefError(f"frame {i}: missing depth file {frame.depth_ref}")
    return Demonstration(path, manifest, frames)


def validate(path) -> Demonstration:
    """load() plus a header check of every referenced depth image."""
    demo = load(path)
    for i, frame in enumerate(demo.frames):
        try:
            read_pgm16(demo.path / frame.depth_ref)
        except PgmError as e:
            raise DepthRefError(f"frame {i}: unreadable depth file: {e}") from e
    return demo


@dataclass
class DatasetStats:
    frame_count: int
    duration: float
    speed_hist: tuple[np.ndarray, np.ndarray]  # (counts, bin edges)
    steer_hist: tuple[np.ndarray, np.ndarray]
    ranges: dict[str, tuple[float, float]]

    def to_text(self) -> str:
        lines = [
            f"frames: {self.frame_count}",
            f"duration_s: {self.duration:.2f}",
            "field ranges:",
        ]
        for key, (lo, hi) in sorted(self.ranges.items()):
            lines.append(f"  {key}: [{lo:.6g}, {hi:.6g}]")
        counts, edges = self.speed_hist
        lines.append("v histogram:")
        for c, lo, hi in zip(counts, edges[:-1], edges[1:]):
            if c:
                lines.append(f"  [{lo:+.2f}, {hi:+.2f}): {c}")
        counts, edges = self.steer_hist
        lines.append("omega histogram:")
        for c, lo, hi in zip(counts, edges[:-1], edges[1:]):
            if c:
                lines.append(f"  [{lo:+.3f}, {hi:+.3f}): {c}")
        return "\n".join(lines) + "\n"


def stats(demo: Demonstration) -> DatasetStats:
    if not demo.frames:
        raise DataError("empty demonstration")
    v = np.array([f.v for f in demo.frames])
    omega = np.array([f.omega for f in demo.frames])
    speed_hist = np.histogram(v, bins=20, range=(-1.0, 1.0))
    steer_hist = np.histogram(omega, bins=14, range=(-0.35, 0.35))
    # histogram range clipping would drop out-of-range values; command
    # bounds guarantee there are none, but assert the contract anyway
    assert int(speed_hist[0].sum()) == len(demo.frames)
    assert int(steer_hist[0].sum()) == len(demo.frames)
    ranges = {
        "t": (demo.frames[0].t, demo.frames[-1].t),
        "v": (float(v.min()), float(v.max())),
        "omega": (float(omega.min()), float(omega.max())),
    }
    w = np.array([f.w for f in demo.frames])
    g = np.array([[f.g[0], f.g[1], f.g[2]] for f in demo.frames])
    ranges["w"] = (float(w.min()), float(w.max()))
    ranges["g_dx"] = (float(g[:, 0].min()), float(g[:, 0].max()))
    ranges["g_dy"] = (float(g[:, 1].min()), float(g[:, 1].max()))
    ranges["g_z"] = (float(g[:, 2].min()), float(g[:, 2].max()))
    duration = (len(demo.frames) - 1) / demo.manifest.tick_hz
    return DatasetStats(
        frame_count=len(demo.frames),
        duration=duration,
        speed_hist=speed_hist,
        steer_hist=steer_hist,
        ranges=ranges,
    )
