import numpy as np
import pytest

from crawlsim.controllers import Observation
from crawlsim.dataset import (
    CountMismatchError,
    DataFrame,
    DepthRefError,
    Manifest,
    ManifestError,
    RecordFormatError,
    RecordingSession,
    TimestampError,
    ValidationError,
    VersionError,
    load,
    stats,
    validate,
)
from crawlsim.errors import DataError
from crawlsim.render import DepthImage
from crawlsim.rng import SplitMix64
from crawlsim.vehicle import Action, GroundSpeed


def make_obs(t, gen=None):
    if gen is None:
        depth = np.full((16, 16), 2.5)
    else:
        depth = np.array(gen.uniforms(256, 0.1, 5.0)).reshape(16, 16)
    return Observation(
        depth=DepthImage(16, 16, 1.571, depth),
        w=(0.41, 0.42, 0.43, 0.44),
        g=GroundSpeed(0.3999999999, -0.01, 0.123456789, True, False),
        t=t,
    )


def record_demo(path, n=20, seed=5):
    gen = SplitMix64(seed)
    session = RecordingSession(
        path, vehicle="V6W", course_seed=seed, course_difficulty="Easy", trial_id="t0"
    )
    for i in range(n):
        session.record_frame(
            make_obs(i * 0.05, gen), Action(v=0.5, omega=0.01 * i, d=(True, False), s=True)
        )
    return session.close()


def test_record_creates_layout(tmp_path):
    demo = record_demo(tmp_path / "d")
    assert (tmp_path / "d" / "manifest.txt").exists()
    assert (tmp_path / "d" / "records.txt").exists()
    assert (tmp_path / "d" / "depth" / "000000.pgm").exists()
    assert (tmp_path / "d" / "depth" / "000019.pgm").exists()
    assert demo.manifest.frame_count == 20
    assert demo.manifest.rgb_present is False


def test_depth_stored_as_millimeters(tmp_path):
    session = RecordingSession(tmp_path / "d", vehicle="V4W")
    obs = make_obs(0.05)
    obs.depth.data[0, 0] = 1.234
    session.record_frame(obs, Action(0.1, 0.0))
    demo = session.close()
    from crawlsim.pgm import read_pgm16

    mm = read_pgm16(tmp_path / "d" / "depth" / "000000.pgm")
    assert mm[0, 0] == 1234
    assert demo.depth(0)[0, 0] == 1.234


def test_timestamps_span_and_duration(tmp_path):
    demo = record_demo(tmp_path / "d", n=100)
    assert demo.frames[0].t == 0.0
    assert demo.frames[-1].t == pytest.approx(99 * 0.05)
    s = stats(demo)
    assert s.duration == pytest.approx(99 / 20)
    assert s.frame_count == 100


def test_round_trip_bit_exact(tmp_path):
    demo = record_demo(tmp_path / "d", n=50)
    loaded = load(tmp_path / "d")
    assert len(loaded.frames) == 50
    for a, b in zip(demo.frames, loaded.frames):
        assert a == b  # frames normalized at record time == parsed
    for i in (0, 7, 49):
        assert np.array_equal(demo.depth(i), loaded.depth(i))


def test_loader_rejects_version_mismatch(tmp_path):
    record_demo(tmp_path / "d")
    man = tmp_path / "d" / "manifest.txt"
    man.write_text(man.read_text().replace("format_version=1", "format_version=9"))
    with pytest.raises(VersionError):
        load(tmp_path / "d")


def test_loader_rejects_count_mismatch(tmp_path):
    record_demo(tmp_path / "d")
    man = tmp_path / "d" / "manifest.txt"
    man.write_text(man.read_text().replace("frame_count=20", "frame_count=21"))
    with pytest.raises(CountMismatchError):
        load(tmp_path / "d")


def test_loader_rejects_non_monotonic_time(tmp_path):
    record_demo(tmp_path / "d")
    rec = tmp_path / "d" / "records.txt"
    lines = rec.read_text().splitlines()
    lines[5] = lines[4]  # duplicate timestamp
    parts = lines[5].split()
    parts[1] = "depth/000005.pgm"
    lines[5] = " ".join(parts)
    rec.write_text("\n".join(lines) + "\n")
    with pytest.raises(TimestampError):
        load(tmp_path / "d")


def test_loader_rejects_missing_depth_file(tmp_path):
    record_demo(tmp_path / "d")
    (tmp_path / "d" / "depth" / "000013.pgm").unlink()
    with pytest.raises(DepthRefError) as exc:
        load(tmp_path / "d")
    assert "13" in str(exc.value)


def test_loader_rejects_malformed_records(tmp_path):
    record_demo(tmp_path / "d")
    rec = tmp_path / "d" / "records.txt"
    lines = rec.read_text().splitlines()
    lines[3] = lines[3] + " 42"  # extra field
    rec.write_text("\n".join(lines) + "\n")
    with pytest.raises(RecordFormatError):
        load(tmp_path / "d")

    record_demo(tmp_path / "e")
    rec = tmp_path / "e" / "records.txt"
    lines = rec.read_text().splitlines()
    parts = lines[2].split()
    parts[14] = "nan"
    lines[2] = " ".join(parts)
    rec.write_text("\n".join(lines) + "\n")
    with pytest.raises(RecordFormatError):
        load(tmp_path / "e")


def test_loader_rejects_bad_vehicle(tmp_path):
    record_demo(tmp_path / "d")
    man = tmp_path / "d" / "manifest.txt"
    man.write_text(man.read_text().replace("vehicle=V6W", "vehicle=V8W"))
    with pytest.raises(ManifestError):
        load(tmp_path / "d")


def test_corruption_classes_are_distinct_types():
    classes = {
        VersionError,
        CountMismatchError,
        TimestampError,
        DepthRefError,
        RecordFormatError,
    }
    assert len(classes) == 5
    for cls in classes:
        assert issubclass(cls, ValidationError)
    assert not issubclass(CountMismatchError, VersionError)


def test_validate_checks_depth_readability(tmp_path):
    record_demo(tmp_path / "d")
    (tmp_path / "d" / "depth" / "000002.pgm").write_bytes(b"P5\n4 4\n255\nxx")
    with pytest.raises(DepthRefError):
        validate(tmp_path / "d")


def test_recorder_requires_depth_and_monotonic_time(tmp_path):
    session = RecordingSession(tmp_path / "d", vehicle="V6W")
    with pytest.raises(DataError):
        session.record_frame(
            Observation(depth=None, w=(0,) * 4, g=GroundSpeed(), t=0.0), Action(0, 0)
        )
    session.record_frame(make_obs(0.1), Action(0, 0))
    with pytest.raises(DataError):
        session.record_frame(make_obs(0.1), Action(0, 0))
    session.close()


def test_stats_constant_demo_single_bins(tmp_path):
    session = RecordingSession(tmp_path / "d", vehicle="V6W")
    for i in range(200):
        session.record_frame(make_obs(i * 0.05), Action(v=0.5, omega=0.0))
    demo = session.close()
    s = stats(demo)
    counts, _ = s.speed_hist
    assert counts.max() == 200 and (counts > 0).sum() == 1
    counts, _ = s.steer_hist
    assert counts.max() == 200 and (counts > 0).sum() == 1
    assert int(s.speed_hist[0].sum()) == s.frame_count == demo.manifest.frame_count
    assert s.ranges["v"] == (0.5, 0.5)
    assert "frames: 200" in s.to_text()


def test_manifest_round_trip():
    m = Manifest(vehicle="V4W", frame_count=7, course_seed=3, course_difficulty="Hard")
    m2 = Manifest.from_text(m.to_text())
    assert m2 == m
