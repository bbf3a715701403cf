"""Frame dataset container (LWPC1) and the CSV side formats.

Binary layout, little-endian throughout::

    offset  size  field
    0       5     magic "LWPC1"
    5       1     format version (u8, = 1)
    6       1     sensor pulse kind (u8: 0 intensity, 1 epw)
    7       1     sensor max echoes (u8)
    8       1     flags (u8: bit0 ground truth, bit1 scenario ids, bit2 object ids)
    9       4     frame count (u32)
    13      2     object-name count (u16, 0 unless bit2)
    ...           object names, each u16 length + utf-8 bytes
    ...           per-frame point counts, u32 * frame_count
    then per frame:
        u32 frame index k
        [bit0] u8 label (1 clear / 2 rain / 3 fog), f64 visibility, f64 rain
               rate (NaN marks an absent value)
        [bit1] u16 scenario-id length + utf-8 bytes
        columnar payload for n points: x, y, z, r, theta, phi as f64*n each,
        echo u8*n, pulse f64*n, [bit2] object ids i32*n

Float columns round-trip losslessly. A human-readable per-point CSV exporter
(`export_points_csv`) and the feature-table CSV live here too.
"""

from __future__ import annotations

import csv
import math
import struct
from pathlib import Path

import numpy as np

from .features import FEATURE_NAMES, N_FEATURES
from .frames import Frame, GroundTruth, SensorDescriptor, WeatherLabel
from .sim.dataset import SimulatedSample, SyntheticDataset

FRAME_MAGIC = b"LWPC1"
FRAME_FORMAT_VERSION = 1

_FLAG_TRUTH = 1
_FLAG_SCENARIO = 2
_FLAG_OBJECT_IDS = 4

_PULSE_KINDS = ("intensity", "epw")


class FrameFormatError(ValueError):
    """Malformed or truncated frame file; the message carries byte positions."""


class _Reader:
    def __init__(self, buf: bytes, path):
        self.buf = buf
        self.pos = 0
        self.path = path

    def take(self, size: int) -> bytes:
        if self.pos + size > len(self.buf):
            raise FrameFormatError(
                f"{self.path}: truncated at byte {self.pos}: expected {self.pos + size} "
                f"bytes, file has {len(self.buf)}")
        out = self.buf[self.pos:self.pos + size]
        self.pos += size
        return out

    def unpack(self, fmt: str):
        return struct.unpack("<" + fmt, self.take(struct.calcsize("<" + fmt)))

    def array(self, dtype, count: int) -> np.ndarray:
        dt = np.dtype(dtype).newbyteorder("<")
        raw = np.frombuffer(self.take(dt.itemsize * count), dtype=dt)
        return raw.astype(np.dtype(dtype), copy=True)

    def string(self) -> str:
        (length,) = self.unpack("H")
        return self.take(length).decode("utf-8")


def _pack_string(out: bytearray, text: str) -> None:
    raw = text.encode("utf-8")
    if len(raw) > 0xFFFF:
        raise ValueError(f"string too long for the container: {len(raw)} bytes")
    out += struct.pack("<H", len(raw))
    out += raw


def write_frames(path, samples, *, object_names=()) -> None:
    """Write samples (frames with optional truth/scenario) to an LWPC1 file.

    All samples must agree on the sensor and on whether truth is present.
    """
    samples = [s if isinstance(s, SimulatedSample) else SimulatedSample(s, None) for s in samples]
    sensors = {s.frame.sensor for s in samples}
    if len(sensors) > 1:
        raise ValueError(f"all frames must share one sensor descriptor, got {sensors}")
    sensor = sensors.pop() if sensors else SensorDescriptor()

    has_truth = any(s.truth is not None for s in samples)
    if has_truth and any(s.truth is None for s in samples):
        raise ValueError("either all samples carry ground truth or none")
    has_scenario = any(s.scenario_id for s in samples)
    has_ids = any(s.frame.object_ids is not None for s in samples)
    flags = (_FLAG_TRUTH * has_truth) | (_FLAG_SCENARIO * has_scenario) | (_FLAG_OBJECT_IDS * has_ids)

    out = bytearray()
    out += FRAME_MAGIC
    out += struct.pack("<BBBBI", FRAME_FORMAT_VERSION, _PULSE_KINDS.index(sensor.pulse_kind),
                       sensor.max_echoes, flags, len(samples))
    names = tuple(object_names) if has_ids else ()
    out += struct.pack("<H", len(names))
    for name in names:
        _pack_string(out, name)
    for s in samples:
        out += struct.pack("<I", len(s.frame))
    for s in samples:
        frame = s.frame
        out += struct.pack("<I", frame.k)
        if has_truth:
            truth = s.truth
            vis = truth.visibility if truth.visibility is not None else math.nan
            rate = truth.rain_rate if truth.rain_rate is not None else math.nan
            out += struct.pack("<Bdd", int(truth.label), vis, rate)
        if has_scenario:
            _pack_string(out, s.scenario_id)
        for col in (frame.x, frame.y, frame.z, frame.r, frame.theta, frame.phi):
            out += col.astype("<f8").tobytes()
        out += frame.echo.astype("<u1").tobytes()
        out += frame.pulse.astype("<f8").tobytes()
        if has_ids:
            ids = frame.object_ids if frame.object_ids is not None else np.full(len(frame), -1)
            out += ids.astype("<i4").tobytes()
    Path(path).write_bytes(bytes(out))


def read_frames(path) -> SyntheticDataset:
    """Read an LWPC1 file back into samples + object-name table."""
    reader = _Reader(Path(path).read_bytes(), path)
    magic = reader.take(len(FRAME_MAGIC))
    if magic != FRAME_MAGIC:
        raise FrameFormatError(
            f"{path}: bad magic {magic!r} at byte 0, expected {FRAME_MAGIC!r}")
    version, kind_code, max_echoes, flags, frame_count = reader.unpack("BBBBI")
    if version != FRAME_FORMAT_VERSION:
        raise FrameFormatError(f"{path}: unsupported format version {version}")
    if kind_code >= len(_PULSE_KINDS):
        raise FrameFormatError(f"{path}: unknown pulse-kind code {kind_code}")
    sensor = SensorDescriptor(_PULSE_KINDS[kind_code], max_echoes)

    (name_count,) = reader.unpack("H")
    object_names = tuple(reader.string() for _ in range(name_count))
    point_counts = [reader.unpack("I")[0] for _ in range(frame_count)]

    samples = []
    for n in point_counts:
        (k,) = reader.unpack("I")
        truth = None
        if flags & _FLAG_TRUTH:
            label, vis, rate = reader.unpack("Bdd")
            truth = GroundTruth(
                WeatherLabel(label),
                visibility=None if math.isnan(vis) else vis,
                rain_rate=None if math.isnan(rate) else rate,
            )
        scenario = reader.string() if flags & _FLAG_SCENARIO else ""
        cols = [reader.array(np.float64, n) for _ in range(6)]
        echo = reader.array(np.uint8, n).astype(np.int64)
        pulse = reader.array(np.float64, n)
        ids = reader.array(np.int32, n).astype(np.int64) if flags & _FLAG_OBJECT_IDS else None
        frame = Frame(k, sensor, cols[0], cols[1], cols[2], cols[3], cols[4], cols[5],
                      echo, pulse, object_ids=ids)
        samples.append(SimulatedSample(frame, truth, scenario))
    if reader.pos != len(reader.buf):
        raise FrameFormatError(
            f"{path}: {len(reader.buf) - reader.pos} trailing bytes after byte {reader.pos}")
    return SyntheticDataset(tuple(samples), object_names, sensor)


def export_points_csv(path, frames) -> None:
    """Debug CSV, one row per point: k,x,y,z,r,theta,phi,echo,pulse."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["k", "x", "y", "z", "r", "theta", "phi", "echo", "pulse"])
        for frame in frames:
            for i in range(len(frame)):
                writer.writerow([
                    frame.k,
                    repr(float(frame.x[i])), repr(float(frame.y[i])), repr(float(frame.z[i])),
                    repr(float(frame.r[i])), repr(float(frame.theta[i])), repr(float(frame.phi[i])),
                    int(frame.echo[i]), repr(float(frame.pulse[i])),
                ])


# ---------------------------------------------------------------------------
# feature table CSV: 16 features + label + scenario + 16 mask columns
# ---------------------------------------------------------------------------

FEATURE_TABLE_COLUMNS = list(FEATURE_NAMES) + ["label", "scenario"] + [
    f"mask_{name}" for name in FEATURE_NAMES]


def write_feature_table(path, values, masks, labels, scenarios) -> None:
    """Write the per-frame feature matrix as plain CSV.

    ``labels`` holds class names ('' for unlabeled frames); floats are written
    with repr so external tools read back the exact values.
    """
    values = np.asarray(values, dtype=np.float64)
    masks = np.asarray(masks, dtype=bool)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(FEATURE_TABLE_COLUMNS)
        for row_v, row_m, label, scenario in zip(values, masks, labels, scenarios):
            writer.writerow([repr(float(v)) for v in row_v] + [label, scenario]
                            + [int(m) for m in row_m])


def read_feature_table(path):
    """Read back (values, masks, labels, scenarios); labels '' stay empty."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != FEATURE_TABLE_COLUMNS:
            raise ValueError(f"{path}: unexpected feature table header")
        values, masks, labels, scenarios = [], [], [], []
        for row in reader:
            values.append([float(v) for v in row[:N_FEATURES]])
            labels.append(row[N_FEATURES])
            scenarios.append(row[N_FEATURES + 1])
            masks.append([bool(int(v)) for v in row[N_FEATURES + 2:]])
    return (np.asarray(values, dtype=np.float64).reshape(-1, N_FEATURES),
            np.asarray(masks, dtype=bool).reshape(-1, N_FEATURES),
            labels, scenarios)
