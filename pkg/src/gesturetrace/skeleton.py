"""Hand-skeleton data model: joints, frames, sequences, labels and segmentation.

The canonical skeleton has 23 joints per hand (elbow, wrist, palm and four
joints per finger, joint 3 being the fingertip), 46 joints total across both
hands. All positions are millimeters in sensor coordinates (x right, y up,
z toward the user).

On-disk canonical format (one directory per recording):
    <root>/<recording_id>/frames.csv   one row per frame:
        frame,timestamp,<46 x 3 coordinate columns in JOINT_ORDER>
    <root>/<recording_id>/labels.csv   one row per labeled interval:
        class_name,start_frame,end_frame   (0-based, end inclusive)

Invalid or missing joints are stored as NaN and flagged, never interpolated.
"""

import enum
import re
import warnings
from dataclasses import dataclass, field

import numpy as np


class Hand(enum.Enum):
    LEFT = "Left"
    RIGHT = "Right"


class Finger(enum.Enum):
    THUMB = "Thumb"
    INDEX = "Index"
    MIDDLE = "Middle"
    RING = "Ring"
    PINKY = "Pinky"


FINGERTIP_JOINT = 3


@dataclass(frozen=True)
class JointId:
    """One of the 46 joint identities (23 per hand).

    ``part`` is one of ``elbow``, ``wrist``, ``palm`` or ``finger``; finger
    joints carry the finger name and a joint index 0..3 (3 = fingertip).
    """

    hand: Hand
    part: str
    finger: Finger | None = None
    joint: int | None = None

    def __post_init__(self):
        if self.part not in ("elbow", "wrist", "palm", "finger"):
            raise ValueError(f"unknown joint part {self.part!r}")
        if self.part == "finger":
            if self.finger is None or self.joint is None:
                raise ValueError("finger joints need a finger name and joint index")
            if not 0 <= self.joint <= 3:
                raise ValueError(f"finger joint index {self.joint} outside 0..3")
        elif self.finger is not None or self.joint is not None:
            raise ValueError(f"{self.part} joints carry no finger/joint fields")

    @property
    def is_fingertip(self) -> bool:
        return self.part == "finger" and self.joint == FINGERTIP_JOINT

    @property
    def column_stem(self) -> str:
        side = "L" if self.hand is Hand.LEFT else "R"
        if self.part == "finger":
            return f"{side}_{self.finger.value.lower()}{self.joint}"
        return f"{side}_{self.part}"

    def __str__(self):
        return self.column_stem


def _hand_joints(hand: Hand) -> list[JointId]:
    joints = [JointId(hand, "elbow"), JointId(hand, "wrist"), JointId(hand, "palm")]
    for finger in Finger:
        for j in range(4):
            joints.append(JointId(hand, "finger", finger, j))
    return joints


#: Canonical joint order used by Frame arrays and the on-disk CSV columns.
JOINT_ORDER: tuple[JointId, ...] = tuple(_hand_joints(Hand.LEFT) + _hand_joints(Hand.RIGHT))
JOINT_INDEX: dict[JointId, int] = {jid: i for i, jid in enumerate(JOINT_ORDER)}
NUM_JOINTS = len(JOINT_ORDER)
assert NUM_JOINTS == 46

FINGERTIP_IDS: tuple[JointId, ...] = tuple(j for j in JOINT_ORDER if j.is_fingertip)
FINGERTIP_ROWS: tuple[int, ...] = tuple(JOINT_INDEX[j] for j in FINGERTIP_IDS)

#: Skeleton edges drawn for the final frame: elbow-wrist-palm plus the four
#: bone segments of each finger chained from the palm.
SKELETON_EDGES: tuple[tuple[int, int], ...] = tuple(
    (JOINT_INDEX[a], JOINT_INDEX[b])
    for hand in Hand
    for a, b in (
        [(JointId(hand, "elbow"), JointId(hand, "wrist")),
         (JointId(hand, "wrist"), JointId(hand, "palm"))]
        + [
            (JointId(hand, "palm") if j == 0 else JointId(hand, "finger", f, j - 1),
             JointId(hand, "finger", f, j))
            for f in Finger
            for j in range(4)
        ]
    )
)


class ParseError(ValueError):
    """Raised for malformed dataset files; carries a 1-based line number."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(message if line is None else f"line {line}: {message}")


@dataclass(frozen=True)
class Frame:
    """A single time sample of both hand skeletons.

    positions: (46, 3) float array in JOINT_ORDER; entries for invalid joints
    are NaN. valid: (46,) boolean mask. Arrays are read-only.
    """

    index: int
    positions: np.ndarray
    valid: np.ndarray
    timestamp: float | None = None

    def __post_init__(self):
        pos = np.array(self.positions, dtype=np.float64)
        val = np.array(self.valid, dtype=bool)
        if pos.shape != (NUM_JOINTS, 3):
            raise ValueError(f"positions must be ({NUM_JOINTS}, 3), got {pos.shape}")
        if val.shape != (NUM_JOINTS,):
            raise ValueError(f"valid must be ({NUM_JOINTS},), got {val.shape}")
        if self.index < 0:
            raise ValueError("frame index must be >= 0")
        # a joint claiming validity must hold finite coordinates
        finite = np.isfinite(pos).all(axis=1)
        val = val & finite
        pos.setflags(write=False)
        val.setflags(write=False)
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "valid", val)

    def position(self, jid: JointId) -> np.ndarray:
        return self.positions[JOINT_INDEX[jid]]

    def is_valid(self, jid: JointId) -> bool:
        return bool(self.valid[JOINT_INDEX[jid]])

    @property
    def joints(self) -> dict[JointId, np.ndarray]:
        """Mapping view JointId -> position, valid joints only."""
        return {jid: self.positions[i] for jid, i in JOINT_INDEX.items() if self.valid[i]}


@dataclass(frozen=True)
class FrameSequence:
    frames: tuple[Frame, ...]
    source_id: str = ""

    def __post_init__(self):
        frames = tuple(self.frames)
        object.__setattr__(self, "frames", frames)
        last_index = -1
        last_ts = None
        for f in frames:
            if f.index <= last_index:
                raise ValueError(
                    f"frame indices must be strictly increasing "
                    f"({f.index} after {last_index})"
                )
            last_index = f.index
            if f.timestamp is not None:
                if last_ts is not None and f.timestamp < last_ts:
                    raise ValueError("timestamps must be non-decreasing")
                last_ts = f.timestamp

    def __len__(self):
        return len(self.frames)

    def __iter__(self):
        return iter(self.frames)


@dataclass(frozen=True)
class LabelInterval:
    class_name: str
    start_frame: int
    end_frame: int  # inclusive

    def __post_init__(self):
        if self.start_frame > self.end_frame:
            raise ValueError(
                f"interval {self.class_name!r}: start {self.start_frame} "
                f"> end {self.end_frame}"
            )
        if self.start_frame < 0:
            raise ValueError("interval start must be >= 0")

    @property
    def length(self) -> int:
        return self.end_frame - self.start_frame + 1


@dataclass(frozen=True)
class ClassSet:
    """Ordered, unique class names; order defines classifier output indices."""

    names: tuple[str, ...]

    def __post_init__(self):
        names = tuple(self.names)
        if len(set(names)) != len(names):
            raise ValueError("class names must be unique")
        object.__setattr__(self, "names", names)
        object.__setattr__(self, "_lookup", {_normalize_key(n): n for n in names})

    @property
    def N(self) -> int:
        return len(self.names)

    def __len__(self):
        return len(self.names)

    def __contains__(self, name: str) -> bool:
        return name in self.names

    def index(self, name: str) -> int:
        return self.names.index(name)

    def normalize(self, raw: str) -> str:
        """Map a raw spelling onto the canonical name (case/underscore tolerant)."""
        key = _normalize_key(raw)
        key = LMDHG_ALIASES.get(key, key)
        canonical = self._lookup.get(key)
        if canonical is None:
            raise ValueError(
                f"unknown class name {raw!r}; valid names: {', '.join(self.names)}"
            )
        return canonical


def _normalize_key(name: str) -> str:
    return re.sub(r"[\s_\-]+", " ", name.strip()).lower()


#: The 14 classes of the segmented LMDHG recordings. The only class with far
#: fewer samples than the rest is "Point to with hand raised" (24 samples);
#: "point to with two hands" is accepted as an alias spelling of it.
LMDHG_CLASSES = ClassSet((
    "Point to",
    "Catch",
    "Shake down",
    "Shake",
    "Scroll",
    "Draw Line",
    "Slice",
    "Rotate",
    "Draw C",
    "Shake with two hands",
    "Catch with two hands",
    "Point to with hand raised",
    "Zoom",
    "Rest",
))

#: Extended taxonomy for newly captured data: adds a class for stale/absent
#: traces and one for out-of-vocabulary movement.
EXTENDED_CLASSES = ClassSet(LMDHG_CLASSES.names + ("Blank", "Noise"))

LMDHG_ALIASES = {
    "point to with two hands": "point to with hand raised",
    "pointing": "point to",
    "pointing with hand raised": "point to with hand raised",
    "line": "draw line",
    "c": "draw c",
}


@dataclass(frozen=True)
class GestureSample:
    """A contiguous, optionally labeled slice of a recording."""

    frames: FrameSequence
    sample_id: str
    label: str | None = None
    recording_index: int | None = None

    def __post_init__(self):
        if len(self.frames) < 1:
            raise ValueError(f"sample {self.sample_id!r} has no frames")

    @property
    def T(self) -> int:
        return len(self.frames)


@dataclass
class SampleDiagnostics:
    """validate_sample output; purely informational."""

    sample_id: str
    frames_with_invalid_joints: list[int] = field(default_factory=list)
    fingertip_invalid_fraction: dict[JointId, float] = field(default_factory=dict)
    renderable: bool = True

    @property
    def clean(self) -> bool:
        return not self.frames_with_invalid_joints


# ---------------------------------------------------------------------------
# parsing / serialization

_CSV_HEADER = "frame,timestamp," + ",".join(
    f"{j.column_stem}_{axis}" for j in JOINT_ORDER for axis in "xyz"
)


def parse_frames(raw: bytes | str, format_tag: str = "canonical-csv",
                 source_id: str = "") -> FrameSequence:
    """Parse a skeleton recording into a FrameSequence.

    format_tag "canonical-csv" expects the layout written by
    write_frames_csv; "lmdhg" accepts raw export rows of 138 coordinates
    (46 joints x 3, canonical joint order) separated by whitespace,
    commas or semicolons, frame index implicit. Non-finite coordinates are
    kept and flagged invalid for the affected joint.
    """
    if format_tag not in ("canonical-csv", "lmdhg"):
        raise ValueError(f"unknown format_tag {format_tag!r}")
    text = raw.decode("utf-8") if isinstance(raw, bytes) else raw
    frames = []
    implicit_index = 0
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if format_tag == "canonical-csv":
            if line.startswith("frame,"):
                continue  # header
            fields = line.split(",")
            if len(fields) != 2 + NUM_JOINTS * 3:
                raise ParseError(
                    f"expected {2 + NUM_JOINTS * 3} columns, got {len(fields)}",
                    lineno,
                )
            try:
                index = int(fields[0])
            except ValueError:
                raise ParseError(f"bad frame index {fields[0]!r}", lineno) from None
            ts_field = fields[1].strip()
            timestamp = float(ts_field) if ts_field else None
            coord_fields = fields[2:]
        else:
            fields = [f for f in re.split(r"[,;\s]+", line) if f]
            if len(fields) != NUM_JOINTS * 3:
                raise ParseError(
                    f"expected {NUM_JOINTS * 3} values, got {len(fields)}", lineno
                )
            index = implicit_index
            implicit_index += 1
            timestamp = None
            coord_fields = fields
        try:
            coords = np.array([float(v) for v in coord_fields], dtype=np.float64)
        except ValueError as exc:
            raise ParseError(f"bad coordinate: {exc}", lineno) from None
        positions = coords.reshape(NUM_JOINTS, 3)
        valid = np.isfinite(positions).all(axis=1)
        frames.append(Frame(index=index, positions=positions, valid=valid,
                            timestamp=timestamp))
    return FrameSequence(frames=tuple(frames), source_id=source_id)


def write_frames_csv(seq: FrameSequence) -> str:
    """Serialize to the canonical CSV; floats use repr so parsing round-trips."""
    lines = [_CSV_HEADER]
    for f in seq.frames:
        ts = "" if f.timestamp is None else repr(float(f.timestamp))
        coords = ",".join(repr(float(v)) for v in f.positions.ravel())
        lines.append(f"{f.index},{ts},{coords}")
    return "\n".join(lines) + "\n"


def sequences_equal(a: FrameSequence, b: FrameSequence) -> bool:
    """Field equality with NaN == NaN (for round-trip checks)."""
    if len(a) != len(b) or a.source_id != b.source_id:
        return False
    for fa, fb in zip(a.frames, b.frames):
        if fa.index != fb.index or fa.timestamp != fb.timestamp:
            return False
        if not np.array_equal(fa.valid, fb.valid):
            return False
        if not np.array_equal(fa.positions, fb.positions, equal_nan=True):
            return False
    return True


def parse_annotations(raw: bytes | str, class_set: ClassSet = LMDHG_CLASSES,
                      one_based: bool = False) -> list[LabelInterval]:
    """Parse interval annotations (class_name,start,end per row).

    Names are normalized to the ClassSet spelling; unknown names raise.
    Overlapping intervals produce a warning but both are kept. one_based
    shifts start/end down by one (for exports counting frames from 1).
    """
    text = raw.decode("utf-8") if isinstance(raw, bytes) else raw
    intervals = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if line.lower().startswith("class"):
            continue  # header
        fields = [f.strip() for f in re.split(r"[,;]", line)]
        if len(fields) != 3:
            raise ParseError(f"expected 'class,start,end', got {line!r}", lineno)
        name = class_set.normalize(fields[0])
        try:
            start, end = int(fields[1]), int(fields[2])
        except ValueError:
            raise ParseError(f"bad frame bounds in {line!r}", lineno) from None
        if one_based:
            start, end = start - 1, end - 1
        intervals.append(LabelInterval(name, start, end))
    intervals.sort(key=lambda iv: iv.start_frame)
    for prev, cur in zip(intervals, intervals[1:]):
        if cur.start_frame <= prev.end_frame:
            warnings.warn(
                f"overlapping intervals: {prev.class_name!r} ends at "
                f"{prev.end_frame}, {cur.class_name!r} starts at {cur.start_frame}",
                stacklevel=2,
            )
    return intervals


def segment(sequence: FrameSequence, intervals: list[LabelInterval],
            recording_index: int | None = None) -> list[GestureSample]:
    """Cut a recording into one labeled GestureSample per interval.

    Frames are matched by ordinal position in the sequence (frame i of the
    recording), and each sample holds a contiguous slice of the original
    Frame objects.
    """
    samples = []
    n = len(sequence)
    for k, iv in enumerate(intervals):
        if iv.end_frame >= n:
            raise ValueError(
                f"interval {iv.class_name!r} [{iv.start_frame}, {iv.end_frame}] "
                f"exceeds sequence length {n}"
            )
        frames = sequence.frames[iv.start_frame:iv.end_frame + 1]
        sid = f"{sequence.source_id or 'rec'}#{k:04d}"
        samples.append(GestureSample(
            frames=FrameSequence(frames=frames, source_id=sequence.source_id),
            sample_id=sid,
            label=iv.class_name,
            recording_index=recording_index,
        ))
    return samples


def validate_sample(sample: GestureSample) -> SampleDiagnostics:
    """Report invalid joints and whether the sample can be rendered at all."""
    diag = SampleDiagnostics(sample_id=sample.sample_id)
    tip_invalid = {jid: 0 for jid in FINGERTIP_IDS}
    any_valid_tip = False
    for f in sample.frames:
        if not f.valid.all():
            diag.frames_with_invalid_joints.append(f.index)
        for jid, row in zip(FINGERTIP_IDS, FINGERTIP_ROWS):
            if f.valid[row]:
                any_valid_tip = True
            else:
                tip_invalid[jid] += 1
    T = sample.T
    diag.fingertip_invalid_fraction = {
        jid: count / T for jid, count in tip_invalid.items() if count
    }
    diag.renderable = any_valid_tip
    return diag


# ---------------------------------------------------------------------------
# dataset directory IO

def load_recording(path, format_tag: str = "canonical-csv",
                   class_set: ClassSet = LMDHG_CLASSES):
    """Load one recording directory -> (FrameSequence, list[LabelInterval]).

    Canonical layout: frames.csv + labels.csv. The lmdhg adapter accepts the
    same file names holding raw 138-column rows and 1-based annotations
    (assumed layout; flagged invalid joints are preserved either way).
    """
    from pathlib import Path

    path = Path(path)
    frames_file = path / "frames.csv"
    labels_file = path / "labels.csv"
    if not frames_file.exists():
        candidates = sorted(path.glob("*.txt")) + sorted(path.glob("*.csv"))
        candidates = [c for c in candidates if c.name != "labels.csv"]
        if not candidates:
            raise FileNotFoundError(f"no frames file in {path}")
        frames_file = candidates[0]
    seq = parse_frames(frames_file.read_bytes(), format_tag, source_id=path.name)
    intervals = []
    if labels_file.exists():
        intervals = parse_annotations(
            labels_file.read_bytes(), class_set,
            one_based=(format_tag == "lmdhg"),
        )
    return seq, intervals


def load_dataset(root, format_tag: str = "canonical-csv",
                 class_set: ClassSet = LMDHG_CLASSES) -> list[GestureSample]:
    """Load and segment every recording directory under root.

    Recording directories are visited in name order; a trailing integer in
    the directory name becomes the sample's recording_index (LMDHG
    recordings are numbered 1..50).
    """
    from pathlib import Path

    root = Path(root)
    samples = []
    for rec_dir in sorted(p for p in root.iterdir() if p.is_dir()):
        seq, intervals = load_recording(rec_dir, format_tag, class_set)
        m = re.search(r"(\d+)$", rec_dir.name)
        rec_index = int(m.group(1)) if m else None
        samples.extend(segment(seq, intervals, recording_index=rec_index))
    return samples


def save_recording(path, seq: FrameSequence,
                   intervals: list[LabelInterval] | None = None) -> None:
    """Write a recording in the canonical layout."""
    from pathlib import Path

    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    (path / "frames.csv").write_text(write_frames_csv(seq), encoding="utf-8")
    if intervals is not None:
        lines = ["class,start,end"]
        lines += [f"{iv.class_name},{iv.start_frame},{iv.end_frame}"
                  for iv in intervals]
        (path / "labels.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")


def frame_from_joints(index: int, joints: dict[JointId, "np.ndarray | tuple"],
                      timestamp: float | None = None) -> Frame:
    """Build a Frame from a sparse JointId -> position mapping; absent or
    non-finite joints are invalid."""
    positions = np.full((NUM_JOINTS, 3), np.nan)
    for jid, pos in joints.items():
        positions[JOINT_INDEX[jid]] = np.asarray(pos, dtype=np.float64)
    valid = np.isfinite(positions).all(axis=1)
    return Frame(index=index, positions=positions, valid=valid, timestamp=timestamp)
