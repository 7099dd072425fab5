import os

import numpy as np
import pytest

from gesturetrace import skeleton as sk

LMDHG_DIR = os.environ.get("GESTURETRACE_LMDHG_DIR")


def make_row(index, coords, timestamp=None):
    ts = "" if timestamp is None else repr(timestamp)
    return f"{index},{ts}," + ",".join(repr(float(v)) for v in coords)


def full_coords(value=1.0):
    return [value + i * 0.25 for i in range(sk.NUM_JOINTS * 3)]


def simple_sequence(n_frames=5, source_id="rec01"):
    rows = [make_row(i, full_coords(i)) for i in range(n_frames)]
    return sk.parse_frames("\n".join(rows), "canonical-csv", source_id)


# ---------------------------------------------------------------------------
# joint universe

def test_joint_universe_counts():
    assert sk.NUM_JOINTS == 46
    left = [j for j in sk.JOINT_ORDER if j.hand is sk.Hand.LEFT]
    right = [j for j in sk.JOINT_ORDER if j.hand is sk.Hand.RIGHT]
    assert len(left) == 23 and len(right) == 23
    assert len(set(sk.JOINT_ORDER)) == 46


def test_fingertip_predicate():
    tips = [j for j in sk.JOINT_ORDER if j.is_fingertip]
    assert len(tips) == 10
    assert all(j.joint == 3 for j in tips)
    assert not sk.JointId(sk.Hand.LEFT, "finger", sk.Finger.THUMB, 2).is_fingertip
    assert not sk.JointId(sk.Hand.LEFT, "palm").is_fingertip


def test_joint_id_validation():
    with pytest.raises(ValueError):
        sk.JointId(sk.Hand.LEFT, "finger")  # missing finger fields
    with pytest.raises(ValueError):
        sk.JointId(sk.Hand.LEFT, "finger", sk.Finger.THUMB, 4)
    with pytest.raises(ValueError):
        sk.JointId(sk.Hand.LEFT, "knuckle")


# ---------------------------------------------------------------------------
# parse_frames

def test_parse_empty_file():
    seq = sk.parse_frames(b"", "canonical-csv")
    assert len(seq) == 0


def test_parse_two_row_fixture_against_reference_reader():
    # independent oracle: read the same text field-by-field with plain
    # string splitting and compare every coordinate
    rows = [make_row(0, full_coords(0.0), 0.0),
            make_row(1, full_coords(2.5), 0.02)]
    text = "\n".join(rows)
    seq = sk.parse_frames(text, "canonical-csv")
    assert len(seq) == 2
    for line, frame in zip(text.splitlines(), seq.frames):
        fields = line.split(",")
        assert int(fields[0]) == frame.index
        assert float(fields[1]) == frame.timestamp
        expected = np.array([float(v) for v in fields[2:]]).reshape(46, 3)
        assert np.array_equal(expected, frame.positions)
    assert all(f.valid.all() for f in seq.frames)


def test_parse_flags_non_finite_joints_but_keeps_row():
    coords = full_coords()
    coords[5] = float("nan")  # joint 1 (left wrist) y coordinate
    seq = sk.parse_frames(make_row(0, coords), "canonical-csv")
    frame = seq.frames[0]
    assert not frame.valid[1]
    assert frame.valid.sum() == 45
    # never produces a key outside the 46-joint universe
    assert set(frame.joints.keys()) <= set(sk.JOINT_ORDER)


def test_parse_wrong_column_count_reports_line():
    good = make_row(0, full_coords())
    bad = "1,,1.0,2.0"
    with pytest.raises(sk.ParseError, match="line 2"):
        sk.parse_frames(good + "\n" + bad, "canonical-csv")


def test_parse_unknown_format_tag():
    with pytest.raises(ValueError, match="format_tag"):
        sk.parse_frames(b"", "xml")


def test_parse_lmdhg_rows_implicit_index():
    rows = [" ".join(repr(v) for v in full_coords(i)) for i in range(3)]
    seq = sk.parse_frames("\n".join(rows), "lmdhg")
    assert [f.index for f in seq.frames] == [0, 1, 2]
    assert all(f.timestamp is None for f in seq.frames)


def test_round_trip_canonical_csv():
    coords = full_coords(3.25)
    coords[10] = float("nan")
    rows = [make_row(0, full_coords(0.0), 0.0), make_row(2, coords, 1.5)]
    seq = sk.parse_frames("\n".join(rows), "canonical-csv", source_id="r")
    text = sk.write_frames_csv(seq)
    again = sk.parse_frames(text, "canonical-csv", source_id="r")
    assert sk.sequences_equal(seq, again)


def test_frame_sequence_orders_enforced():
    f0 = sk.frame_from_joints(0, {sk.JointId(sk.Hand.LEFT, "palm"): (0, 0, 0)})
    f1 = sk.frame_from_joints(0, {sk.JointId(sk.Hand.LEFT, "palm"): (1, 0, 0)})
    with pytest.raises(ValueError, match="strictly increasing"):
        sk.FrameSequence(frames=(f0, f1))


# ---------------------------------------------------------------------------
# annotations

def test_parse_annotations_empty():
    assert sk.parse_annotations(b"") == []


def test_parse_annotations_rest_interval():
    (iv,) = sk.parse_annotations("Rest,10,57")
    assert iv.class_name == "Rest"
    assert iv.length == 48


def test_parse_annotations_normalizes_spelling():
    (iv,) = sk.parse_annotations("  DRAW_LINE , 0, 4 ")
    assert iv.class_name == "Draw Line"
    (iv,) = sk.parse_annotations("point to with two hands,0,4")
    assert iv.class_name == "Point to with hand raised"


def test_parse_annotations_unknown_class_lists_valid_names():
    with pytest.raises(ValueError, match="Rest"):
        sk.parse_annotations("Wave,0,10")


def test_parse_annotations_sorted_and_overlap_warning():
    text = "Rest,50,80\nCatch,0,20\nShake,15,30"
    with pytest.warns(UserWarning, match="overlap"):
        ivs = sk.parse_annotations(text)
    assert [iv.start_frame for iv in ivs] == [0, 15, 50]
    assert len(ivs) == 3  # both overlapping intervals kept


# ---------------------------------------------------------------------------
# segmentation

def test_segment_zero_intervals():
    assert sk.segment(simple_sequence(), []) == []


def test_segment_whole_sequence():
    seq = simple_sequence(7)
    (sample,) = sk.segment(seq, [sk.LabelInterval("Rest", 0, 6)])
    assert sample.T == 7
    assert sample.label == "Rest"


def test_segment_out_of_bounds_names_interval():
    seq = simple_sequence(5)
    with pytest.raises(ValueError, match="Catch"):
        sk.segment(seq, [sk.LabelInterval("Catch", 2, 5)])


def test_segment_index_stability():
    # exhaustive non-overlapping intervals reproduce the frame list
    seq = simple_sequence(10)
    intervals = [sk.LabelInterval("Rest", 0, 3),
                 sk.LabelInterval("Catch", 4, 6),
                 sk.LabelInterval("Shake", 7, 9)]
    samples = sk.segment(seq, intervals)
    rebuilt = [f for s in samples for f in s.frames]
    assert rebuilt == list(seq.frames)
    assert all(s.T == iv.length for s, iv in zip(samples, intervals))


def test_sample_requires_frames():
    with pytest.raises(ValueError):
        sk.GestureSample(frames=sk.FrameSequence(frames=()), sample_id="x")


# ---------------------------------------------------------------------------
# validation diagnostics

def test_validate_all_valid_sample():
    seq = simple_sequence(4)
    (sample,) = sk.segment(seq, [sk.LabelInterval("Rest", 0, 3)])
    diag = sk.validate_sample(sample)
    assert diag.clean and diag.renderable
    assert diag.fingertip_invalid_fraction == {}


def test_validate_all_invalid_not_renderable():
    frames = tuple(
        sk.Frame(index=i, positions=np.full((46, 3), np.nan),
                 valid=np.zeros(46, bool))
        for i in range(3)
    )
    sample = sk.GestureSample(
        frames=sk.FrameSequence(frames=frames), sample_id="dead")
    diag = sk.validate_sample(sample)
    assert not diag.renderable
    assert diag.frames_with_invalid_joints == [0, 1, 2]


def test_validate_counts_invalid_fingertip_fraction():
    # 3 of 10 frames lose the right index fingertip
    tip = sk.JointId(sk.Hand.RIGHT, "finger", sk.Finger.INDEX, 3)
    frames = []
    for i in range(10):
        coords = np.array(full_coords(i)).reshape(46, 3)
        if i in (2, 5, 8):
            coords[sk.JOINT_INDEX[tip]] = np.nan
        frames.append(sk.Frame(index=i, positions=coords,
                               valid=np.isfinite(coords).all(axis=1)))
    sample = sk.GestureSample(
        frames=sk.FrameSequence(frames=tuple(frames)), sample_id="s")
    diag = sk.validate_sample(sample)
    assert diag.fingertip_invalid_fraction == {tip: 3 / 10}
    assert diag.renderable


# ---------------------------------------------------------------------------
# class sets

def test_class_set_counts():
    assert sk.LMDHG_CLASSES.N == 14
    assert sk.EXTENDED_CLASSES.N == 16
    assert "Blank" in sk.EXTENDED_CLASSES and "Noise" in sk.EXTENDED_CLASSES


def test_class_set_uniqueness_enforced():
    with pytest.raises(ValueError):
        sk.ClassSet(("a", "b", "a"))


def test_sample_T_matches_slice_length():
    seq = simple_sequence(9)
    samples = sk.segment(seq, [sk.LabelInterval("Rest", 1, 4),
                               sk.LabelInterval("Zoom", 5, 8)])
    for s in samples:
        assert s.T == len(s.frames.frames) >= 1


# ---------------------------------------------------------------------------
# dataset directory IO

def test_save_and_load_dataset_roundtrip(tmp_path):
    seq = simple_sequence(12, source_id="rec07")
    intervals = [sk.LabelInterval("Rest", 0, 5), sk.LabelInterval("Catch", 6, 11)]
    sk.save_recording(tmp_path / "rec07", seq, intervals)
    samples = sk.load_dataset(tmp_path)
    assert len(samples) == 2
    assert samples[0].label == "Rest"
    assert samples[0].recording_index == 7
    assert samples[1].T == 6


def test_load_dataset_lmdhg_adapter(tmp_path):
    rec = tmp_path / "seq3"
    rec.mkdir()
    rows = ["\t".join(repr(v) for v in full_coords(i)) for i in range(8)]
    (rec / "skeleton.txt").write_text("\n".join(rows), encoding="utf-8")
    # lmdhg annotations are 1-based inclusive
    (rec / "labels.csv").write_text("Catch,1,4\nRest,5,8\n", encoding="utf-8")
    samples = sk.load_dataset(tmp_path, "lmdhg")
    assert [s.label for s in samples] == ["Catch", "Rest"]
    assert [s.T for s in samples] == [4, 4]
    assert samples[0].frames.frames[0].index == 0


# ---------------------------------------------------------------------------
# tests that need the real segmented dataset; skipped otherwise

needs_lmdhg = pytest.mark.skipif(
    LMDHG_DIR is None,
    reason="set GESTURETRACE_LMDHG_DIR to the canonical LMDHG root to run "
    "dataset census checks",
)


@needs_lmdhg
def test_lmdhg_census_total_samples():
    samples = sk.load_dataset(LMDHG_DIR)
    assert len(samples) == 1134


@needs_lmdhg
def test_lmdhg_census_rest_and_sparse_class():
    samples = sk.load_dataset(LMDHG_DIR)
    rest = sum(1 for s in samples if s.label == "Rest")
    sparse = sum(1 for s in samples if s.label == "Point to with hand raised")
    assert rest == 526
    assert sparse == 24
