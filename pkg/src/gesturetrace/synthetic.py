"""Parametric synthetic gestures for demos, self-tests and desk-scale
training runs.

Four trajectory families are generated for the right hand (the left hand is
absent/invalid, as in single-hand recordings): a straight line sweep, a full
circle, a zigzag, and a resting hand with millimeter-level jitter. Each
sample randomizes orientation, extent, center and duration from a seeded
generator, so datasets are reproducible.
"""

import numpy as np

from .skeleton import (
    Finger,
    Frame,
    FrameSequence,
    GestureSample,
    Hand,
    JOINT_INDEX,
    JointId,
    NUM_JOINTS,
    ClassSet,
)

SYNTHETIC_CLASSES = ClassSet(("line", "circle", "zigzag", "rest"))

# Schematic right hand seen from above: (dx, dz) fingertip offsets from the
# palm center, millimeters.
_TIP_OFFSETS = {
    Finger.THUMB: (-38.0, -6.0),
    Finger.INDEX: (-16.0, 30.0),
    Finger.MIDDLE: (0.0, 36.0),
    Finger.RING: (16.0, 30.0),
    Finger.PINKY: (30.0, 12.0),
}
_PALM_HEIGHT = 200.0  # mm above the sensor


def _trajectory(kind: str, rng: np.random.Generator, t: np.ndarray):
    """Path in the horizontal plane -> (len(t), 2) of (x, z) positions."""
    angle = rng.uniform(0.0, 2.0 * np.pi)
    cx = rng.uniform(-70.0, 70.0)
    cz = rng.uniform(-40.0, 40.0)
    if kind == "line":
        length = rng.uniform(280.0, 440.0)
        direction = np.array([np.cos(angle), np.sin(angle)])
        pts = (t[:, None] - 0.5) * length * direction
    elif kind == "circle":
        radius = rng.uniform(100.0, 165.0)
        sweep = 2.0 * np.pi * (1.0 if rng.uniform() < 0.5 else -1.0)
        theta = angle + sweep * t
        pts = radius * np.stack([np.cos(theta), np.sin(theta)], axis=1)
    elif kind == "zigzag":
        length = rng.uniform(280.0, 420.0)
        amplitude = rng.uniform(70.0, 120.0)
        zigs = 4
        along = (t - 0.5) * length
        across = amplitude * (2.0 * np.abs(((t * zigs) % 1.0) - 0.5) - 0.5)
        cos_a, sin_a = np.cos(angle), np.sin(angle)
        pts = np.stack(
            [along * cos_a - across * sin_a, along * sin_a + across * cos_a],
            axis=1,
        )
    elif kind == "rest":
        pts = np.zeros((len(t), 2))
    else:
        raise ValueError(f"unknown synthetic gesture kind {kind!r}")
    return pts + np.array([cx, cz])


def make_gesture(kind: str, seed: int, frames: int | None = None,
                 sample_id: str | None = None,
                 with_timestamps: bool = False,
                 fps: float = 100.0) -> GestureSample:
    """One synthetic right-hand gesture of the given kind."""
    rng = np.random.default_rng(seed)
    T = int(frames) if frames is not None else int(rng.integers(48, 73))
    t = np.arange(T) / max(T - 1, 1)
    path = _trajectory(kind, rng, t)
    hand_angle = rng.uniform(-0.35, 0.35)
    cos_h, sin_h = np.cos(hand_angle), np.sin(hand_angle)
    jitter = rng.normal(0.0, 2.0, size=(T, NUM_JOINTS, 3))

    out_frames = []
    for i in range(T):
        positions = np.full((NUM_JOINTS, 3), np.nan)
        px, pz = path[i]
        palm = np.array([px, _PALM_HEIGHT, pz])
        positions[JOINT_INDEX[JointId(Hand.RIGHT, "palm")]] = palm
        positions[JOINT_INDEX[JointId(Hand.RIGHT, "wrist")]] = palm + (
            -45.0 * sin_h, -12.0, -45.0 * cos_h)
        positions[JOINT_INDEX[JointId(Hand.RIGHT, "elbow")]] = palm + (
            -160.0 * sin_h, -60.0, -160.0 * cos_h)
        for finger, (dx, dz) in _TIP_OFFSETS.items():
            rx = dx * cos_h - dz * sin_h
            rz = dx * sin_h + dz * cos_h
            tip = palm + np.array([rx, 6.0, rz])
            root = palm + np.array([rx * 0.25, 2.0, rz * 0.25])
            for j in range(4):
                frac = j / 3.0
                positions[JOINT_INDEX[JointId(Hand.RIGHT, "finger", finger, j)]] = (
                    root + frac * (tip - root)
                )
        positions += jitter[i]
        # left hand stays absent (all NaN -> invalid)
        positions[:NUM_JOINTS // 2] = np.nan
        valid = np.isfinite(positions).all(axis=1)
        out_frames.append(Frame(
            index=i,
            positions=positions,
            valid=valid,
            timestamp=(i / fps) if with_timestamps else None,
        ))
    return GestureSample(
        frames=FrameSequence(frames=tuple(out_frames),
                             source_id=sample_id or f"synthetic-{kind}-{seed}"),
        sample_id=sample_id or f"{kind}-{seed:05d}",
        label=kind if kind in SYNTHETIC_CLASSES else None,
    )


def make_dataset(per_class: int = 80, seed: int = 0,
                 classes: ClassSet = SYNTHETIC_CLASSES,
                 frames: int | None = None) -> list[GestureSample]:
    """per_class samples of every class; sample seeds derive from the
    dataset seed so any (seed, per_class) pair reproduces exactly."""
    samples = []
    for c, kind in enumerate(classes.names):
        for i in range(per_class):
            samples.append(make_gesture(
                kind,
                seed=seed * 1_000_003 + c * 10_007 + i,
                frames=frames,
                sample_id=f"{kind}-{i:04d}",
            ))
    return samples
