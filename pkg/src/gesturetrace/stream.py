"""Windowed classification over a replayed frame stream.

Frames accumulate in tumbling (non-overlapping) windows; when a window
elapses, its frames become a gesture sample that runs through exactly the
same render-and-classify path as batch evaluation, so streamed predictions
match batch predictions for the same frames. Window boundaries follow frame
timestamps when present, otherwise a frame count derived from an assumed
sensor rate (default 100 fps, configurable). Frames remaining after the
last full window are discarded, never emitted as a partial prediction.

Wire format (one JSON object per line):
  frame in:   {"index": int, "timestamp": float?, "joints": [[x,y,z] x 46],
               "valid": [bool x 46]?}
  emission out: {"window": int, "class": str, "probabilities": [float x N]}
"""

import json
import time
from dataclasses import dataclass, field

import numpy as np

from .evalreport import CheckpointClassifier
from .nn import Prediction
from .skeleton import NUM_JOINTS, Frame, FrameSequence, GestureSample

DEFAULT_ASSUMED_FPS = 100.0


@dataclass
class WindowEmission:
    window_index: int
    prediction: Prediction
    frame_count: int


@dataclass
class StreamSession:
    """One tumbling-window classification stream.

    Classification happens synchronously inside push_frame, which makes
    emission order trivially equal to window order.
    """

    classifier: CheckpointClassifier
    window_seconds: float = 5.0
    window_frames: int | None = None  # overrides seconds when timestamps absent
    assumed_fps: float = DEFAULT_ASSUMED_FPS
    buffer: list[Frame] = field(default_factory=list)
    emissions: list[WindowEmission] = field(default_factory=list)
    _window_index: int = 0
    _t0: float | None = None
    _last_index: int | None = None
    _frames_per_window: int | None = None

    def __post_init__(self):
        if self.window_seconds <= 0:
            raise ValueError("window_seconds must be positive")
        if self.window_frames is not None and self.window_frames < 1:
            raise ValueError("window_frames must be >= 1")

    def frames_per_window(self) -> int:
        if self._frames_per_window is None:
            n = self.window_frames
            if n is None:
                n = max(1, round(self.window_seconds * self.assumed_fps))
            self._frames_per_window = n
        return self._frames_per_window


def _classify_window(session: StreamSession) -> WindowEmission:
    frames = tuple(session.buffer)
    sample = GestureSample(
        frames=FrameSequence(frames=frames, source_id="stream"),
        sample_id=f"window{session._window_index:05d}",
    )
    prediction = session.classifier.predict_sample(sample)
    emission = WindowEmission(
        window_index=session._window_index,
        prediction=prediction,
        frame_count=len(frames),
    )
    session.emissions.append(emission)
    session.buffer.clear()
    return emission


def push_frame(session: StreamSession, frame: Frame) -> WindowEmission | None:
    """Feed one frame; returns the emission when it completes a window.

    Frames must arrive in increasing index order. Timestamped frames are
    assigned to window floor((t - t0) / window_seconds); without timestamps
    a window is exactly frames_per_window consecutive frames and emits
    eagerly on the frame that fills it.
    """
    if session._last_index is not None and frame.index <= session._last_index:
        raise ValueError(
            f"out-of-order frame: index {frame.index} after "
            f"{session._last_index}"
        )
    session._last_index = frame.index

    if frame.timestamp is not None:
        if session._t0 is None:
            session._t0 = frame.timestamp
        win = int((frame.timestamp - session._t0) // session.window_seconds)
        emission = None
        if win > session._window_index:
            if session.buffer:
                emission = _classify_window(session)
            session._window_index = win
        session.buffer.append(frame)
        return emission

    session.buffer.append(frame)
    if len(session.buffer) >= session.frames_per_window():
        emission = _classify_window(session)
        session._window_index += 1
        return emission
    return None


def replay(recording: FrameSequence, session: StreamSession,
           paced: bool = False) -> list[WindowEmission]:
    """Push a recording's frames through the session in order.

    By default frames replay at logical speed (no waiting). With paced=True
    the replay sleeps so each frame is pushed at its recorded timestamp
    (or at the assumed frame rate) relative to the replay start.
    """
    emitted = []
    start = time.monotonic() if paced else None
    first_ts = None
    for i, frame in enumerate(recording.frames):
        if paced:
            if frame.timestamp is not None:
                if first_ts is None:
                    first_ts = frame.timestamp
                due = frame.timestamp - first_ts
            else:
                due = i / session.assumed_fps
            lag = due - (time.monotonic() - start)
            if lag > 0:
                time.sleep(lag)
        emission = push_frame(session, frame)
        if emission is not None:
            emitted.append(emission)
    return emitted


# ---------------------------------------------------------------------------
# newline-delimited JSON wire format

def frame_to_json(frame: Frame) -> str:
    obj = {
        "index": frame.index,
        "joints": [[None if not np.isfinite(v) else float(v) for v in row]
                   for row in frame.positions],
        "valid": frame.valid.tolist(),
    }
    if frame.timestamp is not None:
        obj["timestamp"] = frame.timestamp
    return json.dumps(obj, sort_keys=True)


def frame_from_json(line: str) -> Frame:
    obj = json.loads(line)
    joints = obj["joints"]
    if len(joints) != NUM_JOINTS:
        raise ValueError(f"frame needs {NUM_JOINTS} joints, got {len(joints)}")
    positions = np.array(
        [[np.nan if v is None else float(v) for v in row] for row in joints],
        dtype=np.float64,
    )
    valid = np.array(obj.get("valid",
                             np.isfinite(positions).all(axis=1).tolist()),
                     dtype=bool)
    return Frame(index=int(obj["index"]), positions=positions, valid=valid,
                 timestamp=obj.get("timestamp"))


def emission_to_json(emission: WindowEmission) -> str:
    return json.dumps({
        "window": emission.window_index,
        "class": emission.prediction.argmax_class,
        "probabilities": [float(p) for p in emission.prediction.probabilities],
    }, sort_keys=True)


def run_ndjson_stream(session: StreamSession, lines, output) -> int:
    """Process NDJSON frames from an iterable of lines, writing one NDJSON
    emission per completed window. Returns the emission count."""
    count = 0
    for line in lines:
        line = line.strip()
        if not line:
            continue
        emission = push_frame(session, frame_from_json(line))
        if emission is not None:
            output.write(emission_to_json(emission) + "\n")
            output.flush()
            count += 1
    return count


def serve_tcp(session: StreamSession, host: str = "127.0.0.1",
              port: int = 0, on_bound=None) -> tuple[str, int]:
    """Serve one NDJSON stream connection over TCP (frames in, emissions
    out on the same socket). on_bound, when given, is called with the bound
    (host, port) once the server is listening; the call then blocks until
    the client closes and returns that address."""
    import socket

    with socket.socket(socket.AF_INET, socket.SOCK_STREAM) as server:
        server.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        server.bind((host, port))
        bound = server.getsockname()
        server.listen(1)
        if on_bound is not None:
            on_bound(bound)
        conn, _ = server.accept()
        with conn, conn.makefile("r", encoding="utf-8") as rfh, \
                conn.makefile("w", encoding="utf-8") as wfh:
            run_ndjson_stream(session, rfh, wfh)
        return bound
