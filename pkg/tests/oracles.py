"""Independent reference implementations used as test oracles.

Everything here is deliberately written the slow, obvious way (explicit
loops, pure-python floats) and stays independent of the library code paths
it checks.
"""

import math

import numpy as np

from gesturetrace.skeleton import (
    Finger,
    Frame,
    FrameSequence,
    GestureSample,
    Hand,
    JOINT_INDEX,
    JointId,
    NUM_JOINTS,
)


def conv2d_loops(x, w, b):
    """Six-nested-loop 3x3/stride1/pad1 convolution."""
    B, C, H, W = x.shape
    O = w.shape[0]
    out = np.zeros((B, O, H, W), dtype=np.float64)
    for n in range(B):
        for o in range(O):
            for i in range(H):
                for j in range(W):
                    acc = float(b[o])
                    for c in range(C):
                        for di in (-1, 0, 1):
                            for dj in (-1, 0, 1):
                                ii, jj = i + di, j + dj
                                if 0 <= ii < H and 0 <= jj < W:
                                    acc += float(x[n, c, ii, jj]) * float(
                                        w[o, c, di + 1, dj + 1])
                    out[n, o, i, j] = acc
    return out


def dense_loops(x, w, b):
    """Explicit dot products."""
    B, I = x.shape
    O = w.shape[1]
    out = np.zeros((B, O), dtype=np.float64)
    for n in range(B):
        for o in range(O):
            acc = float(b[o])
            for i in range(I):
                acc += float(x[n, i]) * float(w[i, o])
            out[n, o] = acc
    return out


def maxpool2x2_loops(x):
    B, C, H, W = x.shape
    out = np.zeros((B, C, H // 2, W // 2), dtype=x.dtype)
    for n in range(B):
        for c in range(C):
            for i in range(H // 2):
                for j in range(W // 2):
                    out[n, c, i, j] = max(
                        x[n, c, 2 * i, 2 * j], x[n, c, 2 * i, 2 * j + 1],
                        x[n, c, 2 * i + 1, 2 * j], x[n, c, 2 * i + 1, 2 * j + 1],
                    )
    return out


def finite_difference_param_grads(loss_fn, params, step=1e-5, keys=None):
    """Central finite differences of loss_fn() w.r.t. each entry of each
    (named) parameter array; perturbs in place and restores."""
    grads = {}
    for name in (keys if keys is not None else params.keys()):
        arr = params[name]
        g = np.zeros_like(arr, dtype=np.float64)
        flat = arr.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            lp = loss_fn()
            flat[i] = orig - step
            lm = loss_fn()
            flat[i] = orig
            gflat[i] = (lp - lm) / (2.0 * step)
        grads[name] = g
    return grads


def max_relative_error(analytic, numeric, floor=1e-8):
    """max |a-n| / max(|a|, |n|, floor) over all entries."""
    a = np.asarray(analytic, dtype=np.float64).ravel()
    n = np.asarray(numeric, dtype=np.float64).ravel()
    denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
    return float(np.max(np.abs(a - n) / denom))


class ScalarRAdamOracle:
    """Pure-python-float RAdam for one scalar parameter."""

    def __init__(self, theta, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.theta = float(theta)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = 0.0
        self.v = 0.0
        self.t = 0
        self.rho_inf = 2.0 / (1.0 - beta2) - 1.0

    def rho(self, t):
        b2t = self.beta2 ** t
        return self.rho_inf - 2.0 * t * b2t / (1.0 - b2t)

    def step(self, grad):
        self.t += 1
        t = self.t
        self.m = self.beta1 * self.m + (1.0 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1.0 - self.beta2) * grad * grad
        m_hat = self.m / (1.0 - self.beta1 ** t)
        rho_t = self.rho(t)
        if rho_t > 4.0:
            v_hat = math.sqrt(self.v / (1.0 - self.beta2 ** t))
            r = math.sqrt(((rho_t - 4.0) * (rho_t - 2.0) * self.rho_inf)
                          / ((self.rho_inf - 4.0) * (self.rho_inf - 2.0) * rho_t))
            self.theta -= self.lr * r * m_hat / (v_hat + self.eps)
        else:
            self.theta -= self.lr * m_hat
        return self.theta


class ScalarLookaheadOracle:
    """Slow/fast interpolation for one scalar."""

    def __init__(self, theta, alpha=0.5, k=6):
        self.slow = float(theta)
        self.alpha = alpha
        self.k = k
        self.steps = 0

    def after_inner_step(self, fast):
        self.steps += 1
        if self.steps % self.k:
            return fast, False
        self.slow = self.slow + self.alpha * (fast - self.slow)
        return self.slow, True


# ---------------------------------------------------------------------------
# deterministic gesture fixtures

_RIGHT_TIPS = {
    Finger.THUMB: (-38.0, -6.0),
    Finger.INDEX: (-16.0, 30.0),
    Finger.MIDDLE: (0.0, 36.0),
    Finger.RING: (16.0, 30.0),
    Finger.PINKY: (30.0, 12.0),
}


def _static_right_hand(palm):
    """All 23 right-hand joints for a palm center, schematic pose."""
    joints = {
        JointId(Hand.RIGHT, "palm"): palm,
        JointId(Hand.RIGHT, "wrist"): (palm[0], palm[1] - 12.0, palm[2] - 45.0),
        JointId(Hand.RIGHT, "elbow"): (palm[0], palm[1] - 60.0, palm[2] - 160.0),
    }
    for finger, (dx, dz) in _RIGHT_TIPS.items():
        tip = (palm[0] + dx, palm[1] + 6.0, palm[2] + dz)
        root = (palm[0] + dx * 0.25, palm[1] + 2.0, palm[2] + dz * 0.25)
        for j in range(4):
            frac = j / 3.0
            joints[JointId(Hand.RIGHT, "finger", finger, j)] = tuple(
                r + frac * (t - r) for r, t in zip(root, tip)
            )
    return joints


def sinusoid_fixture(frames: int = 60) -> GestureSample:
    """The scripted golden-render gesture: the right index fingertip sweeps
    a sinusoid while the rest of the hand stays put. Coordinates are
    quantized to 0.01 mm so the fixture is digit-exact everywhere."""
    out = []
    palm = (-60.0, 180.0, -40.0)
    for i in range(frames):
        t = i / (frames - 1)
        joints = _static_right_hand(palm)
        x = round(-250.0 + 500.0 * t, 2)
        z = round(120.0 * math.sin(2.0 * math.pi * 2.0 * t), 2)
        y = round(180.0 + 60.0 * math.sin(2.0 * math.pi * t), 2)
        joints[JointId(Hand.RIGHT, "finger", Finger.INDEX, 3)] = (x, y, z)
        positions = np.full((NUM_JOINTS, 3), np.nan)
        for jid, pos in joints.items():
            positions[JOINT_INDEX[jid]] = pos
        valid = np.isfinite(positions).all(axis=1)
        out.append(Frame(index=i, positions=positions, valid=valid))
    return GestureSample(
        frames=FrameSequence(frames=tuple(out), source_id="sinusoid"),
        sample_id="sinusoid",
        label=None,
    )
