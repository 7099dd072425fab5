"""Rectified-Adam and Lookahead optimizers, plus a learning-rate range scan.

RAdam removes Adam's warm-up requirement by rectifying the adaptive step
while the second-moment estimate is still high-variance: with
rho_inf = 2/(1-beta2) - 1 and rho_t = rho_inf - 2*t*beta2^t/(1-beta2^t),
steps with rho_t > 4 use the variance-rectified adaptive update

    theta <- theta - lr * r_t * m_hat / (sqrt(v_hat) + eps),
    r_t = sqrt(((rho_t-4)*(rho_t-2)*rho_inf) / ((rho_inf-4)*(rho_inf-2)*rho_t))

and earlier steps fall back to the plain momentum update
theta <- theta - lr * m_hat. Lookahead keeps a slow copy of the weights and
every k inner steps pulls it toward the fast weights by alpha, then resets
the fast weights onto it. The combination of the two is the "ranger"
configuration used by the trainer.
"""

import math
from dataclasses import dataclass, field

import numpy as np


class RAdam:
    """Rectified Adam over a named parameter dict; updates in place."""

    def __init__(self, params: dict[str, np.ndarray], lr: float = 1e-3,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        if lr <= 0:
            raise ValueError(f"lr must be positive, got {lr}")
        if not (0 <= beta1 < 1 and 0 <= beta2 < 1):
            raise ValueError("betas must lie in [0, 1)")
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.rho_inf = 2.0 / (1.0 - beta2) - 1.0

    def rho(self, t: int) -> float:
        b2t = self.beta2 ** t
        return self.rho_inf - 2.0 * t * b2t / (1.0 - b2t)

    def rectification(self, t: int) -> float:
        rho_t = self.rho(t)
        rho_inf = self.rho_inf
        return math.sqrt(
            ((rho_t - 4.0) * (rho_t - 2.0) * rho_inf)
            / ((rho_inf - 4.0) * (rho_inf - 2.0) * rho_t)
        )

    def step(self, grads: dict[str, np.ndarray]) -> None:
        for name, g in grads.items():
            if name in self.params and not np.isfinite(g).all():
                raise FloatingPointError(
                    f"non-finite gradient for parameter {name!r}; step aborted"
                )
        self.t += 1
        t = self.t
        bc1 = 1.0 - self.beta1 ** t
        bc2 = 1.0 - self.beta2 ** t
        rho_t = self.rho(t)
        rectified = rho_t > 4.0
        r_t = self.rectification(t) if rectified else 0.0
        for name, p in self.params.items():
            g = grads[name]
            m = self.m[name]
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            m_hat = m / bc1
            if rectified:
                v_hat = np.sqrt(v / bc2)
                p -= (self.lr * r_t) * m_hat / (v_hat + self.eps)
            else:
                p -= self.lr * m_hat


@dataclass
class LookaheadState:
    """Slow-weight copies plus the inner-step counter."""

    slow: dict[str, np.ndarray]
    alpha: float = 0.5
    k: int = 6
    steps: int = 0

    @classmethod
    def init(cls, params: dict[str, np.ndarray], alpha: float = 0.5,
             k: int = 6) -> "LookaheadState":
        if not 0.0 <= alpha <= 1.0:
            raise ValueError(f"alpha {alpha} outside [0, 1]")
        if k < 1:
            raise ValueError(f"sync period k must be >= 1, got {k}")
        return cls(slow={n: v.copy() for n, v in params.items()},
                   alpha=alpha, k=k)


def lookahead_sync(fast_params: dict[str, np.ndarray],
                   state: LookaheadState) -> bool:
    """Call after every inner optimizer step. On every k-th step the slow
    weights move toward the fast ones (slow += alpha*(fast-slow)) and the
    fast weights are reset onto them; other calls are no-ops. Returns True
    when a sync happened."""
    state.steps += 1
    if state.steps % state.k != 0:
        return False
    for name, fast in fast_params.items():
        slow = state.slow[name]
        slow += state.alpha * (fast - slow)
        np.copyto(fast, slow)
    return True


class Ranger:
    """RAdam wrapped in Lookahead (the trainer's default optimizer)."""

    def __init__(self, params: dict[str, np.ndarray], lr: float = 1e-3,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8,
                 lookahead_k: int = 6, lookahead_alpha: float = 0.5):
        self.inner = RAdam(params, lr=lr, beta1=beta1, beta2=beta2, eps=eps)
        self.state = LookaheadState.init(params, alpha=lookahead_alpha,
                                         k=lookahead_k)

    @property
    def params(self):
        return self.inner.params

    def step(self, grads: dict[str, np.ndarray]) -> None:
        self.inner.step(grads)
        lookahead_sync(self.inner.params, self.state)


@dataclass
class LrRangeResult:
    suggested_lr: float
    lrs: list[float] = field(default_factory=list)
    losses: list[float] = field(default_factory=list)
    diverged_at: int | None = None  # index into lrs, None if never diverged


def lr_range_scan(objective, params: dict[str, np.ndarray],
                  lr_span: tuple[float, float], steps: int = 100,
                  divergence_factor: float = 4.0) -> LrRangeResult:
    """Probe an exponentially increasing learning-rate ladder.

    objective(params, i) must return (loss, grads) for mini-batch i. Probe
    updates are plain gradient descent (theta -= lr * grad) so divergence
    reflects the loss curvature rather than optimizer state. The suggested
    rate is one order of magnitude below the first rate at which the loss
    diverges (non-finite, or above divergence_factor times the best loss
    seen); if the scan never diverges the geometric midpoint of the span is
    suggested.
    """
    lo, hi = lr_span
    if not (0 < lo < hi):
        raise ValueError(f"need 0 < min < max, got {lr_span}")
    if steps < 2:
        raise ValueError("need at least 2 steps")
    lrs = np.geomspace(lo, hi, steps)
    result = LrRangeResult(suggested_lr=math.sqrt(lo * hi))
    best = math.inf
    for i, lr in enumerate(lrs):
        loss, grads = objective(params, i)
        diverged = (not math.isfinite(loss)) or loss > divergence_factor * best
        result.lrs.append(float(lr))
        result.losses.append(float(loss))
        if diverged:
            if i == 0:
                raise ValueError(
                    "loss diverged on the first probe step; "
                    "retry with a smaller lr span"
                )
            result.diverged_at = i
            result.suggested_lr = float(lrs[i]) / 10.0
            return result
        best = min(best, loss)
        for name, p in params.items():
            p -= lr * grads[name]
    return result
