"""The three update rules: plain gradient descent, momentum, and ADAM.

All three are implemented verbatim, including the historical eta/2 factor of
the plain descent rule.  The ADAM step uses the time-decayed first-moment
rate beta1_t = beta1 * lam**(t-1) in the moment update but the constant
beta1**t in the bias correction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .core import (
    AdamState,
    DivisionHazardError,
    HyperParams,
    NumericInputError,
    StepRecord,
    Trajectory,
    record_step,
)

__all__ = [
    "MomentumState",
    "gd_step",
    "momentum_step",
    "adam_step",
    "adam_run",
    "gd_run",
    "momentum_run",
    "verify_replay",
]

# oracle(w, t) -> (objective value, gradient), pure in (w, t)
GradOracle = Callable[[np.ndarray, int], tuple[float, np.ndarray]]


def _check_lengths(w: np.ndarray, g: np.ndarray) -> None:
    if w.shape != g.shape:
        raise ValueError(f"weight/gradient length mismatch: {w.shape} vs {g.shape}")


def gd_step(w, g, eta: float) -> np.ndarray:
    """One plain descent step: w - (eta/2) * g."""
    w = np.asarray(w, dtype=np.float64)
    g = np.asarray(g, dtype=np.float64)
    _check_lengths(w, g)
    if not eta > 0:
        raise ValueError("eta must be positive")
    return w - 0.5 * eta * g


@dataclass
class MomentumState:
    """Weights plus the previous weight change (zero before the first step)."""

    w: np.ndarray
    delta_prev: np.ndarray

    @classmethod
    def initial(cls, w0) -> "MomentumState":
        w0 = np.asarray(w0, dtype=np.float64).reshape(-1)
        return cls(w=w0.copy(), delta_prev=np.zeros_like(w0))


def momentum_step(st: MomentumState, g, eta: float, alpha: float) -> MomentumState:
    """One momentum step: delta = -(eta/2) g + alpha * delta_prev."""
    g = np.asarray(g, dtype=np.float64)
    _check_lengths(st.w, g)
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    delta = -0.5 * eta * g + alpha * st.delta_prev
    return MomentumState(w=st.w + delta, delta_prev=delta)


def adam_step(
    st: AdamState, g, p: HyperParams, e: float = math.nan
) -> tuple[AdamState, StepRecord]:
    """One ADAM step from state `st` with gradient `g`.

    With t = st.t + 1 and beta1_t = beta1 * lam**(t-1):

        m     <- beta1_t * m + (1 - beta1_t) * g
        v     <- beta2 * v + (1 - beta2) * g**2
        m_hat  = m / (1 - beta1**t)
        v_hat  = v / (1 - beta2**t)
        w     <- w - (eta / sqrt(t)) * m_hat / (sqrt(v_hat) + epsilon)

    When epsilon is 0 a coordinate with v_hat = 0 contributes a 0 update if
    its m_hat is also 0 (the continuous extension); a nonzero m_hat over a
    zero denominator raises :class:`DivisionHazardError`.
    """
    g = np.asarray(g, dtype=np.float64).reshape(-1)
    _check_lengths(st.w, g)
    if not np.all(np.isfinite(g)):
        raise NumericInputError("gradient contains a nonfinite component", t=st.t + 1)

    t = st.t + 1
    beta1_t = p.beta1_t(t)
    m = beta1_t * st.m + (1.0 - beta1_t) * g
    v = p.beta2 * st.v + (1.0 - p.beta2) * (g * g)
    m_hat = m / (1.0 - p.beta1 ** t)
    v_hat = v / (1.0 - p.beta2 ** t)
    root_v = np.sqrt(v_hat)

    if p.epsilon == 0.0:
        zero = v_hat == 0.0
        if np.any(zero & (m_hat != 0.0)):
            i = int(np.argmax(zero & (m_hat != 0.0)))
            raise DivisionHazardError(
                f"epsilon = 0 with v_hat = 0 but m_hat != 0 at coordinate {i}", t=t
            )
        ratio = np.where(zero, 0.0, m_hat / np.where(zero, 1.0, root_v))
    else:
        ratio = m_hat / (root_v + p.epsilon)

    w_after = st.w - (p.eta / math.sqrt(t)) * ratio
    new_state = AdamState(t=t, m=m, v=v, w=w_after)
    rec = StepRecord(
        t=t, w_before=st.w, g=g, e=e, m_hat=m_hat, v_hat=v_hat, w_after=w_after
    )
    return new_state, rec


def adam_run(
    w0,
    grad_oracle: GradOracle,
    p: HyperParams,
    T: int,
    stop_grad_norm: float | None = None,
    progress: Callable[[int, int], None] | None = None,
) -> Trajectory:
    """Run ADAM for exactly T steps (a fixed horizon replaces a convergence
    test) and return the full trajectory.

    `stop_grad_norm`, off by default, stops early once ||g||_2 falls below
    the threshold.  `progress(t, T)` is invoked every 1000 steps.
    """
    if T < 1:
        raise ValueError("T must be at least 1")
    st = AdamState.initial(w0)
    traj = Trajectory(d=len(st.w), params=p)
    for t in range(1, T + 1):
        e, g = grad_oracle(st.w, t)
        try:
            st, rec = adam_step(st, g, p, e=e)
        except (NumericInputError, DivisionHazardError) as err:
            err.t = t
            raise
        record_step(traj, rec)
        if progress is not None and t % 1000 == 0:
            progress(t, T)
        if stop_grad_norm is not None and np.linalg.norm(g) <= stop_grad_norm:
            break
    return traj


def gd_run(w0, grad_oracle: GradOracle, eta: float, T: int) -> tuple[np.ndarray, np.ndarray]:
    """Run plain descent for T steps; returns (per-step objectives, final w).

    Objective t is evaluated at the pre-update iterate, matching the
    trajectory convention of the adaptive run.
    """
    w = np.asarray(w0, dtype=np.float64).reshape(-1).copy()
    values = np.empty(T)
    for t in range(1, T + 1):
        e, g = grad_oracle(w, t)
        values[t - 1] = e
        w = gd_step(w, g, eta)
    return values, w


def momentum_run(
    w0, grad_oracle: GradOracle, eta: float, alpha: float, T: int
) -> tuple[np.ndarray, np.ndarray]:
    """Run the momentum method for T steps; returns (objectives, final w)."""
    st = MomentumState.initial(w0)
    values = np.empty(T)
    for t in range(1, T + 1):
        e, g = grad_oracle(st.w, t)
        values[t - 1] = e
        st = momentum_step(st, g, eta, alpha)
    return values, st.w


def verify_replay(traj: Trajectory) -> bool:
    """Replay the stored gradients through `adam_step` and demand that every
    stored iterate is reproduced bit-for-bit.  Raises on the first mismatch.
    """
    if not traj.records:
        return True
    st = AdamState.initial(traj.records[0].w_before)
    for rec in traj.records:
        st, replayed = adam_step(st, rec.g, traj.params, e=rec.e)
        for name in ("w_after", "m_hat", "v_hat"):
            a = getattr(replayed, name)
            b = getattr(rec, name)
            if not np.array_equal(a, b):
                raise AssertionError(
                    f"replay mismatch at t={rec.t} in {name}: {a} != {b}"
                )
    return True
