"""Shared domain types, deterministic randomness, and trajectory recording.

All vector quantities are dense 1-D float64 arrays of a fixed dimension d.
Randomness everywhere in the library flows through :class:`RandomStream`,
a thin wrapper over the Philox 4x64 counter-based generator, so that every
experiment is reproducible from a 64-bit seed alone.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "AdamCheckError",
    "SequencingError",
    "NumericInputError",
    "DivisionHazardError",
    "HyperParams",
    "AdamState",
    "StepRecord",
    "Trajectory",
    "GradSequence",
    "RandomStream",
    "seeded_rng",
    "record_step",
    "trajectory_to_csv",
    "trajectory_from_csv",
    "fmt17",
    "parse_kv_text",
    "STREAM_MAIN",
    "STREAM_NOISE_BASE",
    "STREAM_FUZZ_BASE",
]


class AdamCheckError(Exception):
    """Base class for library-specific failures."""


class SequencingError(AdamCheckError):
    """Trajectory records must be appended with strictly consecutive t."""


class NumericInputError(AdamCheckError):
    """A gradient or weight vector contained a NaN or infinity."""

    def __init__(self, message: str, t: int | None = None):
        super().__init__(message)
        self.t = t


class DivisionHazardError(AdamCheckError):
    """Update denominator is exactly zero while the numerator is not."""

    def __init__(self, message: str, t: int | None = None):
        super().__init__(message)
        self.t = t


def fmt17(x: float) -> str:
    """Format a float with 17 significant digits (lossless for float64)."""
    return format(float(x), ".17g")


def _freeze(a) -> np.ndarray:
    """Copy to a read-only 1-D float64 array."""
    out = np.array(a, dtype=np.float64, copy=True).reshape(-1)
    out.setflags(write=False)
    return out


# ---------------------------------------------------------------------------
# Deterministic randomness
# ---------------------------------------------------------------------------
#
# Stream-id allocation (second half of the 128-bit Philox key).  Keeping the
# purposes in disjoint ranges means a seed can never alias two uses.
STREAM_MAIN = 0                # general-purpose stream for a seed
STREAM_NOISE_BASE = 1 << 32    # + t: per-step noise centers
STREAM_FUZZ_BASE = 2 << 32     # + trial index: fuzzer gradient sequences

_U53 = 2.0 ** -53


class RandomStream:
    """Deterministic random stream backed by Philox 4x64-10.

    The generator is counter-based, so (seed, stream) fully determines the
    output on every platform.  Conversions are fixed and documented:

    * uniform double in [0, 1):  ``(raw64 >> 11) * 2**-53``
    * uniform double in (0, 1]:  ``((raw64 >> 11) + 1) * 2**-53``
    * standard normal:           Box-Muller transform of two uniforms

    Platform-default generators (``random.Random``, ``np.random.default_rng``)
    are deliberately not used anywhere in the library.
    """

    def __init__(self, seed: int, stream: int = STREAM_MAIN):
        if not 0 <= seed < 2 ** 64:
            raise ValueError("seed must fit in 64 bits")
        if not 0 <= stream < 2 ** 64:
            raise ValueError("stream id must fit in 64 bits")
        self.seed = seed
        self.stream = stream
        self._bg = np.random.Philox(key=(stream << 64) | seed)

    def raw(self, n: int) -> np.ndarray:
        """Next n raw 64-bit words of the Philox stream."""
        return self._bg.random_raw(n)

    def uniform(self, low: float = 0.0, high: float = 1.0, size: int | None = None):
        """Uniform doubles on [low, high)."""
        n = 1 if size is None else int(size)
        u = (self.raw(n) >> np.uint64(11)) * _U53
        out = low + (high - low) * u
        return float(out[0]) if size is None else out

    def standard_normal(self, size: int | None = None):
        """Standard normals via the Box-Muller transform."""
        n = 1 if size is None else int(size)
        pairs = (n + 1) // 2
        w = self.raw(2 * pairs) >> np.uint64(11)
        u1 = (w[:pairs].astype(np.float64) + 1.0) * _U53  # (0, 1]: log-safe
        u2 = w[pairs:] * _U53
        r = np.sqrt(-2.0 * np.log(u1))
        theta = 2.0 * np.pi * u2
        z = np.concatenate([r * np.cos(theta), r * np.sin(theta)])[:n]
        return float(z[0]) if size is None else z

    def integers(self, n: int, size: int | None = None):
        """Uniform integers on {0, ..., n-1} via floor(u * n)."""
        if n <= 0:
            raise ValueError("n must be positive")
        u = self.uniform(size=1 if size is None else size)
        out = np.minimum((np.asarray(u) * n).astype(np.int64), n - 1)
        return int(out[0]) if size is None else out


def seeded_rng(seed: int, stream: int = STREAM_MAIN) -> RandomStream:
    """Deterministic random stream for (seed, stream)."""
    return RandomStream(seed, stream)


# ---------------------------------------------------------------------------
# Domain types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class HyperParams:
    """Scalar knobs of the adaptive optimizer.

    eta      base step size; the per-step size is eta / sqrt(t)
    beta1    first-moment decay, in (0, 1)
    beta2    second-moment decay, in (0, 1)
    lam      decay of the time-dependent first-moment rate
             beta1_t = beta1 * lam**(t-1), in (0, 1)
    epsilon  denominator stabilizer; 0 is allowed only for bound-evaluation
             style runs (the 0/0 update component is then defined as 0)
    alpha    momentum decay of the classical momentum method, in (0, 1);
             unused by the adaptive optimizer
    """

    eta: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    lam: float = 0.999
    epsilon: float = 1e-8
    alpha: float = 0.9

    def __post_init__(self):
        if not self.eta > 0:
            raise ValueError(f"eta must be positive, got {self.eta}")
        if not 0 < self.beta1 < 1:
            raise ValueError(f"beta1 must lie in (0, 1), got {self.beta1}")
        if not 0 < self.beta2 < 1:
            raise ValueError(f"beta2 must lie in (0, 1), got {self.beta2}")
        if not 0 < self.lam < 1:
            raise ValueError(f"lambda must lie in (0, 1), got {self.lam}")
        if not self.epsilon >= 0:
            raise ValueError(f"epsilon must be nonnegative, got {self.epsilon}")
        if not 0 < self.alpha < 1:
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")
        if not self.gamma < 1:
            raise ValueError(
                f"beta1**2 / sqrt(beta2) = {self.gamma} must be < 1 "
                "for the regret bound to be finite"
            )

    @property
    def gamma(self) -> float:
        """Decay ratio beta1**2 / sqrt(beta2); must stay below 1."""
        return self.beta1 ** 2 / math.sqrt(self.beta2)

    def beta1_t(self, t: int) -> float:
        """Time-decayed first-moment rate beta1 * lam**(t-1)."""
        return self.beta1 * self.lam ** (t - 1)


@dataclass
class AdamState:
    """Mutable per-run optimizer state: step counter, moments, weights."""

    t: int
    m: np.ndarray
    v: np.ndarray
    w: np.ndarray

    def __post_init__(self):
        self.m = np.asarray(self.m, dtype=np.float64).reshape(-1)
        self.v = np.asarray(self.v, dtype=np.float64).reshape(-1)
        self.w = np.asarray(self.w, dtype=np.float64).reshape(-1)
        if self.t < 0:
            raise ValueError("t must be nonnegative")
        if not len(self.m) == len(self.v) == len(self.w):
            raise ValueError("m, v, w must share one dimension")
        if self.t == 0 and (np.any(self.m != 0) or np.any(self.v != 0)):
            raise ValueError("moments must be zero at t = 0")
        if np.any(self.v < 0):
            raise ValueError("second-moment entries must be nonnegative")

    @classmethod
    def initial(cls, w0) -> "AdamState":
        w0 = np.asarray(w0, dtype=np.float64).reshape(-1)
        return cls(t=0, m=np.zeros_like(w0), v=np.zeros_like(w0), w=w0.copy())


@dataclass(frozen=True)
class StepRecord:
    """Everything observed during one optimizer step.

    Vectors are stored read-only; `e` is the objective value at `w_before`
    (NaN when the step was driven without an objective).
    """

    t: int
    w_before: np.ndarray
    g: np.ndarray
    e: float
    m_hat: np.ndarray
    v_hat: np.ndarray
    w_after: np.ndarray

    def __post_init__(self):
        if self.t < 1:
            raise ValueError("step records start at t = 1")
        for name in ("w_before", "g", "m_hat", "v_hat", "w_after"):
            object.__setattr__(self, name, _freeze(getattr(self, name)))
        d = len(self.w_before)
        for name in ("g", "m_hat", "v_hat", "w_after"):
            if len(getattr(self, name)) != d:
                raise ValueError(f"{name} has wrong length")
        if np.any(self.v_hat < 0):
            raise ValueError("v_hat entries must be nonnegative")


@dataclass
class Trajectory:
    """Append-only record of a full optimizer run."""

    d: int
    params: HyperParams
    records: list[StepRecord] = field(default_factory=list)

    @property
    def T(self) -> int:
        return len(self.records)

    def iterates(self) -> np.ndarray:
        """(T+1, d) array of weight vectors w_0, ..., w_T."""
        if not self.records:
            raise ValueError("empty trajectory has no iterates")
        rows = [self.records[0].w_before] + [r.w_after for r in self.records]
        return np.vstack(rows)

    def gradients(self) -> np.ndarray:
        """(T, d) matrix whose row t-1 is the step-t gradient."""
        return np.vstack([r.g for r in self.records]) if self.records else np.zeros((0, self.d))


def record_step(traj: Trajectory, rec: StepRecord) -> Trajectory:
    """Append one step record, enforcing consecutive time stamps."""
    expected = traj.records[-1].t + 1 if traj.records else 1
    if rec.t != expected:
        raise SequencingError(
            f"expected record t={expected}, got t={rec.t}"
        )
    if len(rec.w_before) != traj.d:
        raise ValueError(f"record dimension {len(rec.w_before)} != trajectory d={traj.d}")
    traj.records.append(rec)
    return traj


# ---------------------------------------------------------------------------
# Gradient sequences (objective-free inputs for the inequality checker)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GradSequence:
    """Externally supplied T x d gradient matrix with a declared sup bound."""

    d: int
    g: np.ndarray
    g_inf_cap: float

    def __post_init__(self):
        g = np.array(self.g, dtype=np.float64, copy=True)
        if g.ndim == 1:
            g = g.reshape(-1, 1)
        if g.ndim != 2 or g.shape[1] != self.d:
            raise ValueError(f"gradient matrix must be T x {self.d}")
        g.setflags(write=False)
        object.__setattr__(self, "g", g)
        if not self.g_inf_cap > 0:
            raise ValueError("g_inf_cap must be positive")
        if g.size and np.max(np.abs(g)) > self.g_inf_cap:
            raise ValueError(
                f"max |g| = {np.max(np.abs(g))} exceeds declared cap {self.g_inf_cap}"
            )

    @property
    def T(self) -> int:
        return self.g.shape[0]


# ---------------------------------------------------------------------------
# Trajectory CSV (one row per (t, i), i is 1-based)
# ---------------------------------------------------------------------------

TRAJECTORY_HEADER = "t,i,w_before,g,e,m_hat,v_hat,w_after"


def trajectory_to_csv(traj: Trajectory) -> str:
    lines = [TRAJECTORY_HEADER]
    for rec in traj.records:
        for i in range(traj.d):
            lines.append(
                f"{rec.t},{i + 1},{fmt17(rec.w_before[i])},{fmt17(rec.g[i])},"
                f"{fmt17(rec.e)},{fmt17(rec.m_hat[i])},{fmt17(rec.v_hat[i])},"
                f"{fmt17(rec.w_after[i])}"
            )
    return "\n".join(lines) + "\n"


def trajectory_from_csv(text: str, params: HyperParams) -> Trajectory:
    """Rebuild a trajectory from its CSV serialization.

    The CSV does not carry the hyperparameters, so they are supplied by the
    caller.
    """
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0] != TRAJECTORY_HEADER:
        raise ValueError("missing or malformed trajectory header")
    by_t: dict[int, dict[int, list[str]]] = {}
    for ln in lines[1:]:
        parts = ln.split(",")
        if len(parts) != 8:
            raise ValueError(f"malformed trajectory row: {ln!r}")
        t, i = int(parts[0]), int(parts[1])
        by_t.setdefault(t, {})[i] = parts[2:]
    if not by_t:
        raise ValueError("trajectory CSV has no data rows")
    d = max(max(cols) for cols in by_t.values())
    traj = Trajectory(d=d, params=params)
    for t in sorted(by_t):
        cols = by_t[t]
        if sorted(cols) != list(range(1, d + 1)):
            raise ValueError(f"t={t} is missing coordinate rows")
        def col(k: int) -> np.ndarray:
            return np.array([float(cols[i][k]) for i in range(1, d + 1)])
        rec = StepRecord(
            t=t,
            w_before=col(0),
            g=col(1),
            e=float(cols[1][2]),
            m_hat=col(3),
            v_hat=col(4),
            w_after=col(5),
        )
        record_step(traj, rec)
    return traj


# ---------------------------------------------------------------------------
# Key-value config text (shared by problem specs and run configs)
# ---------------------------------------------------------------------------

def parse_kv_text(text: str) -> dict[str, str]:
    """Parse `key = value` lines; '#' starts a comment, blank lines ignored."""
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = line.split("=", 1)
        key = key.strip()
        if not key:
            raise ValueError(f"line {lineno}: empty key")
        if key in out:
            raise ValueError(f"line {lineno}: duplicate key {key!r}")
        out[key] = value.strip()
    return out
