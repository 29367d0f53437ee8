"""Regret measurement, the three-term regret bound, the unproven
moment-ratio inequality, and the randomized counterexample search.

Bound-side quantities are always recomputed from recorded trajectories with
epsilon-free semantics: the stabilizer only affects how iterates were
generated, never how the bound terms are evaluated.

The moment-ratio inequality, per coordinate i of a T x d gradient matrix:

    sum_t m_hat[t,i]**2 / sqrt(t * v_hat[t,i])
        <=  2 / ((1 - gamma) * sqrt(1 - beta2)) * ||g[1:T, i]||_2

with gamma = beta1**2 / sqrt(beta2) < 1.  It is probed numerically, never
assumed: near-misses are re-evaluated with >= 160-bit software floats and
confirmed violations are serialized for replay.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from mpmath import mp, mpf, sqrt as mpsqrt

from .core import (
    AdamCheckError,
    GradSequence,
    HyperParams,
    STREAM_FUZZ_BASE,
    Trajectory,
    fmt17,
    parse_kv_text,
    seeded_rng,
)
from .problems import ConvexProblem, evaluate

__all__ = [
    "InsufficientDataError",
    "BoundReport",
    "ConjectureReport",
    "error_sum",
    "theorem_bound",
    "bound_reports_csv",
    "bound_report_text",
    "conjecture_sides",
    "conjecture_sides_exact",
    "conjecture_report_csv",
    "conjecture_report_text",
    "geometric_sum_closed_form",
    "geometric_sum_bound_check",
    "vhat_bound_check",
    "average_regret_series",
    "default_param_grid",
    "default_fuzz_grid",
    "FuzzCandidate",
    "NearMiss",
    "Violation",
    "FuzzSummary",
    "conjecture_fuzz",
    "fuzz_summary_text",
    "CounterexampleRecord",
    "write_counterexample",
    "load_counterexample",
    "replay_counterexample",
    "EXACT_PRECISION_BITS",
    "DEFAULT_SCREEN_FACTOR",
    "FUZZ_FAMILIES",
]

EXACT_PRECISION_BITS = 200      # significand bits for escalated re-evaluation
DEFAULT_SCREEN_FACTOR = 1e-6    # near-miss when slack < factor * rhs


class InsufficientDataError(AdamCheckError):
    """Too few data points for the requested series computation."""


# ---------------------------------------------------------------------------
# Regret and the three-term bound
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BoundReport:
    """Measured regret, measured diameters/gradient bounds, and the three
    bound terms for one run."""

    T: int
    d: int
    regret: float
    D_inf: float
    D_2: float
    G_inf: float
    G_2: float
    term1: float
    term2: float
    term3: float
    bound: float
    slack: float


def error_sum(
    traj: Trajectory, problem: ConvexProblem, w_star, T: int | None = None
) -> float:
    """Cumulative excess objective sum_t (e_t(w_t) - e_t(w*)), where w_t is
    the iterate at which the step-t gradient was taken."""
    if T is not None and T != traj.T:
        raise ValueError(f"horizon mismatch: trajectory has T={traj.T}, caller expects T={T}")
    w_star = np.asarray(w_star, dtype=np.float64).reshape(-1)
    if len(w_star) != traj.d:
        raise ValueError(f"w_star has length {len(w_star)}, trajectory d={traj.d}")
    total = 0.0
    for rec in traj.records:
        if math.isnan(rec.e):
            raise ValueError(f"record t={rec.t} carries no objective value")
        total += rec.e - evaluate(problem, w_star, rec.t)[0]
    return total


def _l2_diameter(pts: np.ndarray, chunk: int = 256) -> float:
    """Exact max pairwise 2-norm distance, chunked to bound memory."""
    sq = np.einsum("ij,ij->i", pts, pts)
    best = 0.0
    for lo in range(0, len(pts), chunk):
        hi = min(lo + chunk, len(pts))
        block = sq[lo:hi, None] + sq[None, :] - 2.0 * (pts[lo:hi] @ pts.T)
        best = max(best, float(block.max()))
    return math.sqrt(max(best, 0.0))


def theorem_bound(traj: Trajectory, w_star, problem: ConvexProblem) -> BoundReport:
    """Evaluate every piece of the regret bound on a finished run.

    The diameters are measured a posteriori over the realized iterates
    {w_0, ..., w_T} together with w*; the gradient bounds over the recorded
    gradients.  term2 is T-free; term1 uses the final v_hat; term3 uses the
    per-coordinate gradient-history norms.
    """
    if not traj.records:
        raise ValueError("trajectory is empty")
    p = traj.params
    T, d = traj.T, traj.d
    w_star = np.asarray(w_star, dtype=np.float64).reshape(-1)

    regret = error_sum(traj, problem, w_star)

    pts = np.vstack([traj.iterates(), w_star])
    d_inf = float(np.max(pts.max(axis=0) - pts.min(axis=0)))
    d_2 = _l2_diameter(pts)

    grads = traj.gradients()
    g_inf = float(np.max(np.abs(grads))) if grads.size else 0.0
    g_2 = float(np.max(np.linalg.norm(grads, axis=1))) if grads.size else 0.0

    v_hat_final = traj.records[-1].v_hat
    term1 = d_inf ** 2 / (2.0 * p.eta * (1.0 - p.beta1)) * float(
        np.sum(np.sqrt(T * v_hat_final))
    )
    term2 = d * d_inf ** 2 * g_inf / (
        2.0 * p.eta * (1.0 - p.beta1) * (1.0 - p.lam) ** 2
    )
    term3 = (
        p.eta
        * (1.0 + p.beta1)
        / ((1.0 - p.beta1) * math.sqrt(1.0 - p.beta2) * (1.0 - p.gamma))
        * float(np.sum(np.linalg.norm(grads, axis=0)))
    )
    bound = term1 + term2 + term3
    return BoundReport(
        T=T,
        d=d,
        regret=regret,
        D_inf=d_inf,
        D_2=d_2,
        G_inf=g_inf,
        G_2=g_2,
        term1=term1,
        term2=term2,
        term3=term3,
        bound=bound,
        slack=bound - regret,
    )


_BOUND_FIELDS = (
    "T", "d", "regret", "D_inf", "D_2", "G_inf", "G_2",
    "term1", "term2", "term3", "bound", "slack",
)


def bound_reports_csv(reports: list[BoundReport]) -> str:
    lines = [",".join(_BOUND_FIELDS)]
    for r in reports:
        cells = []
        for name in _BOUND_FIELDS:
            value = getattr(r, name)
            cells.append(str(value) if name in ("T", "d") else fmt17(value))
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


def bound_report_text(r: BoundReport) -> str:
    return "\n".join(
        [
            f"horizon T            : {r.T}",
            f"dimension d          : {r.d}",
            f"regret R(T)          : {fmt17(r.regret)}",
            f"measured D_inf       : {fmt17(r.D_inf)}",
            f"measured D_2         : {fmt17(r.D_2)}",
            f"measured G_inf       : {fmt17(r.G_inf)}",
            f"measured G_2         : {fmt17(r.G_2)}",
            f"term 1 (v_hat)       : {fmt17(r.term1)}",
            f"term 2 (lambda decay): {fmt17(r.term2)}",
            f"term 3 (grad norms)  : {fmt17(r.term3)}",
            f"bound (sum of terms) : {fmt17(r.bound)}",
            f"slack (bound - R(T)) : {fmt17(r.slack)}",
        ]
    )


# ---------------------------------------------------------------------------
# Moment-ratio inequality sides
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ConjectureReport:
    """Per-coordinate left/right sides of the moment-ratio inequality."""

    lhs: np.ndarray
    rhs: np.ndarray
    min_slack: float
    violated: bool


def _rhs_coefficient(p: HyperParams) -> float:
    return 2.0 / ((1.0 - p.gamma) * math.sqrt(1.0 - p.beta2))


def _sides_f64(
    g: np.ndarray, p: HyperParams, rhs_coeff: float | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """Double-precision evaluation of both sides for a T x d matrix.

    Runs the moment recursions (no weight update) and accumulates the ratio
    sum with the 0/0 -> 0 convention: v_hat = 0 forces m_hat = 0.
    """
    T, d = g.shape
    m = np.zeros(d)
    v = np.zeros(d)
    b1_pow = 1.0
    b2_pow = 1.0
    lam_pow = 1.0
    lhs = np.zeros(d)
    for t in range(1, T + 1):
        gt = g[t - 1]
        b1t = p.beta1 * lam_pow
        m = b1t * m + (1.0 - b1t) * gt
        v = p.beta2 * v + (1.0 - p.beta2) * gt * gt
        b1_pow *= p.beta1
        b2_pow *= p.beta2
        m_hat = m / (1.0 - b1_pow)
        v_hat = v / (1.0 - b2_pow)
        denom = np.sqrt(t * v_hat)
        lhs += np.where(v_hat > 0.0, m_hat * m_hat / np.where(denom > 0.0, denom, 1.0), 0.0)
        lam_pow *= p.lam
    coeff = _rhs_coefficient(p) if rhs_coeff is None else rhs_coeff
    rhs = coeff * np.sqrt(np.sum(g * g, axis=0))
    return lhs, rhs


def conjecture_sides_exact(
    seq: GradSequence,
    p: HyperParams,
    rhs_coeff: float | None = None,
    prec_bits: int = EXACT_PRECISION_BITS,
) -> tuple[list, list, float]:
    """Extended-precision evaluation of both sides (software floats with a
    >= 160-bit significand), used to rule out double rounding as the cause
    of an apparent violation.  Returns (lhs, rhs, min_slack) with the sides
    as mpmath values."""
    if prec_bits < 160:
        raise ValueError("escalated evaluation requires at least 160 bits")
    g = seq.g
    T, d = g.shape
    with mp.workprec(prec_bits):
        beta1, beta2, lam = mpf(p.beta1), mpf(p.beta2), mpf(p.lam)
        if rhs_coeff is None:
            gamma = beta1 ** 2 / mpsqrt(beta2)
            coeff = 2 / ((1 - gamma) * mpsqrt(1 - beta2))
        else:
            coeff = mpf(rhs_coeff)
        lhs, rhs = [], []
        for i in range(d):
            m = mpf(0)
            v = mpf(0)
            b1_pow = mpf(1)
            b2_pow = mpf(1)
            lam_pow = mpf(1)
            acc = mpf(0)
            sumsq = mpf(0)
            for t in range(1, T + 1):
                gt = mpf(float(g[t - 1, i]))
                b1t = beta1 * lam_pow
                m = b1t * m + (1 - b1t) * gt
                v = beta2 * v + (1 - beta2) * gt * gt
                b1_pow *= beta1
                b2_pow *= beta2
                m_hat = m / (1 - b1_pow)
                v_hat = v / (1 - b2_pow)
                if v_hat > 0:
                    acc += m_hat * m_hat / mpsqrt(t * v_hat)
                sumsq += gt * gt
                lam_pow *= lam
            lhs.append(acc)
            rhs.append(coeff * mpsqrt(sumsq))
        min_slack = min(float(r - l) for l, r in zip(lhs, rhs))
    return lhs, rhs, min_slack


def conjecture_sides(seq: GradSequence, p: HyperParams) -> ConjectureReport:
    """Both sides of the moment-ratio inequality for one gradient sequence.

    An apparent double-precision violation is only reported after it
    survives extended-precision re-evaluation.
    """
    lhs, rhs = _sides_f64(seq.g, p)
    min_slack = float(np.min(rhs - lhs)) if len(lhs) else math.inf
    violated = False
    if min_slack < 0.0:
        _, _, exact_slack = conjecture_sides_exact(seq, p)
        violated = exact_slack < 0.0
    return ConjectureReport(lhs=lhs, rhs=rhs, min_slack=min_slack, violated=violated)


def conjecture_report_csv(r: ConjectureReport) -> str:
    lines = ["i,lhs,rhs,slack"]
    for i in range(len(r.lhs)):
        lines.append(
            f"{i + 1},{fmt17(r.lhs[i])},{fmt17(r.rhs[i])},{fmt17(r.rhs[i] - r.lhs[i])}"
        )
    return "\n".join(lines) + "\n"


def conjecture_report_text(r: ConjectureReport) -> str:
    lines = [
        f"coordinates       : {len(r.lhs)}",
        f"min slack         : {fmt17(r.min_slack)}",
        f"violated          : {r.violated}",
    ]
    for i in range(len(r.lhs)):
        lines.append(
            f"  i={i + 1}: lhs={fmt17(r.lhs[i])} rhs={fmt17(r.rhs[i])}"
        )
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# Auxiliary chains used by the bound's derivation
# ---------------------------------------------------------------------------

def geometric_sum_closed_form(lam: float, T: int) -> float:
    """sum_{t=0}^{T-1} lam**t * t via the closed form
    ((T-1) lam**(T+1) - T lam**T + lam) / (lam - 1)**2."""
    if not 0 < lam < 1:
        raise ValueError("lam must lie in (0, 1)")
    if T < 1:
        raise ValueError("T must be at least 1")
    return ((T - 1) * lam ** (T + 1) - T * lam ** T + lam) / (lam - 1.0) ** 2


def geometric_sum_bound_check(p: HyperParams, T: int) -> tuple[float, float]:
    """Direct sum_{t=1..T} beta1_t/(1-beta1_t) * sqrt(t) next to its
    horizon-free majorant 1 / ((1-beta1)(1-lam)**2)."""
    if T < 1:
        raise ValueError("T must be at least 1")
    t = np.arange(1, T + 1, dtype=np.float64)
    b1t = p.beta1 * p.lam ** (t - 1.0)
    lhs = float(np.sum(b1t / (1.0 - b1t) * np.sqrt(t)))
    rhs = 1.0 / ((1.0 - p.beta1) * (1.0 - p.lam) ** 2)
    return lhs, rhs


def vhat_bound_check(traj: Trajectory, g_inf: float, rel_tol: float = 1e-12) -> bool:
    """True iff sqrt(v_hat[t, i]) <= g_inf * (1 + rel_tol) for every t, i.

    Precondition: every recorded |g[t, i]| <= g_inf; a violation of the
    precondition is an error naming the offending (t, i).
    """
    for rec in traj.records:
        over = np.abs(rec.g) > g_inf
        if np.any(over):
            i = int(np.argmax(over))
            raise ValueError(
                f"|g| = {abs(rec.g[i])} exceeds declared bound {g_inf} at (t={rec.t}, i={i + 1})"
            )
    limit = g_inf * (1.0 + rel_tol)
    return all(bool(np.all(np.sqrt(rec.v_hat) <= limit)) for rec in traj.records)


def average_regret_series(
    reports: list[BoundReport],
) -> tuple[list[tuple[int, float, float]], float]:
    """(T, R(T)/T, bound(T)/T) rows plus the log-log slope of bound(T)/T
    fitted over the largest decade of horizons (T >= max(T)/10)."""
    if len(reports) < 3:
        raise InsufficientDataError("need at least 3 reports to fit a rate")
    ts = [r.T for r in reports]
    if any(b <= a for a, b in zip(ts, ts[1:])):
        raise ValueError("reports must be ordered by strictly increasing T")
    if len({r.d for r in reports}) != 1:
        raise ValueError("reports must share one dimension")
    rows = [(r.T, r.regret / r.T, r.bound / r.T) for r in reports]
    cutoff = ts[-1] / 10.0
    sel = [(t, b) for (t, _, b) in rows if t >= cutoff]
    if len(sel) < 2:
        sel = [(t, b) for (t, _, b) in rows[-2:]]
    if any(b <= 0 for _, b in sel):
        raise ValueError("bound values must be positive for a log-log fit")
    x = np.log([t for t, _ in sel])
    y = np.log([b for _, b in sel])
    slope = float(np.polyfit(x, y, 1)[0])
    return rows, slope


# ---------------------------------------------------------------------------
# Default grids
# ---------------------------------------------------------------------------

def default_param_grid() -> list[HyperParams]:
    """Hyperparameter grid for bound experiments; lam stays close to 1 so
    the (1-lam)**-2 term remains finite at desk scale."""
    grid = []
    for beta1, beta2 in ((0.9, 0.999), (0.5, 0.9), (0.8, 0.99)):
        for lam in (0.999, 0.99):
            grid.append(
                HyperParams(eta=0.001, beta1=beta1, beta2=beta2, lam=lam, epsilon=1e-8)
            )
    return grid


def default_fuzz_grid() -> list[HyperParams]:
    """(beta1, beta2, lambda) triples for the counterexample search; all
    have beta1**2/sqrt(beta2) < 1, several close to the boundary."""
    triples = [
        (0.9, 0.999, 0.999),
        (0.9, 0.999, 0.9),
        (0.9, 0.99, 0.99),
        (0.8, 0.99, 0.999),
        (0.5, 0.9, 0.99),
        (0.3, 0.5, 0.9),
        (0.95, 0.9999, 0.999),
        (0.99, 0.9999, 0.9999),
        (0.7, 0.6, 0.95),
    ]
    return [
        HyperParams(eta=0.001, beta1=b1, beta2=b2, lam=lam, epsilon=1e-8)
        for b1, b2, lam in triples
    ]


# ---------------------------------------------------------------------------
# Counterexample records
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CounterexampleRecord:
    """Replayable snapshot of one inequality evaluation.

    `rhs_coeff` is normally the canonical 2/((1-gamma) sqrt(1-beta2));
    synthetic records used to exercise the detection machinery may carry a
    different coefficient and say so in the file.
    """

    label: str
    params: HyperParams
    T: int
    d: int
    g: np.ndarray
    g_inf_cap: float
    rhs_coeff: float
    lhs: np.ndarray
    rhs: np.ndarray
    min_slack: float
    exact_min_slack: float


def write_counterexample(path: str | Path, rec: CounterexampleRecord) -> None:
    p = rec.params
    lines = [
        "# moment-ratio inequality counterexample record",
        f"label = {rec.label}",
        f"eta = {fmt17(p.eta)}",
        f"beta1 = {fmt17(p.beta1)}",
        f"beta2 = {fmt17(p.beta2)}",
        f"lambda = {fmt17(p.lam)}",
        f"epsilon = {fmt17(p.epsilon)}",
        f"alpha = {fmt17(p.alpha)}",
        f"T = {rec.T}",
        f"d = {rec.d}",
        f"g_inf_cap = {fmt17(rec.g_inf_cap)}",
        f"rhs_coeff = {fmt17(rec.rhs_coeff)}",
        "lhs = " + ",".join(fmt17(v) for v in rec.lhs),
        "rhs = " + ",".join(fmt17(v) for v in rec.rhs),
        f"min_slack = {fmt17(rec.min_slack)}",
        f"exact_min_slack = {fmt17(rec.exact_min_slack)}",
    ]
    for t in range(rec.T):
        lines.append(f"g{t + 1} = " + ",".join(fmt17(v) for v in rec.g[t]))
    Path(path).write_text("\n".join(lines) + "\n")


def load_counterexample(path: str | Path) -> CounterexampleRecord:
    kv = parse_kv_text(Path(path).read_text())
    params = HyperParams(
        eta=float(kv["eta"]),
        beta1=float(kv["beta1"]),
        beta2=float(kv["beta2"]),
        lam=float(kv["lambda"]),
        epsilon=float(kv["epsilon"]),
        alpha=float(kv["alpha"]),
    )
    T, d = int(kv["T"]), int(kv["d"])
    g = np.array(
        [[float(c) for c in kv[f"g{t + 1}"].split(",")] for t in range(T)]
    ).reshape(T, d)
    return CounterexampleRecord(
        label=kv["label"],
        params=params,
        T=T,
        d=d,
        g=g,
        g_inf_cap=float(kv["g_inf_cap"]),
        rhs_coeff=float(kv["rhs_coeff"]),
        lhs=np.array([float(c) for c in kv["lhs"].split(",")]),
        rhs=np.array([float(c) for c in kv["rhs"].split(",")]),
        min_slack=float(kv["min_slack"]),
        exact_min_slack=float(kv["exact_min_slack"]),
    )


def replay_counterexample(path: str | Path) -> tuple[CounterexampleRecord, float]:
    """Re-evaluate a serialized record from its gradient matrix alone and
    return (record, recomputed min slack) for comparison against the
    recorded value."""
    rec = load_counterexample(path)
    lhs, rhs = _sides_f64(rec.g, rec.params, rhs_coeff=rec.rhs_coeff)
    return rec, float(np.min(rhs - lhs))


# ---------------------------------------------------------------------------
# Randomized counterexample search
# ---------------------------------------------------------------------------

FUZZ_FAMILIES = ("uniform", "gaussian", "sparse", "adversarial")


@dataclass(frozen=True)
class FuzzCandidate:
    """An externally supplied candidate pushed through the same screening,
    escalation, and serialization pipeline as random trials.

    `rhs_coeff=None` means the canonical coefficient; tests inject synthetic
    known-violating candidates by shrinking it.
    """

    label: str
    params: HyperParams
    seq: GradSequence
    rhs_coeff: float | None = None


@dataclass(frozen=True)
class NearMiss:
    label: str
    min_slack: float
    exact_min_slack: float
    outcome: str  # "cleared" or "confirmed"


@dataclass(frozen=True)
class Violation:
    label: str
    record: CounterexampleRecord
    path: str | None


@dataclass
class FuzzSummary:
    n_trials: int
    t_max: int
    d: int
    seed: int
    grid: list[HyperParams]
    family_counts: dict[str, int] = field(default_factory=dict)
    min_slack: float = math.inf
    argmin_label: str | None = None
    argmin_params: HyperParams | None = None
    argmin_seq: GradSequence | None = None
    min_rel_slack: float = math.inf
    argmin_rel_label: str | None = None
    near_misses: list[NearMiss] = field(default_factory=list)
    violations: list[Violation] = field(default_factory=list)

    @property
    def violation_found(self) -> bool:
        return len(self.violations) > 0


def _trial_sequence(
    seed: int, k: int, t_max: int, d: int, cap: float
) -> tuple[int, int, np.ndarray]:
    """(family index, T, T x d gradients) for trial k, fully determined by
    (seed, k)."""
    rng = seeded_rng(seed, STREAM_FUZZ_BASE + k)
    fam = rng.integers(len(FUZZ_FAMILIES))
    T = 1 + rng.integers(t_max)
    n = T * d
    if fam == 0:
        g = rng.uniform(-cap, cap, size=n).reshape(T, d)
    elif fam == 1:
        g = np.clip(0.5 * cap * rng.standard_normal(n), -cap, cap).reshape(T, d)
    elif fam == 2:
        keep = rng.uniform(0.05, 0.5)
        values = rng.uniform(-cap, cap, size=n)
        mask = rng.uniform(size=n) < keep
        g = (values * mask).reshape(T, d)
    else:
        # Long runs of tiny gradients (second moment decays) broken by full
        # scale spikes late in the sequence: the stress pattern for the
        # m_hat**2 / sqrt(v_hat) ratio.
        mag = 10.0 ** rng.uniform(-8.0, -2.0)
        g = rng.uniform(-mag, mag, size=n).reshape(T, d)
        n_spikes = 1 + rng.integers(3)
        for _ in range(n_spikes):
            pos = T // 2 + rng.integers(max(1, T - T // 2))
            coord = rng.integers(d)
            sign = 1.0 if rng.uniform() < 0.5 else -1.0
            g[min(pos, T - 1), coord] = sign * cap
    return fam, T, g


def _batch_sides(
    g: np.ndarray, t_arr: np.ndarray, params: list[HyperParams]
) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized double-precision sides for a batch of trials.

    g is (B, t_max, d) zero-padded beyond each trial's horizon; the ratio
    sum only accumulates while t <= T_b, and the zero padding leaves the
    gradient-history norms untouched.
    """
    b, t_max, d = g.shape
    beta1 = np.array([p.beta1 for p in params])[:, None]
    beta2 = np.array([p.beta2 for p in params])[:, None]
    lam = np.array([p.lam for p in params])[:, None]
    coeff = np.array([_rhs_coefficient(p) for p in params])[:, None]

    m = np.zeros((b, d))
    v = np.zeros((b, d))
    b1_pow = np.ones((b, 1))
    b2_pow = np.ones((b, 1))
    lam_pow = np.ones((b, 1))
    lhs = np.zeros((b, d))
    for t in range(1, t_max + 1):
        gt = g[:, t - 1, :]
        b1t = beta1 * lam_pow
        m = b1t * m + (1.0 - b1t) * gt
        v = beta2 * v + (1.0 - beta2) * gt * gt
        b1_pow = b1_pow * beta1
        b2_pow = b2_pow * beta2
        m_hat = m / (1.0 - b1_pow)
        v_hat = v / (1.0 - b2_pow)
        denom = np.sqrt(t * v_hat)
        term = np.where(v_hat > 0.0, m_hat * m_hat / np.where(denom > 0.0, denom, 1.0), 0.0)
        lhs += np.where((t_arr >= t)[:, None], term, 0.0)
        lam_pow = lam_pow * lam
    rhs = coeff * np.sqrt(np.sum(g * g, axis=1))
    return lhs, rhs


def _escalate(
    label: str,
    params: HyperParams,
    seq: GradSequence,
    rhs_coeff: float | None,
    double_slack: float,
    out_dir: Path | None,
    summary: FuzzSummary,
) -> None:
    """Extended-precision re-evaluation of a near-miss; confirmed violations
    are serialized for replay."""
    lhs_x, rhs_x, exact_slack = conjecture_sides_exact(seq, params, rhs_coeff=rhs_coeff)
    outcome = "confirmed" if exact_slack < 0.0 else "cleared"
    summary.near_misses.append(
        NearMiss(label=label, min_slack=double_slack, exact_min_slack=exact_slack, outcome=outcome)
    )
    if outcome != "confirmed":
        return
    lhs, rhs = _sides_f64(seq.g, params, rhs_coeff=rhs_coeff)
    record = CounterexampleRecord(
        label=label,
        params=params,
        T=seq.T,
        d=seq.d,
        g=np.asarray(seq.g),
        g_inf_cap=seq.g_inf_cap,
        rhs_coeff=_rhs_coefficient(params) if rhs_coeff is None else rhs_coeff,
        lhs=lhs,
        rhs=rhs,
        min_slack=float(np.min(rhs - lhs)),
        exact_min_slack=exact_slack,
    )
    path = None
    if out_dir is not None:
        ce_dir = Path(out_dir) / "counterexamples"
        ce_dir.mkdir(parents=True, exist_ok=True)
        path = str(ce_dir / f"ce_{label}.txt")
        write_counterexample(path, record)
    summary.violations.append(Violation(label=label, record=record, path=path))


def conjecture_fuzz(
    n_trials: int,
    t_max: int,
    d: int,
    param_grid: list[HyperParams],
    seed: int,
    screen_factor: float = DEFAULT_SCREEN_FACTOR,
    out_dir: str | Path | None = None,
    injected: list[FuzzCandidate] | None = None,
    g_inf_cap: float = 1.0,
    batch_size: int = 2048,
) -> FuzzSummary:
    """Randomized search for violations of the moment-ratio inequality.

    Trial k draws its gradient sequence from one of four families (uniform,
    clipped Gaussian, sparse with zero runs, tiny-runs-then-spike) using the
    stream derived from (seed, k), and cycles through `param_grid`.  Any
    coordinate with slack below `screen_factor * rhs` is re-evaluated in
    extended precision; only a confirmed negative slack counts as a
    violation.  Violations are findings, not failures.

    The global minimum slack, its argmin sequence, the relative-slack
    minimum over coordinates with rhs > 0, the near-miss escalation log,
    and all confirmed violations are returned in the summary.  Injected
    candidates run through the identical pipeline but are kept out of the
    random-trial minima.
    """
    if n_trials < 0:
        raise ValueError("n_trials must be nonnegative")
    if t_max < 1 or d < 1:
        raise ValueError("t_max and d must be positive")
    if not param_grid:
        raise ValueError("param_grid must be nonempty")
    for p in param_grid:
        if not p.gamma < 1:
            raise ValueError(f"grid entry has beta1**2/sqrt(beta2) = {p.gamma} >= 1")

    out_path = Path(out_dir) if out_dir is not None else None
    summary = FuzzSummary(
        n_trials=n_trials,
        t_max=t_max,
        d=d,
        seed=seed,
        grid=list(param_grid),
        family_counts={name: 0 for name in FUZZ_FAMILIES},
    )
    if out_path is not None:
        (out_path / "counterexamples").mkdir(parents=True, exist_ok=True)

    for cand in injected or []:
        lhs, rhs = _sides_f64(cand.seq.g, cand.params, rhs_coeff=cand.rhs_coeff)
        slack = rhs - lhs
        if np.any(slack < screen_factor * rhs):
            _escalate(
                cand.label, cand.params, cand.seq, cand.rhs_coeff,
                float(np.min(slack)), out_path, summary,
            )

    argmin_trial = -1
    argmin_rel_trial = -1
    n_grid = len(param_grid)
    for start in range(0, n_trials, batch_size):
        stop = min(start + batch_size, n_trials)
        count = stop - start
        g = np.zeros((count, t_max, d))
        t_arr = np.empty(count, dtype=np.int64)
        batch_params: list[HyperParams] = []
        fams = np.empty(count, dtype=np.int64)
        for j, k in enumerate(range(start, stop)):
            fam, T, gk = _trial_sequence(seed, k, t_max, d, g_inf_cap)
            fams[j] = fam
            t_arr[j] = T
            g[j, :T, :] = gk
            batch_params.append(param_grid[k % n_grid])
            summary.family_counts[FUZZ_FAMILIES[fam]] += 1

        lhs, rhs = _batch_sides(g, t_arr, batch_params)
        slack = rhs - lhs

        trial_min = slack.min(axis=1)
        j_best = int(np.argmin(trial_min))
        if trial_min[j_best] < summary.min_slack:
            summary.min_slack = float(trial_min[j_best])
            argmin_trial = start + j_best

        positive = rhs > 0.0
        if np.any(positive):
            rel = np.where(positive, slack / np.where(positive, rhs, 1.0), math.inf)
            rel_min = rel.min(axis=1)
            j_rel = int(np.argmin(rel_min))
            if rel_min[j_rel] < summary.min_rel_slack:
                summary.min_rel_slack = float(rel_min[j_rel])
                argmin_rel_trial = start + j_rel

        near = np.any(slack < screen_factor * rhs, axis=1)
        for j in np.flatnonzero(near):
            k = start + int(j)
            T = int(t_arr[j])
            seq = GradSequence(d=d, g=g[j, :T, :], g_inf_cap=g_inf_cap)
            _escalate(
                f"trial{k}", batch_params[j], seq, None,
                float(trial_min[j]), out_path, summary,
            )

    if argmin_trial >= 0:
        fam, T, gk = _trial_sequence(seed, argmin_trial, t_max, d, g_inf_cap)
        summary.argmin_label = f"trial{argmin_trial}"
        summary.argmin_params = param_grid[argmin_trial % n_grid]
        summary.argmin_seq = GradSequence(d=d, g=gk, g_inf_cap=g_inf_cap)
    if argmin_rel_trial >= 0:
        summary.argmin_rel_label = f"trial{argmin_rel_trial}"
    return summary


def fuzz_summary_text(s: FuzzSummary) -> str:
    lines = [
        "moment-ratio inequality fuzz summary",
        f"trials            : {s.n_trials}",
        f"t_max             : {s.t_max}",
        f"d                 : {s.d}",
        f"seed              : {s.seed}",
        f"grid size         : {len(s.grid)}",
    ]
    for idx, p in enumerate(s.grid):
        lines.append(
            f"  grid[{idx}]: beta1={fmt17(p.beta1)} beta2={fmt17(p.beta2)} "
            f"lambda={fmt17(p.lam)} gamma={fmt17(p.gamma)}"
        )
    for name in FUZZ_FAMILIES:
        lines.append(f"family {name:<11}: {s.family_counts.get(name, 0)}")
    lines.append(f"min slack         : {fmt17(s.min_slack)}")
    if s.argmin_label is not None:
        p = s.argmin_params
        lines.append(
            f"argmin            : {s.argmin_label} "
            f"(T={s.argmin_seq.T}, beta1={fmt17(p.beta1)}, beta2={fmt17(p.beta2)}, "
            f"lambda={fmt17(p.lam)})"
        )
    lines.append(f"min relative slack: {fmt17(s.min_rel_slack)}")
    if s.argmin_rel_label is not None:
        lines.append(f"argmin (relative) : {s.argmin_rel_label}")
    lines.append(f"near misses       : {len(s.near_misses)}")
    for nm in s.near_misses:
        lines.append(
            f"  {nm.label}: double slack={fmt17(nm.min_slack)} "
            f"exact slack={fmt17(nm.exact_min_slack)} -> {nm.outcome}"
        )
    lines.append(f"confirmed violations: {len(s.violations)}")
    for v in s.violations:
        where = v.path if v.path is not None else "(not serialized)"
        lines.append(f"  {v.label}: {where}")
    return "\n".join(lines) + "\n"
