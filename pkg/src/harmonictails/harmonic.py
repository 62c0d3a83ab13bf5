"""Constructing positive harmonic functions for banded nonnegative kernels.

The central object is f(i) = E_i prod_n Q(X_n, Z+), the expected product of
row masses along a trajectory of the embedded chain.  When the log masses
delta(i) = log Q(i, Z+) vanish outside a finite set and the chain drifts
upward, the product converges on almost every path and f is harmonic for Q
with f(i) -> 1.

Two constructions are provided: direct Monte Carlo over trajectories with a
certified stopping level (the product can no longer change more than a set
tolerance once the path climbs high enough), and a truncated linear solve
with boundary value one above the truncation, cross-checked by doubling the
truncation.  A closed form covers the reflected simple walk with one
perturbed weight at the origin.

`check_conditions` evaluates the sufficient conditions under which the
product construction is guaranteed to work: summability of |delta|, a
uniform stochastic minorant of the jump laws with positive mean, a
truncated-drift condition with an integrable majorant of the downward
jumps, and finiteness of the exponential local-time moments
E_i exp(delta_plus_total * ell(i)) at the states carrying positive delta.
The last is checked through two-sided bounds on return probabilities
obtained from sandwich solves on growing windows.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy.linalg import solve_banded

from .errors import (
    ConvergenceError,
    NoPositiveHarmonicError,
    SolverFailure,
    StateRangeError,
    UnsupportedInputError,
)
from .kernels import (
    HomogeneousTail,
    ParametricTail,
    StochasticKernel,
    TransitionKernel,
    _as_state_fn,
)
from .ladder import LatticeWalk, ruin_exponent

_DELTA_EPS = 1e-15


@dataclass(frozen=True)
class HarmonicEstimate:
    """A computed harmonic function on a range of states.

    ``values`` maps state to f(i).  ``boundary_value`` extends the function
    above the truncation (the linear solve pins f to one there).  Monte
    Carlo estimates carry per-state standard errors; solves carry the max
    harmonicity residual actually achieved.
    """

    values: dict[int, float]
    method: str  # "monte-carlo" | "linear-solve" | "closed-form"
    truncation: int
    std_errors: dict[int, float] | None = None
    residual: float | None = None
    boundary_value: float | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.method not in ("monte-carlo", "linear-solve", "closed-form"):
            raise UnsupportedInputError(f"unknown method {self.method!r}")
        bad = [i for i, v in self.values.items() if not (v >= 0.0 and math.isfinite(v))]
        if bad:
            raise UnsupportedInputError(
                f"harmonic values must be finite and nonnegative (state {bad[0]})"
            )

    def value(self, i: int) -> float:
        if i in self.values:
            return self.values[i]
        if self.boundary_value is not None and i > self.truncation:
            return self.boundary_value
        raise StateRangeError(f"state {i} outside the estimated range")

    def states(self) -> list[int]:
        return sorted(self.values)

    def array(self, lo: int, hi: int) -> np.ndarray:
        return np.array([self.value(i) for i in range(lo, hi + 1)])


# ---------------------------------------------------------------------------
# jump-law envelopes


def _collect_rows(kernel: TransitionKernel, probe: int = 64) -> np.ndarray:
    """Probability rows of the embedded chain, including tail samples."""
    masses = kernel.weights.sum(axis=1, keepdims=True)
    rows = [kernel.weights / masses]
    if kernel.tail is not None:
        if isinstance(kernel.tail, HomogeneousTail):
            t = kernel.tail.row
            rows.append((t / t.sum())[None, :])
        else:
            sampled = []
            for i in range(kernel.truncation + 1, kernel.truncation + 1 + probe):
                t = kernel.tail.row_at(i)
                sampled.append(t / t.sum())
            rows.append(np.array(sampled))
    return np.vstack(rows)


def jump_minorant(kernel: TransitionKernel, probe: int = 64,
                  extra_rows: np.ndarray | None = None) -> LatticeWalk:
    """Greatest common stochastic minorant of the jump laws.

    Built from the pointwise infimum of the upper tail functions
    P{jump > j} over all represented rows (plus tail samples).  The result
    is a genuine step law on the band, stochastically below every row.
    """
    rows = _collect_rows(kernel, probe)
    if extra_rows is not None:
        rows = np.vstack([rows, extra_rows])
    # tails[.., c] = P{jump > offsets[c]}
    tails = rows[:, ::-1].cumsum(axis=1)[:, ::-1]
    tails = np.hstack([tails, np.zeros((rows.shape[0], 1))])[:, 1:]
    inf_tail = tails.min(axis=0)
    full = np.concatenate([[1.0], inf_tail])  # prepend P{jump > -band_lo - 1} = 1
    pmf = full[:-1] - full[1:]
    pmf = np.clip(pmf, 0.0, None)
    pmf = pmf / pmf.sum()
    return LatticeWalk(lo=-kernel.band_lo, pmf=pmf)


def jump_down_majorant(kernel: TransitionKernel, probe: int = 64) -> tuple[np.ndarray, float]:
    """Pointwise-supremum majorant of the downward jump tails.

    Returns (Z, mean) where Z[j] = sup_i P{jump <= -j} for j = 1..band_lo
    and mean = sum_j Z[j] bounds the expected downward overshoot.
    """
    rows = _collect_rows(kernel, probe)
    L = kernel.band_lo
    Z = np.zeros(L + 1)
    for j in range(1, L + 1):
        Z[j] = rows[:, : L - j + 1].sum(axis=1).max() if L - j + 1 > 0 else 0.0
    return Z[1:], float(Z[1:].sum())


def escape_probability(minorant: LatticeWalk) -> float:
    """Certified lower bound on inf_i P_i{chain stays strictly above i forever}.

    Couples the chain with the i.i.d. minorant walk: after a first step of
    size k >= 1 the walk survives unless its running minimum ever drops by
    k, which the Lundberg bound controls.  Returns 0 when the minorant has
    nonpositive mean (no certificate available).
    """
    if minorant.mean <= 0:
        return 0.0
    r = ruin_exponent(minorant)
    off = minorant.offsets
    pos = off >= 1
    if r == math.inf:
        return float(minorant.pmf[pos].sum())
    return float(minorant.pmf[pos] @ (1.0 - np.exp(-r * off[pos])))


# ---------------------------------------------------------------------------
# return probabilities by sandwich solves


def _hitting_system(P_rows, band_lo, band_hi, state_lo, j, T, boundary):
    """Solve H(x) = P{hit j from x} on [state_lo, T] with given upper boundary."""
    n = T - state_lo + 1
    W = band_lo + band_hi + 1
    ab = np.zeros((band_lo + band_hi + 1, n))
    u = band_hi
    ab[u, :] = 1.0
    b = np.zeros(n)
    jdx = j - state_lo
    for c in range(W):
        off = c - band_lo
        if off == 0:
            col = P_rows[:, c]
            ab[u, :] -= col
            continue
        vals = P_rows[:, c]
        x = np.arange(n)
        y = x + off
        inside = (y >= 0) & (y < n)
        ab[u - off, y[inside]] -= vals[x[inside]]
        out_hi = y >= n
        if out_hi.any():
            states_above = y[out_hi] + state_lo
            b[x[out_hi]] += vals[x[out_hi]] * boundary(states_above)
    # pin H(j) = 1: clear row j inside the band, put a 1 on the diagonal
    for off in range(-band_lo, band_hi + 1):
        y = jdx + off
        if 0 <= y < n:
            ab[u - off, y] = 1.0 if off == 0 else 0.0
    b[jdx] = 1.0
    H = solve_banded((band_lo, band_hi), ab, b)
    return H


def return_probability_bounds(
    P: StochasticKernel,
    j: int,
    tol: float = 1e-10,
    minorant: LatticeWalk | None = None,
    max_doublings: int = 10,
) -> tuple[float, float]:
    """Two-sided bounds on the probability of ever returning to state j.

    The hitting probabilities are solved on a window [state_lo, T] twice:
    once with boundary 0 above the window (underestimate) and once with the
    Lundberg descent bound exp(-r (y - j)) (overestimate).  The window
    doubles until the bounds close to ``tol``.  Without a positive-mean
    minorant there is no certificate and the trivial (0, 1) is returned.
    """
    if minorant is None:
        minorant = jump_minorant(P)
    if minorant.mean <= 0:
        return (0.0, 1.0)
    r = ruin_exponent(minorant)
    margin = 26 if r == math.inf else int(math.ceil(36.0 / r)) + 4
    T = j + margin
    lo = P.state_lo

    for _ in range(max_doublings):
        n = T - lo + 1
        rows = np.array([P.row(i) for i in range(lo, T + 1)])
        masses = rows.sum(axis=1, keepdims=True)
        rows = rows / masses

        if r == math.inf:
            bound = lambda ys: np.zeros(len(ys))
        else:
            bound = lambda ys: np.minimum(1.0, np.exp(-r * (ys - j)))
        H_lo = _hitting_system(rows, P.band_lo, P.band_hi, lo, j, T, lambda ys: np.zeros(len(ys)))
        H_hi = _hitting_system(rows, P.band_lo, P.band_hi, lo, j, T, bound)

        def first_step(H, boundary):
            row = rows[j - lo]
            acc = 0.0
            for c in np.flatnonzero(row):
                y = j + c - P.band_lo
                if y <= T:
                    acc += row[c] * H[y - lo]
                else:
                    acc += row[c] * float(boundary(np.array([y]))[0])
            return acc

        r_lo = max(0.0, first_step(H_lo, lambda ys: np.zeros(len(ys))))
        r_hi = min(1.0, first_step(H_hi, bound))
        if r_hi - r_lo <= tol:
            return (r_lo, r_hi)
        T = lo + 2 * (T - lo)
    raise ConvergenceError(
        f"return-probability sandwich for state {j} did not close below {tol:.1e}"
    )


# ---------------------------------------------------------------------------
# sufficient conditions


@dataclass(frozen=True)
class ConditionReport:
    """Checked sufficient conditions for the product construction.

    Verdict flags are computed by the pure helpers below from the bounds
    stored here, so tightening any bound can only move a verdict from
    false to true, never the reverse.
    """

    sum_abs_delta: float
    delta_plus_sum: float
    minorant: LatticeWalk
    minorant_mean: float
    escape_prob_lower: float
    gamma_available: float
    drift_eps: float
    drift_M: int
    zeta_tails: np.ndarray
    zeta_mean: float
    return_prob_bounds: dict[int, tuple[float, float]]
    local_time_moment_bound: dict[tuple[int, float], float]
    prop_2_5_holds: bool
    prop_2_7_holds: bool
    thm_2_4_applicable: bool
    notes: tuple[str, ...] = ()


def minorant_verdict(minorant_mean: float) -> bool:
    return minorant_mean > 0.0


def drift_verdict(drift_eps: float, zeta_mean: float) -> bool:
    return drift_eps > 0.0 and zeta_mean < math.inf


def limit_theorem_verdict(
    sum_abs_delta: float,
    minorant_mean: float,
    delta_plus_sum: float,
    return_prob_uppers: Iterable[float],
) -> bool:
    """All hypotheses certified: summable |delta|, a positive-mean minorant
    (which yields the strong law escape and bounded mean local times), and
    e^{delta} r_i < 1 at every state i carrying positive delta, so the
    exponential local-time moments there are finite."""
    if not sum_abs_delta < math.inf:
        return False
    if not minorant_mean > 0.0:
        return False
    factor = math.exp(delta_plus_sum)
    return all(factor * r < 1.0 for r in return_prob_uppers)


def check_conditions(
    kernel: TransitionKernel,
    family=None,
    probe: int = 64,
    return_tol: float = 1e-8,
) -> ConditionReport:
    notes = []
    lo, K = kernel.state_lo, kernel.truncation
    deltas = np.array([kernel.delta(i) for i in range(lo, K + 1)])
    tail_bound = kernel.tail.delta_abs_bound() if kernel.tail is not None else 0.0
    if tail_bound == math.inf:
        notes.append("tail rule carries no certified |delta| bound; sums treated as infinite")
    sum_abs = float(np.abs(deltas).sum()) + tail_bound
    delta_plus = float(np.clip(deltas, 0.0, None).sum()) + tail_bound

    extra = None
    if family is not None and getattr(family, "limit_pmf", None) is not None:
        width = kernel.band_lo + kernel.band_hi + 1
        row = np.asarray(family.limit_pmf, dtype=float)
        if row.size == width:
            extra = row[None, :]
    minor = jump_minorant(kernel, probe=probe, extra_rows=extra)
    p_escape = escape_probability(minor)
    gamma_avail = math.log(1.0 / (1.0 - p_escape)) if p_escape > 0 else 0.0

    zeta_tails, zeta_mean = jump_down_majorant(kernel, probe=probe)

    rows = _collect_rows(kernel, probe)
    offsets = kernel.offsets.astype(float)
    drift_eps, drift_M = -math.inf, 0
    for M in range(0, kernel.band_hi + 1):
        mask = offsets <= M
        eps = float((rows[:, mask] * offsets[mask]).sum(axis=1).min())
        if eps > drift_eps:
            drift_eps, drift_M = eps, M

    support = [int(i) for i in range(lo, K + 1) if deltas[i - lo] > _DELTA_EPS]
    if 0.0 < tail_bound < math.inf:
        notes.append(
            "positive log masses may persist beyond the represented rows; "
            "local-time moment checks cover represented states only"
        )
    P = kernel.embed()
    rp: dict[int, tuple[float, float]] = {}
    lt: dict[tuple[int, float], float] = {}
    for i in support:
        b = return_probability_bounds(P, i, tol=return_tol, minorant=minor)
        rp[i] = b
        factor = math.exp(delta_plus)
        if factor * b[1] < 1.0:
            lt[(i, delta_plus)] = factor * (1.0 - b[1]) / (1.0 - factor * b[1])
        else:
            lt[(i, delta_plus)] = math.inf

    p25 = minorant_verdict(minor.mean)
    p27 = drift_verdict(drift_eps, zeta_mean)
    thm = limit_theorem_verdict(
        sum_abs, minor.mean, delta_plus, [b[1] for b in rp.values()]
    )
    return ConditionReport(
        sum_abs_delta=sum_abs,
        delta_plus_sum=delta_plus,
        minorant=minor,
        minorant_mean=minor.mean,
        escape_prob_lower=p_escape,
        gamma_available=gamma_avail,
        drift_eps=drift_eps,
        drift_M=drift_M,
        zeta_tails=zeta_tails,
        zeta_mean=zeta_mean,
        return_prob_bounds=rp,
        local_time_moment_bound=lt,
        prop_2_5_holds=p25,
        prop_2_7_holds=p27,
        thm_2_4_applicable=thm,
        notes=tuple(notes),
    )


# ---------------------------------------------------------------------------
# linear solve


def build_solve(
    kernel: TransitionKernel,
    K: int,
    tol: float = 1e-10,
    check_doubling: bool = True,
    doubling_tol: float = 1e-6,
) -> HarmonicEstimate:
    """Solve f = Q f on [state_lo, K] with f pinned to one above K.

    The system is banded and solved directly.  A solution with negative
    entries means no positive harmonic function is compatible with the
    boundary (the perturbation is too strong); disagreement between the
    solves at K and 2K on the lower half means the boundary at K has not
    yet decoupled.  Both conditions raise :class:`SolverFailure`.
    """
    f_K = _solve_truncated(kernel, K)
    est_meta: dict = {}
    if check_doubling:
        if kernel.has_row(2 * K):
            f_2K = _solve_truncated(kernel, 2 * K)
            half = K // 2
            lo = kernel.state_lo
            a = f_K[: half - lo + 1]
            b = f_2K[: half - lo + 1]
            disagreement = float(np.max(np.abs(a - b) / np.maximum(1.0, np.abs(a))))
            est_meta["doubling_disagreement"] = disagreement
            if disagreement > doubling_tol:
                raise SolverFailure(
                    f"solutions at truncations {K} and {2 * K} disagree by "
                    f"{disagreement:.3e} on the lower half; the boundary has not decoupled",
                    reason="doubling",
                    diagnostics={"disagreement": disagreement, "K": K},
                )
        else:
            est_meta["doubling_disagreement"] = None

    lo = kernel.state_lo
    values = {lo + k: float(v) for k, v in enumerate(f_K)}
    est = HarmonicEstimate(
        values=values,
        method="linear-solve",
        truncation=K,
        boundary_value=1.0,
        meta=est_meta,
    )
    res = verify_harmonicity(kernel, est, range(lo, K + 1))
    if res > max(tol, 1e-9):
        raise SolverFailure(
            f"harmonicity residual {res:.3e} exceeds tolerance after the solve",
            reason="residual",
            diagnostics={"residual": res},
        )
    return HarmonicEstimate(
        values=values,
        method="linear-solve",
        truncation=K,
        boundary_value=1.0,
        residual=res,
        meta=est_meta,
    )


def _solve_truncated(kernel: TransitionKernel, K: int) -> np.ndarray:
    lo = kernel.state_lo
    if not kernel.has_row(K):
        raise StateRangeError(f"kernel has no rows up to the requested truncation {K}")
    if kernel.tail is not None:
        for i in (K + 1, K + 2):
            m = kernel.tail.row_at(i).sum()
            if abs(math.log(m)) > 1e-9:
                raise UnsupportedInputError(
                    f"tail row at {i} has mass {m:.17g}; boundary value 1 above the "
                    "truncation needs asymptotically stochastic rows"
                )
    n = K - lo + 1
    bl, bh = kernel.band_lo, kernel.band_hi
    W = bl + bh + 1
    rows = np.array([kernel.row(i) for i in range(lo, K + 1)])
    ab = np.zeros((W, n))
    u = bh
    ab[u, :] = 1.0
    b = np.zeros(n)
    x = np.arange(n)
    for c in range(W):
        off = c - bl
        vals = rows[:, c]
        if off == 0:
            ab[u, :] -= vals
            continue
        y = x + off
        inside = (y >= 0) & (y < n)
        ab[u - off, y[inside]] -= vals[x[inside]]
        above = y >= n
        if above.any():
            b[x[above]] += vals[x[above]]  # boundary value 1
        below = y < 0
        if below.any() and np.any(vals[x[below]] > 0):
            raise UnsupportedInputError(
                "kernel places weight below its own represented range"
            )
    try:
        f = solve_banded((bl, bh), ab, b)
    except np.linalg.LinAlgError as exc:
        raise SolverFailure(f"banded solve failed: {exc}", reason="singular") from exc
    if not np.all(np.isfinite(f)):
        raise SolverFailure(
            "solution overflowed; values grow without bound as the truncation moves",
            reason="non-finite",
        )
    neg = f.min()
    if neg < -1e-9 * max(1.0, float(np.abs(f).max())):
        raise SolverFailure(
            f"solution has negative entries (min {neg:.6g}); no positive harmonic "
            "function matches the boundary",
            reason="negative-values",
            diagnostics={"min_value": float(neg)},
        )
    return np.clip(f, 0.0, None)


def verify_harmonicity(kernel: TransitionKernel, f, states: Iterable[int]) -> float:
    """max_i |(Q f)(i) - f(i)| / max(1, f(i)) over the given states."""
    fn = _as_state_fn(f)
    worst = 0.0
    for i in states:
        fi = fn(i)
        resid = abs(kernel.apply(fn, i) - fi) / max(1.0, fi)
        if resid > worst:
            worst = resid
    return worst


# ---------------------------------------------------------------------------
# Monte Carlo


def _philox(seed: int, salt: int, tag: int) -> np.random.Generator:
    key = np.array([seed % 2**64, ((salt << 48) ^ tag) % 2**64], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def _sampling_tables(P: StochasticKernel, lo: int, hi: int):
    """cdf table and offset array for states lo..hi of a stochastic kernel."""
    rows = np.array([P.row(i) for i in range(lo, hi + 1)])
    masses = rows.sum(axis=1, keepdims=True)
    rows = rows / masses
    cdf = rows.cumsum(axis=1)
    cdf[:, -1] = 1.0
    return cdf


def _run_paths(P, score, score_lo, start, stop_level, n_paths, horizon, rng):
    """Trajectories from ``start`` accumulating score(X_n) until the path
    climbs above ``stop_level`` or the horizon hits.  Returns the per-path
    accumulated scores and the number of paths the horizon cut short."""
    lo = P.state_lo
    cdf = _sampling_tables(P, lo, stop_level)
    offsets = P.offsets
    states = np.full(n_paths, start, dtype=np.int64)
    totals = np.full(n_paths, score[start - score_lo], dtype=float)
    active = states <= stop_level
    for _ in range(horizon):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        s = states[idx]
        u = rng.random(idx.size)
        choice = (u[:, None] >= cdf[s - lo]).sum(axis=1)
        ns = s + offsets[choice]
        totals[idx] += score[ns - score_lo]
        states[idx] = ns
        active[idx] = ns <= stop_level
    return totals, int(active.sum()), states


def _stop_level(support_top: int, minorant: LatticeWalk, return_tol: float) -> int:
    """Level above which the chain revisits ``support_top`` or below with
    probability at most ``return_tol`` (Lundberg bound via the minorant)."""
    if minorant.mean <= 0:
        raise UnsupportedInputError(
            "no positive-drift minorant: cannot certify Monte Carlo termination"
        )
    r = ruin_exponent(minorant)
    if r == math.inf:
        return support_top + 1
    return support_top + int(math.ceil(math.log(1.0 / return_tol) / r)) + 1


def build_mc(
    kernel: TransitionKernel,
    states: Sequence[int],
    n_paths: int,
    horizon: int,
    seed: int,
    return_tol: float = 1e-8,
) -> HarmonicEstimate:
    """Monte Carlo estimate of f(i) = E_i exp(sum_n delta(X_n)).

    Each path runs the embedded chain, adding the log row mass at every
    visited state, until it climbs above a stopping level from which the
    remaining contribution is certifiably below ``return_tol``.  Paths the
    horizon cuts short keep their partial product and are counted; more
    than 1% of them sets a warning flag on the estimate.
    """
    P = kernel.embed()
    lo = kernel.state_lo

    deltas = np.array([kernel.delta(i) for i in range(lo, kernel.truncation + 1)])
    if kernel.tail is not None and kernel.tail.delta_abs_bound() != 0.0:
        raise UnsupportedInputError("tail rows must be stochastic for the path product")
    nz = np.flatnonzero(np.abs(deltas) > _DELTA_EPS)
    support_top = lo + int(nz[-1]) if nz.size else lo

    minor = jump_minorant(P)
    stop = _stop_level(support_top, minor, return_tol)
    if not P.has_row(stop):
        raise StateRangeError(
            f"kernel rows end before the certified stopping level {stop}"
        )

    score_lo = lo
    score_hi = stop + kernel.band_hi
    score = np.zeros(score_hi - score_lo + 1)
    top = min(kernel.truncation, score_hi)
    score[: top - score_lo + 1] = deltas[: top - lo + 1]

    values, errs, exhausted = {}, {}, {}
    for s in states:
        rng = _philox(seed, salt=1, tag=s)
        totals, n_exhausted, _ = _run_paths(
            P, score, score_lo, s, stop, n_paths, horizon, rng
        )
        with np.errstate(over="ignore"):
            w = np.exp(totals)
        values[int(s)] = float(w.mean())
        errs[int(s)] = float(w.std(ddof=1) / math.sqrt(n_paths)) if n_paths > 1 else 0.0
        exhausted[int(s)] = n_exhausted

    warn = any(v > 0.01 * n_paths for v in exhausted.values())
    return HarmonicEstimate(
        values=values,
        method="monte-carlo",
        truncation=kernel.truncation,
        std_errors=errs,
        meta={
            "n_paths": n_paths,
            "horizon": horizon,
            "seed": seed,
            "stop_level": stop,
            "exhausted": exhausted,
            "horizon_warning": warn,
        },
    )


def local_time_moment_mc(
    kernel: TransitionKernel,
    i: int,
    gamma: float,
    n_paths: int,
    horizon: int,
    seed: int,
    return_tol: float = 1e-8,
) -> tuple[float, float, float]:
    """Monte Carlo estimate of E_i exp(gamma * ell(i)).

    ell(i) counts every visit to i including time zero.  Paths stop above a
    level from which another visit to i has probability below
    ``return_tol``.  Returns (estimate, standard error, fraction of paths
    cut off by the horizon); near the critical gamma the estimate blows up
    and the cut-off fraction is the signal to distrust it.
    """
    P = kernel.embed()
    minor = jump_minorant(P)
    stop = _stop_level(i, minor, return_tol)
    if not P.has_row(stop):
        raise StateRangeError(f"kernel rows end before the stopping level {stop}")
    score_lo = P.state_lo
    score = np.zeros(stop + kernel.band_hi - score_lo + 1)
    score[i - score_lo] = 1.0
    rng = _philox(seed, salt=2, tag=i)
    counts, n_exhausted, _ = _run_paths(P, score, score_lo, i, stop, n_paths, horizon, rng)
    with np.errstate(over="ignore"):
        w = np.exp(gamma * counts)
    est = float(w.mean())
    se = float(w.std(ddof=1) / math.sqrt(n_paths)) if n_paths > 1 else 0.0
    return est, se, n_exhausted / n_paths


def expected_local_times_mc(
    kernel: TransitionKernel,
    start: int,
    sites: Sequence[int],
    n_paths: int,
    horizon: int,
    seed: int,
    return_tol: float = 1e-8,
) -> dict[int, tuple[float, float]]:
    """Monte Carlo estimates of E_start ell(j) for each site j.

    Used to evaluate the convexity lower bound on the path product.
    """
    P = kernel.embed()
    minor = jump_minorant(P)
    top = max(sites)
    stop = _stop_level(top, minor, return_tol)
    out = {}
    score_lo = P.state_lo
    for j in sites:
        score = np.zeros(stop + kernel.band_hi - score_lo + 1)
        score[j - score_lo] = 1.0
        rng = _philox(seed, salt=3, tag=j * 1009 + start)
        counts, _, _ = _run_paths(P, score, score_lo, start, stop, n_paths, horizon, rng)
        out[int(j)] = (
            float(counts.mean()),
            float(counts.std(ddof=1) / math.sqrt(n_paths)),
        )
    return out


# ---------------------------------------------------------------------------
# closed form for the reflected simple walk with one perturbed weight


def reflected_walk_harmonic_exact(alpha: float, p: float, i, critical_rtol: float = 1e-12):
    """Harmonic function of the up-drift reflected simple walk whose only
    nonstochastic row is at the origin, with total weight ``alpha``.

    Below the critical weight p/q the function is
        f(0) = alpha (1 - q/p) / (1 - alpha q/p),
        f(i) = 1 - (q/p)^i + (q/p)^i f(0),
    and tends to one.  At the critical weight the (suitably normalised)
    harmonic function is (q/p)^i, which decays instead.  Above it no
    positive harmonic function exists.
    """
    q = 1.0 - p
    if not 0.0 < q < p:
        raise UnsupportedInputError("needs an upward-drift walk: 1/2 < p < 1")
    if alpha <= 0:
        raise UnsupportedInputError("the origin weight must be positive")
    ratio = q / p
    critical = p / q
    idx = np.asarray(i)
    if abs(alpha - critical) <= critical_rtol * critical:
        out = ratio**idx
        return out if out.ndim else float(out)
    if alpha > critical:
        raise NoPositiveHarmonicError(
            f"origin weight {alpha:.6g} exceeds the critical value p/q = {critical:.6g}"
        )
    f0 = alpha * (1.0 - ratio) / (1.0 - alpha * ratio)
    out = 1.0 - ratio**idx + ratio**idx * f0
    return out if out.ndim else float(out)
