"""Banded nonnegative transition kernels on the nonnegative integers.

A kernel stores one weight row per state for states up to a truncation
level; a tail rule supplies rows beyond it (a single homogeneous row for
eventually-homogeneous chains, or a row generator for chains that are only
asymptotically homogeneous).  Rows are indexed by offset: column ``c``
holds the weight of the jump ``c - band_lo``.

Kernels are immutable.  Transforms (normalising, killing a finite set of
target states, exponential tilting) build new kernels; weights that fall
below 1e-15 along the way are dropped and the discarded total is recorded
on the result.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from .errors import (
    DegenerateRowError,
    StateRangeError,
    UnsupportedInputError,
)

WEIGHT_FLOOR = 1e-15
_ROW_SUM_TOL = 1e-12


@dataclass(frozen=True)
class HomogeneousTail:
    """All rows beyond the truncation share one weight row."""

    row: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "row", np.asarray(self.row, dtype=float))

    def row_at(self, i: int) -> np.ndarray:
        return self.row

    def delta_abs_bound(self) -> float:
        """Certified bound on sum over tail states of |log row mass|."""
        mass = float(self.row.sum())
        return 0.0 if abs(math.log(mass)) < 1e-14 else math.inf


@dataclass(frozen=True)
class ParametricTail:
    """Rows beyond the truncation come from a state-indexed generator.

    A certified bound on the tail sum of |log row mass| cannot be derived
    from a black-box callable, so the constructor takes it as a declaration
    (default: unknown, treated as infinite).
    """

    fn: Callable[[int], np.ndarray]
    declared_delta_abs_bound: float = math.inf

    def row_at(self, i: int) -> np.ndarray:
        return np.asarray(self.fn(i), dtype=float)

    def delta_abs_bound(self) -> float:
        return self.declared_delta_abs_bound


TailRule = HomogeneousTail | ParametricTail


def _as_state_fn(f):
    """Accept a callable, a mapping, or an estimate object with .value()."""
    if callable(f):
        return f
    if hasattr(f, "value"):
        return f.value
    if isinstance(f, Mapping):
        return lambda i: f[i]
    raise UnsupportedInputError(f"cannot interpret {type(f).__name__} as a state function")


@dataclass(frozen=True)
class TransitionKernel:
    """Nonnegative banded kernel with explicit rows on ``state_lo..truncation``.

    Every represented row must carry positive total mass, and no weight may
    point at a negative state.
    """

    band_lo: int
    band_hi: int
    weights: np.ndarray  # shape (truncation - state_lo + 1, band_lo + band_hi + 1)
    state_lo: int = 0
    tail: TailRule | None = None
    dropped_mass: float = 0.0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        object.__setattr__(self, "weights", w)
        width = self.band_lo + self.band_hi + 1
        if w.ndim != 2 or w.shape[1] != width:
            raise UnsupportedInputError(
                f"weights must be 2-d with {width} offset columns, got shape {w.shape}"
            )
        if self.band_lo < 0 or self.band_hi < 0:
            raise UnsupportedInputError("band widths must be nonnegative")
        if self.state_lo < 0:
            raise UnsupportedInputError("states live on the nonnegative integers")
        if not np.all(np.isfinite(w)) or np.any(w < 0):
            raise UnsupportedInputError("weights must be finite and nonnegative")
        masses = w.sum(axis=1)
        if np.any(masses <= 0):
            dead = int(np.argmax(masses <= 0)) + self.state_lo
            raise DegenerateRowError(f"row for state {dead} has no mass")
        # nothing may point below state 0
        for r in range(min(self.band_lo - self.state_lo, w.shape[0])):
            i = self.state_lo + r
            cut = self.band_lo - i
            if np.any(w[r, :cut] > 0):
                raise UnsupportedInputError(
                    f"row for state {i} puts weight on negative target states"
                )
        if self.tail is not None:
            trow = self.tail.row_at(self.truncation + 1)
            if trow.shape != (width,):
                raise UnsupportedInputError("tail rule row width does not match the band")

    # -- structure ---------------------------------------------------------

    @property
    def truncation(self) -> int:
        return self.state_lo + self.weights.shape[0] - 1

    @property
    def offsets(self) -> np.ndarray:
        return np.arange(-self.band_lo, self.band_hi + 1)

    def has_row(self, i: int) -> bool:
        return (self.state_lo <= i <= self.truncation) or (
            i > self.truncation and self.tail is not None
        )

    def row(self, i: int) -> np.ndarray:
        if self.state_lo <= i <= self.truncation:
            return self.weights[i - self.state_lo]
        if i > self.truncation and self.tail is not None:
            return self.tail.row_at(i)
        raise StateRangeError(
            f"state {i} outside represented range "
            f"[{self.state_lo}, {self.truncation}] and no tail rule applies"
        )

    # -- scalar operations -------------------------------------------------

    def total_mass(self, i: int) -> float:
        """Row sum Q(i, Z+)."""
        m = float(self.row(i).sum())
        if m <= 0:
            raise DegenerateRowError(f"row for state {i} has no mass")
        return m

    def delta(self, i: int) -> float:
        """log of the row mass; zero for a stochastic row."""
        return math.log(self.total_mass(i))

    def apply(self, f, i: int) -> float:
        """(Q f)(i) = sum_j Q(i, j) f(j), evaluated on the support of row i."""
        fn = _as_state_fn(f)
        row = self.row(i)
        out = 0.0
        for c in np.flatnonzero(row):
            out += row[c] * fn(i + c - self.band_lo)
        return out

    # -- transforms --------------------------------------------------------

    def embed(self) -> "StochasticKernel":
        """Normalise every row to total mass one."""
        masses = self.weights.sum(axis=1, keepdims=True)
        w = self.weights / masses
        w, dropped = _drop_dust(w)
        tail = self.tail
        if isinstance(tail, HomogeneousTail):
            tail = HomogeneousTail(tail.row / tail.row.sum())
        elif isinstance(tail, ParametricTail):
            inner = tail.fn
            tail = ParametricTail(
                fn=lambda i: (lambda r: r / r.sum())(np.asarray(inner(i), dtype=float)),
                declared_delta_abs_bound=0.0,
            )
        return StochasticKernel(
            band_lo=self.band_lo,
            band_hi=self.band_hi,
            weights=w,
            state_lo=self.state_lo,
            tail=tail,
            dropped_mass=self.dropped_mass + dropped,
        )

    def irreducible(self, n_states: int) -> bool:
        """Strong connectivity of the positive-weight graph on states up to ``n_states``."""
        lo = self.state_lo
        if n_states < lo:
            raise StateRangeError("irreducibility window lies below the represented states")
        size = n_states - lo + 1
        rows, cols = [], []
        for i in range(lo, n_states + 1):
            r = self.row(i)
            for c in np.flatnonzero(r):
                j = i + c - self.band_lo
                if lo <= j <= n_states:
                    rows.append(i - lo)
                    cols.append(j - lo)
        graph = sp.csr_matrix(
            (np.ones(len(rows)), (rows, cols)), shape=(size, size)
        )
        n_comp, _ = connected_components(graph, directed=True, connection="strong")
        return n_comp == 1


def _drop_dust(w: np.ndarray) -> tuple[np.ndarray, float]:
    small = (w > 0) & (w < WEIGHT_FLOOR)
    if not small.any():
        return w, 0.0
    out = w.copy()
    dropped = float(out[small].sum())
    out[small] = 0.0
    return out, dropped


def _alive_suffix(weights: np.ndarray, state_lo: int) -> int:
    """First state index from which every row below keeps positive mass.

    Rows emptied by a transform must form a prefix of the state range;
    an empty row above a live one would leave a hole in the domain.
    """
    masses = weights.sum(axis=1)
    alive = masses > 0
    if not alive.any():
        raise DegenerateRowError("transform removed all mass from every represented row")
    first = int(np.argmax(alive))
    if not alive[first:].all():
        dead = first + int(np.argmax(~alive[first:])) + state_lo
        raise DegenerateRowError(
            f"row for state {dead} lost all its mass but higher states kept theirs; "
            "the surviving domain is not an upper range"
        )
    return first


@dataclass(frozen=True)
class StochasticKernel(TransitionKernel):
    """Kernel whose rows sum to one.

    ``stochastic_from`` relaxes the row-sum check below a level: the h-
    transform of a killed chain keeps its entry rows, which are genuinely
    substochastic, and this field records where strict stochasticity starts.
    """

    stochastic_from: int | None = None

    def __post_init__(self):
        super().__post_init__()
        masses = self.weights.sum(axis=1)
        check_from = self.state_lo if self.stochastic_from is None else self.stochastic_from
        idx0 = max(0, check_from - self.state_lo)
        if np.any(np.abs(masses[idx0:] - 1.0) > _ROW_SUM_TOL):
            bad = int(np.argmax(np.abs(masses[idx0:] - 1.0) > _ROW_SUM_TOL))
            i = bad + idx0 + self.state_lo
            raise UnsupportedInputError(
                f"row for state {i} sums to {masses[bad + idx0]:.17g}, not 1"
            )
        if np.any(masses[:idx0] > 1.0 + _ROW_SUM_TOL):
            raise UnsupportedInputError("substochastic prefix rows may not exceed mass 1")

    def kill(self, targets: Iterable[int]) -> TransitionKernel:
        """Restrict the kernel to the complement of the finite set ``targets``.

        Transitions into the set and the rows of its members are removed.
        States left with no outgoing mass drop out of the domain; they must
        form a prefix of the state range.  The truncation must reach far
        enough that tail rows cannot touch the killed set.
        """
        targets = set(int(t) for t in targets)
        if not targets:
            return TransitionKernel(
                band_lo=self.band_lo,
                band_hi=self.band_hi,
                weights=self.weights.copy(),
                state_lo=self.state_lo,
                tail=self.tail,
                dropped_mass=self.dropped_mass,
            )
        top = max(targets)
        if self.tail is not None and self.truncation < top + self.band_lo:
            raise UnsupportedInputError(
                f"truncation {self.truncation} too small: tail rows could reach "
                f"killed state {top} (need at least {top + self.band_lo})"
            )
        w = self.weights.copy()
        for r in range(w.shape[0]):
            i = self.state_lo + r
            if i in targets:
                w[r, :] = 0.0
                continue
            for c in range(w.shape[1]):
                if (i + c - self.band_lo) in targets:
                    w[r, c] = 0.0
        first = _alive_suffix(w, self.state_lo)
        return TransitionKernel(
            band_lo=self.band_lo,
            band_hi=self.band_hi,
            weights=w[first:],
            state_lo=self.state_lo + first,
            tail=self.tail,
            dropped_mass=self.dropped_mass,
            meta={"killed": sorted(targets)},
        )

    def tilt(self, beta: float, level: int = -1) -> TransitionKernel:
        """Exponentially tilted kernel with targets at or below ``level`` removed.

        Entry (i, j) becomes exp(beta (j - i)) P(i, j) 1{j > level}.  With
        ``level = -1`` nothing is removed and this is a pure tilt.
        """
        if self.tail is not None and level >= 0 and self.truncation < level + self.band_lo:
            raise UnsupportedInputError(
                f"truncation {self.truncation} too small for tilt level {level} "
                f"(need at least {level + self.band_lo})"
            )
        factors = np.exp(beta * self.offsets.astype(float))
        w = self.weights * factors
        if level >= 0:
            for r in range(w.shape[0]):
                i = self.state_lo + r
                cut = level - i + self.band_lo + 1  # columns with i + off <= level
                if cut > 0:
                    w[r, : min(cut, w.shape[1])] = 0.0
        w, dropped = _drop_dust(w)
        first = _alive_suffix(w, self.state_lo)

        tail = self.tail
        if isinstance(tail, HomogeneousTail):
            tail = HomogeneousTail(tail.row * factors)
        elif isinstance(tail, ParametricTail):
            inner = tail.fn
            # tilting a merely asymptotically stochastic row sequence leaves
            # log masses that need not be summable; no bound can be carried over
            tail = ParametricTail(
                fn=lambda i: np.asarray(inner(i), dtype=float) * factors,
                declared_delta_abs_bound=math.inf,
            )
        return TransitionKernel(
            band_lo=self.band_lo,
            band_hi=self.band_hi,
            weights=w[first:],
            state_lo=self.state_lo + first,
            tail=tail,
            dropped_mass=self.dropped_mass + dropped,
            meta={"tilt_beta": float(beta), "tilt_level": int(level)},
        )


def kernel_from_rows(
    rows: Mapping[int, Mapping[int, float]] | Callable[[int], Mapping[int, float]],
    truncation: int,
    band_lo: int,
    band_hi: int,
    tail: TailRule | None = None,
    state_lo: int = 0,
    stochastic: bool = False,
) -> TransitionKernel:
    """Assemble a kernel from per-state offset->weight maps."""
    width = band_lo + band_hi + 1
    n = truncation - state_lo + 1
    w = np.zeros((n, width))
    getter = rows if callable(rows) else (lambda i: rows[i])
    for r in range(n):
        for off, val in getter(state_lo + r).items():
            if not -band_lo <= off <= band_hi:
                raise UnsupportedInputError(
                    f"offset {off} at state {state_lo + r} falls outside the band"
                )
            w[r, off + band_lo] = val
    cls = StochasticKernel if stochastic else TransitionKernel
    return cls(
        band_lo=band_lo,
        band_hi=band_hi,
        weights=w,
        state_lo=state_lo,
        tail=tail,
    )
