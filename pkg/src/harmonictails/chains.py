"""Concrete chain families on the nonnegative integers.

Each family packages a rule for building transition rows together with the
limiting jump law the rows approach at infinity.  ``ChainFamily.kernel``
materialises a banded kernel with explicit rows up to a truncation and a
tail rule beyond it, so solvers can keep asking for rows as far up as they
need.

Families provided:

* ``perturbed_reflected_walk`` — up-drift simple walk reflected at the
  origin whose row at zero carries total weight ``alpha`` instead of one.
* ``multi_perturbed_walk`` — pure-up weighted rows on 0..N-1, a long
  downward jump from N back to zero, simple walk above.
* ``walk_killed_at_negative`` — a lattice walk whose steps below zero are
  removed, leaving substochastic rows near the origin.
* ``lindley_chain`` — the same walk with steps below zero lumped at zero
  (the reflected / queueing recursion chain).
* ``alternating_drift_chain`` — birth-death rows with up probability
  p + phi(i), phi(i) = c0 (-1)^i (1+i)^(-gamma); the drift perturbation
  alternates in sign and its running integral stays bounded.
* ``power_drift_chain`` — birth-death rows with up probability p + a(i),
  a(i) = c0 (1+i)^exponent; for exponent in (-1, 0) the perturbation is
  not summable and the tail decay picks up a nontrivial correction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import UnsupportedInputError
from .kernels import (
    HomogeneousTail,
    ParametricTail,
    StochasticKernel,
    TransitionKernel,
)
from .ladder import LatticeWalk


@dataclass(frozen=True)
class PowerAlpha:
    """Perturbation profile a(x) = c0 (1 + x)^exponent."""

    c0: float
    exponent: float

    def value(self, x):
        return self.c0 * (1.0 + np.asarray(x, dtype=float)) ** self.exponent

    def integral_power(self, k: int, x: float) -> float:
        """Integral of a(t)^k over t in [0, x], in closed form."""
        e = k * self.exponent
        c = self.c0**k
        if abs(e + 1.0) < 1e-14:
            return c * math.log1p(x)
        return c * ((1.0 + x) ** (e + 1.0) - 1.0) / (e + 1.0)


@dataclass(frozen=True)
class AlternatingAlpha:
    """Signed profile phi(x) = c0 (-1)^x (1 + x)^(-gamma) on integer points."""

    c0: float
    gamma: float

    def value(self, i):
        i = np.asarray(i)
        sign = np.where(i % 2 == 0, 1.0, -1.0)
        out = self.c0 * sign * (1.0 + i) ** (-self.gamma)
        return out if out.ndim else float(out)

    def integral_power(self, k: int, x: float) -> float:
        """Sum of phi(i)^k over integer i in [0, x] (alternating, bounded
        for odd k when gamma > 0)."""
        i = np.arange(0, int(math.floor(x)) + 1)
        return float(np.sum(self.value(i) ** k))


@dataclass(frozen=True)
class ChainFamily:
    """A state-indexed row rule plus its limiting jump law."""

    name: str
    band_lo: int
    band_hi: int
    row_fn: Callable[[int], np.ndarray]
    limit_pmf: np.ndarray | None = None
    homogeneous_from: int | None = None
    stochastic: bool = True
    alpha_profile: object | None = None
    params: dict = field(default_factory=dict)

    @property
    def limit_walk(self) -> LatticeWalk:
        if self.limit_pmf is None:
            raise UnsupportedInputError(f"family {self.name} has no limiting jump law")
        pmf = np.asarray(self.limit_pmf, dtype=float)
        return LatticeWalk(lo=-self.band_lo, pmf=pmf / pmf.sum())

    def kernel(self, truncation: int) -> TransitionKernel:
        """Banded kernel with explicit rows up to ``truncation``.

        Homogeneous-from-some-level families get a single-row tail;
        genuinely inhomogeneous ones keep the row rule as a parametric
        tail (stochastic rows, so the log-mass tail bound is zero when
        ``stochastic`` is set).
        """
        if self.homogeneous_from is not None and truncation < self.homogeneous_from:
            raise UnsupportedInputError(
                f"truncation {truncation} is below the homogeneous level "
                f"{self.homogeneous_from} of family {self.name}"
            )
        weights = np.array([self.row_fn(i) for i in range(truncation + 1)], dtype=float)
        if self.homogeneous_from is not None:
            tail = HomogeneousTail(np.asarray(self.limit_pmf, dtype=float))
        else:
            bound = 0.0 if self.stochastic else math.inf
            tail = ParametricTail(self.row_fn, declared_delta_abs_bound=bound)
        cls = StochasticKernel if self.stochastic else TransitionKernel
        return cls(
            band_lo=self.band_lo,
            band_hi=self.band_hi,
            weights=weights,
            tail=tail,
            meta={"family": self.name, **self.params},
        )

    def moment_data(self, beta: float, order: int):
        """Tilted moments and interaction coefficients for the local-rate
        expansion, when the family admits them in closed form.

        Returns (m, D, scale): m[k] = E xi^k e^{beta xi} of the limit law
        for k = 1..order; D[(k, j)] multiplies u^k/k! alpha^j in the
        expansion of the local moment generating function around the limit
        root; the effective expansion variable is alpha(x) =
        scale * profile.value(x).  Only nearest-neighbour drift
        perturbations are supported here; other families return None and
        callers fall back to a numerical fit.
        """
        if self.name not in ("alternating-drift", "power-drift"):
            return None
        eb, emb = math.exp(beta), math.exp(-beta)
        p = self.params["p"]
        q = 1.0 - p
        m = [p * eb + ((-1) ** k) * q * emb for k in range(1, order + 1)]
        scale = eb - emb
        D = {}
        for k in range(1, order + 1):
            D[(k, 1)] = (eb + emb) / scale if k % 2 == 1 else 1.0
        return m, D, scale


# ---------------------------------------------------------------------------
# builders


def perturbed_reflected_walk(p: float = 0.7, alpha: float = 2.0) -> ChainFamily:
    """Reflected simple walk, up probability p > 1/2, whose row at the
    origin is a single jump to 1 with weight ``alpha``."""
    if not 0.5 < p < 1.0:
        raise UnsupportedInputError("needs 1/2 < p < 1")
    if alpha <= 0.0:
        raise UnsupportedInputError("alpha must be positive")
    q = 1.0 - p
    limit = np.array([q, 0.0, p])

    def row_fn(i: int) -> np.ndarray:
        if i == 0:
            return np.array([0.0, 0.0, alpha])
        return limit

    return ChainFamily(
        name="perturbed-reflected-walk",
        band_lo=1,
        band_hi=1,
        row_fn=row_fn,
        limit_pmf=limit,
        homogeneous_from=1,
        stochastic=False,
        params={"p": p, "alpha": alpha},
    )


def multi_perturbed_walk(alphas, p: float = 0.7) -> ChainFamily:
    """Rows 0..N-1 jump up one step with weights alphas[i]; row N goes up
    with probability p or falls back to the origin with probability 1-p;
    simple walk above N."""
    alphas = [float(a) for a in alphas]
    N = len(alphas)
    if N == 0:
        raise UnsupportedInputError("needs at least one weighted row")
    if any(a <= 0 for a in alphas):
        raise UnsupportedInputError("row weights must be positive")
    if not 0.5 < p < 1.0:
        raise UnsupportedInputError("needs 1/2 < p < 1")
    q = 1.0 - p
    W = N + 2  # offsets -N .. +1
    limit = np.zeros(W)
    limit[N - 1] = q  # offset -1
    limit[N + 1] = p  # offset +1

    def row_fn(i: int) -> np.ndarray:
        r = np.zeros(W)
        if i < N:
            r[N + 1] = alphas[i]
        elif i == N:
            r[0] = q  # offset -N: back to the origin
            r[N + 1] = p
        else:
            r[N - 1] = q
            r[N + 1] = p
        return r

    return ChainFamily(
        name="multi-perturbed-walk",
        band_lo=N,
        band_hi=1,
        row_fn=row_fn,
        limit_pmf=limit,
        homogeneous_from=N + 1,
        stochastic=False,
        params={"p": p, "alphas": tuple(alphas)},
    )


def walk_killed_at_negative(walk: LatticeWalk) -> ChainFamily:
    """The walk restricted to the nonnegative integers by deleting every
    step that would land below zero.  Rows within ``-walk.lo`` of the
    origin are substochastic."""
    if walk.lo >= 0:
        raise UnsupportedInputError("the walk never steps down; nothing to kill")
    bl, bh = -walk.lo, walk.hi
    pmf = walk.pmf.copy()

    def row_fn(i: int) -> np.ndarray:
        r = pmf.copy()
        if i < bl:
            r[: bl - i] = 0.0
        return r

    return ChainFamily(
        name="killed-walk",
        band_lo=bl,
        band_hi=bh,
        row_fn=row_fn,
        limit_pmf=pmf,
        homogeneous_from=bl,
        stochastic=False,
        params={"pmf": tuple(pmf)},
    )


def lindley_chain(walk: LatticeWalk) -> ChainFamily:
    """The walk reflected at zero: steps below zero are lumped at zero
    (the steady-state recursion of a single queue)."""
    if walk.lo >= 0:
        raise UnsupportedInputError("the walk never steps down; nothing to reflect")
    bl, bh = -walk.lo, walk.hi
    pmf = walk.pmf.copy()

    def row_fn(i: int) -> np.ndarray:
        r = pmf.copy()
        if i < bl:
            lumped = r[: bl - i].sum()
            r[: bl - i] = 0.0
            r[bl - i] += lumped
        return r

    return ChainFamily(
        name="lindley",
        band_lo=bl,
        band_hi=bh,
        row_fn=row_fn,
        limit_pmf=pmf,
        homogeneous_from=bl,
        stochastic=True,
        params={"pmf": tuple(pmf)},
    )


def _birth_death_family(name, p, profile, extra_params) -> ChainFamily:
    q = 1.0 - p

    def up(i: int) -> float:
        return p + float(profile.value(i))

    def row_fn(i: int) -> np.ndarray:
        u = up(i)
        if i == 0:
            return np.array([0.0, 1.0 - u, u])
        return np.array([1.0 - u, 0.0, u])

    u0 = up(0)
    if not 0.0 < u0 < 1.0:
        raise UnsupportedInputError("up probability at the origin outside (0, 1)")
    limit = np.array([q, 0.0, p])
    return ChainFamily(
        name=name,
        band_lo=1,
        band_hi=1,
        row_fn=row_fn,
        limit_pmf=limit,
        homogeneous_from=None,
        stochastic=True,
        alpha_profile=profile,
        params={"p": p, **extra_params},
    )


def alternating_drift_chain(p: float = 0.3, c0: float = 0.05, gamma: float = 0.6) -> ChainFamily:
    """Birth-death chain with up probability p + c0 (-1)^i (1+i)^(-gamma).

    The drift perturbation alternates in sign, so its partial sums stay
    bounded and the stationary tail keeps a clean geometric decay."""
    if not 0.0 < p < 0.5:
        raise UnsupportedInputError("needs a downward drift: 0 < p < 1/2")
    if not 0.0 <= c0 < min(p, 1.0 - p):
        raise UnsupportedInputError("perturbation size must stay below min(p, 1-p)")
    if gamma <= 0.0:
        raise UnsupportedInputError("gamma must be positive")
    return _birth_death_family(
        "alternating-drift", p, AlternatingAlpha(c0=c0, gamma=gamma), {"c0": c0, "gamma": gamma}
    )


def power_drift_chain(p: float = 0.3, c0: float = 0.05, exponent: float = -0.6) -> ChainFamily:
    """Birth-death chain with up probability p + c0 (1+i)^exponent.

    For exponent in (-1, 0) the perturbation decays too slowly to be
    summable and the stationary tail is geometric only up to a stretched
    correction; predicting it needs the state-dependent decay rate."""
    if not 0.0 < p < 0.5:
        raise UnsupportedInputError("needs a downward drift: 0 < p < 1/2")
    if not 0.0 <= c0 < min(p, 1.0 - p):
        raise UnsupportedInputError("perturbation size must stay below min(p, 1-p)")
    if exponent >= 0.0:
        raise UnsupportedInputError("the perturbation must decay (exponent < 0)")
    return _birth_death_family(
        "power-drift", p, PowerAlpha(c0=c0, exponent=exponent), {"c0": c0, "exponent": exponent}
    )
