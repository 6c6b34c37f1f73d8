"""Exponent family of the planar hodograph series.

For the p-Laplacian in the plane and a critical point of Stoilow index ``n``
the hodograph series carries, for every mode ``k >= n + 1``,

    lambda_k  = (-n p + sqrt(4 k^2 (p - 1) + n^2 (p - 2)^2)) / 2
    epsilon_k = (lambda_k + n - k) / (lambda_k + n + k)

The ``n^2`` under the root is what makes every term generate a divergence-free
flux; for ``n = 1`` it is invisible, and for general ``n`` it gives
``lambda_{n+1} = gamma_n``.

The second-derivative regularity is governed by ``n / gamma_n`` and the
mean value argument by ``lambda_{n+2} / lambda_{n+1}^2``.  Thresholds are
located by scanning ``p`` and bisecting; nothing is hard-coded.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

__all__ = [
    "PLaplaceParams",
    "ExponentRow",
    "ExponentTable",
    "ThresholdResult",
    "BracketError",
    "DegenerateExponentError",
    "lambda_k",
    "epsilon_k",
    "gamma_ratio",
    "holder_c2_range",
    "criticality_ratio",
    "criticality_ratio_explicit",
    "solve_threshold",
    "exponent_table",
    "SCAN_LO",
    "SCAN_HI",
    "SCAN_POINTS",
]

SCAN_LO = 1.0 + 1e-9
SCAN_HI = 64.0
SCAN_POINTS = 2048

EXPONENT_TOL = 1e-12
ROOT_TOL = 1e-9


class BracketError(RuntimeError):
    """No sign change of the defining condition in the scanned range."""


class DegenerateExponentError(ZeroDivisionError):
    """``lambda_{n+1}`` vanishes, so the criticality ratio is undefined."""


@dataclass(frozen=True)
class PLaplaceParams:
    p: float
    n: int = 1

    def __post_init__(self):
        if not (isinstance(self.p, (int, float)) and math.isfinite(self.p)):
            raise ValueError(f"p must be a finite real number, got {self.p!r}")
        if self.p <= 1:
            raise ValueError(f"p must satisfy p > 1, got p={self.p}")
        if isinstance(self.n, bool) or int(self.n) != self.n or self.n < 1:
            raise ValueError(f"n must be an integer >= 1, got n={self.n!r}")
        object.__setattr__(self, "p", float(self.p))
        object.__setattr__(self, "n", int(self.n))


def _check_mode(params: PLaplaceParams, k: int) -> None:
    if int(k) != k or k <= params.n:
        raise ValueError(
            f"mode index k must be an integer >= n+1={params.n + 1}, got k={k}"
        )


def lambda_k(params: PLaplaceParams, k: int) -> float:
    """Homogeneity exponent of the ``k``-th hodograph term."""
    _check_mode(params, k)
    p, n = params.p, params.n
    return (-n * p + math.sqrt(4 * k * k * (p - 1) + n * n * (p - 2) ** 2)) / 2


def epsilon_k(params: PLaplaceParams, k: int) -> float:
    """Weight of the anti-analytic part of the ``k``-th term; lies in (-1, 1)."""
    lam = lambda_k(params, k)
    n = params.n
    return (lam + n - k) / (lam + n + k)


def gamma_ratio(params: PLaplaceParams) -> float:
    """Return ``n / gamma_n``; second derivatives are Hoelder when it exceeds 1."""
    p, n = params.p, params.n
    g_over_n = 0.5 * (math.sqrt(4 * (1 + 1 / n) ** 2 * (p - 1) + (p - 2) ** 2) - p)
    return 1.0 / g_over_n


def criticality_ratio(params: PLaplaceParams) -> float:
    """``lambda_{n+2} / lambda_{n+1}^2``.

    Values above 1 mean the perturbation of the main term is ``O(r^{2+alpha})``.
    Raises DegenerateExponentError when ``lambda_{n+1} == 0``.
    """
    n = params.n
    lead = lambda_k(params, n + 1)
    if lead == 0.0:
        raise DegenerateExponentError(
            f"lambda_{n + 1} vanishes at p={params.p}, n={n}"
        )
    return lambda_k(params, n + 2) / (lead * lead)


def criticality_ratio_explicit(p: float) -> tuple[float, float]:
    """Both sides of the written-out n=1 inequality, ``(lhs, rhs)``.

    Computed straight from the surds, without going through ``lambda_k``.
    """
    lhs = (-p + math.sqrt(36 * (p - 1) + (p - 2) ** 2)) / 2
    rhs = (-p + math.sqrt(16 * (p - 1) + (p - 2) ** 2)) ** 2 / 4
    return lhs, rhs


@dataclass(frozen=True)
class ThresholdResult:
    value: float
    bracket: tuple[float, float]
    residual: float
    iterations: int
    # e.g. "lambda_{n+1} < 0 at root"; reported, not acted on
    flags: tuple[str, ...] = field(default=())

    def to_dict(self) -> dict:
        return {
            "value": self.value,
            "bracket": list(self.bracket),
            "residual": self.residual,
            "iterations": self.iterations,
            "flags": list(self.flags),
        }


def _scan_grid(lo: float = SCAN_LO, hi: float = SCAN_HI, points: int = SCAN_POINTS):
    step = (hi - lo) / (points - 1)
    return [lo + i * step for i in range(points - 1)] + [hi]


def _bisect(g: Callable[[float], float], lo: float, hi: float, tol: float):
    """Bisection on ``g`` with ``g(lo) > 0 >= g(hi)``.  Returns (root, iterations)."""
    glo = g(lo)
    it = 0
    while hi - lo > tol and it < 200:
        mid = 0.5 * (lo + hi)
        if mid == lo or mid == hi:
            break
        gm = g(mid)
        if (gm > 0) == (glo > 0):
            lo, glo = mid, gm
        else:
            hi = mid
        it += 1
    return 0.5 * (lo + hi), it


def _safe(g: Callable[[float], float]) -> Callable[[float], float]:
    def wrapped(p: float) -> float:
        try:
            return g(p)
        except ZeroDivisionError:
            return math.inf

    return wrapped


def _falling_crossings(g: Callable[[float], float], grid) -> list[tuple[float, float]]:
    """Brackets where ``g`` passes from positive to non-positive as p grows."""
    out = []
    prev_p, prev_v = grid[0], g(grid[0])
    for p in grid[1:]:
        v = g(p)
        if math.isfinite(prev_v) and math.isfinite(v) and prev_v > 0 >= v:
            out.append((prev_p, p))
        prev_p, prev_v = p, v
    return out


def holder_c2_range(n: int, tol: float = 1e-12) -> tuple[float, float]:
    """Open interval of p on which ``n / gamma_n > 1``.

    The upper end is ``math.inf`` when no crossing occurs up to the scan limit.
    """
    if int(n) != n or n < 1:
        raise ValueError(f"n must be an integer >= 1, got {n!r}")

    def g(p: float) -> float:
        return gamma_ratio(PLaplaceParams(p, n)) - 1.0

    crossings = _falling_crossings(g, _scan_grid())
    if not crossings:
        return (1.0, math.inf)
    lo, hi = crossings[0]
    root, _ = _bisect(g, lo, hi, tol)
    return (1.0, root)


def solve_threshold(n: int, tol: float = ROOT_TOL) -> ThresholdResult:
    """Largest-validity threshold: where ``criticality_ratio - 1`` falls through zero.

    Only n in {1, 2} are supported.  The ratio is large near p = 1 and the
    first falling crossing of 1 is the end of the validity range.  A pole
    (``lambda_{n+1} = 0``) is squared, so it never fakes a falling crossing.
    """
    if n not in (1, 2):
        raise ValueError(f"threshold solving supports n in {{1, 2}}, got n={n!r}")
    if not tol > 0:
        raise ValueError(f"tol must be positive, got {tol!r}")

    g = _safe(lambda p: criticality_ratio(PLaplaceParams(p, n)) - 1.0)
    crossings = _falling_crossings(g, _scan_grid())
    if not crossings:
        raise BracketError(
            f"criticality ratio does not cross 1 in ({SCAN_LO}, {SCAN_HI}] for n={n}"
        )
    lo, hi = crossings[0]
    root, iterations = _bisect(g, lo, hi, tol)
    flags = ()
    if lambda_k(PLaplaceParams(root, n), n + 1) < 0:
        flags = (f"lambda_{n + 1} < 0 at root",)
    return ThresholdResult(
        value=root,
        bracket=(lo, hi),
        residual=abs(g(root)),
        iterations=iterations,
        flags=flags,
    )


@dataclass(frozen=True)
class ExponentRow:
    k: int
    lambda_k: float
    epsilon_k: float


@dataclass(frozen=True)
class ExponentTable:
    params: PLaplaceParams
    rows: tuple[ExponentRow, ...]

    @property
    def lambdas(self) -> list[float]:
        return [r.lambda_k for r in self.rows]

    @property
    def epsilons(self) -> list[float]:
        return [r.epsilon_k for r in self.rows]

    def to_dict(self) -> dict:
        return {
            "p": self.params.p,
            "n": self.params.n,
            "rows": [
                {"k": r.k, "lambda": r.lambda_k, "epsilon": r.epsilon_k}
                for r in self.rows
            ],
        }


def exponent_table(params: PLaplaceParams, k_max: int) -> ExponentTable:
    if k_max < params.n + 1:
        raise ValueError(f"k_max must be >= n+1={params.n + 1}, got {k_max}")
    rows = tuple(
        ExponentRow(k, lambda_k(params, k), epsilon_k(params, k))
        for k in range(params.n + 1, k_max + 1)
    )
    return ExponentTable(params, rows)
