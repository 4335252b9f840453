"""Correlation kernels: Pearson, Spearman (average-rank ties), t-based p-values, stars.

Everything here is dependency-free apart from numpy. The Student-t tail is
evaluated through the regularized incomplete beta function, so results do not
hinge on an external statistics package.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

__all__ = [
    "CorrResult",
    "UndefinedCorrelationError",
    "pearson",
    "spearman",
    "spearman_exact_p",
    "rankdata",
    "betainc",
    "t_two_sided_p",
    "stars",
]

_BETACF_EPS = 1e-15
_BETACF_TINY = 1e-300
_BETACF_MAXITER = 10_000


class UndefinedCorrelationError(ValueError):
    """Raised when a correlation is undefined (constant input)."""


@dataclass(frozen=True)
class CorrResult:
    r: float
    p: float
    n: int

    def to_dict(self) -> dict:
        return {"r": self.r, "p": self.p, "n": self.n}


def _betacf(a: float, b: float, x: float) -> float:
    # Modified Lentz evaluation of the incomplete beta continued fraction.
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _BETACF_TINY:
        d = _BETACF_TINY
    d = 1.0 / d
    h = d
    for m in range(1, _BETACF_MAXITER + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < _BETACF_TINY:
            d = _BETACF_TINY
        c = 1.0 + aa / c
        if abs(c) < _BETACF_TINY:
            c = _BETACF_TINY
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < _BETACF_TINY:
            d = _BETACF_TINY
        c = 1.0 + aa / c
        if abs(c) < _BETACF_TINY:
            c = _BETACF_TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _BETACF_EPS:
            return h
    raise ArithmeticError(f"incomplete beta continued fraction did not converge (a={a}, b={b}, x={x})")


def betainc(a: float, b: float, x: float, *, one_minus_x: float | None = None) -> float:
    """Regularized incomplete beta function I_x(a, b).

    ``one_minus_x`` may be supplied when ``1 - x`` is known more accurately than
    the subtraction would give (e.g. ``x = 1 - r**2``).
    """
    if a <= 0 or b <= 0:
        raise ValueError("betainc requires a > 0 and b > 0")
    y = 1.0 - x if one_minus_x is None else one_minus_x
    if x <= 0.0:
        return 0.0
    if y <= 0.0:
        return 1.0
    log_front = (
        math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b) + a * math.log(x) + b * math.log(y)
    )
    front = math.exp(log_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, y) / b


def t_two_sided_p(r: float, df: int) -> float:
    """Two-sided p-value of a correlation ``r`` under the t approximation.

    With ``t = r*sqrt(df/(1-r^2))`` the tail mass is ``I_{1-r^2}(df/2, 1/2)``;
    working in ``r`` directly avoids cancellation for |r| near 1.
    """
    if df < 1:
        return float("nan")
    r2 = min(r * r, 1.0)
    if r2 >= 1.0:
        return 0.0
    p = betainc(df / 2.0, 0.5, 1.0 - r2, one_minus_x=r2)
    return min(max(p, 0.0), 1.0)


def _as_pair(x: Sequence[float], y: Sequence[float]) -> tuple[np.ndarray, np.ndarray]:
    xa = np.asarray(x, dtype=float)
    ya = np.asarray(y, dtype=float)
    if xa.ndim != 1 or ya.ndim != 1:
        raise ValueError("correlation inputs must be one-dimensional")
    if xa.shape != ya.shape:
        raise ValueError(f"length mismatch: {xa.size} vs {ya.size}")
    if xa.size < 3:
        raise ValueError(f"need at least 3 observations, got {xa.size}")
    if not (np.all(np.isfinite(xa)) and np.all(np.isfinite(ya))):
        raise ValueError("correlation inputs must be finite")
    return xa, ya


def _r(xa: np.ndarray, ya: np.ndarray) -> float:
    dx = xa - xa.mean()
    dy = ya - ya.mean()
    sxx = float(np.dot(dx, dx))
    syy = float(np.dot(dy, dy))
    if sxx == 0.0 or syy == 0.0:
        raise UndefinedCorrelationError("correlation is undefined for a constant sequence")
    r = float(np.dot(dx, dy)) / math.sqrt(sxx * syy)
    return min(1.0, max(-1.0, r))


def pearson(x: Sequence[float], y: Sequence[float]) -> CorrResult:
    """Sample Pearson correlation with a two-sided t-test p-value (n - 2 df)."""
    xa, ya = _as_pair(x, y)
    r = _r(xa, ya)
    return CorrResult(r=r, p=t_two_sided_p(r, xa.size - 2), n=int(xa.size))


def rankdata(values: Sequence[float]) -> np.ndarray:
    """1-based ranks; tied values share the mean of the ranks they span."""
    a = np.asarray(values, dtype=float)
    order = np.argsort(a, kind="mergesort")
    sorted_a = a[order]
    ranks = np.empty(a.size, dtype=float)
    i = 0
    n = a.size
    while i < n:
        j = i
        while j + 1 < n and sorted_a[j + 1] == sorted_a[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def spearman(x: Sequence[float], y: Sequence[float]) -> CorrResult:
    """Spearman rho as the Pearson correlation of average ranks.

    The p-value uses the same t approximation as :func:`pearson`.
    """
    xa, ya = _as_pair(x, y)
    r = _r(rankdata(xa), rankdata(ya))
    return CorrResult(r=r, p=t_two_sided_p(r, xa.size - 2), n=int(xa.size))


def spearman_exact_p(x: Sequence[float], y: Sequence[float], *, max_n: int = 10) -> CorrResult:
    """Spearman rho with a two-sided p from full permutation enumeration.

    Intended as a reference for small samples (n <= ``max_n``); cost grows as n!.
    """
    xa, ya = _as_pair(x, y)
    n = xa.size
    if n > max_n:
        raise ValueError(f"exact enumeration limited to n <= {max_n}, got {n}")
    rx = rankdata(xa)
    ry = rankdata(ya)
    observed = _r(rx, ry)
    dx = rx - rx.mean()
    dy = ry - ry.mean()
    denom = math.sqrt(float(np.dot(dx, dx)) * float(np.dot(dy, dy)))
    perms = np.array(list(itertools.permutations(range(n))), dtype=np.int8)
    rhos = dy[perms] @ dx / denom
    extreme = np.count_nonzero(np.abs(rhos) >= abs(observed) - 1e-12)
    return CorrResult(r=observed, p=extreme / perms.shape[0], n=int(n))


def stars(p: float) -> str:
    """Significance marker: ``***`` p<.01, ``**`` p<.05, ``*`` p<.1, else ``""``."""
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"p must lie in [0, 1], got {p}")
    if p < 0.01:
        return "***"
    if p < 0.05:
        return "**"
    if p < 0.1:
        return "*"
    return ""
