"""Long-time asymptotics of the evolutive coefficient flow.

As the horizon grows the extracted coefficients at time 0 approach the
stationary matrix from the plus branch of the ergodic symbol, the value
per unit time approaches the stationary trace, and the next-order constant
mu is the integral of the trace defect.  Everything here runs through
contour extraction, so the symbol must be certified up to the largest
horizon in play.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import UncertifiedSymbol, WindowMismatch
from .genfun import (
    ContourPlan,
    SymbolPair,
    ergodic_coefficients,
    extract_coefficients,
)
from .riccati import DecayCertificate

#: Gaps below 10x this are treated as extraction noise and left out of fits.
EXTRACTION_NOISE = 1e-8


@dataclass(frozen=True)
class ErgodicValue:
    """Stationary cost rate on a truncation window plus a tail bound.

    tail_bound is NaN when no decay certificate was supplied; it never
    silently absorbs into value.
    """

    value: float
    tail_bound: float


def ergodic_value(cbar: np.ndarray, d: int = 1,
                  certificate: DecayCertificate | None = None) -> ErgodicValue:
    """d * trace of the stationary matrix, with a certified diagonal tail.

    With a geometric certificate (rate r > 1, constant K) the neglected
    diagonal entries beyond the window H are each at most K r^-2h, so the
    tail is d K r^-2H / (1 - r^-2).
    """
    cbar = np.asarray(cbar, dtype=float)
    if cbar.ndim != 2 or cbar.shape[0] != cbar.shape[1]:
        raise WindowMismatch(f"stationary matrix must be square, got {cbar.shape}")
    value = float(d * np.trace(cbar))
    tail = float("nan")
    if certificate is not None and certificate.rate is not None:
        r = certificate.rate
        if r > 1.0:
            h = cbar.shape[0]
            tail = d * certificate.constant * r ** (-2 * h) / (1.0 - r**-2)
    return ErgodicValue(value=value, tail_bound=tail)


@dataclass(frozen=True)
class ConvergenceReport:
    """Per-horizon gaps to the stationary solution and fitted asymptotics."""

    horizons: tuple[float, ...]
    l1_gaps: tuple[float, ...]
    trace_gaps: tuple[float, ...]
    lam: float
    mu_estimate: float
    fitted_rate: float

    def __post_init__(self) -> None:
        hs = self.horizons
        if len(hs) < 2 or any(b <= a for a, b in zip(hs, hs[1:])):
            raise WindowMismatch("horizons must be strictly increasing, >= 2")
        if any(g < 0 for g in self.l1_gaps + self.trace_gaps):
            raise WindowMismatch("gaps must be nonnegative")


def _fit_log_rate(horizons: np.ndarray, gaps: np.ndarray) -> float:
    """Least-squares slope of log gap vs horizon, noise-floored points dropped."""
    keep = gaps > 10.0 * EXTRACTION_NOISE
    if keep.sum() < 2:
        return float("nan")
    return float(np.polyfit(horizons[keep], np.log(gaps[keep]), 1)[0])


def evolutive_trace_series(symbol: SymbolPair, grid: np.ndarray,
                           truncation: int, plan: ContourPlan,
                           allow_uncertified: bool = False) -> np.ndarray:
    """Trace of the extracted matrix at each time-to-go in ``grid``.

    Aliasing is probed at the largest time only; the inner samples reuse
    the same contour.
    """
    grid = np.asarray(grid, dtype=float)
    out = np.empty(grid.size)
    top = int(np.argmax(grid))
    for j, u in enumerate(grid):
        c = extract_coefficients(symbol, plan, float(u), truncation,
                                 check_aliasing=(j == top),
                                 allow_uncertified=allow_uncertified)
        out[j] = float(np.trace(c))
    return out


def convergence_sweep(symbol: SymbolPair, horizons: list[float],
                      truncation: int, plan: ContourPlan | None = None,
                      d: int = 1, n_quad: int = 129) -> ConvergenceReport:
    """Measure the approach to the stationary solution over a horizon list.

    For each horizon T the extraction at time-to-go T is the initial-time
    coefficient matrix of the T-horizon problem; gaps are entrywise l1 and
    trace distances to the plus-branch stationary matrix.  mu comes from
    integrating the trace defect up to the largest horizon, with one
    geometric Richardson step across the two largest horizons when the
    fitted rate supports it.
    """
    if not symbol.certified:
        raise UncertifiedSymbol("sweep needs a certified symbol")
    hs = np.asarray(sorted(float(t) for t in horizons))
    if hs.size < 2:
        raise WindowMismatch("need at least two horizons")
    if not symbol.compatible_up_to(float(hs[-1])):
        raise UncertifiedSymbol(
            f"compatibility verified up to {symbol.compat_t_max}, sweep "
            f"needs {hs[-1]}")
    if plan is None:
        plan = ContourPlan.for_symbol(symbol, truncation)

    cbar = ergodic_coefficients(symbol, plan, truncation, sign="plus")
    lam = float(d * np.trace(cbar))

    l1 = np.empty(hs.size)
    tr = np.empty(hs.size)
    for j, horizon in enumerate(hs):
        c0 = extract_coefficients(symbol, plan, float(horizon), truncation)
        l1[j] = float(np.abs(c0 - cbar).sum())
        tr[j] = abs(d * float(np.trace(c0)) - lam)

    rate = _fit_log_rate(hs, l1)

    ugrid = np.linspace(0.0, float(hs[-1]), n_quad)
    trace_u = d * evolutive_trace_series(symbol, ugrid, truncation, plan)
    defect = trace_u - lam
    cum = np.concatenate([[0.0], np.cumsum(
        0.5 * (defect[1:] + defect[:-1]) * np.diff(ugrid))])
    mu_at = np.interp(hs, ugrid, cum)
    mu = float(mu_at[-1])
    if np.isfinite(rate) and rate < 0:
        q = float(np.exp(rate * (hs[-1] - hs[-2])))
        if q < 0.95:
            mu = float((mu_at[-1] - q * mu_at[-2]) / (1.0 - q))

    return ConvergenceReport(horizons=tuple(hs), l1_gaps=tuple(l1),
                             trace_gaps=tuple(tr), lam=lam, mu_estimate=mu,
                             fitted_rate=rate)


@dataclass(frozen=True)
class ValueNormalizationReport:
    """Normalized value-function gaps |u_T(sT, x)/T - (1-s) lambda|."""

    fractions: tuple[float, ...]
    gaps: tuple[float, ...]
    lam: float

    @property
    def max_gap(self) -> float:
        return max(self.gaps)


def value_normalization_check(symbol: SymbolPair, horizon: float,
                              t_fracs: list[float], x: np.ndarray,
                              truncation: int, d: int = 1,
                              plan: ContourPlan | None = None,
                              n_quad: int = 129) -> ValueNormalizationReport:
    """Tabulate how fast u_T(sT, x)/T approaches the linear ergodic profile.

    The value is reconstructed from the coefficient matrix at time-to-go
    (1-s) T, the quadratic form in the window of x, and the trace-integral
    constant term.  x may be (H,) for scalar states or (H, d).
    """
    if not symbol.certified:
        raise UncertifiedSymbol("value check needs a certified symbol")
    if not symbol.compatible_up_to(horizon):
        raise UncertifiedSymbol(
            f"compatibility verified up to {symbol.compat_t_max}, "
            f"requested horizon {horizon}")
    fracs = sorted(float(s) for s in t_fracs)
    if not fracs or fracs[0] < 0.0 or fracs[-1] > 1.0:
        raise WindowMismatch("fractions must lie in [0, 1]")
    if plan is None:
        plan = ContourPlan.for_symbol(symbol, truncation)

    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if x.shape[0] < truncation:
        x = np.vstack([x, np.zeros((truncation - x.shape[0], x.shape[1]))])
    gram = x[:truncation] @ x[:truncation].T

    cbar = ergodic_coefficients(symbol, plan, truncation, sign="plus")
    lam = float(d * np.trace(cbar))

    ugrid = np.linspace(0.0, horizon, n_quad)
    trace_u = d * evolutive_trace_series(symbol, ugrid, truncation, plan)
    cum = np.concatenate([[0.0], np.cumsum(
        0.5 * (trace_u[1:] + trace_u[:-1]) * np.diff(ugrid))])

    gaps = []
    for s in fracs:
        to_go = (1.0 - s) * horizon
        c = extract_coefficients(symbol, plan, to_go, truncation,
                                 check_aliasing=False)
        quad = 0.5 * float(np.sum(c * gram))
        const = float(np.interp(to_go, ugrid, cum))
        gaps.append(abs((quad + const) / horizon - (1.0 - s) * lam))
    return ValueNormalizationReport(fractions=tuple(fracs), gaps=tuple(gaps),
                                    lam=lam)
