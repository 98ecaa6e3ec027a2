"""Backward solvers for the coupled quadratic-coefficient ODE systems.

Three system shapes are handled:

* reduced cyclic (finite shift-invariant games): one H x H matrix, H = N,
  convolution indices mod N;
* reduced directed (infinite shift-invariant family): corner truncation on
  [0, H)^2; the directed structure makes the truncation exact, not an
  approximation, because entry (h, k) only references entries (j, k) with
  j <= h and (j, h) with j <= k;
* full (general costs): one N x N matrix per player, coupled through the
  feedback rows B(c)[h] = c^h[h].

All solvers integrate the time-reversed system forward from the terminal
data with classical fixed-step RK4 and return flows on the original grid,
so ``values[-1]`` is the terminal matrix bit-exactly.  Right-hand sides are
assembled from symmetric pieces only (outer products of a vector with
itself, M + M^T sums), which keeps every sample exactly symmetric without
re-symmetrization.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import CoefficientFlow, GameSpec, _rev_cumtrapz
from .errors import (
    BadStep,
    BallEscape,
    BlowUpDetected,
    DominationViolated,
    NoContraction,
    TruncationTooSmall,
    WindowMismatch,
)
from .seqtools import DecaySequence

#: Sup-norm level treated as numerical blow-up.
BLOWUP_LEVEL = 1e9

DEFAULT_STEPS = 512
DEFAULT_TRUNCATION = 32


# -- right-hand sides (forward form, s = T - t) -----------------------------

def cyclic_rhs(f: np.ndarray, c: np.ndarray) -> np.ndarray:
    """d c/ds for the reduced cyclic system, indices mod N.

    ``f + outer(a, a) - K c - (K c)^T`` with ``a = c[0]`` and
    ``K[h, j] = a[(h - j) mod N]``.
    """
    n = c.shape[0]
    a = c[0]
    idx = (np.arange(n)[:, None] - np.arange(n)[None, :]) % n
    m = a[idx] @ c
    # m + m.T first: the sum is bitwise symmetric, the two-step subtraction
    # is not, and downstream storage insists on exact symmetry
    return f + np.outer(a, a) - (m + m.T)


def directed_rhs(f: np.ndarray, c: np.ndarray) -> np.ndarray:
    """d c/ds for the directed corner system on [0, H)^2.

    Same shape as :func:`cyclic_rhs` with the circulant replaced by the
    lower-triangular Toeplitz ``K[h, j] = a[h - j]`` (zero for j > h).
    """
    h = c.shape[0]
    a = c[0]
    diff = np.arange(h)[:, None] - np.arange(h)[None, :]
    k = np.where(diff >= 0, a[np.clip(diff, 0, h - 1)], 0.0)
    m = k @ c
    return f + np.outer(a, a) - (m + m.T)


def full_rhs(costs_f: np.ndarray, c: np.ndarray) -> np.ndarray:
    """d c^i/ds for the full per-player system, stacked over i.

    ``f^i + (col_i c^i) (col_i c^i)^T - B^T c^i - c^i B`` with
    ``B[h] = c^h[h]`` (each player's own feedback row).
    """
    n = c.shape[0]
    rng = np.arange(n)
    b = c[rng, rng, :]
    own_col = c[rng, :, rng]  # own_col[i] = c^i[:, i]
    own = np.einsum("ih,ik->ihk", own_col, own_col)
    m = np.matmul(b.T, c)
    return costs_f + own - (m + np.swapaxes(m, -1, -2))


# -- integration ------------------------------------------------------------

def _rk4_samples(y0: np.ndarray, rhs, horizon: float, steps: int) -> np.ndarray:
    """Forward RK4 from s=0 to s=horizon; returns all steps+1 samples."""
    h = horizon / steps
    out = np.empty((steps + 1,) + y0.shape)
    out[0] = y0
    y = y0.copy()
    for m in range(steps):
        k1 = rhs(y)
        k2 = rhs(y + 0.5 * h * k1)
        k3 = rhs(y + 0.5 * h * k2)
        k4 = rhs(y + h * k3)
        y = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        peak = float(np.max(np.abs(y)))
        if not np.isfinite(peak) or peak > BLOWUP_LEVEL:
            t_est = horizon - (m + 1) * h
            raise BlowUpDetected(
                f"coefficient sup-norm passed {BLOWUP_LEVEL:.0e} while "
                f"integrating; backward time estimate t = {t_est:.6g}",
                t=t_est)
        out[m + 1] = y
    return out


def _reduced_terminal(game: GameSpec, h: int) -> tuple[np.ndarray, np.ndarray]:
    """(f, g) stencils padded to the reduced window."""
    assert game.stencil is not None
    ell = game.stencil.ell
    if h < ell:
        raise TruncationTooSmall(f"truncation {h} below stencil width {ell}")
    return game.stencil.padded(h)


def integrate_backward(game: GameSpec, steps: int = DEFAULT_STEPS,
                       truncation: int | None = None) -> CoefficientFlow:
    """Solve the backward coefficient system on a uniform grid.

    Shift-invariant games produce a reduced flow (cyclic for finite N,
    directed with window ``truncation`` for the infinite family, default
    32); general and mean-field-like games produce a full flow.  Raises
    BlowUpDetected with a backward-time estimate if any entry passes 1e9.
    """
    if steps < 8:
        raise BadStep(f"need at least 8 steps, got {steps}")
    t = np.linspace(0.0, game.horizon, steps + 1)
    if game.mode == "shift_invariant":
        if game.infinite:
            h = DEFAULT_TRUNCATION if truncation is None else int(truncation)
            f, g = _reduced_terminal(game, h)
            samples = _rk4_samples(g, lambda c: directed_rhs(f, c),
                                   game.horizon, steps)
            indexing = "directed"
        else:
            n = game.n_players
            assert n is not None
            f, g = _reduced_terminal(game, n)
            samples = _rk4_samples(g, lambda c: cyclic_rhs(f, c),
                                   game.horizon, steps)
            indexing = "cyclic"
        return CoefficientFlow(grid=t, values=samples[::-1], layout="reduced",
                               indexing=indexing)
    cf = game.costs_f
    cg = game.costs_g
    samples = _rk4_samples(cg, lambda c: full_rhs(cf, c), game.horizon, steps)
    return CoefficientFlow(grid=t, values=samples[::-1], layout="full",
                           indexing="players")


def refine_backward(game: GameSpec, tol: float = 1e-8,
                    start_steps: int = DEFAULT_STEPS, max_doublings: int = 6,
                    truncation: int | None = None
                    ) -> tuple[CoefficientFlow, int]:
    """Double the step count until two successive solves differ by < tol.

    Comparison is in sup norm on the shared (coarse) grid.  Returns the
    finer flow and its step count.
    """
    steps = start_steps
    prev = integrate_backward(game, steps, truncation)
    for _ in range(max_doublings):
        steps *= 2
        cur = integrate_backward(game, steps, truncation)
        gap = float(np.max(np.abs(cur.values[::2] - prev.values)))
        if gap < tol:
            return cur, steps
        prev = cur
    return prev, steps


# -- Picard fixed point -----------------------------------------------------

@dataclass(frozen=True)
class PicardState:
    """Outcome of the fixed-point iteration.

    weighted_norm is the final iterate's gauge norm
    ``sup_{h,k} ||c_hk||_inf / d_hk``; ball_bound is the 2 d_{hk} envelope
    the iterates must stay inside; diffs and factors are the per-iteration
    gauge-norm increments and their successive ratios.
    """

    weighted_norm: float
    ball_bound: np.ndarray
    diffs: tuple[float, ...]
    factors: tuple[float, ...]
    iterations: int


def _reduced_weights(window: int, cyclic: bool, gauge: DecaySequence | float
                     ) -> np.ndarray:
    """beta_<h> beta_<k> (or r^-(<h>+<k>)) on the reduced window."""
    idx = np.arange(window)
    dist = np.minimum(idx, window - idx) if cyclic else idx
    if isinstance(gauge, DecaySequence):
        if int(dist.max()) > gauge.radius:
            raise WindowMismatch(
                f"gauge window {gauge.radius} too small for index distance "
                f"{int(dist.max())}")
        b = gauge.entries[dist]
        return np.outer(b, b)
    return np.power(float(gauge), -(dist[:, None] + dist[None, :]), dtype=float)


def _centered_weights(n_players: int, gauge: DecaySequence | float
                      ) -> np.ndarray:
    """beta_|h-i| beta_|k-i| (or the rate analogue), stacked over players."""
    idx = np.arange(n_players)
    dist = np.abs(idx[None, :] - idx[:, None])  # dist[i, h] = |h - i|
    if isinstance(gauge, DecaySequence):
        if int(dist.max()) > gauge.radius:
            raise WindowMismatch("gauge window smaller than player range")
        b = gauge.entries[dist]
    else:
        b = np.power(float(gauge), -dist, dtype=float)
    return np.einsum("ih,ik->ihk", b, b)


def picard_solve(game: GameSpec, beta: DecaySequence, max_iters: int = 64,
                 tol: float = 1e-10, steps: int = DEFAULT_STEPS,
                 truncation: int | None = None, max_domination: float = 16.0
                 ) -> tuple[CoefficientFlow, PicardState]:
    """Iterate the integral form of the backward system to its fixed point.

    The map sends c to ``g + int_t^T (f + outer(a, a) - K c - (K c)^T) ds``
    with trapezoid quadrature on the flow grid, starting from the constant
    flow c = g.  Iterates are measured in the gauge norm built from beta;
    escaping the 2 d ball raises BallEscape (the horizon is too long for
    the contraction regime), three successive non-contracting steps raise
    NoContraction.
    """
    if game.mode != "shift_invariant":
        raise WindowMismatch("fixed-point path handles shift-invariant games")
    if not beta.certified:
        raise DominationViolated("gauge must be certified self-controlled")
    if steps < 8:
        raise BadStep(f"need at least 8 steps, got {steps}")
    cyclic = not game.infinite
    if cyclic:
        window = game.n_players
        assert window is not None
        rhs = cyclic_rhs
    else:
        window = DEFAULT_TRUNCATION if truncation is None else int(truncation)
        rhs = directed_rhs
    f, g = _reduced_terminal(game, window)

    theta = np.maximum(np.abs(f), np.abs(g))
    outer_b = _reduced_weights(window, cyclic, beta)
    d = outer_b + theta
    ratio = float(np.max(theta / outer_b))
    if ratio > max_domination:
        raise DominationViolated(
            f"cost data exceeds {max_domination} * beta (x) beta "
            f"(measured ratio {ratio:.3g})")

    grid = np.linspace(0.0, game.horizon, steps + 1)

    def gauge_norm(samples: np.ndarray) -> float:
        return float(np.max(np.max(np.abs(samples), axis=0) / d))

    def apply_map(samples: np.ndarray) -> np.ndarray:
        vals = np.stack([rhs(f, samples[m]) for m in range(samples.shape[0])])
        return g[None] + _rev_cumtrapz(vals, grid)

    cur = np.broadcast_to(g, (steps + 1,) + g.shape).copy()
    diffs: list[float] = []
    factors: list[float] = []
    stalled = 0
    for _ in range(max_iters):
        nxt = apply_map(cur)
        norm = gauge_norm(nxt)
        if norm > 2.0:
            raise BallEscape(
                f"iterate left the weighted ball (gauge norm {norm:.3g} > 2); "
                f"the horizon {game.horizon} looks beyond the contraction "
                f"regime")
        diffs.append(gauge_norm(nxt - cur))
        if len(diffs) >= 2 and diffs[-2] > 0:
            q = diffs[-1] / diffs[-2]
            factors.append(q)
            stalled = stalled + 1 if q >= 1.0 else 0
            if stalled >= 3:
                raise NoContraction(
                    f"no contraction over 3 iterations (last factor {q:.3g})")
        cur = nxt
        if diffs[-1] < tol:
            break
    else:
        raise NoContraction(
            f"fixed point not reached in {max_iters} iterations "
            f"(last increment {diffs[-1]:.3g})")

    flow = CoefficientFlow(grid=grid, values=cur, layout="reduced",
                           indexing="cyclic" if cyclic else "directed")
    state = PicardState(weighted_norm=gauge_norm(cur), ball_bound=2.0 * d,
                        diffs=tuple(diffs), factors=tuple(factors),
                        iterations=len(diffs))
    return flow, state


# -- decay certification ----------------------------------------------------

@dataclass(frozen=True)
class DecayCertificate:
    """Measured decay constant of a flow against a gauge.

    Exactly one of gauge (a DecaySequence) or rate (geometric r) is set.
    For reduced flows the weight at (h, k) is ``beta_<h> beta_<k>`` or
    ``r^-(h+k)``; for full flows indices are re-centered at each player,
    ``|h - i|`` in place of ``h``.
    """

    constant: float
    gauge: DecaySequence | None = None
    rate: float | None = None

    def __post_init__(self) -> None:
        if (self.gauge is None) == (self.rate is None):
            raise WindowMismatch("certificate needs exactly one of gauge, rate")
        if not np.isfinite(self.constant) or self.constant < 0:
            raise WindowMismatch(f"bad certificate constant {self.constant}")

    def tail_l1(self, window: int) -> float:
        """Bound on sum_{h+k >= window} of the certified envelope (rate only)."""
        if self.rate is None or self.rate <= 1.0:
            return float("inf")
        r = self.rate
        # sum over h+k = m of r^-m is (m+1) r^-m; sum_{m>=W} exactly.
        w = window
        s = r ** (-w) * ((w + 1.0) / (1.0 - 1.0 / r) + (1.0 / r) / (1.0 - 1.0 / r) ** 2)
        return float(self.constant * s)


def _flow_weights(flow: CoefficientFlow, gauge: DecaySequence | float
                  ) -> np.ndarray:
    if flow.layout == "reduced":
        return _reduced_weights(flow.truncation, flow.indexing == "cyclic",
                                gauge)
    return _centered_weights(flow.truncation, gauge)


def certify_decay(flow: CoefficientFlow, gauge: DecaySequence | float
                  ) -> DecayCertificate:
    """Measure ``sup_t |c| / weight`` and package it as a certificate."""
    weights = _flow_weights(flow, gauge)
    peak = np.max(np.abs(flow.values), axis=0)
    constant = float(np.max(peak / weights))
    if isinstance(gauge, DecaySequence):
        return DecayCertificate(constant=constant, gauge=gauge)
    return DecayCertificate(constant=constant, rate=float(gauge))


def solve_general_decayed(costs_f: np.ndarray, costs_g: np.ndarray,
                          horizon: float, beta: DecaySequence,
                          steps: int = DEFAULT_STEPS,
                          max_domination: float = 16.0
                          ) -> tuple[CoefficientFlow, DecayCertificate]:
    """Solve the full system under a player-centered decay hypothesis.

    Requires ``max(|f^i_hk|, |g^i_hk|) <= max_domination * beta_|h-i|
    beta_|k-i|`` entrywise, then certifies the solution against the same
    centered gauge.
    """
    game = GameSpec(mode="general", horizon=horizon,
                    costs_f=costs_f, costs_g=costs_g)
    weights = _centered_weights(game.n_players, beta)
    data_ratio = float(np.max(np.maximum(np.abs(game.costs_f),
                                         np.abs(game.costs_g)) / weights))
    if data_ratio > max_domination:
        raise DominationViolated(
            f"cost data exceeds {max_domination} * centered gauge "
            f"(measured ratio {data_ratio:.3g})")
    flow = integrate_backward(game, steps=steps)
    return flow, certify_decay(flow, beta)
