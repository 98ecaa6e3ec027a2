"""Forward solves and a-priori envelope checks for mean-field-like costs.

The cost families here are fully general per-player symmetric matrices whose
entries shrink with the population: own diagonal O(1), own row O(1/N), third
parties O(1/N^2).  Under that scaling the coupled quadratic system stays
bounded uniformly in N as long as the feedback matrix built from leading
rows keeps its quadratic form above a barrier, and explicit Gronwall
envelopes dominate the solution norms.  This module measures both sides:
it integrates the forward system while monitoring the eigenvalue floor,
and evaluates the closed-form envelopes for comparison.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import symmetrize
from .errors import (
    BadStep,
    BlowUpDetected,
    DimensionMismatch,
    MonotonicityBarrierCrossed,
    TargetInfeasible,
)
from .riccati import BLOWUP_LEVEL, full_rhs

DENSE_STORAGE_LIMIT = 64
CHECKPOINT_STRIDE = 32


def _check_family(costs: np.ndarray, name: str) -> np.ndarray:
    costs = np.asarray(costs, dtype=float)
    if costs.ndim != 3 or costs.shape[1] != costs.shape[0] \
            or costs.shape[2] != costs.shape[0]:
        raise DimensionMismatch(
            f"{name} must be a stack of N square matrices, got {costs.shape}")
    return np.stack([symmetrize(costs[i], what=f"{name}[{i}]")
                     for i in range(costs.shape[0])])


def _feedback_matrix(c: np.ndarray) -> np.ndarray:
    """Row h is player h's own leading row."""
    rng = np.arange(c.shape[0])
    return c[rng, rng, :]


def _sym_floor(c: np.ndarray) -> float:
    """Smallest eigenvalue of the symmetrized feedback matrix.

    The feedback matrix itself is not symmetric; every estimate that uses
    it does so through its quadratic form, which only sees the symmetric
    part.
    """
    b = _feedback_matrix(c)
    return float(np.linalg.eigvalsh(0.5 * (b + b.T)).min())


def _cumtrapz(y: np.ndarray, x: np.ndarray) -> np.ndarray:
    out = np.zeros_like(y)
    np.cumsum(0.5 * (y[1:] + y[:-1]) * np.diff(x), out=out[1:])
    return out


# -- scaling budgets --------------------------------------------------------

@dataclass(frozen=True)
class MfScalingBudget:
    """Weighted norm bounds and eigenvalue-floor defects for a cost pair.

    Attributes:
        kappa_f: bound on the running-cost weighted norm.
        kappa_g: same bound for the terminal costs.
        k_f: monotonicity defect, the amount by which the symmetrized
            feedback matrix of the running costs dips below zero.
        k_g: same defect for the terminal costs.
    """

    kappa_f: float
    kappa_g: float
    k_f: float
    k_g: float

    def __post_init__(self) -> None:
        for name in ("kappa_f", "kappa_g", "k_f", "k_g"):
            v = getattr(self, name)
            if not np.isfinite(v) or v < 0.0:
                raise DimensionMismatch(f"{name} = {v} must be finite >= 0")


def _weighted_norm(costs: np.ndarray) -> float:
    n = costs.shape[0]
    rng = np.arange(n)
    sq = costs**2
    bsq = sq[rng, rng, :]
    own_col = sq[rng, :, rng]  # [i, h] = |m^i_{hi}|^2
    t1 = n * (sq.sum(axis=(1, 2)) - own_col.sum(axis=1))
    t2 = n * (bsq.sum(axis=0) - np.diag(bsq))
    t3 = np.diag(bsq)
    return float(np.max(t1 + t2 + t3))


def check_mf_scaling(costs_f: np.ndarray, costs_g: np.ndarray
                     ) -> MfScalingBudget:
    """Measure the exact scaling budget of a cost pair.

    For each family the reported kappa is the sup over players of
    N * (off-own-column Frobenius mass) + N * (other players' coupling
    column) + (own diagonal squared); the reported defect is the negative
    part of the smallest eigenvalue of the symmetrized feedback matrix.

    Args:
        costs_f: running costs, shape (N, N, N), symmetric per player.
        costs_g: terminal costs, same shape.

    Returns:
        The tightest budget the families satisfy.
    """
    costs_f = _check_family(costs_f, "costs_f")
    costs_g = _check_family(costs_g, "costs_g")
    if costs_f.shape != costs_g.shape:
        raise DimensionMismatch(
            f"family shapes differ: {costs_f.shape} vs {costs_g.shape}")
    return MfScalingBudget(
        kappa_f=_weighted_norm(costs_f),
        kappa_g=_weighted_norm(costs_g),
        k_f=max(0.0, -_sym_floor(costs_f)),
        k_g=max(0.0, -_sym_floor(costs_g)),
    )


def generate_mf_costs(n_players: int, kappa_target: float = 1.0,
                      k_target: float = 0.0, seed: int = 0
                      ) -> tuple[np.ndarray, np.ndarray]:
    """Draw a random cost pair meeting a scaling budget.

    The construction is diagonally dominant: own diagonals near one, own
    rows O(1/N), third parties O(1/N^2), so the symmetrized feedback
    matrix is positive semidefinite outright.  A requested positive defect
    is introduced by an identity shift, then the whole family is rescaled
    until the measured kappa meets the target; both steps can only keep
    the eigenvalue floor above -k_target.

    Args:
        n_players: population size, at least 2.
        kappa_target: ceiling for the measured weighted norms.
        k_target: ceiling for the eigenvalue-floor defects.
        seed: generator seed; identical seeds give identical families.

    Returns:
        Tuple (costs_f, costs_g) of (N, N, N) symmetric stacks.

    Raises:
        TargetInfeasible: nonpositive kappa target or negative defect
            target.
    """
    if kappa_target <= 0.0:
        raise TargetInfeasible(f"kappa_target = {kappa_target} must be > 0")
    if k_target < 0.0:
        raise TargetInfeasible(f"k_target = {k_target} must be >= 0")
    if n_players < 2:
        raise DimensionMismatch("need at least two players")
    rng = np.random.default_rng(seed)
    n = n_players
    idx = np.arange(n)

    def draw() -> np.ndarray:
        third = rng.uniform(-0.5, 0.5, size=(n, n, n)) / n**2
        third = 0.5 * (third + third.swapaxes(1, 2))
        own = rng.uniform(-0.5, 0.5, size=(n, n)) / n
        diag = 1.0 + 0.1 * rng.uniform(-1.0, 1.0, size=n)
        m = third
        m[idx, idx, :] = own
        m[idx, :, idx] = own
        m[idx, idx, idx] = diag
        if k_target > 0.0:
            m[idx, idx, idx] -= 0.5 * k_target
        return m

    out = []
    for _ in range(2):
        m = draw()
        for _ in range(3):
            kappa = _weighted_norm(m)
            if kappa <= kappa_target:
                break
            m = m * math.sqrt(kappa_target / kappa)
        out.append(m)
    return out[0], out[1]


# -- envelopes --------------------------------------------------------------

def gronwall_envelopes(budget: MfScalingBudget, barrier: float,
                       horizon: float, n_players: int,
                       grid: np.ndarray | None = None) -> np.ndarray:
    """Evaluate the three a-priori envelopes on a time grid.

    With M+ the positive part of the barrier level and kappa_f, kappa_g
    from the budget:

        k0(t) = (kappa_g + kappa_f t) exp((1 + 4 M+) t)
        k1(t) = 2 k0(t) exp(2 int_0^t sqrt(k0))
        k2(t) = (kappa_g + (kappa_f + k0(t) k1(t) / N^2) t) exp((2 + M+) t)

    The integral uses trapezoid quadrature on the grid; the product inside
    k2 uses the running values of k0 and k1.

    Args:
        budget: measured or assumed scaling budget.
        barrier: eigenvalue-floor level M the solution is assumed to keep.
        horizon: final time, used only when grid is None.
        n_players: population size N in the k2 cross term.
        grid: increasing sample times starting at 0; default 129 uniform
            samples on [0, horizon].

    Returns:
        Array of shape (3, len(grid)) with rows k0, k1, k2.
    """
    if grid is None:
        grid = np.linspace(0.0, horizon, 129)
    grid = np.asarray(grid, dtype=float)
    mp = max(float(barrier), 0.0)
    # absurd barriers (defensive solves) overflow to inf, which still
    # dominates; keep the warning machinery quiet about it
    with np.errstate(over="ignore"):
        k0 = (budget.kappa_g + budget.kappa_f * grid) \
            * np.exp((1 + 4 * mp) * grid)
        k1 = 2.0 * k0 * np.exp(2.0 * _cumtrapz(np.sqrt(k0), grid))
        k2 = (budget.kappa_g
              + (budget.kappa_f + k0 * k1 / n_players**2) * grid) \
            * np.exp((2 + mp) * grid)
    return np.vstack([k0, k1, k2])


# -- the forward solve ------------------------------------------------------

@dataclass(frozen=True)
class MfMonitor:
    """Per-step diagnostics of a forward solve.

    Attributes:
        grid: monitor sample times (every integration step).
        min_eig_bc: smallest eigenvalue of the symmetrized feedback matrix
            at each sample.
        measured_norms: shape (3, S); rows are the three weighted solution
            norms that the envelopes dominate, heaviest first.
        envelopes: shape (3, S); the Gronwall envelopes on the same grid.
        barrier: the floor level the solve was guarded against.
        dterm_sq: squared Frobenius norm of the third-party interaction
            defect at each sample, or None when not computed.
    """

    grid: np.ndarray
    min_eig_bc: np.ndarray
    measured_norms: np.ndarray
    envelopes: np.ndarray
    barrier: float
    dterm_sq: np.ndarray | None = None

    @property
    def final_bound(self) -> float:
        """Sum of the three envelopes at the final time."""
        return float(self.envelopes[:, -1].sum())

    @property
    def domination_margin(self) -> float:
        """min over samples of (envelope - measured); >= 0 means dominated."""
        return float((self.envelopes - self.measured_norms).min())


def _measured_norms(c: np.ndarray) -> tuple[float, float, float]:
    n = c.shape[0]
    rng = np.arange(n)
    sq = c**2
    own_col = sq[rng, :, rng]
    n1 = n * float(np.max(sq.sum(axis=(1, 2)) - own_col.sum(axis=1)))
    bsq = sq[rng, rng, :]
    n2 = n * float(np.max(bsq.sum(axis=0) - np.diag(bsq)))
    n3 = float(np.max(np.diag(bsq)))
    return n1, n2, n3


def _dterm_sq(c: np.ndarray) -> float:
    """|D|_F^2 with D_{ik} = sum_{j != i} c^i_{kj} c^j_{ji}."""
    b = _feedback_matrix(c)
    rng = np.arange(c.shape[0])
    full = np.einsum("ikj,ji->ik", c, b)
    d = full - c[rng, :, rng] * np.diag(b)[:, None]
    return float(np.sum(d * d))


def solve_mf_system(costs_f: np.ndarray, costs_g: np.ndarray, horizon: float,
                    steps: int = 64, m_guess: float = 1e-6,
                    store_every: int | None = None,
                    compute_dterm: bool | None = None):
    """Integrate the forward coefficient system with monitoring.

    Runs classical RK4 from c(0) = costs_g on the time-to-go axis and
    records, at every step, the eigenvalue floor of the symmetrized
    feedback matrix, the three weighted norms, and (optionally) the
    third-party defect.  The dense solution is kept at every step for
    small populations and only at checkpoints for large ones.

    Args:
        costs_f: running costs, (N, N, N) symmetric per player.
        costs_g: terminal costs, same shape; the forward initial data.
        horizon: final time T > 0.
        steps: RK4 step count, at least 64.
        m_guess: barrier level; the solve halts once the floor drops
            below -m_guess.
        store_every: keep a dense sample every this many steps; default 1
            when N <= 64, else 32.
        compute_dterm: whether to track the defect norm; default N <= 64.

    Returns:
        Tuple (flow, monitor); the flow is a full-layout CoefficientFlow
        on the forward time axis, first sample exactly costs_g.

    Raises:
        MonotonicityBarrierCrossed: floor fell below -m_guess; carries
            the crossing time and the floor value.
        BlowUpDetected: a coefficient left the blow-up box.
        BadStep: fewer than 64 steps or nonpositive horizon.
    """
    from .core import CoefficientFlow

    if steps < 64:
        raise BadStep(f"steps = {steps}; the monitor needs at least 64")
    if horizon <= 0.0:
        raise BadStep(f"horizon = {horizon} must be positive")
    costs_f = _check_family(costs_f, "costs_f")
    costs_g = _check_family(costs_g, "costs_g")
    if costs_f.shape != costs_g.shape:
        raise DimensionMismatch(
            f"family shapes differ: {costs_f.shape} vs {costs_g.shape}")
    n = costs_f.shape[0]
    if store_every is None:
        store_every = 1 if n <= DENSE_STORAGE_LIMIT else CHECKPOINT_STRIDE
    if compute_dterm is None:
        compute_dterm = n <= DENSE_STORAGE_LIMIT

    budget = check_mf_scaling(costs_f, costs_g)
    grid = np.linspace(0.0, horizon, steps + 1)
    envelopes = gronwall_envelopes(budget, m_guess, horizon, n, grid)

    min_eig = np.empty(steps + 1)
    norms = np.empty((3, steps + 1))
    dsq = np.empty(steps + 1) if compute_dterm else None

    def record(m: int, c: np.ndarray) -> None:
        floor = _sym_floor(c)
        min_eig[m] = floor
        norms[:, m] = _measured_norms(c)
        if dsq is not None:
            dsq[m] = _dterm_sq(c)
        if floor < -m_guess:
            raise MonotonicityBarrierCrossed(
                f"feedback floor {floor:.6g} crossed -{m_guess:.6g} "
                f"at t = {grid[m]:.6g}", t=float(grid[m]), floor=floor)

    c = costs_g.copy()
    kept = [c.copy()]
    kept_grid = [0.0]
    record(0, c)
    h = horizon / steps
    for m in range(steps):
        k1 = full_rhs(costs_f, c)
        k2 = full_rhs(costs_f, c + 0.5 * h * k1)
        k3 = full_rhs(costs_f, c + 0.5 * h * k2)
        k4 = full_rhs(costs_f, c + h * k3)
        c = c + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        peak = float(np.max(np.abs(c)))
        if not np.isfinite(peak) or peak > BLOWUP_LEVEL:
            raise BlowUpDetected(
                f"coefficients reached {peak:.3g}", t=float(grid[m + 1]))
        record(m + 1, c)
        if (m + 1) % store_every == 0 or m + 1 == steps:
            kept.append(c.copy())
            kept_grid.append(float(grid[m + 1]))

    flow = CoefficientFlow(grid=np.array(kept_grid), values=np.stack(kept),
                           layout="full", indexing="players")
    monitor = MfMonitor(grid=grid, min_eig_bc=min_eig, measured_norms=norms,
                        envelopes=envelopes, barrier=m_guess, dterm_sq=dsq)
    return flow, monitor


# -- horizon feasibility ----------------------------------------------------

@dataclass(frozen=True)
class HorizonScan:
    """Outcome of the small-defect horizon feasibility check.

    Attributes:
        feasible: whether a barrier level exists for the given defects.
        barrier: a feasible level M, or None.
        kg_sup: the supremum 1/(2 e T) the terminal defect must stay
            strictly below.
        kf_bound: the running-defect bound achieved at the returned (or
            best scanned) barrier level.
    """

    feasible: bool
    barrier: float | None
    kg_sup: float
    kf_bound: float
    horizon: float
    k_f: float
    k_g: float


def scan_horizon_condition(k_f: float, k_g: float, horizon: float
                           ) -> HorizonScan:
    """Find a barrier level certifying the defect pair on [0, T].

    The terminal condition demands k_g < sup_M M exp(-2 M T), whose
    maximizer is M = 1/(2T) with value 1/(2 e T); strict inequality.  A
    level M then also needs M exp(-2 M T) > k_g together with

        2 M (M exp(-M T) - k_g) / (1 - exp(-2 M T)) > k_f.

    The canonical level 1/(2T) is tried first, then a log grid.

    Args:
        k_f: running-cost defect bound, >= 0.
        k_g: terminal-cost defect bound, >= 0.
        horizon: T > 0.

    Returns:
        HorizonScan; when infeasible, kf_bound reports the best value the
        scan achieved.

    Raises:
        BadStep: nonpositive horizon.
    """
    if horizon <= 0.0:
        raise BadStep(f"horizon = {horizon} must be positive")
    t = float(horizon)
    kg_sup = 1.0 / (2.0 * math.e * t)

    def kf_bound_at(m: float) -> float:
        return 2.0 * m * (m * math.exp(-m * t) - k_g) \
            / -math.expm1(-2.0 * m * t)

    def admissible(m: float) -> bool:
        return m * math.exp(-2.0 * m * t) > k_g and kf_bound_at(m) > k_f

    if not k_g < kg_sup:
        return HorizonScan(feasible=False, barrier=None, kg_sup=kg_sup,
                           kf_bound=-math.inf, horizon=t, k_f=k_f, k_g=k_g)
    m_star = 1.0 / (2.0 * t)
    if admissible(m_star):
        return HorizonScan(feasible=True, barrier=m_star, kg_sup=kg_sup,
                           kf_bound=kf_bound_at(m_star), horizon=t,
                           k_f=k_f, k_g=k_g)
    best_m, best_val = None, -math.inf
    for m in np.geomspace(1e-3, 1e3, 601) / t:
        if m * math.exp(-2.0 * m * t) <= k_g:
            continue
        val = kf_bound_at(m)
        if val > best_val:
            best_m, best_val = float(m), val
    if best_m is not None and best_val > k_f:
        return HorizonScan(feasible=True, barrier=best_m, kg_sup=kg_sup,
                           kf_bound=best_val, horizon=t, k_f=k_f, k_g=k_g)
    return HorizonScan(feasible=False, barrier=None, kg_sup=kg_sup,
                       kf_bound=best_val, horizon=t, k_f=k_f, k_g=k_g)
