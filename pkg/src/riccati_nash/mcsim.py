"""Monte Carlo simulation of the controlled player dynamics.

Paths follow dX = alpha(t, X) dt + sqrt(2) dB by Euler-Maruyama, costs are
accumulated per player, and the near-equilibrium property of the wrapped
infinite-family feedback is estimated by paired runs sharing their noise.

The noise layout is counter based: every time step owns a fixed block of
the Philox counter space derived from (seed, step index), so results do
not depend on how work is batched and two runs with the same seed see the
same Brownian increments no matter which control they apply.  That pairing
is what makes small deviation gains measurable at all.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .core import CoefficientFlow, GameSpec
from .errors import (
    BadStep,
    ExplodingState,
    InadmissibleDeviation,
    IndefiniteCost,
    UncertifiedFlow,
    WindowMismatch,
)
from .genfun import certify_symbol
from .riccati import DecayCertificate, certify_decay, integrate_backward

#: Philox key word mixed with the user seed; golden-ratio odd constant.
_KEY_CONST = np.uint64(0x9E3779B97F4A7C15)
#: Counter block reserved for the initial condition (above any step index).
_X0_BLOCK = np.uint64(1) << np.uint64(63)

STATE_BLOWUP = 1e9


def _block_rng(seed: int, block: int | np.uint64) -> np.random.Generator:
    key = np.array([np.uint64(seed & 0xFFFFFFFFFFFFFFFF), _KEY_CONST],
                   dtype=np.uint64)
    counter = np.array([0, 0, np.uint64(block), 0], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(counter=counter, key=key))


# -- controls ---------------------------------------------------------------

class EquilibriumControl:
    """Linear feedback alpha(t, X) = -W(t) X with W(t) circulant.

    :param grid: times at which the wrapped rows are sampled.
    :param rows: per-sample wrapped coefficient rows, shape (len(grid), N);
        row entry m multiplies the state of the player m seats ahead.
    :param lipschitz: recorded admissible Lipschitz level.
    """

    kind = "equilibrium"

    def __init__(self, grid: np.ndarray, rows: np.ndarray,
                 lipschitz: float) -> None:
        grid = np.asarray(grid, dtype=float)
        rows = np.asarray(rows, dtype=float)
        if rows.ndim != 2 or rows.shape[0] != grid.size:
            raise WindowMismatch(
                f"rows shape {rows.shape} does not match grid {grid.size}")
        self.grid = grid
        self.rows = rows
        self.n_players = rows.shape[1]
        self.radius = 0.0
        self.lipschitz = float(lipschitz)
        n = self.n_players
        self._gather = (np.arange(n)[None, :] - np.arange(n)[:, None]) % n

    def row_at(self, t: float) -> np.ndarray:
        """Wrapped coefficient row at time t, linear interpolation."""
        g = self.grid
        j = int(np.searchsorted(g, t, side="right") - 1)
        j = min(max(j, 0), g.size - 2)
        w = (t - g[j]) / (g[j + 1] - g[j])
        w = min(max(w, 0.0), 1.0)
        if w == 0.0:
            return self.rows[j]
        return (1.0 - w) * self.rows[j] + w * self.rows[j + 1]

    def matrix_at(self, t: float) -> np.ndarray:
        """The circulant weight matrix W(t)."""
        return self.row_at(t)[self._gather]

    def evaluate(self, t: float, states: np.ndarray) -> np.ndarray:
        """Controls for all players, shape matching ``states`` (paths, N, d)."""
        return -np.matmul(self.matrix_at(t), states)


class DeviationControl:
    """Equilibrium control with one player's row replaced.

    :param base: the equilibrium control every other player keeps.
    :param player: index of the deviating player.
    :param perturb: callable (t, states, base_row) -> (paths, d) giving the
        deviator's control; base_row is the equilibrium control the player
        would have used.
    :param radius: declared sup of |alpha(t, 0)| for the deviation.
    :param lipschitz: declared Lipschitz level; must stay admissible.
    """

    kind = "deviation"

    def __init__(self, base: EquilibriumControl, player: int,
                 perturb: Callable[[float, np.ndarray, np.ndarray], np.ndarray],
                 radius: float, lipschitz: float | None = None) -> None:
        if not 0 <= player < base.n_players:
            raise WindowMismatch(
                f"player {player} outside [0, {base.n_players})")
        self.base = base
        self.player = int(player)
        self.perturb = perturb
        self.n_players = base.n_players
        self.radius = float(radius)
        self.lipschitz = base.lipschitz if lipschitz is None else float(lipschitz)

    def evaluate(self, t: float, states: np.ndarray) -> np.ndarray:
        out = self.base.evaluate(t, states)
        out[:, self.player, :] = self.perturb(t, states,
                                              out[:, self.player, :])
        return out


def null_deviation(base: EquilibriumControl, player: int = 0
                   ) -> DeviationControl:
    """The deviation that plays the equilibrium row unchanged."""
    return DeviationControl(base, player, lambda t, states, row: row,
                            radius=base.radius)


def drift_deviation(base: EquilibriumControl, drift: float, player: int = 0
                    ) -> DeviationControl:
    """Equilibrium row plus a constant drift on every state coordinate."""
    return DeviationControl(base, player,
                            lambda t, states, row: row + drift,
                            radius=base.radius + abs(drift))


def project_equilibrium_control(flow: CoefficientFlow, n_players: int,
                                certificate: DecayCertificate | None
                                ) -> EquilibriumControl:
    """Wrap a reduced flow's leading row onto N players.

    Coefficient j of the row acts on the player j seats ahead mod N; when
    the flow window H exceeds N the overflowing entries fold onto their
    residues.  Requires a decay certificate for the flow
    (:class:`UncertifiedFlow` otherwise): the wrap is only meaningful when
    far coefficients are certifiably small.
    """
    if certificate is None:
        raise UncertifiedFlow("wrapping needs a decay-certified flow")
    if flow.layout != "reduced":
        raise WindowMismatch("wrapping is defined for reduced flows")
    rows0 = flow.row0_series()  # (M+1, H)
    h = rows0.shape[1]
    fold = np.zeros((rows0.shape[0], n_players))
    np.add.at(fold.T, np.arange(h) % n_players, rows0.T)
    return EquilibriumControl(grid=flow.grid, rows=fold,
                              lipschitz=flow.row0_l1_sup())


# -- simulation -------------------------------------------------------------

@dataclass(frozen=True)
class TrajectoryBatch:
    """One simulated ensemble with per-player cost accumulators.

    costs = running + terminal, shape (n_paths, N).  msq_series tracks the
    path-averaged squared state norm per time sample; states is only kept
    when requested.
    """

    n_paths: int
    dt: float
    seed: int
    horizon: float
    costs: np.ndarray
    running: np.ndarray
    terminal: np.ndarray
    final_states: np.ndarray
    msq_series: np.ndarray
    states: np.ndarray | None = None

    @property
    def sup_mean_square(self) -> float:
        return float(self.msq_series.max())


def _stencil_pairs(block: np.ndarray) -> list[tuple[int, int, float]]:
    out = []
    for a in range(block.shape[0]):
        for b in range(block.shape[1]):
            if block[a, b] != 0.0:
                out.append((a, b, float(block[a, b])))
    return out


def _quad_builder(game: GameSpec, which: str
                  ) -> Callable[[np.ndarray], np.ndarray]:
    """Per-player quadratic form <M^i x, x> as a function of (paths, N, d)."""
    if game.mode == "shift_invariant":
        assert game.stencil is not None
        block = game.stencil.f if which == "f" else game.stencil.g
        pairs = _stencil_pairs(block)

        def quad(states: np.ndarray) -> np.ndarray:
            p, n, _ = states.shape
            out = np.zeros((p, n))
            for a, b, coef in pairs:
                ra = np.roll(states, -a, axis=1)
                rb = ra if a == b else np.roll(states, -b, axis=1)
                out += coef * np.sum(ra * rb, axis=2)
            return out

        return quad
    table = game.costs_f if which == "f" else game.costs_g

    def quad_general(states: np.ndarray) -> np.ndarray:
        return np.einsum("ihk,phd,pkd->pi", table, states, states,
                         optimize=True)

    return quad_general


def simulate(game: GameSpec, control, x0: np.ndarray | None = None,
             dt: float = 1e-3, n_paths: int = 1000, seed: int = 0,
             store_states: bool = False) -> TrajectoryBatch:
    """Euler-Maruyama ensemble with left-endpoint cost quadrature.

    :param game: finite game supplying horizon, dimension and costs.
    :param control: object with ``evaluate(t, states)`` and admissibility
        fields ``radius`` / ``lipschitz``.
    :param x0: initial state, shape (N, d) shared by all paths; None draws
        one uniform sample from [-1, 1]^(N d) out of the seed's reserved
        counter block.
    :param dt: requested step; the actual step divides the horizon exactly.
    :raises BadStep: dt above horizon/16, or Lipschitz * dt > 0.5.
    :raises ExplodingState: a path left the |x| <= 1e9 box.
    """
    n = game.n_players
    if n is None:
        raise WindowMismatch("simulation needs a finite game")
    if control.n_players != n:
        raise WindowMismatch(
            f"control wraps {control.n_players} players, game has {n}")
    horizon = game.horizon
    if dt > horizon / 16.0:
        raise BadStep(f"dt = {dt} too coarse for horizon {horizon}")
    lip = float(getattr(control, "lipschitz", 0.0))
    if lip * dt > 0.5:
        raise BadStep(
            f"dt = {dt} unstable against feedback Lipschitz level {lip:.3g}")
    steps = max(int(round(horizon / dt)), 16)
    dt_eff = horizon / steps
    d = game.d

    if x0 is None:
        x0 = _block_rng(seed, _X0_BLOCK).uniform(-1.0, 1.0, size=(n, d))
    else:
        x0 = np.asarray(x0, dtype=float)
        if x0.shape != (n, d):
            raise WindowMismatch(f"x0 shape {x0.shape}, expected {(n, d)}")

    run_quad = _quad_builder(game, "f")
    term_quad = _quad_builder(game, "g")

    states = np.broadcast_to(x0, (n_paths, n, d)).copy()
    running = np.zeros((n_paths, n))
    msq = np.empty(steps + 1)
    msq[0] = float(np.mean(np.sum(states**2, axis=(1, 2))))
    kept = [states.copy()] if store_states else None
    root = np.sqrt(2.0 * dt_eff)
    for m in range(steps):
        t = m * dt_eff
        ctl = control.evaluate(t, states)
        running += 0.5 * dt_eff * (np.sum(ctl**2, axis=2) + run_quad(states))
        noise = _block_rng(seed, m).standard_normal(states.shape)
        states = states + ctl * dt_eff + root * noise
        peak = float(np.max(np.abs(states)))
        if not np.isfinite(peak) or peak > STATE_BLOWUP:
            raise ExplodingState(
                f"state reached {peak:.3g} at t = {(m + 1) * dt_eff:.6g}")
        msq[m + 1] = float(np.mean(np.sum(states**2, axis=(1, 2))))
        if kept is not None:
            kept.append(states.copy())
    terminal = term_quad(states)
    return TrajectoryBatch(
        n_paths=n_paths, dt=dt_eff, seed=seed, horizon=horizon,
        costs=running + terminal, running=running, terminal=terminal,
        final_states=states, msq_series=msq,
        states=np.stack(kept, axis=1) if kept is not None else None)


# -- the near-equilibrium experiment ----------------------------------------

@dataclass(frozen=True)
class EpsilonNashReport:
    """Paired gain estimates per network size with the theoretical envelope.

    gains[j] estimates how much player 0 saves by deviating at size
    n_values[j]; a near-equilibrium means every gain is statistically
    indistinguishable from (or below) zero.  envelope carries the shape
    delta^M + (delta^-M + N) delta^N, M = floor(sqrt(N)), for comparison
    only; its prefactor is unknown.
    """

    n_values: tuple[int, ...]
    gains: tuple[float, ...]
    std_errors: tuple[float, ...]
    envelope: tuple[float, ...]
    n_paths: int

    @property
    def upper95(self) -> tuple[float, ...]:
        """Upper 95% confidence bounds on the positive part of each gain."""
        return tuple(max(0.0, g + 1.96 * se)
                     for g, se in zip(self.gains, self.std_errors))


@dataclass(frozen=True)
class McParams:
    """Knobs for the near-equilibrium experiment."""

    horizon: float = 1.0
    rho: float = 1.4
    n_paths: int = 10_000
    dt: float = 1e-3
    seed: int = 2024
    solver_steps: int = 256
    certify_rate: float | None = None  # default (1 + rho) / 2


def epsilon_nash_experiment(stencil, n_list: list[int],
                            deviation_family: Callable[[EquilibriumControl],
                                                       DeviationControl],
                            params: McParams = McParams()
                            ) -> EpsilonNashReport:
    """Estimate deviation gains across network sizes with shared noise.

    :param stencil: shift-invariant cost stencil; player 0's running and
        terminal blocks must be positive semidefinite (eigenvalue floor
        -1e-12) for the near-equilibrium bound to apply.
    :param deviation_family: maps each size's equilibrium control to the
        deviation under test; its declared Lipschitz level must be at
        least the equilibrium one.
    :raises IndefiniteCost: stencil blocks not positive semidefinite.
    :raises InadmissibleDeviation: declared Lipschitz level below the
        admissible threshold.
    """
    for name, block in (("running", stencil.f), ("terminal", stencil.g)):
        floor = float(np.linalg.eigvalsh(block).min())
        if floor < -1e-12:
            raise IndefiniteCost(
                f"{name} block has eigenvalue {floor:.3e} < 0; the "
                f"near-equilibrium bound needs PSD player-0 costs")
    # hard gate: the wrap bound needs an analytic symbol
    certify_symbol(stencil, params.rho, params.horizon)

    delta = 0.5 * (1.0 + 1.0 / params.rho)
    rate = params.certify_rate
    if rate is None:
        rate = 0.5 * (1.0 + params.rho)

    gains = []
    errs = []
    env = []
    for n in sorted(n_list):
        game = GameSpec(mode="shift_invariant", horizon=params.horizon,
                        stencil=stencil, n_players=n)
        flow = integrate_backward(game, steps=params.solver_steps)
        cert = certify_decay(flow, rate)
        base = project_equilibrium_control(flow, n, cert)
        deviation = deviation_family(base)
        if deviation.lipschitz < base.lipschitz - 1e-12:
            raise InadmissibleDeviation(
                f"declared Lipschitz {deviation.lipschitz:.6g} below the "
                f"admissible level {base.lipschitz:.6g}")
        eq = simulate(game, base, dt=params.dt, n_paths=params.n_paths,
                      seed=params.seed)
        dev = simulate(game, deviation, dt=params.dt, n_paths=params.n_paths,
                       seed=params.seed)
        player = deviation.player
        per_path = eq.costs[:, player] - dev.costs[:, player]
        gains.append(float(per_path.mean()))
        errs.append(float(per_path.std(ddof=1) / np.sqrt(params.n_paths)))
        m = int(np.floor(np.sqrt(n)))
        env.append(delta**m + (delta**-m + n) * delta**n)
    return EpsilonNashReport(n_values=tuple(sorted(n_list)),
                             gains=tuple(gains), std_errors=tuple(errs),
                             envelope=tuple(env), n_paths=params.n_paths)
