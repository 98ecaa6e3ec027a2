"""Game descriptions and coefficient flows.

The package works with linear-quadratic games on a circle of ``N`` players
(or the infinite directed limit) whose running and terminal costs are built
from a small symmetric stencil.  This module holds the shared data model:

* :class:`CostStencil` -- the ``ell x ell`` symmetric cost blocks ``f, g``;
* :class:`GameSpec` -- a validated game description in one of three modes
  (``shift_invariant``, ``general``, ``mean_field_like``);
* :class:`CoefficientFlow` -- time samples of the quadratic-coefficient
  matrices produced by the solvers;
* shift-invariant index gymnastics (:func:`expand_shift_invariant`,
  :func:`embed_stencil`).

Conventions
-----------
Player and coefficient indices are 0-based throughout.  Flows are stored on
a forward time grid ``0 = t_0 < ... < t_M = T``; backward solvers fill the
array so that ``values[-1]`` holds the terminal data exactly.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    DimensionMismatch,
    EmptyStencil,
    IndexOutOfRange,
    NonSymmetricCost,
    WindowMismatch,
)

#: Asymmetry up to this threshold is silently symmetrized; beyond it the
#: input is rejected.
SYMMETRY_TOL = 1e-12

_MODES = ("shift_invariant", "general", "mean_field_like")


def symmetrize(m: np.ndarray, tol: float = SYMMETRY_TOL, *,
               what: str = "cost matrix") -> np.ndarray:
    """Return the symmetric part of ``m``; reject asymmetry beyond ``tol``.

    Parameters
    ----------
    m : ndarray
        Square matrix (or stack of square matrices in the last two axes).
    tol : float
        Largest tolerated entrywise asymmetry.
    """
    m = np.asarray(m, dtype=float)
    if m.ndim < 2 or m.shape[-1] != m.shape[-2]:
        raise DimensionMismatch(f"{what}: expected square array, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise DimensionMismatch(f"{what}: non-finite entries")
    mt = np.swapaxes(m, -1, -2)
    gap = np.max(np.abs(m - mt)) if m.size else 0.0
    if gap > tol:
        raise NonSymmetricCost(f"{what}: asymmetry {gap:.3e} exceeds {tol:.1e}")
    return 0.5 * (m + mt)


def _read_only(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class CostStencil:
    """Symmetric ``ell x ell`` running and terminal cost blocks.

    Attributes
    ----------
    f : ndarray
        Running-cost stencil, constant in time.
    g : ndarray
        Terminal-cost stencil.
    """

    f: np.ndarray
    g: np.ndarray

    def __post_init__(self) -> None:
        f = np.asarray(self.f, dtype=float)
        g = np.asarray(self.g, dtype=float)
        if f.size == 0 or g.size == 0:
            raise EmptyStencil("cost stencil must have at least one entry")
        if f.ndim != 2 or f.shape[0] != f.shape[1]:
            raise DimensionMismatch(f"f stencil must be square, got {f.shape}")
        if g.shape != f.shape:
            raise DimensionMismatch(f"g stencil shape {g.shape} != f shape {f.shape}")
        object.__setattr__(self, "f", _read_only(symmetrize(f, what="f stencil")))
        object.__setattr__(self, "g", _read_only(symmetrize(g, what="g stencil")))

    @property
    def ell(self) -> int:
        """Stencil width."""
        return self.f.shape[0]

    def padded(self, n: int) -> tuple[np.ndarray, np.ndarray]:
        """Zero-pad both blocks to ``n x n`` (corner embedding)."""
        if n < self.ell:
            raise DimensionMismatch(f"cannot pad stencil of width {self.ell} to {n}")
        f = np.zeros((n, n))
        g = np.zeros((n, n))
        f[: self.ell, : self.ell] = self.f
        g[: self.ell, : self.ell] = self.g
        return f, g


@dataclass(frozen=True)
class GameSpec:
    """A validated game description.

    Attributes
    ----------
    mode : str
        ``"shift_invariant"`` (stencil costs, cyclic or infinite family),
        ``"general"`` (explicit per-player cost stacks), or
        ``"mean_field_like"`` (per-player stacks under mean-field scaling).
    horizon : float
        Terminal time ``T > 0``.
    d : int
        Dimension of each player's private state.
    stencil : CostStencil, optional
        Required in ``shift_invariant`` mode.
    n_players : int, optional
        ``None`` means the infinite shift-invariant family.
    costs_f, costs_g : ndarray, optional
        ``(N, N, N)`` stacks of symmetric per-player cost matrices for the
        ``general`` and ``mean_field_like`` modes.
    """

    mode: str
    horizon: float
    d: int = 1
    stencil: CostStencil | None = None
    n_players: int | None = None
    costs_f: np.ndarray | None = None
    costs_g: np.ndarray | None = None

    def __post_init__(self) -> None:
        if self.mode not in _MODES:
            raise DimensionMismatch(f"unknown game mode {self.mode!r}")
        if not (np.isfinite(self.horizon) and self.horizon > 0):
            raise DimensionMismatch(f"horizon must be positive, got {self.horizon}")
        if self.d < 1:
            raise DimensionMismatch(f"state dimension must be >= 1, got {self.d}")
        if self.mode == "shift_invariant":
            if self.stencil is None:
                raise EmptyStencil("shift_invariant mode requires a stencil")
            if self.n_players is not None and self.n_players < self.stencil.ell:
                raise DimensionMismatch(
                    f"n_players={self.n_players} smaller than stencil width "
                    f"{self.stencil.ell}")
        else:
            if self.costs_f is None or self.costs_g is None:
                raise DimensionMismatch(f"{self.mode} mode requires cost stacks")
            cf = np.asarray(self.costs_f, dtype=float)
            cg = np.asarray(self.costs_g, dtype=float)
            if cf.ndim != 3 or cf.shape[0] != cf.shape[1] or cf.shape[1] != cf.shape[2]:
                raise DimensionMismatch(f"costs_f must be (N,N,N), got {cf.shape}")
            if cg.shape != cf.shape:
                raise DimensionMismatch(
                    f"costs_g shape {cg.shape} != costs_f shape {cf.shape}")
            n = cf.shape[0]
            if self.n_players is not None and self.n_players != n:
                raise DimensionMismatch(
                    f"n_players={self.n_players} != cost stack size {n}")
            object.__setattr__(self, "n_players", n)
            object.__setattr__(self, "costs_f",
                               _read_only(symmetrize(cf, what="costs_f")))
            object.__setattr__(self, "costs_g",
                               _read_only(symmetrize(cg, what="costs_g")))

    @property
    def infinite(self) -> bool:
        """True for the infinite shift-invariant family."""
        return self.mode == "shift_invariant" and self.n_players is None

    def player_costs(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        """Full ``(N, N)`` cost matrices of player ``i`` (finite games)."""
        n = self.n_players
        if n is None:
            raise IndexOutOfRange("infinite family has no full cost matrices")
        if not 0 <= i < n:
            raise IndexOutOfRange(f"player {i} outside [0, {n})")
        if self.mode == "shift_invariant":
            assert self.stencil is not None
            return (embed_stencil(self.stencil.f, n, i),
                    embed_stencil(self.stencil.g, n, i))
        return self.costs_f[i], self.costs_g[i]


def build_game(config: dict) -> GameSpec:
    """Build a :class:`GameSpec` from a parsed configuration mapping.

    The mapping mirrors the config file layout::

        {"mode": "shift_invariant", "horizon": 1.0, "d": 1,
         "n_players": 8,  # or "infinite" / absent
         "stencil": {"f": [[...], ...], "g": [[...], ...]}}

    General and mean-field-like games supply ``costs: {f: ..., g: ...}``
    either inline as nested lists or via ``{file_f: path, file_g: path}``
    in the dense text format (header line ``N``, then ``i h k value`` rows).
    """
    if not isinstance(config, dict):
        raise DimensionMismatch("game config must be a mapping")
    try:
        mode = config["mode"]
        horizon = float(config["horizon"])
    except KeyError as exc:
        raise DimensionMismatch(f"game config missing key {exc}") from None
    d = int(config.get("d", 1))
    n_players = config.get("n_players")
    if n_players in ("infinite", "inf", None):
        n_players = None
    else:
        n_players = int(n_players)

    if mode == "shift_invariant":
        sten = config.get("stencil")
        if not sten:
            raise EmptyStencil("shift_invariant config requires a [stencil] table")
        stencil = CostStencil(np.asarray(sten["f"], dtype=float),
                              np.asarray(sten["g"], dtype=float))
        return GameSpec(mode=mode, horizon=horizon, d=d, stencil=stencil,
                        n_players=n_players)

    costs = config.get("costs")
    if not costs:
        raise DimensionMismatch(f"{mode} config requires a [costs] table")
    if "file_f" in costs or "file_g" in costs:
        cf = read_cost_file(costs["file_f"])
        cg = read_cost_file(costs["file_g"])
    else:
        cf = np.asarray(costs["f"], dtype=float)
        cg = np.asarray(costs["g"], dtype=float)
    return GameSpec(mode=mode, horizon=horizon, d=d,
                    costs_f=cf, costs_g=cg, n_players=n_players)


def game_to_config(game: GameSpec) -> dict:
    """Serialize a :class:`GameSpec` back to the mapping form.

    ``build_game(game_to_config(g))`` reproduces ``g`` field by field;
    cost stacks are emitted inline.
    """
    out: dict = {"mode": game.mode, "horizon": game.horizon, "d": game.d}
    if game.mode == "shift_invariant":
        assert game.stencil is not None
        out["n_players"] = ("infinite" if game.n_players is None
                            else game.n_players)
        out["stencil"] = {"f": game.stencil.f.tolist(),
                          "g": game.stencil.g.tolist()}
    else:
        out["n_players"] = game.n_players
        out["costs"] = {"f": game.costs_f.tolist(),
                        "g": game.costs_g.tolist()}
    return out


def read_cost_file(path: str | Path) -> np.ndarray:
    """Read an ``(N, N, N)`` cost stack from the dense text format.

    First non-comment line: ``N``.  Each following line: ``i h k value``.
    Unlisted entries are zero.
    """
    lines = [ln.split("#", 1)[0].strip() for ln in Path(path).read_text().splitlines()]
    lines = [ln for ln in lines if ln]
    if not lines:
        raise DimensionMismatch(f"cost file {path}: empty")
    try:
        n = int(lines[0])
    except ValueError:
        raise DimensionMismatch(f"cost file {path}: bad header {lines[0]!r}") from None
    out = np.zeros((n, n, n))
    for ln in lines[1:]:
        parts = ln.split()
        if len(parts) != 4:
            raise DimensionMismatch(f"cost file {path}: bad row {ln!r}")
        i, h, k = (int(p) for p in parts[:3])
        if not (0 <= i < n and 0 <= h < n and 0 <= k < n):
            raise IndexOutOfRange(f"cost file {path}: index out of range in {ln!r}")
        out[i, h, k] = float(parts[3])
    return out


# -- shift-invariant index gymnastics ---------------------------------------

def embed_stencil(block: np.ndarray, n_players: int, player: int) -> np.ndarray:
    """Embed an ``ell x ell`` stencil as player ``player``'s ``N x N`` cost.

    Entry ``(a, b)`` of the stencil lands at ``([player+a]_N, [player+b]_N)``;
    player 0 gets the plain corner embedding.
    """
    block = np.asarray(block, dtype=float)
    ell = block.shape[0]
    if ell > n_players:
        raise DimensionMismatch(
            f"stencil width {ell} exceeds n_players {n_players}")
    if not 0 <= player < n_players:
        raise IndexOutOfRange(f"player {player} outside [0, {n_players})")
    out = np.zeros((n_players, n_players))
    idx = (player + np.arange(ell)) % n_players
    out[np.ix_(idx, idx)] = block
    return out


def shift_matrix(c: np.ndarray, i: int) -> np.ndarray:
    """Map player 0's matrix to player ``i``'s: ``out[h,k] = c[[h-i]_N,[k-i]_N]``."""
    c = np.asarray(c)
    n = c.shape[0]
    if not 0 <= i < n:
        raise IndexOutOfRange(f"shift {i} outside [0, {n})")
    return np.roll(np.roll(c, i, axis=-2), i, axis=-1)


@dataclass(frozen=True)
class ShiftInvariantExpansion:
    """Full-layout view of a reduced cyclic flow for one player."""

    player: int
    n_players: int
    grid: np.ndarray
    values: np.ndarray  # (M+1, N, N)

    def __post_init__(self) -> None:
        object.__setattr__(self, "grid", _read_only(np.asarray(self.grid)))
        object.__setattr__(self, "values", _read_only(np.asarray(self.values)))


def expand_shift_invariant(flow: "CoefficientFlow", player: int,
                           n_players: int) -> ShiftInvariantExpansion:
    """Expand a reduced cyclic flow into player ``player``'s matrices.

    Uses ``c^i_{hk} = c_{[h-i]_N, [k-i]_N}`` sample by sample.
    """
    if flow.layout != "reduced" or flow.indexing != "cyclic":
        raise WindowMismatch("expansion needs a reduced cyclic flow")
    if flow.values.shape[-1] != n_players:
        raise WindowMismatch(
            f"flow truncation {flow.values.shape[-1]} != n_players {n_players}")
    if not 0 <= player < n_players:
        raise IndexOutOfRange(f"player {player} outside [0, {n_players})")
    vals = np.roll(np.roll(flow.values, player, axis=-2), player, axis=-1)
    return ShiftInvariantExpansion(player=player, n_players=n_players,
                                   grid=flow.grid, values=vals)


# -- coefficient flows ------------------------------------------------------

def _rev_cumtrapz(y: np.ndarray, x: np.ndarray) -> np.ndarray:
    """``out[m] = trapezoid integral of y over [x_m, x_M]`` along axis 0."""
    dx = np.diff(x)
    seg = 0.5 * (y[1:] + y[:-1]) * dx.reshape((-1,) + (1,) * (y.ndim - 1))
    out = np.zeros_like(y)
    out[:-1] = np.cumsum(seg[::-1], axis=0)[::-1]
    return out


@dataclass(frozen=True)
class CoefficientFlow:
    """Time samples of quadratic-coefficient matrices.

    Attributes
    ----------
    grid : ndarray
        Forward time grid, ``grid[0] = 0``, ``grid[-1] = T``.
    values : ndarray
        ``(M+1, H, H)`` for reduced layouts, ``(M+1, N, N, N)`` for full.
    layout : str
        ``"reduced"`` or ``"full"``.
    indexing : str
        ``"cyclic"`` (indices mod N), ``"directed"`` (corner of N^2) for
        reduced flows; ``"players"`` for full flows.
    """

    grid: np.ndarray
    values: np.ndarray
    layout: str
    indexing: str

    def __post_init__(self) -> None:
        grid = np.asarray(self.grid, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if grid.ndim != 1 or grid.size < 2:
            raise DimensionMismatch("flow grid must hold at least two samples")
        if np.any(np.diff(grid) <= 0):
            raise DimensionMismatch("flow grid must be strictly increasing")
        if self.layout == "reduced":
            if values.ndim != 3 or values.shape[1] != values.shape[2]:
                raise DimensionMismatch(f"reduced flow values bad shape {values.shape}")
            if self.indexing not in ("cyclic", "directed"):
                raise DimensionMismatch(f"bad reduced indexing {self.indexing!r}")
        elif self.layout == "full":
            if values.ndim != 4 or len(set(values.shape[1:])) != 1:
                raise DimensionMismatch(f"full flow values bad shape {values.shape}")
            if self.indexing != "players":
                raise DimensionMismatch(f"bad full indexing {self.indexing!r}")
        else:
            raise DimensionMismatch(f"bad layout {self.layout!r}")
        if values.shape[0] != grid.size:
            raise DimensionMismatch("flow grid and values disagree on sample count")
        if not np.array_equal(values, np.swapaxes(values, -1, -2)):
            raise NonSymmetricCost("flow samples must be symmetric matrices")
        object.__setattr__(self, "grid", _read_only(grid))
        object.__setattr__(self, "values", _read_only(values))

    @property
    def horizon(self) -> float:
        return float(self.grid[-1])

    @property
    def truncation(self) -> int:
        """Window size: H for reduced flows, N for full ones."""
        return int(self.values.shape[-1])

    def value_at(self, t: float) -> np.ndarray:
        """Sample at time ``t``, linear interpolation between grid nodes."""
        grid = self.grid
        if not grid[0] - 1e-12 <= t <= grid[-1] + 1e-12:
            raise IndexOutOfRange(f"time {t} outside [{grid[0]}, {grid[-1]}]")
        t = min(max(t, float(grid[0])), float(grid[-1]))
        j = int(np.searchsorted(grid, t, side="right") - 1)
        if j >= grid.size - 1:
            return self.values[-1]
        w = (t - grid[j]) / (grid[j + 1] - grid[j])
        if w == 0.0:
            return self.values[j]
        return (1 - w) * self.values[j] + w * self.values[j + 1]

    def trace_series(self, d: int = 1) -> np.ndarray:
        """``d * tr c(t)`` on the grid (reduced layouts)."""
        if self.layout != "reduced":
            raise WindowMismatch("trace series is defined for reduced flows")
        return d * np.einsum("mhh->m", self.values)

    def eta_series(self, d: int = 1) -> np.ndarray:
        """Constant term ``eta(t) = integral_t^T d tr c`` by trapezoid rule."""
        return _rev_cumtrapz(self.trace_series(d), self.grid)

    def row0_series(self) -> np.ndarray:
        """The ``c_{0 j}(t)`` rows, shape ``(M+1, H)`` (reduced layouts)."""
        if self.layout != "reduced":
            raise WindowMismatch("row extraction is defined for reduced flows")
        return self.values[:, 0, :]

    def row0_l1_sup(self) -> float:
        """``sup_t sum_j |c_{0 j}(t)|``, the admissible Lipschitz level."""
        return float(np.abs(self.row0_series()).sum(axis=1).max())
