"""Data-model tests: stencils, game specs, flows, index gymnastics."""

import numpy as np
import pytest

from riccati_nash.core import (
    CoefficientFlow,
    CostStencil,
    GameSpec,
    build_game,
    embed_stencil,
    expand_shift_invariant,
    game_to_config,
    read_cost_file,
    shift_matrix,
    symmetrize,
)
from riccati_nash.errors import (
    DimensionMismatch,
    EmptyStencil,
    IndexOutOfRange,
    NonSymmetricCost,
    WindowMismatch,
)

NU = 1.5
CHAIN_F = np.array([[NU * NU, -NU], [-NU, 1.0]])
ZERO2 = np.zeros((2, 2))


# -- symmetrize / CostStencil ------------------------------------------------

def test_symmetrize_averages_tiny_asymmetry():
    m = np.array([[1.0, 2.0], [2.0 + 5e-13, 3.0]])
    out = symmetrize(m)
    assert np.array_equal(out, out.T)
    assert out[0, 1] == pytest.approx(2.0 + 2.5e-13, abs=1e-15)


def test_symmetrize_rejects_visible_asymmetry():
    with pytest.raises(NonSymmetricCost):
        symmetrize(np.array([[1.0, 2.0], [2.1, 3.0]]))


def test_symmetrize_rejects_nonsquare_and_nan():
    with pytest.raises(DimensionMismatch):
        symmetrize(np.ones((2, 3)))
    with pytest.raises(DimensionMismatch):
        symmetrize(np.array([[np.nan, 0.0], [0.0, 0.0]]))


def test_stencil_basics():
    s = CostStencil(CHAIN_F, ZERO2)
    assert s.ell == 2
    assert np.array_equal(s.f, CHAIN_F)
    assert not s.f.flags.writeable
    f4, g4 = s.padded(4)
    assert f4.shape == (4, 4)
    assert np.array_equal(f4[:2, :2], CHAIN_F)
    assert np.all(f4[2:, :] == 0) and np.all(g4 == 0)


def test_stencil_rejections():
    with pytest.raises(EmptyStencil):
        CostStencil(np.zeros((0, 0)), np.zeros((0, 0)))
    with pytest.raises(DimensionMismatch):
        CostStencil(np.ones((2, 3)), np.ones((2, 3)))
    with pytest.raises(DimensionMismatch):
        CostStencil(CHAIN_F, np.zeros((3, 3)))
    with pytest.raises(DimensionMismatch):
        CostStencil(CHAIN_F, ZERO2).padded(1)


# -- GameSpec ----------------------------------------------------------------

def test_game_modes_validated():
    with pytest.raises(DimensionMismatch):
        GameSpec(mode="quadratic", horizon=1.0)
    with pytest.raises(DimensionMismatch):
        GameSpec(mode="shift_invariant", horizon=0.0,
                 stencil=CostStencil(CHAIN_F, ZERO2))
    with pytest.raises(EmptyStencil):
        GameSpec(mode="shift_invariant", horizon=1.0)
    with pytest.raises(DimensionMismatch):
        GameSpec(mode="shift_invariant", horizon=1.0,
                 stencil=CostStencil(CHAIN_F, ZERO2), n_players=1)


def test_infinite_family_flag():
    g = GameSpec(mode="shift_invariant", horizon=1.0,
                 stencil=CostStencil(CHAIN_F, ZERO2))
    assert g.infinite
    with pytest.raises(IndexOutOfRange):
        g.player_costs(0)


def test_general_mode_infers_n_players_and_symmetrizes():
    rng = np.random.default_rng(7)
    cf = rng.normal(size=(3, 3, 3))
    cf = 0.5 * (cf + np.swapaxes(cf, -1, -2))
    g = GameSpec(mode="general", horizon=1.0, costs_f=cf, costs_g=0 * cf)
    assert g.n_players == 3
    assert np.array_equal(g.costs_f[1], g.costs_f[1].T)
    with pytest.raises(DimensionMismatch):
        GameSpec(mode="general", horizon=1.0, costs_f=cf, costs_g=0 * cf,
                 n_players=4)
    with pytest.raises(NonSymmetricCost):
        GameSpec(mode="general", horizon=1.0,
                 costs_f=rng.normal(size=(3, 3, 3)), costs_g=np.zeros((3, 3, 3)))


def test_player_costs_are_embedded_stencils():
    g = GameSpec(mode="shift_invariant", horizon=1.0,
                 stencil=CostStencil(CHAIN_F, ZERO2), n_players=5)
    for i in range(5):
        fi, _ = g.player_costs(i)
        assert np.array_equal(fi, embed_stencil(CHAIN_F, 5, i))
    with pytest.raises(IndexOutOfRange):
        g.player_costs(5)


# -- config round trip -------------------------------------------------------

@pytest.mark.parametrize("n_players", [None, 8])
def test_shift_invariant_config_round_trip(n_players):
    g = GameSpec(mode="shift_invariant", horizon=2.5, d=3,
                 stencil=CostStencil(CHAIN_F, np.eye(2)), n_players=n_players)
    g2 = build_game(game_to_config(g))
    assert (g2.mode, g2.horizon, g2.d, g2.n_players) == \
        (g.mode, g.horizon, g.d, g.n_players)
    assert np.array_equal(g2.stencil.f, g.stencil.f)
    assert np.array_equal(g2.stencil.g, g.stencil.g)


def test_general_config_round_trip():
    rng = np.random.default_rng(0)
    cf = rng.normal(size=(4, 4, 4))
    cf = 0.5 * (cf + np.swapaxes(cf, -1, -2))
    g = GameSpec(mode="general", horizon=1.0, costs_f=cf, costs_g=2 * cf)
    g2 = build_game(game_to_config(g))
    assert g2.n_players == 4
    assert np.array_equal(g2.costs_f, g.costs_f)
    assert np.array_equal(g2.costs_g, g.costs_g)


def test_build_game_rejects_incomplete_configs():
    with pytest.raises(DimensionMismatch):
        build_game({"mode": "general", "horizon": 1.0})
    with pytest.raises(DimensionMismatch):
        build_game({"horizon": 1.0})
    with pytest.raises(EmptyStencil):
        build_game({"mode": "shift_invariant", "horizon": 1.0})
    with pytest.raises(DimensionMismatch):
        build_game([1, 2, 3])


# -- cost files --------------------------------------------------------------

def test_read_cost_file(tmp_path):
    p = tmp_path / "f.txt"
    p.write_text("# stack header\n2\n0 0 0 1.5\n0 0 1 -0.25\n1 1 1 2.0\n")
    out = read_cost_file(p)
    assert out.shape == (2, 2, 2)
    assert out[0, 0, 0] == 1.5 and out[0, 0, 1] == -0.25 and out[1, 1, 1] == 2.0
    assert out[1, 0, 0] == 0.0


def test_read_cost_file_rejections(tmp_path):
    bad = tmp_path / "bad.txt"
    bad.write_text("")
    with pytest.raises(DimensionMismatch):
        read_cost_file(bad)
    bad.write_text("two\n")
    with pytest.raises(DimensionMismatch):
        read_cost_file(bad)
    bad.write_text("2\n0 0 1.5\n")
    with pytest.raises(DimensionMismatch):
        read_cost_file(bad)
    bad.write_text("2\n0 0 2 1.5\n")
    with pytest.raises(IndexOutOfRange):
        read_cost_file(bad)


def test_build_game_from_cost_files(tmp_path):
    # symmetric per-player stack written entry by entry
    n = 2
    lines_f = [str(n)]
    lines_g = [str(n)]
    rng = np.random.default_rng(3)
    cf = rng.normal(size=(n, n, n))
    cf = 0.5 * (cf + np.swapaxes(cf, -1, -2))
    for i in range(n):
        for h in range(n):
            for k in range(n):
                lines_f.append(f"{i} {h} {k} {float(cf[i, h, k])!r}")
                lines_g.append(f"{i} {h} {k} {float(2 * cf[i, h, k])!r}")
    (tmp_path / "f.txt").write_text("\n".join(lines_f))
    (tmp_path / "g.txt").write_text("\n".join(lines_g))
    g = build_game({"mode": "general", "horizon": 1.0,
                    "costs": {"file_f": str(tmp_path / "f.txt"),
                              "file_g": str(tmp_path / "g.txt")}})
    assert np.allclose(g.costs_f, cf, atol=0, rtol=0)
    assert np.allclose(g.costs_g, 2 * cf, atol=0, rtol=0)


# -- index gymnastics --------------------------------------------------------

def test_embed_stencil_wraps_cyclically():
    out = embed_stencil(CHAIN_F, 4, 3)
    assert out[3, 3] == CHAIN_F[0, 0]
    assert out[3, 0] == CHAIN_F[0, 1]
    assert out[0, 3] == CHAIN_F[1, 0]
    assert out[0, 0] == CHAIN_F[1, 1]
    assert np.count_nonzero(out) == 4


def test_embed_stencil_rejections():
    with pytest.raises(DimensionMismatch):
        embed_stencil(CHAIN_F, 1, 0)
    with pytest.raises(IndexOutOfRange):
        embed_stencil(CHAIN_F, 4, 4)


def test_shift_matrix_relations():
    rng = np.random.default_rng(11)
    c = rng.normal(size=(6, 6))
    c = c + c.T
    assert np.array_equal(shift_matrix(c, 0), c)
    # shifting by i then by N-i closes the cycle
    back = shift_matrix(shift_matrix(c, 2), 4)
    assert np.array_equal(back, c)
    out = shift_matrix(c, 3)
    assert out[4, 5] == c[1, 2]
    assert out[0, 1] == c[3, 4]
    with pytest.raises(IndexOutOfRange):
        shift_matrix(c, 6)


def _cyclic_flow(n=6, samples=3, seed=5):
    rng = np.random.default_rng(seed)
    vals = rng.normal(size=(samples, n, n))
    vals = vals + np.swapaxes(vals, -1, -2)
    return CoefficientFlow(grid=np.linspace(0, 1, samples), values=vals,
                           layout="reduced", indexing="cyclic")


def test_expand_shift_invariant_matches_shift_matrix():
    flow = _cyclic_flow()
    exp = expand_shift_invariant(flow, 2, 6)
    assert exp.player == 2
    for m in range(flow.values.shape[0]):
        assert np.array_equal(exp.values[m], shift_matrix(flow.values[m], 2))


def test_expand_shift_invariant_gates():
    flow = _cyclic_flow()
    with pytest.raises(WindowMismatch):
        expand_shift_invariant(flow, 0, 7)
    with pytest.raises(IndexOutOfRange):
        expand_shift_invariant(flow, 6, 6)
    directed = CoefficientFlow(grid=[0.0, 1.0], values=np.zeros((2, 3, 3)),
                               layout="reduced", indexing="directed")
    with pytest.raises(WindowMismatch):
        expand_shift_invariant(directed, 0, 3)


# -- coefficient flows -------------------------------------------------------

def test_flow_validators():
    ok = np.zeros((2, 3, 3))
    with pytest.raises(DimensionMismatch):
        CoefficientFlow(grid=[0.0], values=ok[:1], layout="reduced",
                        indexing="cyclic")
    with pytest.raises(DimensionMismatch):
        CoefficientFlow(grid=[0.0, 0.0], values=ok, layout="reduced",
                        indexing="cyclic")
    with pytest.raises(DimensionMismatch):
        CoefficientFlow(grid=[0.0, 1.0], values=np.zeros((2, 3, 2)),
                        layout="reduced", indexing="cyclic")
    with pytest.raises(DimensionMismatch):
        CoefficientFlow(grid=[0.0, 1.0], values=ok, layout="reduced",
                        indexing="players")
    with pytest.raises(DimensionMismatch):
        CoefficientFlow(grid=[0.0, 1.0], values=np.zeros((2, 3, 3, 3)),
                        layout="reduced", indexing="cyclic")
    with pytest.raises(DimensionMismatch):
        CoefficientFlow(grid=[0.0, 1.0], values=np.zeros((3, 3, 3)),
                        layout="reduced", indexing="cyclic")
    bad = np.zeros((2, 3, 3))
    bad[1, 0, 1] = 1.0
    with pytest.raises(NonSymmetricCost):
        CoefficientFlow(grid=[0.0, 1.0], values=bad, layout="reduced",
                        indexing="cyclic")


def test_flow_interpolation_is_linear():
    m = np.array([[1.0, -0.5], [-0.5, 2.0]])
    grid = np.array([0.0, 0.5, 2.0])
    vals = np.stack([t * m for t in grid])
    flow = CoefficientFlow(grid=grid, values=vals, layout="reduced",
                           indexing="directed")
    assert flow.horizon == 2.0
    assert flow.truncation == 2
    assert np.array_equal(flow.value_at(0.5), 0.5 * m)
    assert np.allclose(flow.value_at(1.25), 1.25 * m, rtol=0, atol=1e-15)
    assert np.array_equal(flow.value_at(2.0), vals[-1])
    with pytest.raises(IndexOutOfRange):
        flow.value_at(2.5)


def test_trace_eta_and_row0():
    m = np.array([[1.0, -0.5], [-0.5, 2.0]])
    grid = np.linspace(0.0, 2.0, 9)
    vals = np.stack([t * m for t in grid])
    flow = CoefficientFlow(grid=grid, values=vals, layout="reduced",
                           indexing="directed")
    np.testing.assert_allclose(flow.trace_series(d=2), 6.0 * grid, rtol=1e-15)
    # trapezoid rule is exact on a linear trace: eta(t) = d tr m (T^2-t^2)/2
    np.testing.assert_allclose(flow.eta_series(d=2), 3.0 * (4.0 - grid**2),
                               rtol=1e-14)
    assert flow.row0_series().shape == (9, 2)
    assert flow.row0_l1_sup() == pytest.approx(2.0 * 1.5)
    full = CoefficientFlow(grid=[0.0, 1.0], values=np.zeros((2, 2, 2, 2)),
                           layout="full", indexing="players")
    with pytest.raises(WindowMismatch):
        full.trace_series()
    with pytest.raises(WindowMismatch):
        full.row0_series()
