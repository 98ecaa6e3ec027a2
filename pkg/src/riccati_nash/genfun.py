"""Generating-function engine for directed shift-invariant games.

The reduced coefficient system on the corner [0, inf)^2 is equivalent to a
scalar Riccati PDE for the double power series

    X(t, z, w) = sum_{h,k >= 0} c_hk(t) z^h w^k,

where t counts time to go (t = 0 is the terminal condition).  Writing
phi(z, w) and Psi(z, w) for the cost polynomials, the one-variable trace
xi(z) = sqrt(phi(z, 0)) and psi(z) = Psi(z, 0) drive everything:

* the edge flow X(t, z, 0) = xi(z) * L(t, z) with
  L = (xi sinh(xi t) + psi cosh(xi t)) / (psi sinh(xi t) + xi cosh(xi t))
  solves a scalar Riccati ODE in t;
* the interior is carried by the two quotient kernels
  S = (L(z) + L(w)) / (xi(z) + xi(w)) and
  D = (L(z) - L(w)) / (xi(z) - xi(w)), combined as sigma_pm = S +- D;
* the closed form used here is

      2 X(t) = phi sigma_plus(t) + xi xi sigma_minus(t)
               + 2 P(t) (Psi - (phi sigma_plus(0) + xi xi sigma_minus(0)) / 2)

  with the homogeneous-solution weight
  P(t, z, w) = xi(z) xi(w) / (E(t, z) E(t, w)),
  E(t, z) = psi(z) sinh(xi(z) t) + xi(z) cosh(xi(z) t).

The final P-weighted term vanishes at t = 0 in favor of Psi (so the
terminal condition X(0) = Psi holds identically) and dies off at the rate
E^-2 ~ e^{-2 Re xi t}, which is what drives the long-time limit.

Coefficients are recovered by Cauchy's formula on a tensor contour of
radius r inside the certified analyticity disc via a 2-d FFT.  Two checks
guard the extraction: the imaginary residue of the inverse transform and
an aliasing probe at doubled node count.

Analyticity itself is a certified property, not an assumption: the
strong-gathering check verifies phi(., 0) avoids the branch cut (-inf, 0]
of the principal square root on the closed rho-disc (plus a winding check
so no zeros hide inside), and the compatibility check verifies the edge
denominator E has no zeros up to the requested horizon.  Both checks are
hard gates before any evaluation.

The D kernel has a removable singularity where xi(z) = xi(w).  Within a
hard threshold it is replaced by the analytic derivative of L in xi at the
midpoint: dL/dxi = ((xi^2 - psi^2) t - psi) / E^2.  On the tensor-grid
diagonal the neglected dependence of L on psi would bias D, but the same
bias enters the sigma(0) term and the P-weighting cancels it exactly
(delta_t - P delta_0 = 0 entrywise), provided one evaluator serves both
times.  Do not "improve" the patch at one time only.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .core import CostStencil
from .errors import (
    AliasingDetected,
    BadStep,
    CompatibilityFailed,
    GatheringFailed,
    ImaginaryResidue,
    NumericalSingularity,
    UncertifiedSymbol,
    WindowMismatch,
)

#: Distance below which the D kernel switches to the analytic derivative.
PAIR_KERNEL_THRESHOLD = 1e-6
#: Floor for the edge denominator |E|.
SINGULARITY_FLOOR = 1e-13
IMAG_TOL = 1e-9
ALIAS_TOL = 1e-8


# -- symbol -----------------------------------------------------------------

def _eval_table(table: np.ndarray, z: np.ndarray, w: np.ndarray) -> np.ndarray:
    """sum_{h,k} table[h,k] z^h w^k, elementwise in broadcast z, w."""
    z = np.asarray(z, dtype=complex)
    w = np.asarray(w, dtype=complex)
    acc = np.zeros(np.broadcast(z, w).shape, dtype=complex)
    for row in table[::-1]:
        inner = np.zeros_like(acc)
        for coef in row[::-1]:
            inner = inner * w + coef
        acc = acc * z + inner
    return acc


@dataclass(frozen=True)
class SymbolPair:
    """Cost polynomials phi, Psi plus certification state.

    rho is NaN until check_strong_gathering accepts a radius; the margins
    record how much room the certification found.  compat_t_max is the
    horizon up to which the edge denominator was verified nonvanishing.
    """

    phi: np.ndarray
    big_psi: np.ndarray
    rho: float = float("nan")
    gathering_margin: float | None = None
    compat_margin: float | None = None
    compat_t_max: float | None = None

    def __post_init__(self) -> None:
        phi = np.ascontiguousarray(np.asarray(self.phi, dtype=float))
        psi = np.ascontiguousarray(np.asarray(self.big_psi, dtype=float))
        if phi.ndim != 2 or phi.shape != psi.shape or phi.shape[0] != phi.shape[1]:
            raise WindowMismatch(
                f"symbol tables must be equal square shapes, got "
                f"{phi.shape} and {psi.shape}")
        phi.setflags(write=False)
        psi.setflags(write=False)
        object.__setattr__(self, "phi", phi)
        object.__setattr__(self, "big_psi", psi)

    @property
    def ell(self) -> int:
        return self.phi.shape[0]

    @property
    def certified(self) -> bool:
        return math.isfinite(self.rho) and self.rho > 1.0

    def compatible_up_to(self, t: float) -> bool:
        return self.compat_t_max is not None and t <= self.compat_t_max + 1e-12

    def phi_at(self, z, w) -> np.ndarray:
        return _eval_table(self.phi, z, w)

    def big_psi_at(self, z, w) -> np.ndarray:
        return _eval_table(self.big_psi, z, w)

    def xi_at(self, z) -> np.ndarray:
        """Principal square root of phi(z, 0); single-valued once certified."""
        return np.sqrt(_eval_table(self.phi, z, np.zeros_like(np.asarray(z))))

    def psi_at(self, z) -> np.ndarray:
        return _eval_table(self.big_psi, z, np.zeros_like(np.asarray(z)))


def build_symbol(stencil: CostStencil) -> SymbolPair:
    """Lift a cost stencil to its polynomial symbols; certification pending."""
    return SymbolPair(phi=stencil.f, big_psi=stencil.g)


# -- certification ----------------------------------------------------------

def _cut_distance(u: np.ndarray) -> np.ndarray:
    """Distance from each point to the branch cut (-inf, 0]."""
    u = np.asarray(u, dtype=complex)
    return np.where(u.real <= 0.0, np.abs(u.imag), np.abs(u))


def check_strong_gathering(symbol: SymbolPair, rho_candidate: float,
                           n_samples: int = 1024, margin: float = 1e-9
                           ) -> SymbolPair:
    """Certify that phi(. , 0) avoids (-inf, 0] on the closed candidate disc.

    Samples the origin and three circles (radius 1, midway, rho), requiring
    distance to the cut above ``margin`` everywhere, then verifies the
    winding number of phi(., 0) around 0 on the outer circle vanishes so
    the principal square root stays single-valued inside.  Returns a copy
    carrying the certified radius.
    """
    if n_samples < 256:
        raise BadStep(f"need at least 256 boundary samples, got {n_samples}")
    if not (math.isfinite(rho_candidate) and rho_candidate > 1.0):
        raise GatheringFailed(
            f"candidate radius must exceed 1, got {rho_candidate}")
    at_zero = complex(symbol.phi_at(0.0, 0.0))
    if _cut_distance(np.array(at_zero)) <= margin:
        raise GatheringFailed(
            f"phi(0,0) = {at_zero.real:g} sits on the branch cut",
            z=0.0, value=at_zero)
    angles = 2.0 * np.pi * np.arange(n_samples) / n_samples
    ring = np.exp(1j * angles)
    worst = math.inf
    for radius in (1.0, 0.5 * (1.0 + rho_candidate), rho_candidate):
        zs = radius * ring
        vals = symbol.phi_at(zs, np.zeros_like(zs))
        dist = _cut_distance(vals)
        j = int(np.argmin(dist))
        if dist[j] <= margin:
            raise GatheringFailed(
                f"phi(z,0) within {margin:g} of the branch cut at "
                f"z = {complex(zs[j]):.6g} (phi = {complex(vals[j]):.6g})",
                z=complex(zs[j]), value=complex(vals[j]))
        worst = min(worst, float(dist[j]))
        if radius == rho_candidate:
            theta = np.unwrap(np.angle(np.append(vals, vals[0])))
            winding = int(round((theta[-1] - theta[0]) / (2.0 * np.pi)))
            if winding != 0:
                raise GatheringFailed(
                    f"phi(z,0) winds {winding} times around 0 on |z| = "
                    f"{radius:g}; zeros inside the disc", z=complex(zs[0]))
    return dataclasses.replace(symbol, rho=float(rho_candidate),
                               gathering_margin=worst)


def check_compatibility(symbol: SymbolPair, t_max: float, n_t: int = 65,
                        n_radii: int = 17, n_angles: int = 64,
                        margin: float = 1e-9) -> SymbolPair:
    """Certify the edge denominator on [0, t_max] x (closed rho-disc).

    The checked quantity is |psi(z) tanh(t xi(z)) + xi(z)|; its zeros are
    exactly the finite-time singularities of the edge flow.  Returns a copy
    carrying compat_margin and compat_t_max.
    """
    if not symbol.certified:
        raise UncertifiedSymbol("run check_strong_gathering first")
    if not (math.isfinite(t_max) and t_max > 0):
        raise BadStep(f"horizon must be positive, got {t_max}")
    radii = np.linspace(0.0, symbol.rho, n_radii)
    angles = 2.0 * np.pi * np.arange(n_angles) / n_angles
    zs = (radii[:, None] * np.exp(1j * angles)[None, :]).ravel()
    zs = np.concatenate([[0.0 + 0.0j], zs])
    xi = symbol.xi_at(zs)
    psi = symbol.psi_at(zs)
    ts = np.linspace(0.0, t_max, n_t)
    vals = np.abs(psi[None, :] * np.tanh(ts[:, None] * xi[None, :])
                  + xi[None, :])
    flat = int(np.argmin(vals))
    ti, zi = np.unravel_index(flat, vals.shape)
    low = float(vals[ti, zi])
    if low <= margin:
        raise CompatibilityFailed(
            f"edge denominator dips to {low:.3e} inside the certified disc",
            t=float(ts[ti]), z=complex(zs[zi]))
    return dataclasses.replace(symbol, compat_margin=low,
                               compat_t_max=float(t_max))


def certify_symbol(stencil: CostStencil, rho: float, t_max: float,
                   n_samples: int = 1024, margin: float = 1e-9) -> SymbolPair:
    """build_symbol + both certification gates in one call."""
    sym = check_strong_gathering(build_symbol(stencil), rho,
                                 n_samples=n_samples, margin=margin)
    return check_compatibility(sym, t_max, margin=margin)


# -- evolutive closed form --------------------------------------------------

def _edge_flow(xi: np.ndarray, psi: np.ndarray, t: float
               ) -> tuple[np.ndarray, np.ndarray]:
    """(L, E) for the scalar edge Riccati flow at time-to-go t."""
    sh = np.sinh(xi * t)
    ch = np.cosh(xi * t)
    den = psi * sh + xi * ch
    bad = np.abs(den) < SINGULARITY_FLOOR
    if np.any(bad):
        raise NumericalSingularity(
            "edge denominator below 1e-13; compatibility margin was "
            "too optimistic for this t")
    return (xi * sh + psi * ch) / den, den


def _pair_kernels(l_z, l_w, xi_z, xi_w, psi_z, psi_w, t: float
                  ) -> tuple[np.ndarray, np.ndarray]:
    """sigma_pm = S +- D with the midpoint patch for the D kernel.

    All inputs broadcast; t is scalar.  The patch must stay in sync between
    the t and 0 evaluations (see module docstring).
    """
    s = (l_z + l_w) / (xi_z + xi_w)
    num = l_z - l_w
    den = xi_z - xi_w
    mask = np.abs(den) < PAIR_KERNEL_THRESHOLD
    safe = np.where(mask, 1.0, den)
    d = num / safe
    if np.any(mask):
        xm = 0.5 * (xi_z + xi_w)
        pm = 0.5 * (psi_z + psi_w)
        em = pm * np.sinh(xm * t) + xm * np.cosh(xm * t)
        patch = ((xm * xm - pm * pm) * t - pm) / (em * em)
        d = np.where(mask, patch, d)
    return s + d, s - d


def eval_xi_hat(symbol: SymbolPair, t: float, z, w,
                allow_uncertified: bool = False) -> np.ndarray:
    """The double generating function X(t, z, w), elementwise in z, w.

    t is time to go: X(0, ., .) = Psi.  Requires certification and a
    compatibility horizon covering t unless allow_uncertified is set.
    """
    if not allow_uncertified:
        if not symbol.certified:
            raise UncertifiedSymbol("symbol lacks a strong-gathering certificate")
        if not symbol.compatible_up_to(t):
            raise UncertifiedSymbol(
                f"compatibility verified up to {symbol.compat_t_max}, "
                f"requested t = {t}")
    z = np.asarray(z, dtype=complex)
    w = np.asarray(w, dtype=complex)
    xi_z, xi_w = symbol.xi_at(z), symbol.xi_at(w)
    psi_z, psi_w = symbol.psi_at(z), symbol.psi_at(w)
    phi = symbol.phi_at(z, w)
    big_psi = symbol.big_psi_at(z, w)

    l_z, e_z = _edge_flow(xi_z, psi_z, t)
    l_w, e_w = _edge_flow(xi_w, psi_w, t)
    sp_t, sm_t = _pair_kernels(l_z, l_w, xi_z, xi_w, psi_z, psi_w, t)
    l0_z = psi_z / xi_z
    l0_w = psi_w / xi_w
    sp_0, sm_0 = _pair_kernels(l0_z, l0_w, xi_z, xi_w, psi_z, psi_w, 0.0)

    cross = xi_z * xi_w
    weight = cross / (e_z * e_w)
    return (0.5 * (phi * sp_t + cross * sm_t)
            + weight * (big_psi - 0.5 * (phi * sp_0 + cross * sm_0)))


# -- contour extraction -----------------------------------------------------

@dataclass(frozen=True)
class ContourPlan:
    """Tensor contour layout: radius, nodes per axis, optional time samples."""

    r: float
    n_nodes: int = 256
    t_samples: tuple[float, ...] = ()

    def __post_init__(self) -> None:
        if not (math.isfinite(self.r) and self.r > 0):
            raise BadStep(f"contour radius must be positive, got {self.r}")
        n = self.n_nodes
        if n < 4 or n & (n - 1):
            raise BadStep(f"node count must be a power of two >= 4, got {n}")

    @staticmethod
    def for_symbol(symbol: SymbolPair, truncation: int,
                   t_samples: tuple[float, ...] = ()) -> "ContourPlan":
        """Midway radius (1 + rho)/2 and >= 4 * truncation nodes."""
        if not symbol.certified:
            raise UncertifiedSymbol("symbol lacks a certificate")
        n = max(256, 4 * truncation)
        n = 1 << (n - 1).bit_length()
        return ContourPlan(r=0.5 * (1.0 + symbol.rho), n_nodes=n,
                           t_samples=t_samples)


def _contour_values(symbol: SymbolPair, plan: ContourPlan, n: int,
                    sampler) -> np.ndarray:
    zs = plan.r * np.exp(2j * np.pi * np.arange(n) / n)
    zg, wg = np.meshgrid(zs, zs, indexing="ij")
    return sampler(zg, wg)


def _invert(grid: np.ndarray, r: float, truncation: int) -> np.ndarray:
    n = grid.shape[0]
    block = np.fft.fft2(grid)[:truncation, :truncation] / n**2
    powers = np.add.outer(np.arange(truncation), np.arange(truncation))
    block = block / np.power(r, powers)
    worst = float(np.max(np.abs(block.imag)))
    if worst > IMAG_TOL:
        raise ImaginaryResidue(
            f"imaginary residue {worst:.3e} after inversion; contour or "
            f"compatibility problem")
    real = block.real
    return 0.5 * (real + real.T)


def _extract(symbol: SymbolPair, plan: ContourPlan, truncation: int,
             sampler, check_aliasing: bool) -> np.ndarray:
    if truncation < 1:
        raise WindowMismatch(f"truncation must be >= 1, got {truncation}")
    if plan.n_nodes < 4 * truncation:
        raise WindowMismatch(
            f"{plan.n_nodes} nodes under-resolve truncation {truncation}; "
            f"need >= {4 * truncation}")
    coarse = _invert(_contour_values(symbol, plan, plan.n_nodes, sampler),
                     plan.r, truncation)
    if check_aliasing:
        fine = _invert(_contour_values(symbol, plan, 2 * plan.n_nodes, sampler),
                       plan.r, truncation)
        gap = float(np.max(np.abs(fine - coarse)))
        if gap > ALIAS_TOL:
            raise AliasingDetected(
                f"doubling contour nodes moved coefficients by {gap:.3e}")
        return fine
    return coarse


def _gate_radius(symbol: SymbolPair, plan: ContourPlan,
                 allow_uncertified: bool) -> None:
    if symbol.certified:
        if not 1.0 < plan.r < symbol.rho:
            raise WindowMismatch(
                f"extraction radius {plan.r} outside (1, {symbol.rho})")
    elif not allow_uncertified:
        raise UncertifiedSymbol(
            "symbol lacks a certificate; pass allow_uncertified to extract "
            "anyway (limit cases, degraded accuracy)")


def extract_coefficients(symbol: SymbolPair, plan: ContourPlan, t: float,
                         truncation: int, check_aliasing: bool = True,
                         allow_uncertified: bool = False) -> np.ndarray:
    """Coefficient matrix at time-to-go t by tensor Cauchy inversion.

    extract_coefficients(symbol, plan, 0.0, H) reproduces the terminal
    table padded to H x H up to roundoff.
    """
    _gate_radius(symbol, plan, allow_uncertified)

    def sampler(zg, wg):
        return eval_xi_hat(symbol, t, zg, wg,
                           allow_uncertified=allow_uncertified)

    return _extract(symbol, plan, truncation, sampler, check_aliasing)


def eval_ergodic_symbol(symbol: SymbolPair, z, w,
                        allow_uncertified: bool = False) -> np.ndarray:
    """Stationary limit (phi(z,w) + xi(z) xi(w)) / (xi(z) + xi(w))."""
    if not symbol.certified and not allow_uncertified:
        raise UncertifiedSymbol("symbol lacks a certificate")
    xi_z, xi_w = symbol.xi_at(z), symbol.xi_at(w)
    return (symbol.phi_at(z, w) + xi_z * xi_w) / (xi_z + xi_w)


def ergodic_coefficients(symbol: SymbolPair, plan: ContourPlan,
                         truncation: int, sign: str = "plus",
                         check_aliasing: bool = True,
                         allow_uncertified: bool = False) -> np.ndarray:
    """Stationary coefficient matrix; the minus branch is the exact negative."""
    if sign not in ("plus", "minus"):
        raise WindowMismatch(f"sign must be plus or minus, got {sign!r}")
    _gate_radius(symbol, plan, allow_uncertified)

    def sampler(zg, wg):
        return eval_ergodic_symbol(symbol, zg, wg,
                                   allow_uncertified=allow_uncertified)

    out = _extract(symbol, plan, truncation, sampler, check_aliasing)
    return out if sign == "plus" else -out


def contour_peak(symbol: SymbolPair, plan: ContourPlan, t: float,
                 allow_uncertified: bool = False) -> float:
    """max |X(t, z, w)| over the tensor contour (decay-bound numerator)."""
    grid = _contour_values(
        symbol, plan, plan.n_nodes,
        lambda zg, wg: eval_xi_hat(symbol, t, zg, wg,
                                   allow_uncertified=allow_uncertified))
    return float(np.max(np.abs(grid)))


def boundary_decay_rate(symbol: SymbolPair, radius: float,
                        n_samples: int = 2048) -> float:
    """min Re xi on |z| = radius; the exponential rate of the long-time limit.

    Re xi is harmonic where xi is analytic and nonvanishing, so the minimum
    over the closed disc sits on the boundary circle.
    """
    zs = radius * np.exp(2j * np.pi * np.arange(n_samples) / n_samples)
    return float(np.min(symbol.xi_at(zs).real))


# -- the rational limit-case oracle -----------------------------------------

def directed_chain_oracle(h: int, k: int, sign: str = "plus") -> Fraction:
    """Stationary coefficients of the pure chain, in exact arithmetic.

    c_hk = (-1)^(h+k) binom(3/2 - [hk == 0], h + k) for the plus branch;
    the minus branch negates.  These decay only polynomially, matching the
    chain's position exactly on the certification boundary.
    """
    if h < 0 or k < 0:
        raise WindowMismatch(f"indices must be nonnegative, got ({h}, {k})")
    if sign not in ("plus", "minus"):
        raise WindowMismatch(f"sign must be plus or minus, got {sign!r}")
    a = Fraction(3, 2) - (1 if h * k == 0 else 0)
    m = h + k
    out = Fraction(1)
    for j in range(m):
        out *= a - j
        out /= j + 1
    if m % 2 == 1:
        out = -out
    return out if sign == "plus" else -out
