"""Decay gauges: positive sequences with certified convolution control."""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    NonPositiveAlpha,
    NonPositiveSequence,
    TailBoundFailure,
    WindowMismatch,
)

#: Default gauge window radius.
DEFAULT_RADIUS = 256
#: Default decay rate.  The certified constant of this family approaches
#: 4*pi*(1 + exp(-alpha*pi)) at the window edge for every alpha, so alpha
#: mostly trades window mass against edge flatness.
DEFAULT_ALPHA = 2.0


@dataclass(frozen=True)
class DecaySequence:
    """Even positive sequence beta_i stored one-sided on the window |i| <= radius.

    tail_constant B promises beta_i <= B / i**2 beyond the window (0 for
    compactly supported gauges).  csc_constant is set by
    :func:`certify_self_controlled` and stays None until then.
    """

    entries: np.ndarray  # beta_0 .. beta_R
    tail_constant: float = 0.0
    alpha: float | None = None
    csc_constant: float | None = None

    def __post_init__(self) -> None:
        ent = np.asarray(self.entries, dtype=float)
        if ent.ndim != 1 or ent.size == 0:
            raise NonPositiveSequence("gauge needs a nonempty 1-d window")
        if not np.all(np.isfinite(ent)) or np.any(ent <= 0):
            raise NonPositiveSequence("gauge entries must be positive and finite")
        if self.tail_constant < 0:
            raise NonPositiveSequence("tail constant must be >= 0")
        ent = np.ascontiguousarray(ent)
        ent.setflags(write=False)
        object.__setattr__(self, "entries", ent)

    @property
    def radius(self) -> int:
        return self.entries.size - 1

    @property
    def certified(self) -> bool:
        return self.csc_constant is not None

    def value(self, i: int) -> float:
        """beta_i for |i| <= radius."""
        i = abs(int(i))
        if i > self.radius:
            raise WindowMismatch(f"index {i} outside gauge window {self.radius}")
        return float(self.entries[i])

    def two_sided(self) -> np.ndarray:
        """Window as a length 2R+1 array, index i stored at position i+R."""
        return np.concatenate([self.entries[:0:-1], self.entries])

    def l1_window(self) -> float:
        return float(self.entries[0] + 2.0 * self.entries[1:].sum())

    def tail_l1(self) -> float:
        """Upper bound on sum of |beta_i| over |i| > radius."""
        # sum_{i>R} B/i^2 <= B/R, both sides.
        return 2.0 * self.tail_constant / self.radius if self.tail_constant else 0.0


def make_exponential_fourier_seq(alpha: float, radius: int = DEFAULT_RADIUS
                                 ) -> DecaySequence:
    """Fourier coefficients of the periodized exponential bump.

    beta_i = 2*alpha/(alpha^2+i^2) * (1 - (-1)^i exp(-alpha*pi)); even,
    strictly positive, and summable with an explicit 1/i^2 tail.
    """
    if not (np.isfinite(alpha) and alpha > 0):
        raise NonPositiveAlpha(f"decay rate must be positive, got {alpha}")
    if radius < 1:
        raise NonPositiveSequence(f"window radius must be >= 1, got {radius}")
    i = np.arange(radius + 1, dtype=float)
    sign = np.where(np.arange(radius + 1) % 2 == 0, 1.0, -1.0)
    ent = 2.0 * alpha / (alpha**2 + i**2) * (1.0 - sign * np.exp(-alpha * np.pi))
    tail = 2.0 * alpha * (1.0 + np.exp(-alpha * np.pi))
    return DecaySequence(entries=ent, tail_constant=tail, alpha=alpha)


def exponential_tilt(seq: DecaySequence, gamma: float) -> DecaySequence:
    """Sharpen a gauge to beta_i * exp(-gamma*|i|).  Drops any certification."""
    if not (np.isfinite(gamma) and gamma > 0):
        raise NonPositiveAlpha(f"tilt rate must be positive, got {gamma}")
    ent = seq.entries * np.exp(-gamma * np.arange(seq.radius + 1))
    # beyond the window, beta_i e^{-gamma|i|} <= (B e^{-gamma(R+1)}) / i^2
    tail = seq.tail_constant * math.exp(-gamma * (seq.radius + 1))
    return DecaySequence(entries=ent, tail_constant=tail, alpha=seq.alpha)


def _two_sided(x: DecaySequence | np.ndarray) -> np.ndarray:
    if isinstance(x, DecaySequence):
        return x.two_sided()
    arr = np.asarray(x, dtype=float)
    if arr.ndim != 1 or arr.size % 2 != 1:
        raise WindowMismatch(
            f"raw sequence must be two-sided with odd length, got shape {arr.shape}")
    return arr


def convolve(a: DecaySequence | np.ndarray, b: DecaySequence | np.ndarray,
             mode: str = "z_truncated", n: int | None = None) -> np.ndarray:
    """Convolve two windows.

    z_truncated: (a*b)_i = sum_{|j|<=R} a_j b_{i-j}, out-of-window factors 0,
    result returned two-sided on the common window.  cyclic: fold both inputs
    mod n first, then (a*b)_i = sum_j a_j b_{[i-j]_n}.
    """
    if mode == "z_truncated":
        av, bv = _two_sided(a), _two_sided(b)
        if av.size != bv.size:
            raise WindowMismatch(f"window sizes differ: {av.size} vs {bv.size}")
        r = av.size // 2
        full = np.convolve(av, bv)
        return full[r: 3 * r + 1] if r else full
    if mode == "cyclic":
        if n is None or n < 1:
            raise WindowMismatch("cyclic mode needs a period n >= 1")
        av, bv = fold_cyclic(a, n), fold_cyclic(b, n)
        idx = (np.arange(n)[:, None] - np.arange(n)[None, :]) % n
        return bv[idx] @ av
    raise WindowMismatch(f"unknown convolution mode {mode!r}")


def fold_cyclic(x: DecaySequence | np.ndarray, n: int) -> np.ndarray:
    """Wrap a window onto period n: out_m = sum of entries over i = m mod n."""
    arr = np.asarray(x, dtype=float) if not isinstance(x, DecaySequence) else None
    if arr is not None and arr.ndim == 1 and arr.size == n:
        return arr.copy()
    tv = _two_sided(x)
    r = tv.size // 2
    if n > tv.size:
        raise WindowMismatch(f"period {n} exceeds window size {tv.size}")
    out = np.zeros(n)
    np.add.at(out, (np.arange(-r, r + 1)) % n, tv)
    return out


def certify_self_controlled(beta: DecaySequence, tol_tail: float = 16.0
                            ) -> DecaySequence:
    """Certify sum_j beta_j beta_{i-j} <= C beta_i on the window.

    The window part is summed exactly; out-of-window mass is bounded using
    the 1/i^2 tail majorant (edge partial sums plus an analytic remainder).
    The worst tail addition may not exceed tol_tail * min beta, so tol_tail
    caps the slack the certificate can hide.  Returns a copy carrying
    csc_constant=C.
    """
    r = beta.radius
    ent = beta.entries
    conv = convolve(beta, beta)[r:]  # indices 0..R, conv is even
    tail = np.zeros(r + 1)
    big = beta.tail_constant
    if big > 0.0:
        idx = np.arange(r + 1)
        # one factor out of window: j in (R, R+i], partner beta_{j-i} exact
        jg = np.arange(r + 1, 2 * r + 1, dtype=float)  # j = R+1 .. R+i at most
        inv = big / jg**2
        # j = R+m pairs with beta_{R+m-i}, m = 1..i
        for i in range(1, r + 1):
            tail[i] = 2.0 * float(np.dot(inv[:i], ent[r - i + 1: r + 1]))
        # both factors out: 2 B^2 / ((i+R+1)^2 R)
        tail += 2.0 * big**2 / ((idx + r + 1.0) ** 2 * r)
    floor = float(ent.min())
    worst = float(tail.max())
    if worst > tol_tail * floor:
        raise TailBoundFailure(
            f"window tail bound {worst:.3e} exceeds {tol_tail:.1e} * min beta "
            f"({floor:.3e}); widen the window or loosen tol_tail")
    c = float(np.max((conv + tail) / ent))
    return dataclasses.replace(beta, csc_constant=c)


@dataclass(frozen=True)
class DominationWitness:
    """Brute-force constants for the weighted-ball closure bound.

    With d_{hk} = beta_h beta_k + theta_{hk}: theta_bound certifies
    theta <= theta_bound * beta (x) beta, conv_bound certifies
    sum_{j<=h} d_{j0} d_{h-j,k} <= conv_bound * beta_h beta_k on the window.
    """

    theta_bound: float
    conv_bound: float

    def __post_init__(self) -> None:
        if not (np.isfinite(self.theta_bound) and self.theta_bound >= 0):
            raise NonPositiveSequence(f"bad theta bound {self.theta_bound}")
        if not (np.isfinite(self.conv_bound) and self.conv_bound >= 0):
            raise NonPositiveSequence(f"bad convolution bound {self.conv_bound}")


def build_domination_witness(beta: DecaySequence, theta: np.ndarray
                             ) -> DominationWitness:
    """Measure theta against beta (x) beta and close the one-step convolution.

    theta is an (H, H) nonnegative array on the corner window, H <= radius+1.
    """
    theta = np.asarray(theta, dtype=float)
    if theta.ndim != 2 or theta.shape[0] != theta.shape[1]:
        raise WindowMismatch(f"theta must be square, got {theta.shape}")
    h = theta.shape[0]
    if h > beta.radius + 1:
        raise WindowMismatch(
            f"theta window {h} exceeds gauge window {beta.radius + 1}")
    if np.any(theta < 0) or not np.all(np.isfinite(theta)):
        raise NonPositiveSequence("theta must be nonnegative and finite")
    b = beta.entries[:h]
    outer = np.outer(b, b)
    theta_bound = float(np.max(theta / outer))
    d = outer + theta
    # (d_{.0} * d_{.k})_h = sum_{j=0}^{h} d_{j,0} d_{h-j,k}, corner-truncated
    conv = np.empty_like(d)
    col0 = d[:, 0]
    for i in range(h):
        conv[i, :] = col0[: i + 1] @ d[i::-1, :]
    conv_bound = float(np.max(conv / outer))
    return DominationWitness(theta_bound=theta_bound, conv_bound=conv_bound)
