"""Complex gamma machinery and the completed spherical GL(3) Whittaker function.

The completed Whittaker function is evaluated from its double Mellin-Barnes
representation

    W(y, mu) = (1/(4*pi^2)) II (pi*y1)^(1-s1) (pi*y2)^(1-s2) G(s, mu) ds/(2*pi*i)^2,

    G(s, mu) = prod_i Gamma((s1-mu_i)/2) Gamma((s2+mu_i)/2) / Gamma((s1+s2)/2),

with both contours to the right of the poles of the numerator gammas and
spectral parameters mu in C^3 summing to zero.  The integrand factorizes as
(1D in s1) x (1D in s2) x (function of s1+s2), so a truncated trapezoid
contour reduces to dense linear algebra on three 1D gamma tables.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from functools import lru_cache

import numpy as np


class AccuracyWarning(UserWarning):
    """A quadrature tail or truncation estimate exceeded its target."""


# ---------------------------------------------------------------------------
# log-gamma / digamma (principal branch, vectorized)
# ---------------------------------------------------------------------------

_HALF_LOG_2PI = 0.5 * np.log(2.0 * np.pi)
_STIRLING_SHIFT = 10.0
# B_{2n} / ((2n)(2n-1)) for n = 1..11
_LG_COEF = np.array([
    1.0 / 12.0, -1.0 / 360.0, 1.0 / 1260.0, -1.0 / 1680.0, 1.0 / 1188.0,
    -691.0 / 360360.0, 1.0 / 156.0, -3617.0 / 122400.0, 43867.0 / 244188.0,
    -174611.0 / 125400.0, 854513.0 / 63756.0,
])
# B_{2n} / (2n) for n = 1..11
_PSI_COEF = np.array([
    1.0 / 12.0, -1.0 / 120.0, 1.0 / 252.0, -1.0 / 240.0, 1.0 / 132.0,
    -691.0 / 32760.0, 1.0 / 12.0, -3617.0 / 8160.0, 43867.0 / 14364.0,
    -174611.0 / 6600.0, 854513.0 / 3036.0,
])


def _pole_mask(z: np.ndarray) -> np.ndarray:
    return (z.imag == 0.0) & (z.real <= 0.0) & (z.real == np.round(z.real))


def _lift_to_stirling(z):
    """Shift arguments right of Re = _STIRLING_SHIFT, collecting -log terms."""
    shift = np.zeros_like(z)
    mask = z.real < _STIRLING_SHIFT
    while mask.any():
        shift[mask] -= np.log(z[mask])
        z = z + mask  # adds 1 where mask is True
        mask = z.real < _STIRLING_SHIFT
    return z, shift


def log_gamma(z):
    """Principal-branch log Gamma(z); poles return complex infinity.

    Stirling's series after lifting Re(z) past 10, with conjugate symmetry
    for the lower half-plane.  Relative accuracy is near machine epsilon
    away from poles for |z| up to 1e3 and beyond.
    """
    z_in = np.asarray(z, dtype=np.complex128)
    scalar = z_in.ndim == 0
    z = np.atleast_1d(z_in).copy()
    pole = _pole_mask(z)
    z[pole] = 1.0
    neg = z.imag < 0.0
    z[neg] = np.conj(z[neg])
    w, shift = _lift_to_stirling(z)
    r = 1.0 / (w * w)
    s = np.full_like(w, _LG_COEF[-1])
    for c in _LG_COEF[-2::-1]:
        s = s * r + c
    out = (w - 0.5) * np.log(w) - w + _HALF_LOG_2PI + s / w + shift
    out[neg] = np.conj(out[neg])
    out[pole] = complex(np.inf, 0.0)
    return complex(out[0]) if scalar else out


def gamma(z):
    """Gamma(z) = exp(log_gamma(z)); poles return complex infinity."""
    z_in = np.asarray(z, dtype=np.complex128)
    scalar = z_in.ndim == 0
    z = np.atleast_1d(z_in)
    pole = _pole_mask(z)
    lg = np.atleast_1d(log_gamma(z))
    out = np.exp(lg)
    out[pole] = complex(np.inf, 0.0)
    return complex(out[0]) if scalar else out


def digamma(z):
    """psi(z) = d/dz log Gamma(z), the shared log-gamma-derivative routine."""
    z_in = np.asarray(z, dtype=np.complex128)
    scalar = z_in.ndim == 0
    z = np.atleast_1d(z_in).copy()
    pole = _pole_mask(z)
    z[pole] = 1.0
    neg = z.imag < 0.0
    z[neg] = np.conj(z[neg])
    shift = np.zeros_like(z)
    mask = z.real < _STIRLING_SHIFT
    while mask.any():
        shift[mask] -= 1.0 / z[mask]
        z = z + mask
        mask = z.real < _STIRLING_SHIFT
    r = 1.0 / (z * z)
    s = np.full_like(z, _PSI_COEF[-1])
    for c in _PSI_COEF[-2::-1]:
        s = s * r + c
    out = np.log(z) - 0.5 / z - s * r + shift
    out[neg] = np.conj(out[neg])
    out[pole] = complex(np.inf, 0.0)
    return complex(out[0]) if scalar else out


# ---------------------------------------------------------------------------
# spectral parameters and the Weyl action
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class WeylElement:
    """Coordinate permutation acting on the spectral triple, (mu^w)_i = mu_perm[i]."""

    name: str
    perm: tuple[int, int, int]

    def apply(self, mu):
        return tuple(mu[p] for p in self.perm)

    def compose(self, other: "WeylElement") -> "WeylElement":
        # (mu^self)^other has entries mu[self.perm[other.perm[i]]]
        perm = tuple(self.perm[other.perm[i]] for i in range(3))
        for w in WEYL_GROUP.values():
            if w.perm == perm:
                return w
        raise AssertionError("Weyl composition left the group")

    def inverse(self) -> "WeylElement":
        inv = [0, 0, 0]
        for i, p in enumerate(self.perm):
            inv[p] = i
        return next(w for w in WEYL_GROUP.values() if w.perm == tuple(inv))

    @property
    def parity(self) -> int:
        p = self.perm
        sign = 1
        for i in range(3):
            for j in range(i + 1, 3):
                if p[i] > p[j]:
                    sign = -sign
        return sign


WEYL_GROUP = {
    "I": WeylElement("I", (0, 1, 2)),
    "w2": WeylElement("w2", (1, 0, 2)),
    "w3": WeylElement("w3", (0, 2, 1)),
    "w4": WeylElement("w4", (2, 0, 1)),
    "w5": WeylElement("w5", (1, 2, 0)),
    "wl": WeylElement("wl", (2, 1, 0)),
}
W3 = (WEYL_GROUP["I"], WEYL_GROUP["w4"], WEYL_GROUP["w5"])


@dataclass(frozen=True)
class SpectralPoint:
    """mu in C^3 with mu1 + mu2 + mu3 = 0."""

    mu: tuple[complex, complex, complex]

    def __post_init__(self):
        s = abs(sum(self.mu))
        scale = max(1.0, max(abs(m) for m in self.mu))
        if s > 1e-13 * scale:
            raise ValueError(f"spectral parameters must sum to zero, got {s}")
        object.__setattr__(self, "mu", tuple(complex(m) for m in self.mu))

    @classmethod
    def from_pair(cls, mu1: complex, mu2: complex) -> "SpectralPoint":
        return cls((complex(mu1), complex(mu2), -complex(mu1) - complex(mu2)))

    @classmethod
    def degenerate(cls, t: float) -> "SpectralPoint":
        return cls((1j * t, 1j * t, -2j * t))

    def weyl(self, w: WeylElement | str) -> "SpectralPoint":
        if isinstance(w, str):
            w = WEYL_GROUP[w]
        return SpectralPoint(w.apply(self.mu))

    def scale(self, a: complex) -> "SpectralPoint":
        return SpectralPoint(tuple(a * m for m in self.mu))

    def neg(self) -> "SpectralPoint":
        return self.scale(-1)

    def norm(self) -> float:
        return float(np.sqrt(sum(abs(m) ** 2 for m in self.mu)))

    def max_im(self) -> float:
        return max(abs(m.imag) for m in self.mu)

    def max_re(self) -> float:
        return max(abs(m.real) for m in self.mu)

    def is_unitary(self, tol: float = 1e-10) -> bool:
        """-conj(mu) is a permutation of mu."""
        target = sorted((-m.conjugate() for m in self.mu),
                        key=lambda z: (round(z.real, 9), round(z.imag, 9)))
        have = sorted(self.mu, key=lambda z: (round(z.real, 9), round(z.imag, 9)))
        return all(abs(a - b) <= tol for a, b in zip(target, have))

    def min_separation(self) -> float:
        m = self.mu
        return min(abs(m[0] - m[1]), abs(m[0] - m[2]), abs(m[1] - m[2]))


def as_spectral(mu) -> SpectralPoint:
    return mu if isinstance(mu, SpectralPoint) else SpectralPoint(tuple(mu))


# ---------------------------------------------------------------------------
# contours
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ContourSpec:
    """Two vertical lines Re(s_i) = real_parts[i], truncated at |Im| <= height,
    sampled with the trapezoid rule at the given step."""

    real_parts: tuple[float, float]
    height: float
    step: float

    def __post_init__(self):
        if self.height <= 0 or self.step <= 0:
            raise ValueError("height and step must be positive")
        if self.step > self.height / 50.0:
            raise ValueError("step too coarse: require step <= height/50")

    def imag_nodes(self) -> np.ndarray:
        n = int(np.floor(self.height / self.step))
        return self.step * np.arange(-n, n + 1)

    def nodes(self, axis: int) -> np.ndarray:
        return self.real_parts[axis] + 1j * self.imag_nodes()


def default_contour(mu: SpectralPoint, *, margin: float = 1.0,
                    pad: float = 22.0, step: float = 0.2) -> ContourSpec:
    """Contour right of every pole of the Whittaker integrand for this mu.

    Re(s_i) clears max_j Re(+-mu_j) by `margin`; the truncation height covers
    the no-decay band |Im s| <~ 2*max|Im mu| plus an exponential-decay pad.
    """
    sig = mu.max_re() + margin
    height = 2.0 * mu.max_im() + pad
    return ContourSpec((sig, sig), height, step)


def g0(s, mu) -> complex:
    """Gamma-product Mellin kernel of the completed spherical Whittaker function:
    prod_i Gamma((s1-mu_i)/2) Gamma((s2+mu_i)/2) / Gamma((s1+s2)/2)."""
    mu = as_spectral(mu)
    s1, s2 = s
    lg = 0j
    for m in mu.mu:
        lg = lg + log_gamma((s1 - m) / 2.0) + log_gamma((s2 + m) / 2.0)
    lg = lg - log_gamma((s1 + s2) / 2.0)
    return np.exp(lg)


@lru_cache(maxsize=64)
def _g0_tables(quad: ContourSpec, mu: SpectralPoint):
    """1D tables (A_j, B_k, dinv over j+k) for G on the truncated contour."""
    s1 = quad.nodes(0)
    s2 = quad.nodes(1)
    lgA = np.zeros(len(s1), dtype=np.complex128)
    lgB = np.zeros(len(s2), dtype=np.complex128)
    for m in mu.mu:
        lgA += log_gamma((s1 - m) / 2.0)
        lgB += log_gamma((s2 + m) / 2.0)
    A = np.exp(lgA)
    B = np.exp(lgB)
    # s1_j + s2_k lies on a uniform grid in j+k
    v = quad.imag_nodes()
    ssum = (quad.real_parts[0] + quad.real_parts[1]
            + 1j * (v[0] + v[0] + quad.step * np.arange(2 * len(v) - 1)))
    dinv = np.exp(-log_gamma(ssum / 2.0))
    return s1, s2, A, B, dinv


def _hankel(dinv: np.ndarray, n: int) -> np.ndarray:
    idx = np.arange(n)
    return dinv[idx[:, None] + idx[None, :]]


def whittaker_grid(y1s, y2s, mu, quad: ContourSpec | None = None,
                   *, tail_check: bool = True) -> np.ndarray:
    """Completed spherical Whittaker function on the product grid y1s x y2s.

    Returns a (len(y1s), len(y2s)) complex array.
    """
    mu = as_spectral(mu)
    if quad is None:
        quad = default_contour(mu)
    y1s = np.atleast_1d(np.asarray(y1s, dtype=float))
    y2s = np.atleast_1d(np.asarray(y2s, dtype=float))
    if np.any(y1s <= 0) or np.any(y2s <= 0):
        raise ValueError("y coordinates must be positive")
    s1, s2, A, B, dinv = _g0_tables(quad, mu)
    n = len(s1)
    X = np.exp(np.log(np.pi * y1s)[:, None] * (1.0 - s1)[None, :]) * A[None, :]
    Y = np.exp(np.log(np.pi * y2s)[:, None] * (1.0 - s2)[None, :]) * B[None, :]
    H = _hankel(dinv, n)
    norm = (quad.step / (2.0 * np.pi)) ** 2 / (4.0 * np.pi ** 2)
    W = norm * (X @ H @ Y.T)
    if tail_check:
        # crude boundary estimate: largest |integrand factor| on the last node
        core = np.abs(A * dinv[np.arange(n) + n // 2])
        edge = max(core[0], core[-1])
        peak = core.max()
        if peak > 0 and edge > 1e-10 * peak:
            warnings.warn(
                f"contour truncation tail ratio {edge / peak:.2e} exceeds 1e-10",
                AccuracyWarning, stacklevel=2)
    return W


def whittaker(y, mu, quad: ContourSpec | None = None) -> complex:
    """Completed spherical Whittaker function at a single point y = (y1, y2)."""
    W = whittaker_grid([y[0]], [y[1]], mu, quad)
    return complex(W[0, 0])


def whittaker_json(y, mu, quad: ContourSpec | None = None) -> dict:
    """(y, mu, value, error-estimate) record for machine consumption."""
    mu = as_spectral(mu)
    if quad is None:
        quad = default_contour(mu)
    w = whittaker(y, mu, quad)
    finer = ContourSpec(quad.real_parts, quad.height, quad.step / 2.0)
    w2 = whittaker(y, mu, finer)
    err = abs(w - w2) / max(abs(w2), 1e-300)
    return {
        "y": [float(y[0]), float(y[1])],
        "mu": [[m.real, m.imag] for m in mu.mu],
        "value": [w2.real, w2.imag],
        "error_estimate": err,
    }


# ---------------------------------------------------------------------------
# Stade's formula
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class YPlusGrid:
    """Tensor Gauss-Legendre grid on Y+ in logarithmic coordinates.

    The lower cutoff is limited by the Whittaker contour's resolvable
    oscillation frequency |log(pi*y)|, so it trades off against the contour
    step used for the integrand evaluations.
    """

    lo: float = -28.0
    hi: float = 2.5
    n: int = 950

    def nodes(self) -> tuple[np.ndarray, np.ndarray]:
        x, w = np.polynomial.legendre.leggauss(self.n)
        u = 0.5 * (self.hi - self.lo) * x + 0.5 * (self.hi + self.lo)
        return u, 0.5 * (self.hi - self.lo) * w


def stade_closed_form(mu, mup, t: complex) -> complex:
    """(1/(4 pi^(3t) Gamma(3t/2))) prod_{i,j} Gamma((t + mu_i + mu'_j)/2)."""
    mu = as_spectral(mu)
    mup = as_spectral(mup)
    lg = -log_gamma(1.5 * t) - np.log(4.0) - 3.0 * t * np.log(np.pi)
    for a in mu.mu:
        for b in mup.mu:
            lg = lg + log_gamma((t + a + b) / 2.0)
    return np.exp(lg)


def stade_integral(mu, mup, t: complex, grid: YPlusGrid | None = None,
                   quad: ContourSpec | None = None) -> complex:
    """int_{Y+} W(y,mu) W(y,mu') (y1^2 y2)^t dy1 dy2/(y1 y2)^3, numerically.

    Requires Re(t) large enough for absolute convergence (Re t >= 1 in the
    tests).  Uses the log substitution y = e^u with tensor Gauss-Legendre.
    """
    mu = as_spectral(mu)
    mup = as_spectral(mup)
    if grid is None:
        grid = YPlusGrid()
    if quad is None:
        # step fine enough to resolve |log(pi*y)| oscillation at the small-y end
        maxim = max(mu.max_im(), mup.max_im())
        quad = ContourSpec((max(mu.max_re(), mup.max_re()) + 1.0,) * 2,
                           2.0 * maxim + 24.0, 0.10)
    u, w = grid.nodes()
    ys = np.exp(u)
    W1 = whittaker_grid(ys, ys, mu, quad)
    W2 = W1 if mup == mu else whittaker_grid(ys, ys, mup, quad)
    # (y1^2 y2)^t * (y1 y2)^(-3) dy1 dy2 = e^{(2t-2)u1 + (t-1)u2 - ...}; with
    # dy_i = y_i du_i the log-coordinate weight is e^{(2t-2)u1} e^{(t-2)u2} ... :
    # exponents: y1^(2t) y2^t y1^(-3) y2^(-3) y1 y2 = y1^(2t-2) y2^(t-2)
    expo = np.add.outer((2.0 * t - 2.0) * u, (t - 2.0) * u)
    integrand = W1 * W2 * np.exp(expo)
    return complex(np.einsum("i,j,ij->", w, w, integrand))


def small_y_asymptotic(y, mu) -> complex:
    """Leading small-y expansion: sum over the Weyl orbit of
    pi^(mu1^w - mu3^w) y1^(1-mu3^w) y2^(1+mu1^w) *
    Gamma((mu3^w-mu1^w)/2) Gamma((mu3^w-mu2^w)/2) Gamma((mu2^w-mu1^w)/2).

    Valid for distinct coordinates with Re(mu) = 0; refuses degenerate mu.
    """
    mu = as_spectral(mu)
    if mu.min_separation() < 1e-6:
        raise ValueError("degenerate spectral parameters: expansion undefined")
    total = 0j
    for w in WEYL_GROUP.values():
        m1, m2, m3 = w.apply(mu.mu)
        total += (np.pi ** (m1 - m3)
                  * y[0] ** (1.0 - m3) * y[1] ** (1.0 + m1)
                  * gamma((m3 - m1) / 2.0) * gamma((m3 - m2) / 2.0)
                  * gamma((m2 - m1) / 2.0))
    return complex(total)


def blomer_bound_check(y, mu, a1: float, a2: float, A: float,
                       eps: float = 0.01, quad: ContourSpec | None = None) -> float:
    """|W(y,mu)| / [ (y1 y2)^(1-a1) (y1/y2)^(a2) (1+||mu||)^(2a1-1/2+eps) ].

    Preconditions: A > a1 > |a2| + theta with theta = 5/14 (the uniform
    bound on Re(mu) for cusp forms of weight at most one).
    """
    theta = 5.0 / 14.0
    if not (A > a1 > abs(a2) + theta):
        raise ValueError(f"need A > a1 > |a2| + {theta}, got A={A}, a1={a1}, a2={a2}")
    mu = as_spectral(mu)
    w = whittaker(y, mu, quad)
    denom = ((y[0] * y[1]) ** (1.0 - a1) * (y[0] / y[1]) ** a2
             * (1.0 + mu.norm()) ** (2.0 * a1 - 0.5 + eps))
    return abs(w) / denom
