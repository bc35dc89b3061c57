"""Spectral measures, integral transforms, inversion, and the kernel algebra
that isolates the long-element term.

The two minimal-weight trace formulae are combined here at the level of the
meromorphic coefficients multiplying an opaque basis J_w(y, mu^w'); the J_w
themselves are never evaluated.  The spectral measures are

    cos0(mu) = (2/pi) prod_{i<j} cos(pi/2 (mu_i - mu_j)),
    sin0(mu) = (1/(192 pi^5)) prod_{i<j} (mu_i - mu_j) sin(pi/2 (mu_i - mu_j)),
    spec0    = sin0/cos0,          spec1 = weight-one analogue,

and the basic transforms of a test function f on (R+)^2 are

    F0(f; mu) = (16/pi^4) cos0(mu) II f(t) W(t, -2 mu) dt1 dt2/(t1 t2)^2,
    F1(f; mu) = (1/2) tan(pi/2 (mu1-mu3)) tan(pi/2 (mu2-mu3)) F0(f; mu).

Inversion against the measure sin0(mu) dmu reproduces test functions on Y+;
both directions are computed in Mellin space, where the Whittaker kernel
factorizes into 1D gamma tables coupled only through s1+s2.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import sympy as sp

from .special import (AccuracyWarning, ContourSpec, SpectralPoint, W3,
                      WEYL_GROUP, WeylElement, as_spectral, log_gamma,
                      whittaker_grid)


class PoleError(ValueError):
    """Evaluation requested too close to a pole of the formula."""


# ---------------------------------------------------------------------------
# spectral measures and trig identities
# ---------------------------------------------------------------------------

def _diffs(mu):
    m = as_spectral(mu).mu
    return m[0] - m[1], m[0] - m[2], m[1] - m[2]


def cos0(mu) -> complex:
    d12, d13, d23 = _diffs(mu)
    h = np.pi / 2.0
    return (2.0 / np.pi) * np.cos(h * d12) * np.cos(h * d13) * np.cos(h * d23)


def sin0(mu, form: str = "product") -> complex:
    """Spectral measure density; `form` picks the product or gamma expression."""
    mu = as_spectral(mu)
    d12, d13, d23 = _diffs(mu)
    if form == "product":
        h = np.pi / 2.0
        return (d12 * d13 * d23 * np.sin(h * d12) * np.sin(h * d13)
                * np.sin(h * d23) / (192.0 * np.pi ** 5))
    if form == "gamma":
        lg = 0j
        for i in range(3):
            for j in range(3):
                if i != j:
                    lg = lg + log_gamma((mu.mu[i] - mu.mu[j]) / 2.0)
        return 1.0 / (6.0 * (2j * np.pi) ** 2) * np.exp(-lg)
    raise ValueError(f"unknown sin0 form {form!r}")


def spec0(mu) -> complex:
    d12, d13, d23 = _diffs(mu)
    h = np.pi / 2.0
    c = np.cos(h * d12) * np.cos(h * d13) * np.cos(h * d23)
    if c == 0:
        return complex(np.inf, 0.0)
    return (d12 * d13 * d23 * np.tan(h * d12) * np.tan(h * d13)
            * np.tan(h * d23) / (384.0 * np.pi ** 4))


def spec1(mu) -> complex:
    d12, d13, d23 = _diffs(mu)
    h = np.pi / 2.0
    s13, s23, c12 = np.sin(h * d13), np.sin(h * d23), np.cos(h * d12)
    if s13 == 0 or s23 == 0 or c12 == 0:
        return complex(np.inf, 0.0)
    return (d12 * d13 * d23 / (64.0 * np.pi ** 4)
            * (np.cos(h * d13) / s13) * (np.cos(h * d23) / s23)
            * (np.sin(h * d12) / c12))


def sign_combination(eps: tuple[int, int]) -> int:
    """1 + eps2 + eps1 + eps1*eps2, which is 4 exactly at eps = (1,1)."""
    e1, e2 = eps
    return 1 + e2 + e1 + e1 * e2


def verify_identity(name: str, mu=None, eps=None) -> float:
    """Relative residual of one of the closed trigonometric identities."""
    if name == "double_angle":
        mu = as_spectral(mu)
        lhs = 32.0 * np.pi * cos0(mu) * sin0(mu)
        rhs = sin0(mu.scale(2.0))
        return abs(lhs - rhs) / max(abs(lhs), abs(rhs), 1e-300)
    if name == "triple_tangent":
        mu = as_spectral(mu)
        h = np.pi / 2.0
        lhs = sum(np.tan(h * (w.apply(mu.mu)[0] - w.apply(mu.mu)[1])) for w in W3)
        d12, d13, d23 = _diffs(mu)
        rhs = -np.tan(h * d12) * np.tan(h * d13) * np.tan(h * d23)
        return abs(lhs - rhs) / max(abs(lhs), abs(rhs), 1e-300)
    if name == "sign_combination":
        want = 4 if eps == (1, 1) else 0
        return float(abs(sign_combination(eps) - want))
    raise ValueError(f"unknown identity {name!r}")


# ---------------------------------------------------------------------------
# test function families
# ---------------------------------------------------------------------------

def _tilde(s) -> tuple[complex, complex]:
    return 2 * s[0] + s[1], s[0] + 2 * s[1]


class TestFunctionFamily:
    """Symbolic test functions on (R+)^2 with exact derivatives.

    kinds:
      gaussian_bump  -- smooth, compactly supported product bump; parameters
                        center=(c1,c2), width=(w1,w2); near the center it
                        matches exp(-(y-c)^2/(2 w^2)) and vanishes identically
                        outside |y_i - c_i| < R_i with R_i = min(4 w_i, 0.9 c_i).
      f_s            -- (pi y1)^(2 st1) (pi y2)^(2 st2) exp(-pi^2 (y1^2+y2^2))
                        with (st1, st2) = (2 s1 + s2, s1 + 2 s2).
      power_exp      -- (pi y1)^(2 a1) (pi y2)^(2 a2), optionally damped by
                        exp(-(pi^9 y1^5 y2^4)^2 - (pi^9 y1^4 y2^5)^2).
    """

    def __init__(self, kind: str, *, center=(1.0, 1.0), width=(0.3, 0.3),
                 s=None, a=None, damped: bool = True):
        self.kind = kind
        self._lams: dict = {}
        y1, y2 = sp.symbols("y1 y2", positive=True)
        self._syms = (y1, y2)
        if kind == "gaussian_bump":
            self.center = tuple(map(float, center))
            self.width = tuple(map(float, width))
            self.radius = tuple(min(4.0 * w, 0.9 * c)
                                for c, w in zip(self.center, self.width))
            parts = []
            for yv, c, w, r in zip((y1, y2), self.center, self.width, self.radius):
                kappa = r * r / (2.0 * w * w)
                x = (yv - c) / r
                parts.append(sp.exp(-kappa * x ** 2 / (1 - x ** 2)))
            self.expr = parts[0] * parts[1]
            self._axis_exprs = parts
        elif kind == "f_s":
            if s is None:
                raise ValueError("f_s requires s=(s1,s2)")
            self.s = (complex(s[0]), complex(s[1]))
            self.stilde = _tilde(self.s)
            e1 = (sp.pi * y1) ** (2 * sp.sympify(self.stilde[0]))
            e2 = (sp.pi * y2) ** (2 * sp.sympify(self.stilde[1]))
            self.expr = e1 * sp.exp(-sp.pi ** 2 * y1 ** 2) * e2 * sp.exp(-sp.pi ** 2 * y2 ** 2)
            self._axis_exprs = [e1 * sp.exp(-sp.pi ** 2 * y1 ** 2),
                                e2 * sp.exp(-sp.pi ** 2 * y2 ** 2)]
        elif kind == "power_exp":
            if a is None:
                raise ValueError("power_exp requires a=(a1,a2)")
            self.a = (complex(a[0]), complex(a[1]))
            self.damped = damped
            base = ((sp.pi * y1) ** (2 * sp.sympify(self.a[0]))
                    * (sp.pi * y2) ** (2 * sp.sympify(self.a[1])))
            if damped:
                base = base * sp.exp(-(sp.pi ** 9 * y1 ** 5 * y2 ** 4) ** 2
                                     - (sp.pi ** 9 * y1 ** 4 * y2 ** 5) ** 2)
            self.expr = base
            self._axis_exprs = None if damped else [
                (sp.pi * y1) ** (2 * sp.sympify(self.a[0])),
                (sp.pi * y2) ** (2 * sp.sympify(self.a[1]))]
        else:
            raise ValueError(f"unknown test function kind {kind!r}")

    # -- evaluation ---------------------------------------------------------

    def _lam(self, key, expr):
        if key not in self._lams:
            self._lams[key] = sp.lambdify(self._syms, expr, modules="numpy")
        return self._lams[key]

    def _support_mask(self, y1, y2):
        if self.kind != "gaussian_bump":
            return None
        m1 = np.abs(y1 - self.center[0]) < self.radius[0] * (1 - 1e-12)
        m2 = np.abs(y2 - self.center[1]) < self.radius[1] * (1 - 1e-12)
        return m1 & m2

    def _eval_expr(self, key, expr, y1, y2):
        y1 = np.asarray(y1, dtype=float)
        y2 = np.asarray(y2, dtype=float)
        y1b, y2b = np.broadcast_arrays(y1, y2)
        mask = self._support_mask(y1b, y2b)
        if mask is None:
            out = np.asarray(self._lam(key, expr)(y1b, y2b), dtype=complex)
        else:
            out = np.zeros(y1b.shape, dtype=complex)
            if mask.any():
                out[mask] = self._lam(key, expr)(y1b[mask], y2b[mask])
        return out if out.shape else complex(out)

    def __call__(self, y1, y2):
        return self._eval_expr("f", self.expr, y1, y2)

    def derivative(self, j1: int, j2: int, y1, y2):
        """Exact partial derivative d^{j1}_{y1} d^{j2}_{y2} f."""
        key = ("d", j1, j2)
        expr = sp.diff(self.expr, self._syms[0], j1, self._syms[1], j2)
        return self._eval_expr(key, expr, y1, y2)

    # -- structure ----------------------------------------------------------

    @property
    def is_product(self) -> bool:
        return self._axis_exprs is not None

    def axis_function(self, axis: int):
        """1D factor f_axis with f(y1,y2) = f_0(y1) f_1(y2) (product kinds)."""
        if not self.is_product:
            raise ValueError("not a product test function")
        yv = self._syms[axis]
        lam = sp.lambdify(yv, self._axis_exprs[axis], modules="numpy")
        if self.kind == "gaussian_bump":
            c, r = self.center[axis], self.radius[axis]

            def f(t):
                t = np.asarray(t, dtype=float)
                out = np.zeros(t.shape, dtype=complex)
                m = np.abs(t - c) < r * (1 - 1e-12)
                if m.any():
                    out[m] = lam(t[m])
                return out
            return f
        return lambda t: np.asarray(lam(np.asarray(t, dtype=float)), dtype=complex)

    def support(self):
        """Exact support box, or None for functions of unbounded support."""
        if self.kind == "gaussian_bump":
            return tuple((c - r, c + r) for c, r in zip(self.center, self.radius))
        return None

    def effective_window(self, tiny: float = 1e-18):
        """A box outside which |f| is numerically negligible."""
        sup = self.support()
        if sup is not None:
            return sup
        if self.kind == "f_s":
            hi = float(np.sqrt(-np.log(tiny)) / np.pi) + 0.5
            return ((1e-7, hi), (1e-7, hi))
        return ((1e-7, 0.6), (1e-7, 0.6))

    def mellin(self, u1: complex, u2: complex):
        """Closed-form Mellin transform II f(t) t1^(u1-1) t2^(u2-1) dt, if any."""
        if self.kind == "f_s":
            st1, st2 = self.stilde
            lg = (log_gamma(st1 + u1 / 2.0) + log_gamma(st2 + u2 / 2.0)
                  + 2.0 * st1 * np.log(np.pi) + 2.0 * st2 * np.log(np.pi)
                  - (2.0 * st1 + u1 + 2.0 * st2 + u2) * np.log(np.pi))
            return 0.25 * np.exp(lg)
        if self.kind == "power_exp" and not self.damped:
            return None  # diverges
        return None

    def laplacian_function(self, order: int):
        """Lambda for Delta^order (y1 y2 f) / (y1 y2), Delta the restricted
        Laplacian -y1^2 d11 - y2^2 d22 + y1 y2 d12 + 4 pi^2 (y1^2 + y2^2)."""
        key = ("lap", order)
        if key not in self._lams:
            y1, y2 = self._syms
            expr = y1 * y2 * self.expr
            for _ in range(order):
                expr = (-y1 ** 2 * sp.diff(expr, y1, 2)
                        - y2 ** 2 * sp.diff(expr, y2, 2)
                        + y1 * y2 * sp.diff(expr, y1, 1, y2, 1)
                        + 4 * sp.pi ** 2 * (y1 ** 2 + y2 ** 2) * expr)
            self._lams[key] = sp.lambdify(self._syms, expr / (y1 * y2),
                                          modules="numpy")
        lam = self._lams[key]

        def f(a, b):
            a = np.asarray(a, dtype=float)
            b = np.asarray(b, dtype=float)
            ab, bb = np.broadcast_arrays(a, b)
            mask = self._support_mask(ab, bb)
            if mask is None:
                return np.asarray(lam(ab, bb), dtype=complex)
            out = np.zeros(ab.shape, dtype=complex)
            if mask.any():
                out[mask] = lam(ab[mask], bb[mask])
            return out
        return f


def gaussian_bump(center=(1.0, 1.0), width=(0.3, 0.3)) -> TestFunctionFamily:
    return TestFunctionFamily("gaussian_bump", center=center, width=width)


def f_s_function(s) -> TestFunctionFamily:
    return TestFunctionFamily("f_s", s=s)


def power_exp_function(a, damped: bool = True) -> TestFunctionFamily:
    return TestFunctionFamily("power_exp", a=a, damped=damped)


# ---------------------------------------------------------------------------
# restricted Laplacian
# ---------------------------------------------------------------------------

def restricted_laplacian_fd(grid_fn, y, h: float = 1e-3,
                            richardson: bool = True) -> complex:
    """One application of -y1^2 d11 - y2^2 d22 + y1 y2 d12 + 4 pi^2 (y1^2+y2^2)
    by 5-point central differences; grid_fn(y1s, y2s) -> 2D array.

    With `richardson`, combines steps h and h/2 for two extra orders.
    """
    y1, y2 = y

    def apply_at(hh):
        h1, h2 = hh * y1, hh * y2  # relative steps keep conditioning uniform
        xs = y1 + h1 * np.arange(-2, 3)
        ys = y2 + h2 * np.arange(-2, 3)
        F = np.asarray(grid_fn(xs, ys), dtype=complex)
        c2 = np.array([-1.0, 16.0, -30.0, 16.0, -1.0]) / 12.0
        c1 = np.array([1.0, -8.0, 0.0, 8.0, -1.0]) / 12.0
        f11 = np.dot(c2, F[:, 2]) / h1 ** 2
        f22 = np.dot(c2, F[2, :]) / h2 ** 2
        f12 = c1 @ F @ c1 / (h1 * h2)
        f0 = F[2, 2]
        return (-y1 ** 2 * f11 - y2 ** 2 * f22 + y1 * y2 * f12
                + 4.0 * np.pi ** 2 * (y1 ** 2 + y2 ** 2) * f0)

    if not richardson:
        return complex(apply_at(h))
    a, b = apply_at(h), apply_at(h / 2.0)
    return complex((16.0 * b - a) / 15.0)


def apply_restricted_laplacian(f, y, order: int = 1, h: float = 1e-3) -> complex:
    """Delta^order (y1 y2 f)(y) / (y1 y2): exact for TestFunctionFamily kinds,
    finite differences (with a warning) otherwise."""
    if isinstance(f, TestFunctionFamily):
        val = f.laplacian_function(order)(y[0], y[1])
        return complex(val)
    warnings.warn("no stored derivatives; falling back to finite differences",
                  AccuracyWarning, stacklevel=2)
    if order != 1:
        raise ValueError("finite-difference fallback supports order 1 only")

    def wrapped(y1s, y2s):
        g = np.asarray(f(y1s[:, None], y2s[None, :]), dtype=complex)
        return g * np.multiply.outer(y1s, y2s)

    return restricted_laplacian_fd(wrapped, y, h) / (y[0] * y[1])


def whittaker_eigen_residual(y, mu, quad=None, h: float = 2e-3) -> float:
    """Relative residual of Delta W(y,mu) = (1 - (mu1^2+mu2^2+mu3^2)/2) W(y,mu)
    with the restricted Laplacian applied by finite differences."""
    mu = as_spectral(mu)
    lam1 = 1.0 - sum(m * m for m in mu.mu) / 2.0
    left = restricted_laplacian_fd(lambda a, b: whittaker_grid(a, b, mu, quad), y, h)
    w = whittaker_grid([y[0]], [y[1]], mu, quad)[0, 0]
    return abs(left - lam1 * w) / abs(lam1 * w)


# ---------------------------------------------------------------------------
# direct quadrature transforms
# ---------------------------------------------------------------------------

def _axis_quad(window, n: int, log_spaced: bool):
    x, w = np.polynomial.legendre.leggauss(n)
    lo, hi = window
    if log_spaced:
        a, b = np.log(lo), np.log(hi)
        u = 0.5 * (b - a) * x + 0.5 * (a + b)
        t = np.exp(u)
        return t, 0.5 * (b - a) * w * t
    t = 0.5 * (hi - lo) * x + 0.5 * (hi + lo)
    return t, 0.5 * (hi - lo) * w


def _f_window(f, window):
    if window is not None:
        return window, False
    if isinstance(f, TestFunctionFamily):
        sup = f.support()
        if sup is not None:
            return sup, False
        return f.effective_window(), True
    raise ValueError("plain callables require an explicit integration window")


def F0_transform(f, mu, window=None, n: int = 160,
                 quad: ContourSpec | None = None) -> complex:
    """F0(f; mu) by direct 2D quadrature against W(t, -2 mu)."""
    mu = as_spectral(mu)
    (w1, w2), log_spaced = _f_window(f, window)
    t1, q1 = _axis_quad(w1, n, log_spaced)
    t2, q2 = _axis_quad(w2, n, log_spaced)
    m2 = mu.scale(-2.0)
    W = whittaker_grid(t1, t2, m2, quad)
    fv = np.asarray(f(t1[:, None], t2[None, :]), dtype=complex)
    core = np.einsum("i,j,ij->", q1 / t1 ** 2, q2 / t2 ** 2, fv * W)
    return complex(16.0 / np.pi ** 4 * cos0(mu) * core)


def _tan_factor(mu) -> complex:
    mu = as_spectral(mu)
    h = np.pi / 2.0
    c13 = np.cos(h * (mu.mu[0] - mu.mu[2]))
    c23 = np.cos(h * (mu.mu[1] - mu.mu[2]))
    if abs(c13) < 1e-13 or abs(c23) < 1e-13:
        raise PoleError(f"tangent pole at mu = {mu.mu}")
    return 0.5 * np.tan(h * (mu.mu[0] - mu.mu[2])) * np.tan(h * (mu.mu[1] - mu.mu[2]))


def F1_transform(f, mu, window=None, n: int = 160,
                 quad: ContourSpec | None = None) -> complex:
    """F1 = (1/2) tan(pi/2 (mu1-mu3)) tan(pi/2 (mu2-mu3)) F0."""
    mu = as_spectral(mu)
    tf = _tan_factor(mu)
    if tf == 0:
        return 0j
    return complex(tf * F0_transform(f, mu, window, n, quad))


# ---------------------------------------------------------------------------
# kernel cancellation over the opaque J basis
# ---------------------------------------------------------------------------

@dataclass
class JBasisCoefficients:
    """Coefficients of a combined weight-0 + weight-1 kernel over the basis
    J_family(y, mu^w').

    `raw` maps each permutation label w' to its coefficient before any change
    of variables; `combined` is the total coefficient on J_family(y, mu)
    after moving every term onto the identity permutation (legitimate because
    the mu-contour is permutation invariant); `h0_combined` is the same for
    the weight-0 part alone.  `scale` is the largest |term| encountered, for
    relative-residual reporting.
    """

    family: str
    eps: tuple[int, int]
    raw: dict[str, complex]
    combined: complex
    h0_combined: complex
    scale: float


def _pole_distance(mu: SpectralPoint) -> float:
    """Distance of each mu_i - mu_j to the integer lattice (tan/sin poles)."""
    out = np.inf
    for d in _diffs(mu):
        k = np.round(d.real)
        out = min(out, abs(d - k))
    return float(out)


def _symmetrize(terms, mu: SpectralPoint):
    """terms: list of (prefactor(mu_point) callable, perm label).  Returns the
    raw per-label map at mu and the total coefficient moved onto label I."""
    raw: dict[str, complex] = {}
    combined = 0j
    scale = 0.0
    for fn, label in terms:
        v = fn(mu)
        raw[label] = raw.get(label, 0j) + v
        moved = fn(mu.weyl(WEYL_GROUP[label].inverse()))
        combined += moved
        scale = max(scale, abs(moved), abs(v))
    return raw, combined, scale


def _f1spec1(mu: SpectralPoint) -> complex:
    """F1(mu) spec1(mu) with F0 treated as the formal scalar 1."""
    return _tan_factor(mu) * spec1(mu)


def kernel_cancellation(w: str, mu, eps: tuple[int, int] = (1, 1),
                        min_pole_distance: float = 1e-6) -> JBasisCoefficients:
    """Coefficients of the H_w^0(F0) + H_w^1(F1) integrand over the J basis.

    F0 is treated as a formal Weyl-invariant scalar.  For w in {I, w4, w5}
    the combined coefficient vanishes identically; for wl it equals
    (1 + eps1 + eps2 + eps1*eps2) times the weight-0 coefficient.
    """
    mu = as_spectral(mu)
    d = _pole_distance(mu)
    if d < min_pole_distance:
        raise PoleError(f"mu within {d:.2e} of a sine/tangent pole")
    e1, e2 = eps
    h = np.pi / 2.0

    def c(i, j):
        return lambda m: np.cos(h * (m.mu[i] - m.mu[j]))

    def s(i, j):
        return lambda m: np.sin(h * (m.mu[i] - m.mu[j]))

    if w == "I":
        h0_terms = [(lambda m: spec0(m), "I")]
        h1_terms = [
            (lambda m, ww=ww: _f1spec1(m.weyl(ww)) / 3.0, "I") for ww in W3
        ]
    elif w in ("w4", "w5"):
        if w == "w5":
            # K_{w5}^d(y, mu) = K_{w4}^d((-y2, y1), -mu): same algebra at
            # (-mu) with sgn(y) mapped to (-eps2, eps1).
            inner = kernel_cancellation("w4", mu.neg(), (-e2, e1),
                                        min_pole_distance)
            return JBasisCoefficients("w5", eps, inner.raw, inner.combined,
                                      inner.h0_combined, inner.scale)
        h0_terms = [
            (lambda m, ww=ww: spec0(m) / (8.0 * np.pi
                                          * s(0, 2)(m.weyl(ww)) * s(1, 2)(m.weyl(ww))),
             ww.name) for ww in W3
        ]
        h1_terms = [
            (lambda m: -_f1spec1(m) / (8.0 * np.pi * c(0, 2)(m) * c(1, 2)(m)), "I"),
            (lambda m: -1j * e1 * _f1spec1(m) / (8.0 * np.pi * c(1, 2)(m) * s(0, 1)(m)), "w4"),
            (lambda m: 1j * e1 * _f1spec1(m) / (8.0 * np.pi * c(0, 2)(m) * s(0, 1)(m)), "w5"),
        ]
    elif w == "wl":
        def sinprod(m):
            return s(0, 1)(m) * s(0, 2)(m) * s(1, 2)(m)

        h0_terms = []
        for ww in W3:
            lab_odd = ww.compose(WEYL_GROUP["w2"]).name
            h0_terms.append(
                (lambda m: spec0(m) / (16.0 * np.pi * sinprod(m)), lab_odd))
            h0_terms.append(
                (lambda m: -spec0(m) / (16.0 * np.pi * sinprod(m)), ww.name))

        def phi(m):
            return -_f1spec1(m) / (16.0 * np.pi * c(0, 2)(m) * c(1, 2)(m) * s(0, 1)(m))

        h1_terms = [
            (lambda m: e2 * phi(m), "I"),
            (lambda m: e1 * phi(m), "w4"),
            (lambda m: e1 * e2 * phi(m), "w5"),
            (lambda m: -e2 * phi(m), "w2"),
            (lambda m: -e1 * phi(m), "wl"),
            (lambda m: -e1 * e2 * phi(m), "w3"),
        ]
    else:
        raise ValueError(f"unknown kernel family {w!r}")

    raw0, comb0, scale0 = _symmetrize(h0_terms, mu)
    raw1, comb1, scale1 = _symmetrize(h1_terms, mu)
    raw = dict(raw0)
    for k, v in raw1.items():
        raw[k] = raw.get(k, 0j) + v
    return JBasisCoefficients(w, eps, raw, comb0 + comb1, comb0,
                              max(scale0, scale1))


# ---------------------------------------------------------------------------
# spectral grids and Kontorovich-Lebedev inversion
#
# Everything here works in Mellin space: for a product test function the
# forward coefficient is a double contour sum of
#     m1(s1) m2(s2) * prod_i Gamma((s1 + c*mu_i)/2) Gamma((s2 - c*mu_i)/2)
#     / Gamma((s1+s2)/2),
# and on the uniform mu-grid mu = (ia, ib, -i(a+b)) the gamma products
# assemble from three small 1D log-gamma tables.
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SpectralGrid:
    """Uniform trapezoid grid for integrals over Re(mu) = 0, with
    mu = (i a, i b, -i(a+b)) and a, b in [-height, height] at the given step."""

    height: float = 30.0
    step: float = 0.25

    def axis(self) -> np.ndarray:
        n = int(np.floor(self.height / self.step))
        return self.step * np.arange(-n, n + 1)

    def meshes(self):
        a = self.axis()
        return np.meshgrid(a, a, indexing="ij")


def _grid_sin0(grid: SpectralGrid) -> np.ndarray:
    A, B = grid.meshes()
    h = np.pi / 2.0
    d12 = 1j * (A - B)
    d13 = 1j * (2 * A + B)
    d23 = 1j * (A + 2 * B)
    return (d12 * d13 * d23 * np.sin(h * d12) * np.sin(h * d13)
            * np.sin(h * d23) / (192.0 * np.pi ** 5))


def _grid_cos0(grid: SpectralGrid) -> np.ndarray:
    A, B = grid.meshes()
    h = np.pi / 2.0
    return (2.0 / np.pi) * (np.cos(h * 1j * (A - B)) * np.cos(h * 1j * (2 * A + B))
                            * np.cos(h * 1j * (A + 2 * B)))


@dataclass
class SpectralSamples:
    """Values of a spectral-coefficient function on a SpectralGrid."""

    grid: SpectralGrid
    values: np.ndarray
    scale: float = 1.0  # W(., scale*mu) convention the samples belong to

    def at(self, ia: int, ib: int) -> complex:
        return complex(self.values[ia, ib])


@lru_cache(maxsize=16)
def _structured_tables(sig: float, height: float, step: float,
                       mu_height: float, mu_step: float, scale: float):
    """(s-nodes, T_plus, T_sum) log-gamma tables for the structured grid."""
    quad = ContourSpec((sig, sig), height, step)
    s = quad.nodes(0)
    a = SpectralGrid(mu_height, mu_step).axis()
    ab = mu_step * np.arange(-2 * (len(a) // 2), 2 * (len(a) // 2) + 1)
    T_plus = log_gamma((s[:, None] + 1j * scale * a[None, :]) / 2.0)
    T_sum = log_gamma((s[:, None] - 1j * scale * ab[None, :]) / 2.0)
    dsum = (2.0 * sig + 1j * step * np.arange(-2 * (len(s) // 2),
                                              2 * (len(s) // 2) + 1)) / 2.0
    ginv = np.exp(-log_gamma(dsum))
    return s, T_plus, T_sum, ginv


def _hankel_from(ginv: np.ndarray, n: int) -> np.ndarray:
    idx = np.arange(n)
    return ginv[idx[:, None] + idx[None, :]]


def _axis_mellin(f, axis: int, s_nodes: np.ndarray, measure_power: int,
                 n_t: int = 320):
    """pi^(1-s) * int f_axis(t) t^(1-s-p) dt on the s-nodes."""
    if not (isinstance(f, TestFunctionFamily) and f.is_product):
        raise ValueError("grid transforms require a product TestFunctionFamily")
    window, log_spaced = _f_window(f, None)
    t, w = _axis_quad(window[axis], n_t, log_spaced)
    fa = f.axis_function(axis)(t)
    c = 1.0 - s_nodes - measure_power
    powers = np.exp(np.log(t)[:, None] * c[None, :])
    vals = (fa * w) @ powers
    return np.exp((1.0 - s_nodes) * np.log(np.pi)) * vals


def _forward_at_nodes(f, grid: SpectralGrid, scale: float, measure_power: int,
                      ia: np.ndarray, ib: np.ndarray, s_height: float,
                      s_step: float = 0.2, chunk: int = 4096) -> np.ndarray:
    """(1/4pi^2) II (pi t1)^(1-s1) (pi t2)^(1-s2) f(t) t^(-p) dt G(s, -scale*mu)
    ds/(2 pi i)^2 at the grid nodes mu(ia, ib)."""
    s, T_plus, T_sum, ginv = _structured_tables(
        1.0, s_height, s_step, grid.height, grid.step, scale)
    n_s = len(s)
    n_a = len(grid.axis())
    m1 = _axis_mellin(f, 0, s, measure_power)
    m2 = _axis_mellin(f, 1, s, measure_power)
    G = _hankel_from(ginv, n_s)
    norm = (s_step / (2.0 * np.pi)) ** 2 / (4.0 * np.pi ** 2)
    out = np.empty(len(ia), dtype=complex)
    mir = n_a - 1 - np.arange(n_a)
    for lo in range(0, len(ia), chunk):
        ja = ia[lo:lo + chunk]
        jb = ib[lo:lo + chunk]
        logP = T_plus[:, ja] + T_plus[:, jb] + T_sum[:, ja + jb]
        logQ = (T_plus[:, mir[ja]] + T_plus[:, mir[jb]]
                + T_sum[:, 2 * (n_a - 1) - ja - jb])
        A = np.exp(logP) * m1[:, None]
        B = np.exp(logQ) * m2[:, None]
        out[lo:lo + chunk] = np.einsum("jm,jm->m", A, G @ B)
    return norm * out


def _band_indices(grid: SpectralGrid, extent: float):
    """Flat (ia, ib) arrays of nodes with max(|a|,|b|,|a+b|) <= extent."""
    a = grid.axis()
    A, B = np.meshgrid(a, a, indexing="ij")
    keep = (np.abs(A) <= extent) & (np.abs(B) <= extent) & (np.abs(A + B) <= extent)
    ia, ib = np.nonzero(keep)
    return ia, ib


def _banded_forward(f, grid: SpectralGrid, scale: float, measure_power: int,
                    band_cut: float = 1e-10, s_pad: float = 24.0) -> np.ndarray:
    """Forward transform restricted to the spectral band where its mass
    against sin0(mu) d mu matters.

    The band extent I is grown geometrically until the boundary mass falls
    below band_cut times the peak; each pass sizes the s-contour to cover
    the G-kernel's no-decay zone (|Im s| <= scale * I) for every kept node,
    so values inside the band are always trustworthy.  Outside the band the
    true mass is below the cut and the values are left at exactly zero.
    """
    a = grid.axis()
    n_a = len(a)
    extent = min(8.0, grid.height)
    while True:
        ia, ib = _band_indices(grid, extent)
        s_height = scale * extent + s_pad
        vals = _forward_at_nodes(f, grid, scale, measure_power, ia, ib, s_height)
        d12 = 1j * (a[ia] - a[ib])
        d13 = 1j * (2 * a[ia] + a[ib])
        d23 = 1j * (a[ia] + 2 * a[ib])
        h = np.pi / 2.0
        sin0v = (d12 * d13 * d23 * np.sin(h * d12) * np.sin(h * d13)
                 * np.sin(h * d23) / (192.0 * np.pi ** 5))
        # the measure's exponential growth is cancelled in the synthesis by
        # the Whittaker kernel's decay; weight the truncation test by that
        # envelope so the band closes where the synthesized integrand dies
        damp = np.exp(-(np.pi / 4.0) * scale
                      * (np.abs(d12.imag) + np.abs(d13.imag) + np.abs(d23.imag)))
        mass = np.abs(vals * sin0v) * damp
        metric = np.maximum.reduce([np.abs(a[ia]), np.abs(a[ib]),
                                    np.abs(a[ia] + a[ib])])
        boundary = metric > extent - 1.0
        peak = mass.max()
        if peak == 0 or not boundary.any() or extent >= grid.height:
            break
        if mass[boundary].max() <= band_cut * peak:
            break
        extent = min(grid.height, extent * 1.5)
    if (peak > 0 and boundary.any()
            and mass[boundary].max() > band_cut * peak):
        warnings.warn(
            f"spectral mass at the grid boundary is {mass[boundary].max() / peak:.1e}"
            " of peak; increase the grid height", AccuracyWarning, stacklevel=3)
    out = np.zeros((n_a, n_a), dtype=complex)
    out[ia, ib] = vals
    return out


def kl_forward(f, grid: SpectralGrid | None = None, *, scale: float = 1.0,
               band_cut: float = 1e-10) -> SpectralSamples:
    """Forward coefficient g(mu) = int_{Y+} f(t) W(t, -scale*mu) dt on the grid
    (dt the Y+ measure dt1 dt2/(t1 t2)^3)."""
    grid = grid or SpectralGrid()
    vals = _banded_forward(f, grid, scale, 3, band_cut)
    return SpectralSamples(grid, vals, scale)


def F0_on_grid(f, grid: SpectralGrid | None = None,
               band_cut: float = 1e-10) -> SpectralSamples:
    """F0(f; mu) on the grid: (16/pi^4) cos0(mu) times the weighted transform
    with measure dt1 dt2/(t1 t2)^2 at spectral argument -2 mu."""
    grid = grid or SpectralGrid()
    core = _banded_forward(f, grid, 2.0, 2, band_cut)
    return SpectralSamples(grid, 16.0 / np.pi ** 4 * _grid_cos0(grid) * core, 2.0)


def _synthesis(mass_flat, keep, grid: SpectralGrid, scale: float,
               s_step: float = 0.2, chunk: int = 4096):
    """Build K(j,k) = sum_mu mass Q_j(mu) P_k(mu) over kept grid nodes and
    return a closure evaluating norm * u(y1) (K o G) v(y2)."""
    n_a = len(grid.axis())
    ia_all, ib_all = np.divmod(np.arange(n_a * n_a), n_a)
    ia = ia_all[keep]
    ib = ib_all[keep]
    a = grid.axis()
    max_im = 0.0
    if len(ia):
        max_im = max(np.abs(a[ia]).max(), np.abs(a[ib]).max(),
                     np.abs(a[ia] + a[ib]).max())
    s_height = min(2.0 * scale * max_im + 24.0, 170.0)
    s, T_plus, T_sum, ginv = _structured_tables(
        1.0, s_height, s_step, grid.height, grid.step, scale)
    n_s = len(s)
    mir = n_a - 1 - np.arange(n_a)
    K = np.zeros((n_s, n_s), dtype=complex)
    mv = mass_flat[keep]
    for lo in range(0, len(ia), chunk):
        ja = ia[lo:lo + chunk]
        jb = ib[lo:lo + chunk]
        logP = T_plus[:, ja] + T_plus[:, jb] + T_sum[:, ja + jb]
        logQ = (T_plus[:, mir[ja]] + T_plus[:, mir[jb]]
                + T_sum[:, 2 * (n_a - 1) - ja - jb])
        K += (np.exp(logQ) * mv[lo:lo + chunk][None, :]) @ np.exp(logP).T
    KG = K * _hankel_from(ginv, n_s)
    norm = (s_step / (2.0 * np.pi)) ** 2 / (4.0 * np.pi ** 2)

    def evaluate(y1, y2):
        y1 = np.atleast_1d(np.asarray(y1, dtype=float))
        y2 = np.atleast_1d(np.asarray(y2, dtype=float))
        U = np.exp(np.log(np.pi * y1)[:, None] * (1.0 - s)[None, :])
        V = np.exp(np.log(np.pi * y2)[:, None] * (1.0 - s)[None, :])
        return norm * np.einsum("pj,jk,pk->p", U, KG, V)

    return evaluate


def kl_inverse(samples: SpectralSamples, *, mass_cut: float = 1e-18):
    """Inverse transform against sin0(mu) dmu:
    returns f(y) = int g(mu) W(y, scale*mu) sin0(mu) dmu as a callable on Y+.

    Grid nodes whose weighted mass is below mass_cut * max are dropped; the
    synthesis contour is sized to the surviving spectral support.
    """
    grid = samples.grid
    mass = (samples.values * _grid_sin0(grid)).ravel()
    mass = mass * (1j * grid.step) ** 2
    a = grid.axis()
    A, B = grid.meshes()
    damp = np.exp(-(np.pi / 4.0) * samples.scale
                  * (np.abs(A - B) + np.abs(2 * A + B) + np.abs(A + 2 * B))).ravel()
    weighted = np.abs(mass) * damp
    amax = weighted.max()
    keep = np.nonzero(weighted > mass_cut * amax)[0]
    ev = _synthesis(mass, keep, grid, samples.scale)

    def f(y1, y2):
        out = ev(y1, y2)
        return out if out.shape != (1,) else complex(out[0])

    return f


def long_element_roundtrip(f, grid: SpectralGrid | None = None,
                           band_cut: float = 1e-10):
    """The inversion chain through the long-element kernel: compute F0(f; mu)
    on the grid, then synthesize

        (8 pi^5/(y1 y2)) int F0(mu) W(y, 2 mu) sin0(mu) dmu,

    which reproduces f(y).  Returns the reconstruction as a callable."""
    grid = grid or SpectralGrid()
    samples = F0_on_grid(f, grid, band_cut)
    inv = kl_inverse(samples)

    def f_rec(y1, y2):
        y1a = np.atleast_1d(np.asarray(y1, dtype=float))
        y2a = np.atleast_1d(np.asarray(y2, dtype=float))
        vals = inv(y1a, y2a)
        vals = np.atleast_1d(vals)
        out = 8.0 * np.pi ** 5 / (y1a * y2a) * vals
        return out if out.shape != (1,) else complex(out[0])

    return f_rec


# ---------------------------------------------------------------------------
# admissibility conditions for the inversion formula
# ---------------------------------------------------------------------------

@dataclass
class ConditionsReport:
    """Sampled worst-case constants for the four admissibility conditions."""

    sigma1: float
    sigma2: float
    N: int
    c1_sup: float
    c2_ok: bool
    c3_sup: float
    c4_sup: float
    c4_tail_slope: float
    ok: dict = field(default_factory=dict)

    @property
    def all_ok(self) -> bool:
        return all(self.ok.values())


def convergence_conditions_check(f: TestFunctionFamily, sigma1: float,
                                 sigma2: float, N: int,
                                 eps: float = 0.01,
                                 grid_lo: float = 1e-3, grid_hi: float = 30.0,
                                 n_grid: int = 25) -> ConditionsReport:
    """Sample the four sufficient conditions for the inversion formula on a
    log grid and report worst-case constants.

    1. f(y) bounded by (y1 y2)^(1+eps) as y1 y2 -> 0;
    2. partial derivatives up to total order 2N exist (symbolic kinds: yes);
    3. y1^j1 y2^j2 d^(j1,j2)(y1 y2 f) bounded by (y1 y2)^(1+eps) smallward and
       polynomially bounded outward, for j1+j2 <= 2N-1;
    4. Delta^N(y1 y2 f) << (y1 y2)^(1+sigma1) (y1+y2)^(2 sigma2), detected by
       a non-positive log-log tail slope of the ratio along the diagonal.
    """
    ys = np.geomspace(grid_lo, grid_hi, n_grid)
    Y1, Y2 = np.meshgrid(ys, ys, indexing="ij")
    small = (Y1 * Y2) < 1.0

    fv = np.abs(np.asarray(f(Y1, Y2), dtype=complex))
    c1 = float((fv / (Y1 * Y2) ** (1.0 + eps))[small].max())

    c3 = 0.0
    for j1 in range(0, 2 * N + 1):
        for j2 in range(0, 2 * N - j1):
            if j1 + j2 > 2 * N - 1:
                continue
            y1s, y2s = f._syms
            expr = y1s ** j1 * y2s ** j2 * sp.diff(y1s * y2s * f.expr,
                                                   y1s, j1, y2s, j2)
            dv = np.abs(f._eval_expr(("c3", j1, j2), expr, Y1, Y2))
            c3 = max(c3, float((dv / (Y1 * Y2) ** (1.0 + eps))[small].max()))

    lap = f.laplacian_function(N)
    ratio = np.abs(lap(Y1, Y2)) * Y1 * Y2 / (
        (Y1 * Y2) ** (1.0 + sigma1) * (Y1 + Y2) ** (2.0 * sigma2))
    c4 = float(np.nanmax(ratio))
    diag = np.abs(lap(ys, ys)) * ys * ys / (
        (ys * ys) ** (1.0 + sigma1) * (2.0 * ys) ** (2.0 * sigma2))
    tail = diag[-6:]
    good = tail > 0
    if good.sum() >= 2:
        slope = float(np.polyfit(np.log(ys[-6:][good]), np.log(tail[good]), 1)[0])
    else:
        slope = -np.inf  # ratio already identically ~0 in the tail
    ok = {
        "condition1": np.isfinite(c1),
        "condition2": True,
        "condition3": np.isfinite(c3),
        "condition4": bool(np.isfinite(c4) and slope <= 0.1),
    }
    return ConditionsReport(sigma1, sigma2, N, c1, True, c3, c4, slope, ok)
