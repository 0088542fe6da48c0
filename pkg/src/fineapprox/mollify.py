"""Gaussian convolution engines and certified parameter selection.

Three evaluators live here:

* ``Conv1D`` — exact (machine-precision) Gaussian convolution of a
  :class:`~fineapprox.bumps1d.PiecewisePoly` via erf/Gaussian moment
  recurrences, used for the shared 1D cutoff engine.
* ``GaussExpect`` — deterministic low-discrepancy Gaussian expectations
  (inverse-CDF over a fixed scrambled Sobol set), used for the smoothed
  sup-partition functions.  The same point set is reused at every evaluation
  point, so the computed function is a fixed smooth function of x and chain
  rules against it are exact.
* ``GridGaussSmoother`` — separable Gaussian smoothing of a clamped
  multilinear grid interpolant, with closed-form values and gradients; this
  backs the per-patch correction functions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import erf, erfc, ndtr, ndtri
from scipy.stats import qmc

from .bumps1d import PiecewisePoly, derivative_profile, pp_eval, pp_lipschitz, pp_range, pp_support
from .errors import ConfigurationError, ContractViolation, InfeasibilityError, RangeError

KAPPA_CAP = 2.0**60
_SQRT_2_OVER_PI = math.sqrt(2.0 / math.pi)
_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(64)


# ---------------------------------------------------------------------------
# closed-form 1D convolution of piecewise polynomials
# ---------------------------------------------------------------------------

def _conv_pp(pp: PiecewisePoly, kappa: float, t: np.ndarray) -> np.ndarray:
    """(1/a) * integral pp(s) exp(-kappa (t-s)^2) ds with a = sqrt(pi/kappa).

    Per-piece moments are taken in the piece-local coordinate u = s - alpha,
    K_p = int_0^w u^p exp(-kappa (u - xi)^2) du with xi = t - alpha, via the
    stable recurrence

        2 kappa K_p = (p-1) K_{p-2} + 2 kappa xi K_{p-1} - boundary_p,

    which keeps c_p * K_p at the scale of the piece values (no extrapolation
    of the high-order coefficients away from the piece).
    """
    t = np.atleast_1d(np.asarray(t, dtype=float))
    sqk = math.sqrt(kappa)
    bp = pp.breakpoints
    total = np.zeros_like(t)
    if pp.left_value != 0.0:
        total += pp.left_value * 0.5 * (1.0 + erf(sqk * (bp[0] - t)))
    if pp.right_value != 0.0:
        total += pp.right_value * 0.5 * (1.0 - erf(sqk * (bp[-1] - t)))
    inv2k = 1.0 / (2.0 * kappa)
    inv_a = sqk / math.sqrt(math.pi)
    for i in range(len(bp) - 1):
        alpha, beta = bp[i], bp[i + 1]
        w = beta - alpha
        c = pp.coeffs[i]
        deg = int(np.max(np.nonzero(c != 0.0)[0])) + 1 if np.any(c != 0.0) else 0
        if deg == 0:
            continue
        xi = t - alpha
        if deg > 1 and kappa * w * w <= 50.0:
            # kernel much wider than the piece: the upward moment recurrence
            # cancels badly, but fixed-order Gauss-Legendre is machine-exact
            u = 0.5 * w * (_GL_NODES + 1.0)
            pu = np.zeros_like(u)
            for p in range(deg - 1, -1, -1):
                pu = pu * u + c[p]
            kern = np.exp(-kappa * (u[None, :] - xi[:, None]) ** 2)
            total += (kern @ (pu * _GL_WEIGHTS)) * (0.5 * w) * inv_a
            continue
        ea = np.exp(-kappa * xi * xi)            # kernel at u = 0
        eb = np.exp(-kappa * (w - xi) ** 2)      # kernel at u = w
        k_prev2 = 0.5 * (erf(sqk * (w - xi)) + erf(sqk * xi)) / inv_a   # K_0
        acc = c[0] * k_prev2
        if deg > 1:
            k_prev1 = xi * k_prev2 - (eb - ea) * inv2k                  # K_1
            acc += c[1] * k_prev1
            for p in range(2, deg):
                boundary = w ** (p - 1) * eb
                k_cur = ((p - 1) * k_prev2 + 2.0 * kappa * xi * k_prev1 - boundary) * inv2k
                acc += c[p] * k_cur
                k_prev2, k_prev1 = k_prev1, k_cur
        total += acc * inv_a
    return total


@dataclass
class Conv1D:
    """Gaussian-kernel smoothing of a piecewise polynomial, exact via erf."""

    source: PiecewisePoly
    kappa: float

    def __post_init__(self):
        if self.kappa <= 0:
            raise ConfigurationError("kappa must be positive")
        self.a = math.sqrt(math.pi / self.kappa)
        self._dsource = derivative_profile(self.source)

    def value(self, t) -> np.ndarray | float:
        out = _conv_pp(self.source, self.kappa, t)
        return float(out[0]) if np.ndim(t) == 0 else out

    def deriv(self, t) -> np.ndarray | float:
        # differentiate under the integral = convolve the source derivative,
        # so sup |output'| <= Lip(source) automatically
        out = _conv_pp(self._dsource, self.kappa, t)
        return float(out[0]) if np.ndim(t) == 0 else out


def conv1d_eval(c: Conv1D, t):
    return c.value(t)


def conv1d_deriv(c: Conv1D, t):
    return c.deriv(t)


def select_kappa(source: PiecewisePoly, tol_of_t, probe_range: tuple[float, float],
                 probe_count: int = 2048) -> float:
    """Doubling search for a kernel sharpness meeting a pointwise tolerance.

    Accepts the first kappa (starting at 2) for which value and derivative of
    the smoothed profile match the source within tol_of_t at every probe
    point, AND the analytic Gaussian tail beyond the probe range stays below
    the tolerance at the range endpoints (the tail decays faster than any
    polynomial envelope, so endpoint checks dominate the far range).
    """
    lo, hi = float(probe_range[0]), float(probe_range[1])
    if not lo < hi:
        raise ConfigurationError("empty probe range")
    s_lo, s_hi = pp_support(source)
    if not (lo < s_lo and hi > s_hi):
        raise ConfigurationError("probe_range must extend beyond the source support")

    probes = np.linspace(lo, hi, probe_count)
    near = source.breakpoints[:, None] + np.linspace(-1e-3, 1e-3, 9)[None, :] * max(
        1e-12, source.breakpoints[-1] - source.breakpoints[0])
    probes = np.unique(np.concatenate([probes, near.ravel()]))
    probes = probes[(probes >= lo) & (probes <= hi)]

    tol = np.asarray(tol_of_t(probes), dtype=float)
    if np.any(tol <= 0):
        bad = probes[np.argmin(tol)]
        raise InfeasibilityError(f"tolerance is non-positive at probe t={bad}")

    src_vals = np.asarray(pp_eval(source, probes))
    dsrc = derivative_profile(source)
    src_dvals = np.asarray(pp_eval(dsrc, probes))
    vmin, vmax = pp_range(source)
    max_abs = max(abs(vmin), abs(vmax))
    max_dabs = pp_lipschitz(source)

    kappa = 2.0
    worst = None
    while kappa <= KAPPA_CAP:
        eng = Conv1D(source, kappa)
        v = np.asarray(eng.value(probes))
        dv = np.asarray(eng.deriv(probes))
        err = np.abs(v - src_vals)
        derr = np.abs(dv - src_dvals)
        margin = np.maximum(err, derr) - tol
        idx = int(np.argmax(margin))
        worst = (float(probes[idx]), float(margin[idx]))
        ok = margin[idx] <= 0
        if ok:
            sqk = math.sqrt(kappa)
            for endpoint, dist in ((lo, s_lo - lo), (hi, hi - s_hi)):
                tail = 0.5 * max(max_abs, max_dabs) * erfc(sqk * dist)
                if tail > float(np.asarray(tol_of_t(np.array([endpoint])))[0]):
                    ok = False
                    worst = (endpoint, tail)
                    break
        if ok:
            return kappa
        kappa *= 2.0
    raise InfeasibilityError(
        f"kappa exceeded 2^60; worst probe t={worst[0]} over tolerance by {worst[1]:.3g}")


# ---------------------------------------------------------------------------
# Gaussian expectations over a fixed low-discrepancy point set
# ---------------------------------------------------------------------------

def gauss_normalizer(n: int, k: float) -> float:
    """Closed-form product of the axis-wise Gaussian integrals with
    per-axis sharpness k * 2^(-j), j = 1..n."""
    if n < 1 or k <= 0:
        raise ConfigurationError("need n >= 1 and k > 0")
    log_val = 0.5 * sum(math.log(math.pi) + j * math.log(2.0) - math.log(k)
                        for j in range(1, n + 1))
    try:
        val = math.exp(log_val)
    except OverflowError:
        raise RangeError(f"normalizer overflows for n={n}, k={k}") from None
    if not math.isfinite(val) or val == 0.0:
        raise RangeError(f"normalizer out of double range for n={n}, k={k}")
    return val


def sobol_normal_points(n_dim: int, S: int, seed: int, antithetic: bool = False) -> np.ndarray:
    """Fixed (S, n_dim) standard-normal point set via inverse CDF of scrambled Sobol."""
    if S <= 0:
        raise ConfigurationError("point set size must be positive")
    m = int(round(math.log2(S)))
    if 2**m != S:
        raise ConfigurationError("point set size must be a power of two")
    if antithetic:
        eng = qmc.Sobol(d=n_dim, scramble=True, seed=seed)
        u = eng.random_base2(m - 1)
        z = ndtri(np.clip(u, 1e-15, 1 - 1e-15))
        return np.concatenate([z, -z], axis=0)
    eng = qmc.Sobol(d=n_dim, scramble=True, seed=seed)
    u = eng.random_base2(m)
    return ndtri(np.clip(u, 1e-15, 1 - 1e-15))


def default_sample_count(n_dim: int) -> int:
    if n_dim <= 8:
        return 2**13
    if n_dim <= 32:
        return 2**14
    raise ConfigurationError(f"integral dimension {n_dim} beyond the supported ceiling of 32")


@dataclass
class GaussExpect:
    """Deterministic Gaussian-expectation rule E[fn(Y)], Y_j ~ N(x_j, sigma_j^2).

    The point set is fixed once (key = seed), shared by every evaluation
    point; value and gradient are plain averages over it.
    """

    n: int
    sigmas: np.ndarray
    S: int
    seed: int
    Z: np.ndarray

    @classmethod
    def for_kernel(cls, n: int, k: float, S: int | None = None, seed: int = 0) -> "GaussExpect":
        # sigma_j^2 = 2^j / (2k) reproduces the axis-weighted Gaussian kernel
        if n < 1 or k <= 0:
            raise ConfigurationError("need n >= 1 and k > 0")
        sig = np.sqrt(2.0 ** np.arange(1, n + 1) / (2.0 * k))
        S = default_sample_count(n) if S is None else S
        Z = sobol_normal_points(n, S, seed)
        return cls(n=n, sigmas=sig, S=S, seed=seed, Z=Z)


def gauss_expect_eval(ge: GaussExpect, fn, grad_fn, x) -> tuple[float, np.ndarray]:
    if ge.S == 0:
        raise ConfigurationError("empty point set")
    x = np.asarray(x, dtype=float)
    if x.shape != (ge.n,):
        raise ContractViolation(f"expected point of dimension {ge.n}")
    y = x[None, :] + ge.sigmas[None, :] * ge.Z
    vals = np.asarray(fn(y), dtype=float)
    grads = np.asarray(grad_fn(y), dtype=float)
    return float(np.mean(vals)), np.mean(grads, axis=0)


def select_k(bn_lip: float, bn_deriv_lip: float, eps1: float, n: int) -> float:
    """Kernel sharpness certifying mollification error <= eps1/2 for the bump
    and its gradient: lip * sum_j sigma_j * sqrt(2/pi) <= eps1/2 with
    sigma_j = sqrt(2^j / (2k))."""
    if eps1 <= 0:
        raise ConfigurationError("eps1 must be positive")
    if n < 1:
        raise ConfigurationError("n must be >= 1")
    lip = max(bn_lip, bn_deriv_lip)
    s_pow = sum(2.0 ** (j / 2.0) for j in range(1, n + 1))
    k = 2.0 * (lip * _SQRT_2_OVER_PI * s_pow / (eps1 / 2.0)) ** 2
    if not math.isfinite(k):
        raise InfeasibilityError(f"required kernel sharpness overflows for n={n}")
    return k


# ---------------------------------------------------------------------------
# Lipschitz-preserving isotropic smoothing (QMC form of the generic op)
# ---------------------------------------------------------------------------

class MollifiedFn:
    """E[fn(x + sigma Z)] over a fixed antithetic point set.

    The gradient uses the Gaussian score identity with the value at x as a
    baseline; with sigma = 0 the function (necessarily constant-slope-free
    input) is returned untouched and the gradient is zero.
    """

    def __init__(self, fn, sigma: float, Z: np.ndarray):
        self.fn = fn
        self.sigma = float(sigma)
        self.Z = Z

    def value(self, x) -> float:
        x = np.asarray(x, dtype=float)
        if self.sigma == 0.0:
            return float(self.fn(x[None, :])[0])
        y = x[None, :] + self.sigma * self.Z
        return float(np.mean(self.fn(y)))

    def gradient(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.sigma == 0.0:
            return np.zeros_like(x)
        y = x[None, :] + self.sigma * self.Z
        f0 = float(self.fn(x[None, :])[0])
        w = np.asarray(self.fn(y)) - f0
        return np.mean(self.Z * w[:, None], axis=0) / self.sigma


def mollify_lipschitz(fn_eval, fn_lip: float, target_sup_err: float, d: int,
                      S: int = 2**13, seed: int = 7) -> tuple[float, MollifiedFn]:
    """Isotropic Gaussian smoothing with sup error <= target_sup_err.

    sigma is chosen from fn_lip * sigma * E||Z|| <= target (E||Z|| <= sqrt(d));
    averaging Lipschitz functions preserves the constant, so the output is
    fn_lip-Lipschitz as well.
    """
    if fn_lip < 0 or target_sup_err <= 0 or d < 1:
        raise ConfigurationError("need fn_lip >= 0, target > 0, d >= 1")
    if fn_lip == 0.0:
        return 0.0, MollifiedFn(fn_eval, 0.0, np.zeros((1, d)))
    sigma = target_sup_err / (fn_lip * math.sqrt(d))
    Z = sobol_normal_points(d, S, seed, antithetic=True)
    return sigma, MollifiedFn(fn_eval, sigma, Z)


def mollify_sigma_rule(fn_lip: float, target_sup_err: float, d: int) -> float:
    """The sigma used by :func:`mollify_lipschitz`, exposed for engines that
    evaluate the same smoothing through a closed form."""
    if fn_lip <= 0:
        return 0.0
    return target_sup_err / (fn_lip * math.sqrt(d))


# ---------------------------------------------------------------------------
# separable Gaussian smoothing of a clamped multilinear grid interpolant
# ---------------------------------------------------------------------------

def _npdf(v: np.ndarray) -> np.ndarray:
    return np.exp(-0.5 * v * v) / math.sqrt(2.0 * math.pi)


@dataclass(frozen=True)
class GridAxis:
    start: float
    step: float
    count: int

    @property
    def stop(self) -> float:
        return self.start + self.step * (self.count - 1)

    def nodes(self) -> np.ndarray:
        return self.start + self.step * np.arange(self.count)


class GridGaussSmoother:
    """Gaussian smoothing (std ``sigma`` per axis) of the clamped multilinear
    interpolant of values on a regular grid; closed-form value and gradient.

    The interpolant is extended as a constant beyond each grid edge, so far
    from the grid the smoothed value settles to the edge values and stays
    inside [min values, max values].
    """

    WINDOW_SIGMAS = 8.0

    def __init__(self, axes: list[GridAxis], values: np.ndarray, sigma: float):
        if sigma <= 0:
            raise ConfigurationError("sigma must be positive")
        if values.shape != tuple(ax.count for ax in axes):
            raise ConfigurationError("values shape does not match axes")
        if any(ax.count < 2 for ax in axes):
            raise ConfigurationError("each axis needs at least two nodes")
        self.axes = list(axes)
        self.values = np.asarray(values, dtype=float)
        self.sigma = float(sigma)
        self.d = len(axes)

    def _axis_weights(self, ax: GridAxis, x: np.ndarray):
        """Node windows with value- and derivative-weights along one axis.

        Windows are contiguous cell ranges clamped to the grid, so weights
        align with node indices exactly; mass beyond the grid goes to the
        clamped-edge tail terms of the end nodes.
        """
        sig = self.sigma
        h = ax.step
        n_cells = ax.count - 1
        nw = int(math.ceil(max(self.WINDOW_SIGMAS * sig, 2 * h) / h)) + 1
        L = min(2 * nw + 1, n_cells)
        ic = np.floor((x - ax.start) / h).astype(np.int64)
        c_start = np.clip(ic - nw, 0, n_cells - L)
        cells = c_start[:, None] + np.arange(L)[None, :]

        c_lo = ax.start + cells * h
        vlo = (c_lo - x[:, None]) / sig
        vhi = vlo + h / sig
        philo = ndtr(vlo)
        phihi = ndtr(vhi)
        A = phihi - philo
        M = ((x[:, None] - c_lo) * A + sig * (_npdf(vlo) - _npdf(vhi))) / h

        W = np.zeros((len(x), L + 1))
        W[:, :L] += A - M
        W[:, 1:] += M
        dW = np.zeros((len(x), L + 1))
        dW[:, 1:] += A / h
        dW[:, :L] -= A / h

        at_left = cells[:, 0] == 0
        if np.any(at_left):
            W[at_left, 0] += ndtr((ax.start - x[at_left]) / sig)
        at_right = cells[:, -1] == n_cells - 1
        if np.any(at_right):
            W[at_right, -1] += 1.0 - ndtr((ax.stop - x[at_right]) / sig)

        nodes = np.concatenate([cells, cells[:, -1:] + 1], axis=1)
        return nodes, W, dW

    def evaluate(self, X: np.ndarray, want_grad: bool = True):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.d:
            raise ContractViolation(f"expected points of dimension {self.d}")
        per_axis = [self._axis_weights(ax, X[:, a]) for a, ax in enumerate(self.axes)]
        if self.d == 1:
            nodes, W, dW = per_axis[0]
            vals = self.values[nodes]
            out = np.sum(W * vals, axis=1)
            grad = np.sum(dW * vals, axis=1)[:, None] if want_grad else None
            return out, grad
        if self.d == 2:
            (nx, Wx, dWx), (ny, Wy, dWy) = per_axis
            sub = self.values[nx[:, :, None], ny[:, None, :]]
            out = np.einsum("bi,bij,bj->b", Wx, sub, Wy)
            if not want_grad:
                return out, None
            gx = np.einsum("bi,bij,bj->b", dWx, sub, Wy)
            gy = np.einsum("bi,bij,bj->b", Wx, sub, dWy)
            return out, np.stack([gx, gy], axis=1)
        if self.d == 3:
            (nx, Wx, dWx), (ny, Wy, dWy), (nz, Wz, dWz) = per_axis
            sub = self.values[nx[:, :, None, None], ny[:, None, :, None], nz[:, None, None, :]]
            out = np.einsum("bi,bijk,bj,bk->b", Wx, sub, Wy, Wz)
            if not want_grad:
                return out, None
            gx = np.einsum("bi,bijk,bj,bk->b", dWx, sub, Wy, Wz)
            gy = np.einsum("bi,bijk,bj,bk->b", Wx, sub, dWy, Wz)
            gz = np.einsum("bi,bijk,bj,bk->b", Wx, sub, Wy, dWz)
            return out, np.stack([gx, gy, gz], axis=1)
        raise ConfigurationError("grid smoothing supports d <= 3")
