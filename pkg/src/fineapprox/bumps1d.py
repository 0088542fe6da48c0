"""Exact piecewise-polynomial C2 cutoff profiles.

Every profile is a quintic-smoothstep construction: plateaus and zero sets are
honored bit-exactly (they are constant pieces / constant tails), transitions
are the unique quintic with vanishing first and second derivatives at both
ends, so the assembled function is C2 with closed-form derivative extrema.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError

# max of S'(u) = 30 u^2 (1-u)^2 on [0,1]; attained at u = 1/2
SMOOTHSTEP_DERIV_MAX = 15.0 / 8.0
# max of |S''(u)| = |60 u (2u-1)(u-1)|; attained at u = (3 +- sqrt(3))/6
SMOOTHSTEP_SECOND_DERIV_MAX = 10.0 / np.sqrt(3.0)
# sup |S'''| = 60 (at the endpoints)
SMOOTHSTEP_THIRD_DERIV_MAX = 60.0


def _transition_coeffs(width: float, lo_val: float, hi_val: float) -> np.ndarray:
    """Local coefficients of lo_val + (hi_val-lo_val) * S(u/width) on [0, width]."""
    a = hi_val - lo_val
    w = width
    return np.array([lo_val, 0.0, 0.0, 10.0 * a / w**3, -15.0 * a / w**4, 6.0 * a / w**5])


def _const_coeffs(value: float) -> np.ndarray:
    return np.array([value, 0.0, 0.0, 0.0, 0.0, 0.0])


@dataclass(frozen=True)
class PiecewisePoly:
    """Polynomial pieces (degree <= 5, local coordinate) between breakpoints.

    Piece i covers [breakpoints[i], breakpoints[i+1]); values below the first
    breakpoint take ``left_value``, values at or above the last take
    ``right_value``.  ``plateaus`` and ``zero_set`` record intervals on which
    the function is exactly constant / exactly zero (closed tails use +-inf).
    """

    breakpoints: np.ndarray
    coeffs: np.ndarray          # (n_pieces, 6)
    left_value: float
    right_value: float
    lipschitz: float            # recorded certified Lipschitz constant
    plateaus: tuple = ()        # ((lo, hi, value), ...)
    zero_set: tuple = ()        # ((lo, hi), ...)

    def __post_init__(self):
        bp = np.asarray(self.breakpoints, dtype=float)
        if bp.ndim != 1 or len(bp) < 2:
            raise ConfigurationError("need at least two breakpoints")
        if not np.all(np.diff(bp) > 0):
            raise ConfigurationError(f"breakpoints must be strictly increasing, got {bp}")
        if self.coeffs.shape != (len(bp) - 1, 6):
            raise ConfigurationError("coeffs must have shape (n_pieces, 6)")


def _deriv_coeffs(coeffs: np.ndarray, order: int = 1) -> np.ndarray:
    out = coeffs.copy()
    for _ in range(order):
        shifted = out[:, 1:] * np.arange(1, out.shape[1])
        out = np.concatenate([shifted, np.zeros((out.shape[0], 1))], axis=1)
    return out


def pp_eval(pp: PiecewisePoly, t) -> np.ndarray | float:
    return _eval_with_coeffs(pp, pp.coeffs, t, pp.left_value, pp.right_value)


def pp_deriv(pp: PiecewisePoly, t) -> np.ndarray | float:
    return _eval_with_coeffs(pp, _deriv_coeffs(pp.coeffs, 1), t, 0.0, 0.0)


def pp_second_deriv(pp: PiecewisePoly, t) -> np.ndarray | float:
    return _eval_with_coeffs(pp, _deriv_coeffs(pp.coeffs, 2), t, 0.0, 0.0)


def _eval_with_coeffs(pp: PiecewisePoly, coeffs: np.ndarray, t,
                      left: float, right: float) -> np.ndarray | float:
    t = np.asarray(t, dtype=float)
    scalar = t.ndim == 0
    shape = t.shape
    t = np.atleast_1d(t).ravel()
    bp = pp.breakpoints
    out = np.empty_like(t)
    idx = np.searchsorted(bp, t, side="right") - 1
    below = idx < 0
    above = idx >= len(bp) - 1
    mid = ~(below | above)
    out[below] = left
    out[above] = right
    if np.any(mid):
        i = idx[mid]
        u = t[mid] - bp[i]
        c = coeffs[i]
        acc = c[:, 5]
        for p in (4, 3, 2, 1, 0):
            acc = acc * u + c[:, p]
        out[mid] = acc
    return float(out[0]) if scalar else out.reshape(shape)


def _poly_abs_max_on_interval(c: np.ndarray, width: float) -> float:
    """Max of |polynomial| (local coeffs c) over [0, width] via critical points."""
    dc = np.polynomial.polynomial.polyder(c)
    crit = [0.0, width]
    if np.any(dc != 0):
        roots = np.polynomial.polynomial.polyroots(dc)
        for rt in roots:
            if abs(rt.imag) < 1e-12 and 0.0 < rt.real < width:
                crit.append(float(rt.real))
    vals = [abs(np.polynomial.polynomial.polyval(u, c)) for u in crit]
    return float(max(vals))


def pp_lipschitz(pp: PiecewisePoly) -> float:
    """Closed-form max |derivative| over all pieces (tails are constant)."""
    dcoeffs = _deriv_coeffs(pp.coeffs, 1)
    widths = np.diff(pp.breakpoints)
    best = 0.0
    for c, w in zip(dcoeffs, widths):
        best = max(best, _poly_abs_max_on_interval(c, float(w)))
    return best


def make_mu(eps: float) -> PiecewisePoly:
    """Outer cutoff: exactly 1+eps on (-inf, 1/2], exactly 0 on [1, inf)."""
    if eps <= 0:
        raise ConfigurationError("eps must be positive")
    top = 1.0 + eps
    bp = np.array([0.5, 1.0])
    coeffs = np.array([_transition_coeffs(0.5, top, 0.0)])
    return PiecewisePoly(
        breakpoints=bp, coeffs=coeffs, left_value=top, right_value=0.0,
        lipschitz=top * 15.0 / 4.0,
        plateaus=((-np.inf, 0.5, top),),
        zero_set=((1.0, np.inf),),
    )


def make_bn_profile(r: float, M: float) -> PiecewisePoly:
    """Coordinate profile: exactly 1 outside (2r, M+2r), exactly 0 on [3r, M+r]."""
    if r <= 0:
        raise ConfigurationError("r must be positive")
    if M <= r:
        raise ConfigurationError(f"need M > r for a nonempty zero plateau, got M={M}, r={r}")
    if M <= 2 * r:
        # [3r, M+r] is empty and the two transitions would overlap.
        raise ConfigurationError(
            f"M={M} in (r, 2r] leaves no room between the transitions; need M > 2r")
    bp = np.array([2 * r, 3 * r, M + r, M + 2 * r])
    coeffs = np.array([
        _transition_coeffs(r, 1.0, 0.0),
        _const_coeffs(0.0),
        _transition_coeffs(r, 0.0, 1.0),
    ])
    return PiecewisePoly(
        breakpoints=bp, coeffs=coeffs, left_value=1.0, right_value=1.0,
        lipschitz=15.0 / (8.0 * r),
        plateaus=((-np.inf, 2 * r, 1.0), (M + 2 * r, np.inf, 1.0)),
        zero_set=((3 * r, M + r),),
    )


def make_bhat(r: float) -> PiecewisePoly:
    """Own-coordinate profile: exactly 1 outside (-1-r, 4r), exactly 0 on [-1, 3r]."""
    if r <= 0:
        raise ConfigurationError("r must be positive")
    bp = np.array([-1.0 - r, -1.0, 3 * r, 4 * r])
    coeffs = np.array([
        _transition_coeffs(r, 1.0, 0.0),
        _const_coeffs(0.0),
        _transition_coeffs(r, 0.0, 1.0),
    ])
    return PiecewisePoly(
        breakpoints=bp, coeffs=coeffs, left_value=1.0, right_value=1.0,
        lipschitz=15.0 / (8.0 * r),
        plateaus=((-np.inf, -1.0 - r, 1.0), (4 * r, np.inf, 1.0)),
        zero_set=((-1.0, 3 * r),),
    )


def make_nubar(r: float) -> PiecewisePoly:
    """Even hill: exactly 1 on [-5r, 5r], exactly 0 for |t| >= 11r/2."""
    if r <= 0:
        raise ConfigurationError("r must be positive")
    w = r / 2.0
    bp = np.array([-5.5 * r, -5.0 * r, 5.0 * r, 5.5 * r])
    coeffs = np.array([
        _transition_coeffs(w, 0.0, 1.0),
        _const_coeffs(1.0),
        _transition_coeffs(w, 1.0, 0.0),
    ])
    return PiecewisePoly(
        breakpoints=bp, coeffs=coeffs, left_value=0.0, right_value=0.0,
        lipschitz=15.0 / (4.0 * r),
        plateaus=((-5.0 * r, 5.0 * r, 1.0),),
        zero_set=((-np.inf, -5.5 * r), (5.5 * r, np.inf)),
    )


def pp_support(pp: PiecewisePoly) -> tuple[float, float]:
    """Smallest closed interval outside which the function is exactly constant.

    Returns the hull of the breakpoints; useful for convolution tail bounds.
    """
    return float(pp.breakpoints[0]), float(pp.breakpoints[-1])


def pp_range(pp: PiecewisePoly, samples: int = 4096) -> tuple[float, float]:
    lo, hi = pp_support(pp)
    pad = 0.05 * (hi - lo) + 1e-9
    t = np.linspace(lo - pad, hi + pad, samples)
    v = pp_eval(pp, t)
    vals = np.concatenate([v, [pp.left_value, pp.right_value]])
    return float(np.min(vals)), float(np.max(vals))


def derivative_profile(pp: PiecewisePoly) -> PiecewisePoly:
    """The derivative as a piecewise polynomial (constant tails are zero)."""
    return PiecewisePoly(
        breakpoints=pp.breakpoints,
        coeffs=_deriv_coeffs(pp.coeffs, 1),
        left_value=0.0,
        right_value=0.0,
        lipschitz=float("nan"),
    )
