"""Separating polynomial forms, the gauge Q, Q-bodies, and box coverings.

Two concrete even-degree forms are shipped so that the equivalence constant,
the Lipschitz bound of Q and inscribed/enclosing radii of Q-bodies all have
closed forms:

* ``euclidean_power``: q(x) = (sum x_i^2)^n, A = 1 against the euclidean norm.
* ``even_power_sum``:  q(x) = sum x_i^(2n),  A = d against the sup norm.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, ConstructionError, ContractViolation, InfeasibilityError

KINDS = ("euclidean_power", "even_power_sum")

_R_FLOOR = 1e-12
_R_CEIL = 1.0 - 1e-9


@dataclass(frozen=True)
class SeparatingForm:
    """An even-degree form q with ||x||^(2n) <= q(x) <= A * ||x||^(2n).

    The two-sided bound holds in the form's ``reference_norm``.
    """

    kind: str
    d: int
    n: int
    A: float
    reference_norm: str


@dataclass(frozen=True)
class QFunc:
    """The gauge Q(x) = (q(x) + 1)^(1/2n) - 1 with a certified Lipschitz bound.

    ``lipschitz_bound`` is a certified upper bound for sup ||grad Q|| valid for
    both the euclidean norm and the form's reference norm; ``padded_lipschitz``
    is what every constant formula requiring Lip(Q) >= 1 consumes.
    """

    form: SeparatingForm
    lipschitz_bound: float
    padded_lipschitz: float = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "padded_lipschitz", max(self.lipschitz_bound, 1.0 + 1e-6))


def make_separating_form(kind: str, d: int, n: int) -> SeparatingForm:
    if kind not in KINDS:
        raise ConfigurationError(f"unsupported separating form kind: {kind!r}")
    if d < 1 or n < 1:
        raise ConfigurationError(f"need d >= 1 and n >= 1, got d={d}, n={n}")
    if kind == "euclidean_power":
        return SeparatingForm(kind, d, n, 1.0, "euclidean")
    return SeparatingForm(kind, d, n, float(d), "sup")


def make_qfunc(form: SeparatingForm) -> QFunc:
    # euclidean_power: ||grad Q||_2 = t^(2n-1) (t^2n + 1)^((1-2n)/2n) < 1 with t = ||x||_2.
    # even_power_sum:  ||grad Q||_2 < 1 by the power-mean inequality, and the
    # sup-norm Lipschitz constant is bounded by sup ||grad Q||_1 <= d^(1/2n).
    if form.kind == "euclidean_power":
        lip = 1.0
    else:
        lip = form.d ** (1.0 / (2 * form.n))
    return QFunc(form, lip)


def ref_norm(form: SeparatingForm, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if form.reference_norm == "euclidean":
        return np.sqrt(np.sum(x * x, axis=-1))
    return np.max(np.abs(x), axis=-1)


def _check_dim(form: SeparatingForm, x: np.ndarray):
    if x.shape[-1] != form.d:
        raise ContractViolation(f"dimension mismatch: expected {form.d}, got {x.shape[-1]}")


def q_eval(form: SeparatingForm, x) -> np.ndarray | float:
    """Evaluate the form; accepts a single point or a batch (..., d)."""
    x = np.asarray(x, dtype=float)
    _check_dim(form, x)
    if form.kind == "euclidean_power":
        s = np.sum(x * x, axis=-1)
        out = s**form.n
    else:
        out = np.sum(x ** (2 * form.n), axis=-1)
    return float(out) if out.ndim == 0 else out


def q_grad(form: SeparatingForm, x) -> np.ndarray:
    """Exact analytic gradient of the form."""
    x = np.asarray(x, dtype=float)
    _check_dim(form, x)
    if form.kind == "euclidean_power":
        s = np.sum(x * x, axis=-1, keepdims=True)
        return form.n * s ** (form.n - 1) * 2.0 * x
    return 2 * form.n * x ** (2 * form.n - 1)


def Q_eval(qf: QFunc, x) -> np.ndarray | float:
    form = qf.form
    q = q_eval(form, x)
    out = np.expm1(np.log1p(q) / (2 * form.n))
    return float(out) if np.ndim(out) == 0 else out


def Q_grad(qf: QFunc, x) -> np.ndarray:
    form = qf.form
    x = np.asarray(x, dtype=float)
    q = np.asarray(q_eval(form, x))
    g = q_grad(form, x)
    p = 1.0 / (2 * form.n)
    factor = p * (q + 1.0) ** (p - 1.0)
    return g * factor[..., None]


def Q_diff(qf: QFunc, x, centers) -> np.ndarray:
    """Q(x - c) for each row x and each center c; returns (..., N)."""
    x = np.asarray(x, dtype=float)
    centers = np.asarray(centers, dtype=float)
    diff = x[..., None, :] - centers
    return np.asarray(Q_eval(qf, diff))


def delta_fn(qf: QFunc, t) -> np.ndarray | float:
    """The distortion profile ((|t| + 1)^(2n) - 1)^(1/2n); even and increasing in |t|."""
    n = qf.form.n
    t = np.abs(np.asarray(t, dtype=float))
    inner = np.expm1(2 * n * np.log1p(t))
    out = inner ** (1.0 / (2 * n))
    return float(out) if out.ndim == 0 else out


def qbody_contains(qf: QFunc, center, rho: float, y) -> bool:
    """Strict membership y in D_Q(center, rho) = {Q(y - center) < rho}."""
    y = np.asarray(y, dtype=float)
    return bool(Q_eval(qf, y - np.asarray(center, dtype=float)) < rho)


def qbody_enclosing_radius(qf: QFunc, t: float) -> float:
    """Radius (in the reference norm) of a ball certain to contain {Q < t}.

    Q(x) < t forces q(x) < (1+t)^(2n) - 1, and the lower bound of the form's
    two-sided estimate turns that into a norm bound.
    """
    n = qf.form.n
    return float(math.expm1(2 * n * math.log1p(t)) ** (1.0 / (2 * n)))


def qbody_inscribed_radius(qf: QFunc, t: float) -> float:
    """Radius (reference norm) of a ball certain to sit inside {Q < t}.

    Uses the upper bound q <= A * ||x||^(2n): any x with ||x|| < s satisfies
    Q(x) < t once A * s^(2n) <= (1+t)^(2n) - 1.
    """
    n = qf.form.n
    A = qf.form.A
    return float(math.expm1(2 * n * math.log1p(t)) / A) ** (1.0 / (2 * n))


def choose_r(qf: QFunc, rho: float, r_cap: float) -> float:
    """Largest r <= min(r_cap, 1-1e-9) with enclosing_radius(5r) <= rho.

    Guarantees D_Q(c, 5r) sits inside the reference-norm ball B_rho(c) for
    every center c.  Closed form; the test suite cross-checks by bisection.
    """
    if rho <= 0:
        raise ConfigurationError("rho must be positive")
    if not (0 < r_cap <= 1):
        raise ConfigurationError("r_cap must lie in (0, 1]")
    n = qf.form.n
    # enclosing_radius(5r) = rho  <=>  (1 + 5r)^(2n) = rho^(2n) + 1
    r_star = math.expm1(math.log1p(rho ** (2 * n)) / (2 * n)) / 5.0
    r = min(r_star, r_cap, _R_CEIL)
    if r < _R_FLOOR:
        raise InfeasibilityError(
            f"no feasible r above {_R_FLOOR:g}: rho={rho:g} forces r <= {r_star:g}"
        )
    return float(r)


@dataclass(frozen=True)
class Covering:
    """A finite, deterministically ordered lattice of Q-body centers over a box."""

    box: tuple            # per-axis (lo, hi)
    r: float
    centers: np.ndarray   # (N, d), ordering fixed
    qfunc: QFunc
    ordering: str
    mn_bounds: np.ndarray  # (N,), certified upper bounds, nondecreasing

    @property
    def n_centers(self) -> int:
        return len(self.centers)


def _axis_coords(lo: float, hi: float, spacing: float) -> np.ndarray:
    width = hi - lo
    if width <= 0:
        return np.array([0.5 * (lo + hi)])
    count = max(2, int(math.ceil(width / spacing)) + 1)
    return np.linspace(lo, hi, count)


def _order_centers(centers: np.ndarray, box, ordering: str) -> np.ndarray:
    # np.lexsort uses the LAST key as the primary sort key.
    if ordering == "lexicographic":
        idx = np.lexsort(tuple(centers.T[::-1]))
    elif ordering == "center_out":
        mid = np.array([0.5 * (lo + hi) for lo, hi in box])
        dist = np.sqrt(np.sum((centers - mid) ** 2, axis=1))
        idx = np.lexsort(tuple(centers.T[::-1]) + (dist,))
    else:
        raise ConfigurationError(f"unknown ordering {ordering!r}")
    return centers[idx]


def _probe_grid(box, total: int = 10_000) -> np.ndarray:
    d = len(box)
    per_axis = max(2, int(round(total ** (1.0 / d))))
    axes = [np.linspace(lo, hi, per_axis) if hi > lo else np.array([0.5 * (lo + hi)])
            for lo, hi in box]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=-1)


def compute_mn_bound(covering: Covering, k: int) -> float:
    """Certified upper bound for sup{Q(x - x_j) : x in D_Q(x_k, 4r), j <= k}.

    Returned values are made nondecreasing in k (a cumulative max only enlarges
    the bump plateaus, which is the safe direction).
    """
    if not (1 <= k <= covering.n_centers):
        raise ContractViolation(f"index k={k} out of range 1..{covering.n_centers}")
    return float(covering.mn_bounds[k - 1])


def _raw_mn_bounds(qf: QFunc, centers: np.ndarray, r: float) -> np.ndarray:
    pad = qf.padded_lipschitz * qbody_enclosing_radius(qf, 4 * r)
    vals = np.empty(len(centers))
    for k in range(len(centers)):
        qd = np.asarray(Q_eval(qf, centers[k] - centers[: k + 1]))
        vals[k] = np.max(qd) + pad
    return np.maximum.accumulate(vals)


def build_covering(qf: QFunc, box, r: float, ordering: str = "center_out",
                   probe_total: int = 10_000) -> Covering:
    """Lattice covering of the box by Q-bodies of radius r, coverage-verified.

    Per-axis spacing is at most 2 * inscribed_radius(r) / sqrt(d), which makes
    every box point land within Q-distance r of some center; a probe grid
    check confirms it before the covering is returned.
    """
    box = tuple((float(lo), float(hi)) for lo, hi in box)
    d = qf.form.d
    if len(box) != d:
        raise ContractViolation(f"box has {len(box)} axes, form has d={d}")
    if any(hi < lo for lo, hi in box):
        raise ConfigurationError("box axes must satisfy lo <= hi")
    if not (0 < r < 1):
        raise ConfigurationError("r must lie in (0, 1)")

    s = qbody_inscribed_radius(qf, r)
    spacing = 2.0 * s / math.sqrt(d)
    axes = [_axis_coords(lo, hi, spacing) for lo, hi in box]
    mesh = np.meshgrid(*axes, indexing="ij")
    centers = np.stack([m.ravel() for m in mesh], axis=-1)
    centers = _order_centers(centers, box, ordering)

    probes = _probe_grid(box, probe_total)
    qd = Q_diff(qf, probes, centers)
    covered = np.min(qd, axis=-1) < r
    if not np.all(covered):
        bad = probes[~covered][:5]
        raise ConstructionError(f"coverage verification failed; uncovered probe points: {bad.tolist()}")

    mn = _raw_mn_bounds(qf, centers, r)
    return Covering(box=box, r=float(r), centers=centers, qfunc=qf,
                    ordering=ordering, mn_bounds=mn)


def _f17(v: float) -> str:
    return format(float(v), ".17g")


def covering_to_json_dict(c: Covering) -> dict:
    form = c.qfunc.form
    return {
        "kind": form.kind,
        "d": form.d,
        "n": form.n,
        "A": form.A,
        "box": [[lo, hi] for lo, hi in c.box],
        "r": _f17(c.r),
        "ordering": c.ordering,
        "centers": [[_f17(v) for v in row] for row in c.centers],
        "mn_bounds": [_f17(v) for v in c.mn_bounds],
    }


def covering_from_json_dict(doc: dict) -> Covering:
    form = make_separating_form(doc["kind"], int(doc["d"]), int(doc["n"]))
    qf = make_qfunc(form)
    centers = np.array([[float(v) for v in row] for row in doc["centers"]], dtype=float)
    if centers.ndim == 1:
        centers = centers.reshape(-1, form.d)
    return Covering(
        box=tuple((float(lo), float(hi)) for lo, hi in doc["box"]),
        r=float(doc["r"]),
        centers=centers,
        qfunc=qf,
        ordering=doc["ordering"],
        mn_bounds=np.array([float(v) for v in doc["mn_bounds"]]),
    )


def covering_to_json(c: Covering) -> str:
    return json.dumps(covering_to_json_dict(c), sort_keys=True)


def covering_from_json(text: str) -> Covering:
    return covering_from_json_dict(json.loads(text))
