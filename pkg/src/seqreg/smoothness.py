"""Distance-function and index-function calculus for rate prediction.

The degree to which a solution ``x`` fails the benchmark smoothness
condition ``x = A* v`` is quantified by the distance function

    d(R) = min_{||v|| <= R} ||x - A* v||_2 ,

a nonincreasing, convex-program quantity evaluated here exactly through
the regularized normal equations ``(A A* + nu I) v = A x`` with the
multiplier ``nu >= 0`` matched to the ball radius by monotone bisection.

Two tabulated index functions are built on top of it:

* the l1 rate function
    ``phi(t) = min_n ( sum_{k>n} |x_k| + t * sum_{k<=n} ||f_k|| )``,
  combining the solution's tail decay with the growth of the representer
  norms ``||f_k||`` (``A* f_k = e_k``);
* the quadratic rate function ``psi_hat(t) = d(Phi^{-1}(t))^2`` obtained
  by inverting the strictly decreasing auxiliary map ``Phi(R) = d(R)^2/R``,
  together with its upper concave envelope ``psi``.

Their weighted combination ``g_eta(t) = 2 eta phi(t) + K psi(t)`` bounds
the elastic-net error functional; ``fit_exponent`` extracts empirical
log-log slopes so predictions can be compared against measurements.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .seq_core import DiagonalOperator, LinearOperator, Representers, as_vector

__all__ = [
    "IndexFnTable",
    "DistanceEvaluation",
    "DistanceProfile",
    "source_distance",
    "distance_table",
    "L1RateFn",
    "l1_rate_table",
    "upper_concave_envelope",
    "L2RateResult",
    "l2_rate_tables",
    "combined_rate_table",
    "detect_range_membership",
    "GapResult",
    "subgradient_range_gap",
    "fit_exponent",
]

TABLE_LABELS = ("phi", "psi_hat", "psi", "g_eta", "dist", "Phi")
_DECREASING_LABELS = ("dist", "Phi")


@dataclass
class IndexFnTable:
    """A function tabulated on an increasing positive grid.

    Labels ``phi``/``psi_hat``/``psi``/``g_eta`` must be nondecreasing in t,
    ``dist``/``Phi`` nonincreasing in R.  Evaluation between grid points is
    piecewise linear in log-log coordinates (log-linear when zero values are
    present) and clamps to the end values outside the grid.
    """

    grid: np.ndarray
    values: np.ndarray
    label: str

    def __post_init__(self):
        self.grid = np.asarray(self.grid, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.label not in TABLE_LABELS:
            raise ValueError(f"label must be one of {TABLE_LABELS}")
        if self.grid.ndim != 1 or self.grid.size < 2:
            raise ValueError("grid must be 1-D with at least two points")
        if np.any(self.grid <= 0) or np.any(np.diff(self.grid) <= 0):
            raise ValueError("grid must be positive and strictly increasing")
        if self.values.shape != self.grid.shape:
            raise ValueError("values must match the grid length")
        if not np.all(np.isfinite(self.values)) or np.any(self.values < 0):
            raise ValueError("values must be finite and nonnegative")
        tol = 1e-12 * max(float(np.max(self.values)), 1e-300)
        diffs = np.diff(self.values)
        if self.label in _DECREASING_LABELS:
            if np.any(diffs > tol):
                raise ValueError(f"{self.label} table must be nonincreasing")
        else:
            if np.any(diffs < -tol):
                raise ValueError(f"{self.label} table must be nondecreasing")

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        lt = np.log(np.clip(t, self.grid[0], self.grid[-1]))
        lg = np.log(self.grid)
        if np.any(self.values <= 0):
            out = np.interp(lt, lg, self.values)
        else:
            out = np.exp(np.interp(lt, lg, np.log(self.values)))
        return float(out) if out.ndim == 0 else out

    def to_csv(self, path, op_hash: str = "", grid_spec: str = ""):
        lines = [f"# label={self.label} op={op_hash} grid={grid_spec}", "t,value"]
        for t, v in zip(self.grid, self.values):
            lines.append(f"{t:.17g},{v:.17g}")
        with open(path, "w") as fh:
            fh.write("\n".join(lines) + "\n")

    @classmethod
    def from_csv(cls, path):
        with open(path) as fh:
            lines = [ln.strip() for ln in fh if ln.strip()]
        header = lines[0]
        label = "phi"
        if header.startswith("#"):
            for tok in header[1:].split():
                if tok.startswith("label="):
                    label = tok.split("=", 1)[1]
            lines = lines[1:]
        rows = [ln.split(",") for ln in lines[1:]]  # skip the t,value header
        grid = np.array([float(r[0]) for r in rows])
        values = np.array([float(r[1]) for r in rows])
        return cls(grid=grid, values=values, label=label)


@dataclass
class DistanceEvaluation:
    """One point of the distance function with its certificate.

    ``x = A* v + u`` with ``||v|| <= r (1 + 1e-9)`` and ``||u|| = value``;
    ``multiplier`` is the Lagrange multiplier of the ball constraint
    (zero exactly when the unconstrained least-norm solution fits the ball).
    """

    r: float
    value: float
    v: np.ndarray
    u: np.ndarray
    multiplier: float


class DistanceProfile:
    """Evaluator for d(R), Phi(R) = d(R)^2/R and psi_hat(t) for one (A, x).

    Along the regularization path v(nu) = (A A* + nu I)^{-1} A x the ball
    radius R(nu) = ||v(nu)|| decreases and the residual d(nu) =
    ||x - A* v(nu)|| increases, so every quantity can be resolved by
    monotone bisection on nu.  Diagonal operators use the componentwise
    closed form; other operators go through an eigendecomposition of A A^T.
    """

    def __init__(self, op: LinearOperator, x_dagger):
        x = as_vector(x_dagger, "x_dagger")
        if x.size != op.domain_dim:
            raise ValueError("x_dagger length must equal the operator domain")
        self.op = op
        self.x = x
        self.xnorm = float(np.sqrt(np.dot(x, x)))
        if isinstance(op, DiagonalOperator):
            self._diag = True
            self._s2 = op.sigma**2
            self._scale = float(np.max(self._s2))
        else:
            self._diag = False
            a = op.as_matrix()
            lam, u = np.linalg.eigh(a @ a.T)
            lam = np.maximum(lam, 0.0)
            self._a = a
            self._lam = lam
            self._u = u
            self._c = u.T @ (a @ x)
            self._scale = float(np.max(lam)) if lam.size else 1.0

    # -- path quantities ------------------------------------------------

    def _radius_dist(self, nu):
        """(R(nu), d(nu)) for scalar or array nu."""
        nu = np.asarray(nu, dtype=float)
        if self._diag:
            denom = self._s2 + nu[..., None]
            v = self.op.sigma * self.x / denom
            u = self.x * nu[..., None] / denom
            r = np.sqrt(np.sum(v * v, axis=-1))
            d = np.sqrt(np.sum(u * u, axis=-1))
            return r, d
        if nu.ndim == 0:
            r, d, _, _ = self._dense_point(float(nu))
            return np.asarray(r), np.asarray(d)
        out = np.array([self._dense_point(float(s))[:2] for s in nu])
        return out[:, 0], out[:, 1]

    def _dense_point(self, nu):
        w = self._c / (self._lam + nu) if nu > 0 else self._zero_mult_coeff()
        v = self._u @ w
        u = self.x - self._a.T @ v
        return (
            float(np.sqrt(np.dot(v, v))),
            float(np.sqrt(np.dot(u, u))),
            v,
            u,
        )

    def _zero_mult_coeff(self):
        lam_floor = 1e-14 * max(self._scale, 1e-300)
        w = np.zeros_like(self._c)
        ok = self._lam > lam_floor
        w[ok] = self._c[ok] / self._lam[ok]
        return w

    def _point(self, nu):
        """Full evaluation (R, d, v, u) at a scalar nu >= 0."""
        if self._diag:
            denom = self._s2 + nu
            v = self.op.sigma * self.x / denom if nu > 0 else self.x / self.op.sigma
            u = self.x * (nu / denom)
            return (
                float(np.sqrt(np.dot(v, v))),
                float(np.sqrt(np.dot(u, u))),
                v,
                u,
            )
        return self._dense_point(nu)

    def radius_sup(self) -> float:
        """Norm of the least-norm unconstrained solution (nu -> 0)."""
        r, _, _, _ = self._point(0.0)
        return r

    def residual_floor(self) -> float:
        """Distance of x to range(A*) at the truncation (nu -> 0)."""
        _, d, _, _ = self._point(0.0)
        return d

    # -- public evaluations ----------------------------------------------

    def evaluate(self, r: float, rtol: float = 1e-10) -> DistanceEvaluation:
        """d(r) with minimizing v, residual u and the ball multiplier."""
        if not r > 0:
            raise ValueError("radius must be positive")
        r_sup = self.radius_sup()
        if r >= r_sup * (1.0 - 1e-12):
            rr, d, v, u = self._point(0.0)
            return DistanceEvaluation(r=r, value=d, v=v, u=u, multiplier=0.0)
        lo = 1e-18 * self._scale
        rl, _ = self._radius_dist(lo)
        while rl < r:
            lo /= 64.0
            rl, _ = self._radius_dist(lo)
        hi = max(self._scale, lo * 4.0)
        rh, _ = self._radius_dist(hi)
        while rh > r:
            hi *= 64.0
            rh, _ = self._radius_dist(hi)
        for _ in range(200):
            mid = np.sqrt(lo * hi)
            rm, _ = self._radius_dist(mid)
            if abs(rm - r) <= rtol * r:
                lo = hi = mid
                break
            if rm > r:
                lo = mid
            else:
                hi = mid
        nu = np.sqrt(lo * hi)
        rr, d, v, u = self._point(float(nu))
        return DistanceEvaluation(r=r, value=d, v=v, u=u, multiplier=float(nu))

    def aux_decreasing(self, r) -> float:
        """Phi(R) = d(R)^2 / R."""
        ev = self.evaluate(float(r))
        return ev.value**2 / ev.r

    def psi_hat(self, t, rtol: float = 1e-12):
        """Exact psi_hat(t) = d(Phi^{-1}(t))^2 for scalar or array t.

        Solved by bisection on nu, along which Phi(R(nu)) is increasing.
        """
        t_arr = np.atleast_1d(np.asarray(t, dtype=float))
        if np.any(t_arr <= 0):
            raise ValueError("t must be positive")

        def phi_of(nu):
            r, d = self._radius_dist(nu)
            return d * d / r

        lo = np.full(t_arr.shape, 1e-18 * self._scale)
        for _ in range(200):  # Phi may be bounded below by the residual floor
            too_high = phi_of(lo) > t_arr
            if not np.any(too_high):
                break
            lo = np.where(too_high, lo / 64.0, lo)
        hi = np.full(t_arr.shape, self._scale)
        while np.any(phi_of(hi) < t_arr):
            hi = np.where(phi_of(hi) < t_arr, hi * 64.0, hi)
        for _ in range(120):
            mid = np.sqrt(lo * hi)
            pm = phi_of(mid)
            done = np.abs(pm - t_arr) <= rtol * t_arr
            if np.all(done):
                lo = hi = mid
                break
            high_side = pm > t_arr
            hi = np.where(high_side & ~done, mid, hi)
            lo = np.where(~high_side & ~done, mid, lo)
        nu = np.sqrt(lo * hi)
        _, d = self._radius_dist(nu)
        out = d * d
        return float(out[0]) if np.isscalar(t) or np.ndim(t) == 0 else out


def source_distance(op: LinearOperator, x_dagger, radius: float) -> DistanceEvaluation:
    """Distance of x_dagger to the image of the radius-ball under A*."""
    return DistanceProfile(op, x_dagger).evaluate(float(radius))


def distance_table(op, x_dagger, r_grid, label: str = "dist") -> IndexFnTable:
    """Tabulate d(R) (label 'dist') or Phi(R) = d(R)^2/R (label 'Phi')."""
    prof = DistanceProfile(op, x_dagger)
    r_grid = np.asarray(r_grid, dtype=float)
    d = np.array([prof.evaluate(float(r)).value for r in r_grid])
    values = d if label == "dist" else d * d / r_grid
    return IndexFnTable(grid=r_grid, values=values, label=label)


class L1RateFn:
    """Exact evaluator of phi(t) = min_n (tail_n + t * prefix_n).

    ``tail_n`` are suffix sums of |x_k| and ``prefix_n`` prefix sums of the
    representer norms, n = 0..N.  phi is the lower envelope of N+1 affine
    functions of t: concave, nondecreasing, and phi(0+) = 0 at the
    truncation.  Ties in the minimizing n break toward smaller n.
    """

    def __init__(self, x_dagger, rep_norms):
        x = np.abs(np.asarray(x_dagger, dtype=float))
        rn = np.asarray(
            rep_norms.norms if isinstance(rep_norms, Representers) else rep_norms,
            dtype=float,
        )
        if rn.shape != x.shape:
            raise ValueError("representer norms must match x_dagger length")
        self.tails = np.concatenate([np.cumsum(x[::-1])[::-1], [0.0]])
        self.prefixes = np.concatenate([[0.0], np.cumsum(rn)])

    def __call__(self, t):
        t_arr = np.atleast_1d(np.asarray(t, dtype=float))
        out = np.empty(t_arr.shape)
        chunk = max(1, int(2**22 // self.tails.size))
        for i in range(0, t_arr.size, chunk):
            block = t_arr[i : i + chunk, None]
            out[i : i + chunk] = np.min(self.tails + block * self.prefixes, axis=1)
        return float(out[0]) if np.ndim(t) == 0 else out

    def minimizer_index(self, t):
        """Smallest n attaining the minimum (deterministic tie-break)."""
        vals = self.tails + float(t) * self.prefixes
        return int(np.argmin(vals))

    def table(self, t_grid) -> IndexFnTable:
        t_grid = np.asarray(t_grid, dtype=float)
        return IndexFnTable(grid=t_grid, values=self(t_grid), label="phi")


def l1_rate_table(x_dagger, representers, t_grid) -> IndexFnTable:
    """Tabulate phi on ``t_grid`` (see L1RateFn)."""
    return L1RateFn(x_dagger, representers).table(t_grid)


def upper_concave_envelope(xs, ys) -> np.ndarray:
    """Values of the upper concave envelope of the points, at the xs.

    The envelope is the upper convex hull of the point set, interpolated
    linearly between hull vertices; it majorizes ys pointwise and is
    concave as a piecewise-linear function.
    """
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if xs.ndim != 1 or xs.shape != ys.shape or xs.size < 2:
        raise ValueError("xs and ys must be matching 1-D arrays, length >= 2")
    if np.any(np.diff(xs) <= 0):
        raise ValueError("xs must be strictly increasing")
    hull_x: list[float] = []
    hull_y: list[float] = []
    for x, y in zip(xs, ys):
        while len(hull_x) >= 2:
            cross = (hull_x[-1] - hull_x[-2]) * (y - hull_y[-2]) - (
                hull_y[-1] - hull_y[-2]
            ) * (x - hull_x[-2])
            if cross >= 0:  # middle point on/below the chord: not on the upper hull
                hull_x.pop()
                hull_y.pop()
            else:
                break
        hull_x.append(float(x))
        hull_y.append(float(y))
    return np.interp(xs, hull_x, hull_y)


@dataclass
class L2RateResult:
    """psi (and psi_hat when applicable) plus the membership decision.

    When x lies in range(A*) at the working tolerance, psi(t) = t and the
    constant K = r0 (norm of the least-norm source element, resolved at the
    truncation); otherwise psi is the upper concave envelope of the exact
    psi_hat table and K = 2.
    """

    psi: IndexFnTable
    psi_hat: IndexFnTable | None
    in_range: bool
    r0: float | None

    @property
    def big_k(self) -> float:
        return float(self.r0) if self.in_range else 2.0


def detect_range_membership(
    op, x_dagger, radius_factor: float = 1e6, tol_factor: float = 1e-12
):
    """Decide x in range(A*) by probing d at R = radius_factor * ||x||.

    Returns ``(in_range, r0)`` with r0 the least-norm interpolant norm
    (grid-resolved at the truncation) when the probe succeeds, else None.
    """
    prof = DistanceProfile(op, x_dagger)
    probe = radius_factor * prof.xnorm
    d = prof.evaluate(probe).value
    if d <= tol_factor * prof.xnorm:
        return True, float(min(prof.radius_sup(), probe))
    return False, None


def l2_rate_tables(
    op,
    x_dagger,
    t_grid,
    membership: str | bool = "auto",
    radius_factor: float = 1e6,
    tol_factor: float = 1e-12,
) -> L2RateResult:
    """Build the quadratic-penalty rate tables psi_hat and psi on t_grid.

    ``membership`` may be "auto" (probe d(R) at a large radius), or an
    explicit bool to force the branch; forcing False is useful to study the
    psi_hat construction for solutions that only satisfy the source
    condition because of the truncation.
    """
    t_grid = np.asarray(t_grid, dtype=float)
    if membership == "auto":
        in_range, r0 = detect_range_membership(op, x_dagger, radius_factor, tol_factor)
    else:
        in_range = bool(membership)
        r0 = DistanceProfile(op, x_dagger).radius_sup() if in_range else None
    if in_range:
        psi = IndexFnTable(grid=t_grid, values=t_grid.copy(), label="psi")
        return L2RateResult(psi=psi, psi_hat=None, in_range=True, r0=r0)
    prof = DistanceProfile(op, x_dagger)
    hat_vals = prof.psi_hat(t_grid)
    psi_hat = IndexFnTable(grid=t_grid, values=hat_vals, label="psi_hat")
    env = upper_concave_envelope(t_grid, hat_vals)
    psi = IndexFnTable(grid=t_grid, values=env, label="psi")
    return L2RateResult(psi=psi, psi_hat=psi_hat, in_range=False, r0=None)


def combined_rate_table(
    phi: IndexFnTable, psi: IndexFnTable, eta: float, big_k: float
) -> IndexFnTable:
    """g_eta(t) = 2 eta phi(t) + K psi(t) on the shared grid."""
    if phi.grid.shape != psi.grid.shape or not np.allclose(
        phi.grid, psi.grid, rtol=1e-12, atol=0.0
    ):
        raise ValueError("phi and psi tables must share the same grid")
    values = 2.0 * eta * phi.values + big_k * psi.values
    return IndexFnTable(grid=phi.grid.copy(), values=values, label="g_eta")


@dataclass
class GapResult:
    """Best objective value found and the corresponding source element."""

    value: float
    v: np.ndarray


def subgradient_range_gap(
    op, x_dagger, eta: float, r_max: float, iters: int = 500, seed: int = 0
) -> GapResult:
    """Approximate min_{||v|| <= r_max} ||xi - A* v||_inf from above.

    ``xi = eta sign(x) + x`` is the extreme subgradient of the elastic-net
    penalty at x.  Projected subgradient descent with Polyak-type steps
    (target 0, capped at one ball radius) runs for ``iters`` iterations and
    reports the best iterate.  For solutions with many small nonzero
    components the value stays near eta no matter how large ``r_max`` is,
    which is the practical signature of the failing source condition;
    for truly sparse x the value drops to ~0 once the ball is big enough.
    """
    x = as_vector(x_dagger, "x_dagger")
    xi = eta * np.sign(x) + x
    v = np.zeros(op.range_dim)
    resid = xi - op.adjoint(v)
    best = float(np.max(np.abs(resid)))
    best_v = v.copy()
    basis = np.zeros(op.domain_dim)
    for _ in range(iters):
        k = int(np.argmax(np.abs(resid)))
        f_val = abs(float(resid[k]))
        basis[:] = 0.0
        basis[k] = 1.0
        g = -np.sign(resid[k]) * op.apply(basis)
        gg = float(np.dot(g, g))
        if gg == 0.0:
            break
        step = min(f_val / gg, r_max / np.sqrt(gg))
        v = v - step * g
        nv = float(np.sqrt(np.dot(v, v)))
        if nv > r_max:
            v *= r_max / nv
        resid = xi - op.adjoint(v)
        f_new = float(np.max(np.abs(resid)))
        if f_new < best:
            best = f_new
            best_v = v.copy()
    return GapResult(value=best, v=best_v)


def fit_exponent(xs, ys):
    """Least-squares slope of log ys against log xs, with its R^2.

    Requires at least four strictly positive points; constant input is
    rejected as degenerate.
    """
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if xs.size < 4 or ys.size != xs.size:
        raise ValueError("need at least 4 matching points")
    if np.any(xs <= 0) or np.any(ys <= 0):
        raise ValueError("points must be strictly positive")
    lx, ly = np.log(xs), np.log(ys)
    if np.ptp(lx) == 0 or np.ptp(ly) == 0:
        raise ValueError("degenerate (constant) input")
    slope, intercept = np.polyfit(lx, ly, 1)
    fitted = slope * lx + intercept
    ss_res = float(np.sum((ly - fitted) ** 2))
    ss_tot = float(np.sum((ly - np.mean(ly)) ** 2))
    return float(slope), 1.0 - ss_res / ss_tot
