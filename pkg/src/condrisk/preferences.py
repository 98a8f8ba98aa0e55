"""Agent preferences: univariate utilities, the multivariate aggregator
(sum of agent utilities plus an optional concave interdependence term),
analytic derivatives, the exponential convex conjugate, and linear growth
bounds used by the solvers.

All utilities are strictly increasing and strictly concave on the real
line, with derivative decreasing from +infinity to 0 (so marginal-utility
inversion is well defined everywhere).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class GrowthBoundError(RuntimeError):
    """A candidate linear upper bound failed grid certification."""


class UnivariateUtility:
    """Interface for a single agent's utility.

    Subclasses provide ``value``, ``deriv`` and ``deriv2`` (vectorized over
    numpy arrays), ``sup`` (the supremum of the utility over the reals) and
    ``inverse_deriv`` mapping a positive marginal utility back to the point
    attaining it.
    """

    sup: float

    def value(self, x):
        raise NotImplementedError

    def deriv(self, x):
        raise NotImplementedError

    def deriv2(self, x):
        raise NotImplementedError

    def inverse_deriv(self, m):
        raise NotImplementedError


@dataclass(frozen=True)
class ExponentialUtility(UnivariateUtility):
    """u(x) = -exp(-alpha x), or 1 - exp(-alpha x) when shifted."""

    alpha: float
    shifted: bool = False

    def __post_init__(self):
        if self.alpha <= 0:
            raise ValueError("alpha must be positive")

    @property
    def sup(self) -> float:
        return 1.0 if self.shifted else 0.0

    def value(self, x):
        e = -np.exp(-self.alpha * np.asarray(x, dtype=float))
        return 1.0 + e if self.shifted else e

    def deriv(self, x):
        return self.alpha * np.exp(-self.alpha * np.asarray(x, dtype=float))

    def deriv2(self, x):
        return -self.alpha ** 2 * np.exp(-self.alpha * np.asarray(x, dtype=float))

    def inverse_deriv(self, m):
        return -np.log(np.asarray(m, dtype=float) / self.alpha) / self.alpha


@dataclass(frozen=True)
class RationalPowerUtility(UnivariateUtility):
    """u(x) = p x/(x+1) for x >= 0 and 1 - (1-x)^p for x < 0, p > 1."""

    p: float

    def __post_init__(self):
        if self.p <= 1:
            raise ValueError("p must exceed 1")

    @property
    def sup(self) -> float:
        return self.p

    def value(self, x):
        x = np.asarray(x, dtype=float)
        xp, xn = np.maximum(x, 0.0), np.minimum(x, 0.0)
        pos = self.p * xp / (xp + 1.0)
        neg = 1.0 - (1.0 - xn) ** self.p
        return np.where(x >= 0.0, pos, neg)

    def deriv(self, x):
        x = np.asarray(x, dtype=float)
        xp, xn = np.maximum(x, 0.0), np.minimum(x, 0.0)
        pos = self.p / (xp + 1.0) ** 2
        neg = self.p * (1.0 - xn) ** (self.p - 1.0)
        return np.where(x >= 0.0, pos, neg)

    def deriv2(self, x):
        x = np.asarray(x, dtype=float)
        xp, xn = np.maximum(x, 0.0), np.minimum(x, 0.0)
        pos = -2.0 * self.p / (xp + 1.0) ** 3
        neg = -self.p * (self.p - 1.0) * (1.0 - xn) ** (self.p - 2.0)
        return np.where(x >= 0.0, pos, neg)

    def inverse_deriv(self, m):
        m = np.asarray(m, dtype=float)
        # derivative is p at 0; values below p come from the x >= 0 branch
        pos = np.sqrt(self.p / np.maximum(m, 1e-300)) - 1.0
        neg = 1.0 - (m / self.p) ** (1.0 / (self.p - 1.0))
        return np.where(m <= self.p, pos, neg)


@dataclass(frozen=True)
class ArctanPowerUtility(UnivariateUtility):
    """u(x) = p arctan(x) for x >= 0 and 1 - (1-x)^p for x < 0, p > 1."""

    p: float

    def __post_init__(self):
        if self.p <= 1:
            raise ValueError("p must exceed 1")

    @property
    def sup(self) -> float:
        return self.p * np.pi / 2.0

    def value(self, x):
        x = np.asarray(x, dtype=float)
        xn = np.minimum(x, 0.0)
        return np.where(x >= 0.0, self.p * np.arctan(x),
                        1.0 - (1.0 - xn) ** self.p)

    def deriv(self, x):
        x = np.asarray(x, dtype=float)
        xn = np.minimum(x, 0.0)
        return np.where(x >= 0.0, self.p / (1.0 + x ** 2),
                        self.p * (1.0 - xn) ** (self.p - 1.0))

    def deriv2(self, x):
        x = np.asarray(x, dtype=float)
        xn = np.minimum(x, 0.0)
        pos = -2.0 * self.p * x / (1.0 + x ** 2) ** 2
        neg = -self.p * (self.p - 1.0) * (1.0 - xn) ** (self.p - 2.0)
        return np.where(x >= 0.0, pos, neg)

    def inverse_deriv(self, m):
        m = np.asarray(m, dtype=float)
        pos = np.sqrt(np.maximum(self.p / np.maximum(m, 1e-300) - 1.0, 0.0))
        neg = 1.0 - (m / self.p) ** (1.0 / (self.p - 1.0))
        return np.where(m <= self.p, pos, neg)


class CustomUtility(UnivariateUtility):
    """Extension point: wrap user-supplied value/derivative callables.

    A randomized midpoint test rejects candidates that are not strictly
    concave or not strictly increasing; ``deriv2`` falls back to central
    differences when no second derivative is given.
    """

    def __init__(self, value_fn, deriv_fn, deriv2_fn=None, sup=np.inf,
                 selftest_points: int = 64, seed: int = 0):
        self._value = value_fn
        self._deriv = deriv_fn
        self._deriv2 = deriv2_fn
        self.sup = float(sup)
        rng = np.random.default_rng(seed)
        xs = rng.uniform(-5.0, 5.0, size=selftest_points)
        ys = rng.uniform(-5.0, 5.0, size=selftest_points)
        keep = np.abs(xs - ys) > 1e-6
        xs, ys = xs[keep], ys[keep]
        mid = self.value((xs + ys) / 2.0)
        if np.any(mid <= (self.value(xs) + self.value(ys)) / 2.0):
            raise ValueError("custom utility failed the strict concavity test")
        if np.any(np.asarray(self.deriv(xs)) <= 0.0):
            raise ValueError("custom utility is not strictly increasing")

    def value(self, x):
        return np.asarray(self._value(np.asarray(x, dtype=float)), dtype=float)

    def deriv(self, x):
        return np.asarray(self._deriv(np.asarray(x, dtype=float)), dtype=float)

    def deriv2(self, x, h: float = 1e-6):
        if self._deriv2 is not None:
            return np.asarray(self._deriv2(np.asarray(x, dtype=float)), dtype=float)
        x = np.asarray(x, dtype=float)
        return (self.deriv(x + h) - self.deriv(x - h)) / (2.0 * h)

    def inverse_deriv(self, m):
        m = np.asarray(m, dtype=float)
        out = np.empty_like(m, dtype=float)
        for idx, target in np.ndenumerate(m):
            lo, hi = -1.0, 1.0
            while self.deriv(hi) > target:
                hi *= 2.0
                if hi > 1e12:
                    break
            while self.deriv(lo) < target:
                lo *= 2.0
                if lo < -1e12:
                    break
            for _ in range(200):
                mid = 0.5 * (lo + hi)
                if self.deriv(mid) > target:
                    lo = mid
                else:
                    hi = mid
            out[idx] = 0.5 * (lo + hi)
        return out


@dataclass(frozen=True)
class LambdaAggregator:
    """Concave, nondecreasing, bounded-above interdependence term.

    Either identically zero or the composite u(sum_j beta_j x_j) for a
    bounded-above utility u and nonnegative weights beta.
    """

    u: UnivariateUtility | None = None
    weights: np.ndarray | None = None

    def __post_init__(self):
        if (self.u is None) != (self.weights is None):
            raise ValueError("composite form needs both u and weights")
        if self.weights is not None:
            w = np.asarray(self.weights, dtype=float)
            if np.any(w < 0.0):
                raise ValueError("weights must be nonnegative")
            if not np.isfinite(self.u.sup):
                raise ValueError("composite outer utility must be bounded above")
            object.__setattr__(self, "weights", w)

    @property
    def is_zero(self) -> bool:
        return self.u is None

    @property
    def sup(self) -> float:
        return 0.0 if self.is_zero else float(self.u.sup)

    def value(self, x):
        """x has shape (N,) or (N, K); returns scalar or (K,)."""
        if self.is_zero:
            x = np.asarray(x, dtype=float)
            return 0.0 if x.ndim == 1 else np.zeros(x.shape[1])
        s = np.tensordot(self.weights, np.asarray(x, dtype=float), axes=(0, 0))
        return self.u.value(s)

    def grad(self, x):
        x = np.asarray(x, dtype=float)
        if self.is_zero:
            return np.zeros_like(x)
        s = np.tensordot(self.weights, x, axes=(0, 0))
        d = self.u.deriv(s)
        return np.multiply.outer(self.weights, d) if x.ndim == 2 else d * self.weights

    def hessian(self, x):
        """Full Hessian contribution: rank-one u''(s) beta beta^T."""
        x = np.asarray(x, dtype=float)
        n = x.shape[0]
        if self.is_zero:
            shape = (n, n) if x.ndim == 1 else (x.shape[1], n, n)
            return np.zeros(shape)
        s = np.tensordot(self.weights, x, axes=(0, 0))
        d2 = self.u.deriv2(s)
        bbt = np.outer(self.weights, self.weights)
        if x.ndim == 1:
            return d2 * bbt
        return d2[:, None, None] * bbt[None, :, :]

    @classmethod
    def zero(cls) -> "LambdaAggregator":
        return cls()

    @classmethod
    def composite(cls, u: UnivariateUtility, weights) -> "LambdaAggregator":
        return cls(u, np.asarray(weights, dtype=float))


@dataclass(frozen=True)
class Aggregator:
    """Multivariate utility: sum of agent utilities plus the lambda term."""

    utilities: tuple
    lam: LambdaAggregator = field(default_factory=LambdaAggregator.zero)

    def __post_init__(self):
        object.__setattr__(self, "utilities", tuple(self.utilities))
        if len(self.utilities) < 1:
            raise ValueError("need at least one agent utility")
        if not self.lam.is_zero and self.lam.weights.size != self.nagents:
            raise ValueError("lambda weights must have one entry per agent")
        # vectorized fast path for the common all-exponential separable case
        exp_alphas = None
        if self.lam.is_zero and all(
                isinstance(u, ExponentialUtility) and not u.shifted
                for u in self.utilities):
            exp_alphas = np.array([u.alpha for u in self.utilities])
        object.__setattr__(self, "_exp_alphas", exp_alphas)

    @property
    def nagents(self) -> int:
        return len(self.utilities)

    @property
    def sup(self) -> float:
        """sup over the reals; each term attains its sup in the same limit."""
        return sum(u.sup for u in self.utilities) + self.lam.sup

    @property
    def raw_exponential_alphas(self) -> np.ndarray | None:
        """Exponent vector when every agent is raw exponential and the
        interdependence term vanishes; None otherwise."""
        return self._exp_alphas

    @property
    def separable(self) -> bool:
        return self.lam.is_zero

    def value(self, x):
        """U(x) for x of shape (N,) or (N, K)."""
        x = np.asarray(x, dtype=float)
        if self._exp_alphas is not None:
            a = self._exp_alphas if x.ndim == 1 else self._exp_alphas[:, None]
            return -np.exp(-a * x).sum(axis=0)
        parts = sum(u.value(x[j]) for j, u in enumerate(self.utilities))
        return parts + self.lam.value(x)

    def grad(self, x):
        x = np.asarray(x, dtype=float)
        if self._exp_alphas is not None:
            a = self._exp_alphas if x.ndim == 1 else self._exp_alphas[:, None]
            return a * np.exp(-a * x)
        g = np.stack([u.deriv(x[j]) for j, u in enumerate(self.utilities)])
        return g + self.lam.grad(x)

    def hessian(self, x):
        """Hessian of U; shape (N, N) for a point, (K, N, N) columnwise."""
        x = np.asarray(x, dtype=float)
        if self._exp_alphas is not None:
            a = self._exp_alphas if x.ndim == 1 else self._exp_alphas[:, None]
            d2 = -a * a * np.exp(-a * x)
        else:
            d2 = np.stack([u.deriv2(x[j]) for j, u in enumerate(self.utilities)])
        if x.ndim == 1:
            return np.diag(d2) + self.lam.hessian(x)
        k = x.shape[1]
        h = np.zeros((k, self.nagents, self.nagents))
        idx = np.arange(self.nagents)
        h[:, idx, idx] = d2.T
        return h + self.lam.hessian(x)

    @classmethod
    def exponential(cls, alphas, shifted: bool = False) -> "Aggregator":
        return cls(tuple(ExponentialUtility(a, shifted) for a in alphas))


def invert_gradient(a: Aggregator, target: np.ndarray) -> np.ndarray:
    """Solve grad U(z) = target columnwise; target must be positive.

    Separable aggregators invert each marginal directly; otherwise a damped
    Newton per column on the log of the gradient (marginal utilities span
    many orders of magnitude, so the log system stays well conditioned).
    """
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        z = np.stack([u.inverse_deriv(target[j])
                      for j, u in enumerate(a.utilities)])
        if a.separable:
            return z
        z = np.atleast_2d(np.clip(z, -1e12, 1e12))
        target = np.atleast_2d(target)
        log_t = np.log(target)

        def log_res(point):
            return np.log(a.grad(point)) - log_t

        g = log_res(z)
        base = np.max(np.abs(g))
        for _ in range(200):
            if base <= 1e-12:
                break
            hess = a.hessian(z)
            grad = a.grad(z)
            step = np.empty_like(z)
            singular = False
            for k in range(z.shape[1]):
                jl = hess[k] / grad[:, k][:, None]
                try:
                    step[:, k] = np.linalg.solve(jl, -g[:, k])
                except np.linalg.LinAlgError:
                    singular = True
                    break
            if singular:
                break
            t = 1.0
            moved = False
            for _ in range(60):
                cand = z + t * step
                gc = log_res(cand)
                cnorm = np.max(np.abs(gc))
                if np.isfinite(cnorm) and cnorm < base:
                    z, g, base, moved = cand, gc, cnorm, True
                    break
                t *= 0.5
            if not moved:
                break
    return z


def agg_value(a: Aggregator, x) -> float:
    return float(a.value(np.asarray(x, dtype=float)))


def agg_grad(a: Aggregator, x) -> np.ndarray:
    return a.grad(np.asarray(x, dtype=float))


def conjugate_V(alphas, y) -> float:
    """Convex conjugate of the raw exponential aggregator at y > 0:
    sum_j (y_j/alpha_j) (log(y_j/alpha_j) - 1), extended by 0 at y_j = 0."""
    alphas = np.asarray(alphas, dtype=float)
    y = np.asarray(y, dtype=float)
    if np.any(y < 0.0):
        raise ValueError("conjugate argument must be nonnegative")
    r = y / alphas
    terms = np.where(r > 0.0, r * (np.log(np.where(r > 0.0, r, 1.0)) - 1.0), 0.0)
    return float(terms.sum())


def growth_bound(a: Aggregator, candidate=None, grid_half_width: float = 10.0,
                 grid_points: int = 41) -> tuple:
    """Linear upper bound U(x) <= a_coef * sum_j x_j + b_coef.

    The slope is the largest marginal utility at zero; each agent's offset is
    the maximum of u_j(x) - a_coef*x (attained where the derivative equals the
    slope), and the lambda term contributes its supremum.  The bound is then
    certified on a grid; certification failure signals a wrong candidate.
    """
    slopes = np.array([float(u.deriv(0.0)) for u in a.utilities])
    a_coef = float(slopes.max())
    if candidate is None:
        b_coef = a.lam.sup
        for u in a.utilities:
            xstar = float(u.inverse_deriv(a_coef))
            b_coef += float(u.value(xstar)) - a_coef * xstar
    else:
        a_coef, b_coef = float(candidate[0]), float(candidate[1])

    axis = np.linspace(-grid_half_width, grid_half_width, grid_points)
    if a.nagents <= 3:
        grids = np.meshgrid(*([axis] * a.nagents), indexing="ij")
        pts = np.stack([g.ravel() for g in grids])
    else:
        rng = np.random.default_rng(12345)
        pts = rng.uniform(-grid_half_width, grid_half_width,
                          size=(a.nagents, grid_points ** 3))
    vals = a.value(pts)
    bound = a_coef * pts.sum(axis=0) + b_coef
    slack = bound - vals
    if np.min(slack) < -1e-9:
        at = pts[:, int(np.argmin(slack))]
        raise GrowthBoundError(
            f"bound {a_coef!r}, {b_coef!r} violated at x={at.tolist()}"
        )
    return a_coef, b_coef
