"""Dual side of the shortfall risk measure.

The dual representation evaluates candidate measure vectors (given by
densities with blockwise conditional mean one) through a penalty: the
largest density-weighted amount extractable from acceptable positions.
Membership in the admissible dual set additionally requires a fairness
inequality against every feasible allocation, which on finite spaces
reduces to equality of densities within each risk-sharing cluster.

All programs here are equality-constrained concave problems whose optima
are characterized by a gradient proportionality; they are solved by
inverting the aggregator gradient along a scalar multiplier that a root
find pins to the active constraint.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .preferences import Aggregator, invert_gradient
from .primal import PrimalSolution, RiskSpec, _block_data
from .prob_space import DensityVector, cond_exp

FAIRNESS_TOL = 1e-8


class PenaltyDivergenceError(RuntimeError):
    """The dual penalty is unbounded on some blocks.

    Carries the offending block indices and the finite shortfall part on
    the remaining blocks; signals that the candidate densities are not in
    the admissible dual set.
    """

    def __init__(self, blocks, partial):
        super().__init__(f"penalty diverges on blocks {sorted(blocks)}: "
                         "densities differ within a risk-sharing cluster")
        self.blocks = tuple(sorted(blocks))
        self.partial = partial


class DualGapError(RuntimeError):
    """An extracted dual optimizer failed to close the duality gap."""


def _check_density(q: DensityVector, spec: RiskSpec) -> None:
    if q.sigma != spec.sigma:
        raise ValueError("densities are normalized against a different partition")
    if q.nagents != spec.nagents:
        raise ValueError("density vector has wrong number of agents")


def _sup_values(agg: Aggregator) -> np.ndarray:
    return np.array([u.sup for u in agg.utilities])


def _solve_scaled_gradient(agg, qb, w, target_util):
    """Find mu > 0 with E_w[U(z(mu))] = target_util where
    grad U(z(mu)) = qb / mu; returns (z, mu).

    Zero density entries push the corresponding coordinate to its upper
    limit: utility contributes its supremum, cost contributes nothing
    (separable aggregators only).
    """
    zero = qb <= 0.0
    if np.any(zero) and not agg.separable:
        raise NotImplementedError(
            "vanishing densities with an interdependence term")
    if np.any(zero):
        sup_u = _sup_values(agg)
        util_zero = np.where(zero, sup_u[:, None], 0.0).sum(axis=0)
        qpos = np.where(zero, 1.0, qb)
    else:
        util_zero = np.zeros(qb.shape[1])
        qpos = qb

    def util_at(logmu):
        with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
            z = invert_gradient(agg, qpos / np.exp(logmu))
            if np.any(zero):
                vals = np.stack([u.value(z[j])
                                 for j, u in enumerate(agg.utilities)])
                total = np.where(zero, 0.0, vals).sum(axis=0) + util_zero
            else:
                total = agg.value(z)
            # clip so bracket endpoints stay finite for the root finder
            val = float(np.clip(w @ total, -1e15, 1e15))
        return val, z

    lo, hi = -2.0, 2.0
    while util_at(lo)[0] > target_util and lo > -600.0:
        lo *= 2.0
    while util_at(hi)[0] < target_util and hi < 600.0:
        hi *= 2.0
    logmu = brentq(lambda t: util_at(t)[0] - target_util, lo, hi, xtol=1e-14)
    z = util_at(logmu)[1]
    if np.any(zero):
        z = np.where(zero, 0.0, z)  # cost-free coordinates drop out
    return z, float(np.exp(logmu))


def fairness_blocks(q: DensityVector, spec: RiskSpec,
                    tol: float = FAIRNESS_TOL) -> np.ndarray:
    """Per-block fairness flags via the within-cluster swap family.

    A swap allocation moves mass between two agents of one cluster on a
    single atom; it is feasible with zero total, so fairness forces the two
    densities to agree on that atom.  Blockwise-constant allocations are
    covered already by the normalization invariant.
    """
    _check_density(q, spec)
    ok = np.ones(spec.sigma.nblocks, dtype=bool)
    for group in spec.clusters.groups:
        if len(group) < 2:
            continue
        rows = q.q[list(group), :]
        spread = np.max(np.abs(rows - rows[0][None, :]), axis=0)
        for m, blk in enumerate(spec.sigma.blocks):
            if spread[list(blk)].max() > tol:
                ok[m] = False
    return ok


def in_q1(q: DensityVector, spec: RiskSpec) -> bool:
    """Admissibility of a candidate dual vector: finite penalty plus the
    fairness inequality against all feasible allocations."""
    return bool(fairness_blocks(q, spec).all())


def _alpha1_blocks(q: DensityVector, spec: RiskSpec) -> np.ndarray:
    """Shortfall part of the penalty, per block, by direct maximization."""
    _check_density(q, spec)
    out = np.empty(spec.sigma.nblocks)
    for m, (idx, w, _, bval) in enumerate(_block_data(spec)):
        qb = q.q[:, idx]
        z, _ = _solve_scaled_gradient(spec.aggregator, qb, w, bval)
        out[m] = float((w[None, :] * qb * (-z)).sum())
    return out


def penalty_alpha1(q: DensityVector, spec: RiskSpec) -> np.ndarray:
    """Dual penalty per atom (constant on blocks).

    On blocks where the fairness condition fails, the penalty of the dual
    representation is unbounded (feasible allocations form a cone), which is
    reported as a divergence rather than a value.
    """
    ok = fairness_blocks(q, spec)
    vals = _alpha1_blocks(q, spec)
    if not ok.all():
        partial = np.where(ok, vals, np.inf)
        raise PenaltyDivergenceError(np.flatnonzero(~ok), spec.sigma.expand(partial))
    return spec.sigma.expand(vals)


def dual_value(q: DensityVector, spec: RiskSpec) -> np.ndarray:
    """Dual objective per atom: density-weighted cost of the positions
    minus the penalty."""
    alpha1 = penalty_alpha1(q, spec)
    cost = np.zeros(spec.space.natoms)
    for j in range(spec.nagents):
        cost += cond_exp(q.row(j) * (-spec.x[j]), spec.sigma)
    return cost - alpha1


def extract_dual_optimizer(sol: PrimalSolution, spec: RiskSpec,
                           check_gap: bool = True) -> DensityVector:
    """Dual optimizer from the primal KKT point: densities proportional to
    the marginal utilities at the optimum, normalized blockwise.

    Marginal utilities are averaged within each cluster before normalizing
    (they agree at the exact optimum; averaging removes solver noise), so
    the result always satisfies the fairness condition.
    """
    grads = spec.aggregator.grad(spec.x + sol.y_hat)
    q = np.empty_like(grads)
    for group in spec.clusters.groups:
        rows = list(group)
        avg = grads[rows, :].mean(axis=0)
        q[rows, :] = avg[None, :]
    q = q / cond_exp(q, spec.sigma)
    dens = DensityVector(q, spec.sigma)
    if check_gap:
        gap = np.abs(sol.rho - dual_value(dens, spec))
        if gap.max() > 5.0 * spec.kkt_tol:
            raise DualGapError(
                f"duality gap {gap.max():.3e} exceeds 5*kkt_tol; "
                "solver accuracy insufficient")
    return dens


def rho_with_measure(q: DensityVector, spec: RiskSpec) -> np.ndarray:
    """Risk under a fixed admissible measure vector:
    density-weighted cost of the positions minus the penalty.

    Cross-checked against the direct minimization of the density-weighted
    allocation cost under the utility constraint; the two must agree.
    """
    value = dual_value(q, spec)
    direct = np.empty(spec.sigma.nblocks)
    for m, (idx, w, xb, bval) in enumerate(_block_data(spec)):
        qb = q.q[:, idx]
        z, _ = _solve_scaled_gradient(spec.aggregator, qb, w, bval)
        y = z - xb
        if np.any(qb <= 0.0):
            y = np.where(qb <= 0.0, 0.0, y)
        direct[m] = float((w[None, :] * qb * y).sum())
    mismatch = np.max(np.abs(value - spec.sigma.expand(direct)))
    if mismatch > 5.0 * spec.kkt_tol:
        raise RuntimeError(
            f"fixed-measure risk cross-check mismatch {mismatch:.3e}")
    return value


@dataclass(frozen=True, eq=False)
class DualReport:
    """Penalty, dual objective and duality gap for one candidate vector."""

    alpha1: np.ndarray
    dual_value: np.ndarray
    gap: np.ndarray
    in_q1: bool


def dual_report(sol: PrimalSolution, q: DensityVector,
                spec: RiskSpec) -> DualReport:
    admissible = in_q1(q, spec)
    if not admissible:
        k = spec.space.natoms
        return DualReport(alpha1=np.full(k, np.inf),
                          dual_value=np.full(k, -np.inf),
                          gap=np.full(k, np.inf), in_q1=False)
    alpha1 = penalty_alpha1(q, spec)
    cost = np.zeros(spec.space.natoms)
    for j in range(spec.nagents):
        cost += cond_exp(q.row(j) * (-spec.x[j]), spec.sigma)
    value = cost - alpha1
    return DualReport(alpha1=alpha1, dual_value=value,
                      gap=sol.rho - value, in_q1=True)
