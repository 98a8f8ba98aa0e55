"""Finite probability spaces, sub-sigma-algebras as atom partitions, and
conditional expectations under the reference measure and under densities.

Random variables are plain 1-D numpy arrays of length K (one entry per
atom); random vectors are (N, K) arrays (agent by atom).  A sub-sigma-algebra
is represented by the unique partition of atoms that generates it: a variable
is measurable iff it is constant on every block.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

PROB_SUM_TOL = 1e-12
MEASURABLE_TOL = 1e-10
DENSITY_NORM_TOL = 1e-10


class DimensionMismatchError(ValueError):
    """Raised when an array does not match the atom count of its space."""


@dataclass(frozen=True, eq=False)
class ScenarioSpace:
    """Finite sample space with strictly positive atom probabilities."""

    atom_labels: tuple
    prob: np.ndarray

    def __eq__(self, other):
        if not isinstance(other, ScenarioSpace):
            return NotImplemented
        return (self.atom_labels == other.atom_labels
                and np.array_equal(self.prob, other.prob))

    def __hash__(self):
        return hash((self.atom_labels, self.prob.tobytes()))

    def __post_init__(self):
        labels = tuple(str(s) for s in self.atom_labels)
        prob = np.asarray(self.prob, dtype=float)
        object.__setattr__(self, "atom_labels", labels)
        object.__setattr__(self, "prob", prob)
        if prob.ndim != 1 or prob.size < 1:
            raise ValueError("prob must be a nonempty 1-D vector")
        if len(labels) != prob.size:
            raise ValueError("number of labels must match number of atoms")
        if len(set(labels)) != len(labels):
            raise ValueError("atom labels must be unique")
        if np.any(prob <= 0.0):
            raise ValueError("every atom must have strictly positive probability")
        if abs(prob.sum() - 1.0) > PROB_SUM_TOL:
            raise ValueError(f"probabilities sum to {prob.sum()!r}, not 1")
        prob.setflags(write=False)

    @property
    def natoms(self) -> int:
        return self.prob.size

    @classmethod
    def uniform(cls, k: int) -> "ScenarioSpace":
        return cls(tuple(f"w{i}" for i in range(k)), np.full(k, 1.0 / k))

    def check_values(self, x: np.ndarray, name: str = "values") -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.natoms:
            raise DimensionMismatchError(
                f"{name} has {x.shape[-1]} atoms, space has {self.natoms}"
            )
        if not np.all(np.isfinite(x)):
            raise ValueError(f"{name} contains non-finite entries")
        return x


@dataclass(frozen=True, eq=False)
class SigmaPartition:
    """Partition of atom indices generating a sub-sigma-algebra.

    Blocks are canonicalized (each sorted ascending, blocks ordered by their
    smallest element) so that structural equality is partition equality.
    """

    space: ScenarioSpace
    blocks: tuple

    def __eq__(self, other):
        if not isinstance(other, SigmaPartition):
            return NotImplemented
        return self.space == other.space and self.blocks == other.blocks

    def __hash__(self):
        return hash((self.space, self.blocks))

    def __post_init__(self):
        k = self.space.natoms
        blocks = tuple(tuple(sorted(int(i) for i in b)) for b in self.blocks)
        blocks = tuple(sorted(blocks, key=lambda b: b[0] if b else -1))
        object.__setattr__(self, "blocks", blocks)
        seen = [idx for b in blocks for idx in b]
        if any(len(b) == 0 for b in blocks):
            raise ValueError("partition blocks must be nonempty")
        if sorted(seen) != list(range(k)):
            raise ValueError("blocks must partition the atom indices exactly")
        index = np.empty(k, dtype=np.intp)
        for m, b in enumerate(blocks):
            index[list(b)] = m
        index.setflags(write=False)
        object.__setattr__(self, "_block_index", index)

    @property
    def nblocks(self) -> int:
        return len(self.blocks)

    @property
    def block_index(self) -> np.ndarray:
        """Atom index -> block index map, shape (K,)."""
        return self._block_index

    @classmethod
    def trivial(cls, space: ScenarioSpace) -> "SigmaPartition":
        return cls(space, (tuple(range(space.natoms)),))

    @classmethod
    def discrete(cls, space: ScenarioSpace) -> "SigmaPartition":
        return cls(space, tuple((i,) for i in range(space.natoms)))

    def block_prob(self) -> np.ndarray:
        """Total probability per block, shape (nblocks,)."""
        return np.bincount(self._block_index, weights=self.space.prob,
                           minlength=self.nblocks)

    def conditional_weights(self) -> np.ndarray:
        """Per-atom conditional probability within its block, shape (K,)."""
        return self.space.prob / self.block_prob()[self._block_index]

    def blockwise_mean(self, x: np.ndarray) -> np.ndarray:
        """Conditional expectation values per block, shape (..., nblocks)."""
        x = self.space.check_values(x)
        pw = self.space.prob
        psum = self.block_prob()
        if x.ndim == 1:
            s = np.bincount(self._block_index, weights=pw * x,
                            minlength=self.nblocks)
            return s / psum
        rows = [np.bincount(self._block_index, weights=pw * row,
                            minlength=self.nblocks) for row in x]
        return np.vstack(rows) / psum

    def expand(self, per_block: np.ndarray) -> np.ndarray:
        """Replicate per-block values back onto atoms, shape (..., K)."""
        per_block = np.asarray(per_block, dtype=float)
        return per_block[..., self._block_index]


def cond_exp(x: np.ndarray, g: SigmaPartition) -> np.ndarray:
    """E[x | g]: blockwise probability-weighted mean, replicated per block."""
    return g.expand(g.blockwise_mean(x))


def cond_exp_under_density(q_row: np.ndarray, x: np.ndarray,
                           g: SigmaPartition) -> np.ndarray:
    """Conditional expectation of x under the measure with density q_row.

    Identical to ``cond_exp(q_row * x, g)``; q_row must have blockwise
    conditional mean 1 so the result is a genuine conditional expectation.
    """
    q_row = g.space.check_values(q_row, "density")
    means = g.blockwise_mean(q_row)
    if np.max(np.abs(means - 1.0)) > 1e-8:
        raise ValueError("density row is not normalized blockwise to mean 1")
    return cond_exp(q_row * np.asarray(x, dtype=float), g)


def is_measurable(x: np.ndarray, g: SigmaPartition,
                  tol: float = MEASURABLE_TOL) -> bool:
    """True iff x is constant on every block of g, within tol."""
    x = g.space.check_values(x)
    spread = x - g.expand(g.blockwise_mean(x))
    return bool(np.max(np.abs(spread)) <= tol)


def coarsens(h: SigmaPartition, g: SigmaPartition) -> bool:
    """True iff h is coarser than g (every block of g lies in a block of h)."""
    if h.space is not g.space and h.space != g.space:
        raise ValueError("partitions live on different spaces")
    hi = h.block_index
    return all(len(set(hi[list(b)])) == 1 for b in g.blocks)


def cond_relative_entropy(q_row: np.ndarray, g: SigmaPartition) -> np.ndarray:
    """Blockwise relative entropy E[q log q | g] of a normalized density row.

    Uses the convention 0*log(0) = 0; the result is g-measurable and
    nonnegative, vanishing exactly where q_row is identically 1 on a block.
    """
    q_row = g.space.check_values(q_row, "density")
    if np.any(q_row < -1e-12):
        raise ValueError("density row has negative entries")
    q = np.maximum(q_row, 0.0)
    xlogx = np.where(q > 0.0, q * np.log(np.where(q > 0.0, q, 1.0)), 0.0)
    return cond_exp(xlogx, g)


@dataclass(frozen=True, eq=False)
class DensityVector:
    """N density rows (one candidate measure per agent) normalized against
    a partition: each row has blockwise conditional mean 1 under the atom
    probabilities, and all entries are nonnegative."""

    q: np.ndarray
    sigma: SigmaPartition

    def __post_init__(self):
        q = np.atleast_2d(np.asarray(self.q, dtype=float))
        object.__setattr__(self, "q", q)
        self.sigma.space.check_values(q, "densities")
        if np.any(q < -1e-12):
            raise ValueError("densities must be nonnegative")
        means = self.sigma.blockwise_mean(q)
        worst = np.max(np.abs(means - 1.0))
        if worst > DENSITY_NORM_TOL:
            raise ValueError(
                f"density rows deviate from blockwise mean 1 by {worst:.3e}"
            )
        q.setflags(write=False)

    @property
    def nagents(self) -> int:
        return self.q.shape[0]

    def row(self, j: int) -> np.ndarray:
        return self.q[j]

    @classmethod
    def reference(cls, n: int, sigma: SigmaPartition) -> "DensityVector":
        """The vector (P, ..., P): all-ones densities."""
        return cls(np.ones((n, sigma.space.natoms)), sigma)
