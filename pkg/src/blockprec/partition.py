"""Coordinate partitionings and block-diagonal matrix operations.

A partitioning splits the n coordinate indices into K disjoint, non-empty
blocks. Masking a symmetric matrix by a partitioning keeps the entries
whose row and column fall in the same block and zeroes the rest, which
makes linear solves against the masked matrix decompose into independent
per-block solves.
"""

import itertools
import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import EnumerationCapError, InvalidArgumentError, SingularBlockError

SYMMETRY_TOL = 1e-10

DEFAULT_ENUMERATION_CAP = 10**6


def check_symmetric_matrix(q, tol=SYMMETRY_TOL):
    """Validate a dense symmetric matrix and return it as a float64 array.

    Requires a square 2-d array with finite entries that is symmetric
    within absolute tolerance ``tol``. The entries are returned unchanged;
    no silent symmetrization happens here.
    """
    q = np.asarray(q, dtype=float)
    if q.ndim != 2 or q.shape[0] != q.shape[1]:
        raise InvalidArgumentError(f"expected a square matrix, got shape {q.shape}")
    if not np.all(np.isfinite(q)):
        raise InvalidArgumentError("matrix has non-finite entries")
    skew = np.max(np.abs(q - q.T)) if q.size else 0.0
    if skew > tol:
        raise InvalidArgumentError(f"matrix is not symmetric: max |Q - Q^T| = {skew:.3e}")
    return q


@dataclass(frozen=True)
class Partitioning:
    """Assignment of n coordinates to K disjoint non-empty blocks.

    ``assignment[i]`` is the block index of coordinate i, in ``[0, k_blocks)``.
    """

    assignment: np.ndarray
    k_blocks: int

    def __post_init__(self):
        assignment = np.asarray(self.assignment, dtype=np.intp)
        assignment.setflags(write=False)
        object.__setattr__(self, "assignment", assignment)
        if self.k_blocks < 1:
            raise InvalidArgumentError("k_blocks must be positive")
        if assignment.ndim != 1 or assignment.size == 0:
            raise InvalidArgumentError("assignment must be a non-empty 1-d sequence")
        counts = np.bincount(assignment, minlength=self.k_blocks)
        if counts.size > self.k_blocks:
            raise InvalidArgumentError("assignment refers to a block >= k_blocks")
        if np.any(counts == 0):
            raise InvalidArgumentError("every block must be non-empty")

    @property
    def n(self) -> int:
        return self.assignment.size

    def blocks(self):
        """Index arrays of the blocks, ordered by block label."""
        order = np.argsort(self.assignment, kind="stable")
        counts = np.bincount(self.assignment, minlength=self.k_blocks)
        return np.split(order, np.cumsum(counts)[:-1])

    def block_sizes(self):
        return np.bincount(self.assignment, minlength=self.k_blocks)

    def to_json_dict(self):
        return {"n": int(self.n), "k": int(self.k_blocks),
                "assignment": [int(b) for b in self.assignment]}

    @classmethod
    def from_json_dict(cls, obj):
        part = cls(np.asarray(obj["assignment"], dtype=np.intp), int(obj["k"]))
        if part.n != int(obj["n"]):
            raise InvalidArgumentError("assignment length does not match declared n")
        return part

    def __eq__(self, other):
        if not isinstance(other, Partitioning):
            return NotImplemented
        return self.k_blocks == other.k_blocks and np.array_equal(self.assignment, other.assignment)

    def __hash__(self):
        return hash((self.k_blocks, self.assignment.tobytes()))


def sample_uniform_partition(n: int, k: int, seed: int) -> Partitioning:
    """Draw a uniformly random partitioning with near-equal block sizes.

    A random permutation of the n indices is cut into K consecutive chunks
    of size ceil(n/K) or floor(n/K) (the first n mod K chunks take the
    larger size), which is uniform over all such assignments. Deterministic
    given ``seed``.
    """
    if n < 1:
        raise InvalidArgumentError(f"n must be positive, got {n}")
    if k < 1 or k > n:
        raise InvalidArgumentError(f"k must satisfy 1 <= k <= n, got k={k}, n={n}")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    base, extra = divmod(n, k)
    assignment = np.empty(n, dtype=np.intp)
    start = 0
    for block in range(k):
        size = base + (1 if block < extra else 0)
        assignment[perm[start:start + size]] = block
        start += size
    return Partitioning(assignment, k)


def partition_count(n: int, k: int) -> int:
    """Number of unordered partitionings of n indices into K equal blocks."""
    if k < 1 or n % k != 0:
        raise InvalidArgumentError(f"k must divide n, got n={n}, k={k}")
    nk = n // k
    return math.factorial(n) // (math.factorial(nk) ** k * math.factorial(k))


def enumerate_partitions(n: int, k: int, cap: int = DEFAULT_ENUMERATION_CAP):
    """All unordered equal-size partitionings of n indices into K blocks.

    Each partitioning appears exactly once; block labels are canonical
    (block j contains the smallest index not covered by blocks < j).
    Requires K | n and the total count not to exceed ``cap``.
    """
    count = partition_count(n, k)
    if count > cap:
        raise EnumerationCapError(
            f"{count} partitionings for n={n}, k={k} exceed the cap of {cap}")
    nk = n // k
    out = []
    assignment = np.empty(n, dtype=np.intp)

    def fill(remaining, block):
        if not remaining:
            out.append(Partitioning(assignment.copy(), k))
            return
        head, rest = remaining[0], remaining[1:]
        assignment[head] = block
        for companions in itertools.combinations(rest, nk - 1):
            taken = set(companions)
            for i in companions:
                assignment[i] = block
            fill([i for i in rest if i not in taken], block + 1)

    fill(list(range(n)), 0)
    return out


def _check_dims(q, part):
    q = check_symmetric_matrix(q)
    if q.shape[0] != part.n:
        raise InvalidArgumentError(
            f"matrix order {q.shape[0]} does not match partitioning over {part.n} coordinates")
    return q


def block_mask(q, part: Partitioning):
    """Block-diagonal version of ``q``: entry (i, j) survives iff i and j share a block."""
    q = _check_dims(q, part)
    same = part.assignment[:, None] == part.assignment[None, :]
    return np.where(same, q, 0.0)


class BlockCholesky:
    """Per-block Cholesky factorization of the masked matrix Q_P.

    Factors each principal block Q[P_k, P_k] (+ jitter on the diagonal)
    once, and exposes the solve, inverse and congruence operations used by
    the solver and the spectral analysis. Blocks are independent, so all
    operations decompose per block and yield results identical to dense
    computations against block_mask(Q, P).
    """

    def __init__(self, q, part: Partitioning, jitter: float = 0.0):
        q = _check_dims(q, part)
        if jitter < 0:
            raise InvalidArgumentError("jitter must be non-negative")
        self.part = part
        self.n = part.n
        self._blocks = part.blocks()
        self._factors = []
        for k, idx in enumerate(self._blocks):
            block = q[np.ix_(idx, idx)]
            if jitter:
                block = block + jitter * np.eye(idx.size)
            try:
                lower = scipy.linalg.cholesky(block, lower=True, check_finite=False)
            except scipy.linalg.LinAlgError as exc:
                raise SingularBlockError(
                    k, f"block {k} (size {idx.size}) is not positive definite"
                    + ("" if jitter else "; consider a positive jitter")) from exc
            self._factors.append(lower)

    def solve(self, g):
        """Solve Q_P d = g block by block."""
        g = np.asarray(g, dtype=float)
        if g.shape != (self.n,):
            raise InvalidArgumentError(f"expected a vector of length {self.n}, got shape {g.shape}")
        d = np.empty_like(g)
        for idx, lower in zip(self._blocks, self._factors):
            d[idx] = scipy.linalg.cho_solve((lower, True), g[idx], check_finite=False)
        return d

    def inverse(self):
        """Dense inverse of Q_P (block-diagonal up to permutation)."""
        inv = np.zeros((self.n, self.n))
        for idx, lower in zip(self._blocks, self._factors):
            inv[np.ix_(idx, idx)] = scipy.linalg.cho_solve(
                (lower, True), np.eye(idx.size), check_finite=False)
        return inv

    def whiten(self, q):
        """Congruence transform L^{-1} Q L^{-T} where Q_P = L L^T.

        The result is similar to Q_P^{-1} Q, so it has the same spectrum,
        but it is symmetric (up to roundoff) and safe for ``eigvalsh``.
        """
        q = _check_dims(q, self.part)
        y = np.empty_like(q)
        for idx, lower in zip(self._blocks, self._factors):
            y[idx, :] = scipy.linalg.solve_triangular(
                lower, q[idx, :], lower=True, check_finite=False)
        w = np.empty_like(q)
        for idx, lower in zip(self._blocks, self._factors):
            w[:, idx] = scipy.linalg.solve_triangular(
                lower, y[:, idx].T, lower=True, check_finite=False).T
        return 0.5 * (w + w.T)


def solve_block_system(q, part: Partitioning, g, jitter: float = 0.0):
    """Solve block_mask(Q, P) d = g via independent per-block SPD solves.

    With ``jitter > 0`` each block is shifted to block + jitter * I before
    factorization. By default (jitter = 0) a non-positive-definite block
    raises SingularBlockError naming the offending block.
    """
    return BlockCholesky(q, part, jitter=jitter).solve(g)
