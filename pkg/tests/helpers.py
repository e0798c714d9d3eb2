"""Independent oracles for the test suite.

Everything here is deliberately written from the definitions with plain
loops and stdlib/naive numpy, sharing no code paths with the package
implementations it checks.
"""

import itertools
import math

import numpy as np


def naive_uic_loss(matrix, alpha: int) -> float:
    """Column-agreement penalty by direct triple summation."""
    matrix = np.asarray(matrix, dtype=np.float64)
    m, n = matrix.shape
    terms = []
    for i in range(n):
        for j in range(n):
            inner = math.fsum(
                matrix[k, i] * matrix[k, j] + (1.0 - matrix[k, i]) * (1.0 - matrix[k, j])
                for k in range(m)
            )
            if i == j:
                inner -= m
            terms.append((inner / m) ** alpha)
    return math.fsum(terms)


def naive_dis_loss(matrix, alpha: int) -> float:
    """Row-agreement penalty by direct triple summation."""
    matrix = np.asarray(matrix, dtype=np.float64)
    m, n = matrix.shape
    terms = []
    for k in range(m):
        for kp in range(m):
            inner = math.fsum(
                matrix[k, i] * matrix[kp, i] + (1.0 - matrix[k, i]) * (1.0 - matrix[kp, i])
                for i in range(n)
            )
            if k == kp:
                inner -= n
            terms.append((inner / n) ** alpha)
    return math.fsum(terms)


def central_difference(fn, matrix: np.ndarray, step: float = 1e-6) -> np.ndarray:
    grad = np.zeros_like(matrix)
    for index in np.ndindex(*matrix.shape):
        bumped = matrix.copy()
        bumped[index] += step
        upper = fn(bumped)
        bumped[index] -= 2.0 * step
        lower = fn(bumped)
        grad[index] = (upper - lower) / (2.0 * step)
    return grad


def relative_gradient_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """Max-norm difference over the max-norm of either gradient.

    Entrywise ratios are meaningless once entries underflow (large
    exponents push most of the gradient toward zero), so errors are
    normalized by the dominant magnitude.
    """
    scale = max(float(np.abs(analytic).max()), float(np.abs(numeric).max()), 1e-300)
    return float(np.abs(analytic - numeric).max() / scale)


def column_collisions(adjacency) -> list[tuple[int, int]]:
    """Unordered pairs of identical columns, by direct tuple comparison."""
    arr = np.asarray(adjacency)
    cols = [tuple(int(v) for v in arr[:, j]) for j in range(arr.shape[1])]
    return [
        (a, b)
        for a in range(len(cols))
        for b in range(a + 1, len(cols))
        if cols[a] == cols[b]
    ]


def shuffled_closure(parent_sets, n: int, rng) -> set[frozenset]:
    """Subtraction-closure fixpoint over frozensets with a shuffled worklist.

    Independent of the package's bitmask implementation; used to confirm
    the fixpoint does not depend on processing order.
    """
    universe = frozenset(range(n))
    family = {frozenset(), universe} | {frozenset(p) for p in parent_sets}
    while True:
        pairs = list(itertools.combinations(sorted(family, key=sorted), 2))
        rng.shuffle(pairs)
        new = set()
        for a, b in pairs:
            for d in (a - b, b - a):
                if d not in family:
                    new.add(d)
        if not new:
            return family
        family |= new


def brute_force_best_matching(true_latents, est_latents):
    """Best permutation by mean |Pearson| using numpy's corrcoef."""
    true_arr = np.asarray(true_latents, dtype=np.float64)
    est_arr = np.asarray(est_latents, dtype=np.float64)
    n = true_arr.shape[1]
    corr = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            corr[i, j] = abs(np.corrcoef(true_arr[:, i], est_arr[:, j])[0, 1])
    best_perm, best_mean = None, -1.0
    for perm in itertools.permutations(range(n)):
        mean = float(np.mean([corr[i, perm[i]] for i in range(n)]))
        if mean > best_mean:
            best_perm, best_mean = perm, mean
    return best_perm, best_mean


def enumerate_matrices(m: int, n: int):
    """All binary m x n matrices as row-tuples, in encoding order."""
    for enc in range(1 << (m * n)):
        yield tuple(
            tuple((enc >> (k * n + j)) & 1 for j in range(n)) for k in range(m)
        )
