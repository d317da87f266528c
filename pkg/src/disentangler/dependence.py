"""Statistical dependence between two batched representations.

Implements the squared distance covariance (the V-statistic with 1/N^2
normalization), the squared cross-covariance of feature pairs, the derived
distance correlation, and a permutation test of independence.  Each measure
exists twice: as a graph builder usable inside a training objective, and as
a plain array function that evaluates a small graph, so both entry points
share one formula.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad


def _check_pair(y: np.ndarray, z: np.ndarray):
    if y.ndim != 2 or z.ndim != 2:
        raise ValueError(f"expected 2-D batches, got {y.shape} and {z.shape}")
    if y.shape[0] != z.shape[0]:
        raise ValueError(
            f"batch sizes differ: {y.shape[0]} vs {z.shape[0]}")
    if y.shape[0] < 2:
        raise ValueError("dependence measures need at least 2 samples")


def _centered_distances(s: ad.Node) -> ad.Node:
    """Doubly centered pairwise-distance matrix of the rows of ``s``."""
    d = ad.pairwise_distances(s)
    row = ad.mean(d, axis=1, keepdims=True)
    col = ad.mean(d, axis=0, keepdims=True)
    tot = ad.mean(d)
    return d - row - col + tot


def dcov2_node(y: ad.Node, z: ad.Node) -> ad.Node:
    """Graph for squared distance covariance between two N x d batches.

    Equals the mean of the elementwise product of the two doubly centered
    distance matrices; zero iff the batch shows no distance-detectable
    dependence, and always non-negative up to rounding.
    """
    return ad.mean(_centered_distances(y) * _centered_distances(z))


def xcov_node(y: ad.Node, z: ad.Node, batch_size: int) -> ad.Node:
    """Graph for the squared cross-covariance penalty.

    Computes half the sum of squared entries of the d_y x d_z matrix of
    feature covariances Cov(y_i, z_j), each covariance taken with 1/N
    normalization over the batch.
    """
    n = float(batch_size)
    yc = y - ad.mean(y, axis=0, keepdims=True)
    zc = z - ad.mean(z, axis=0, keepdims=True)
    cov = ad.matmul(ad.transpose(yc), zc) * ad.const(1.0 / n)
    return ad.sum_(ad.square(cov)) * ad.const(0.5)


def _eval_pair(builder, y: np.ndarray, z: np.ndarray) -> float:
    _check_pair(y, z)
    yn, zn = ad.placeholder("y"), ad.placeholder("z")
    graph = ad.Graph({"value": builder(yn, zn)})
    return float(graph.forward({"y": y, "z": z})["value"])


def distance_covariance_sq(y: np.ndarray, z: np.ndarray) -> float:
    """Squared distance covariance of two batches (V-statistic)."""
    return _eval_pair(dcov2_node, y, z)


def cross_covariance(y: np.ndarray, z: np.ndarray) -> float:
    """Squared cross-covariance penalty of two batches."""
    n = np.asarray(y).shape[0] if np.asarray(y).ndim == 2 else 0
    return _eval_pair(lambda a, b: xcov_node(a, b, n), y, z)


def distance_correlation(y: np.ndarray, z: np.ndarray) -> float:
    """Normalized distance dependence in [0, 1].

    dcov2(y, z) / sqrt(dcov2(y, y) * dcov2(z, z)), with the convention that
    a zero denominator (either batch degenerate, e.g. constant rows) gives
    0.0 rather than a division error.
    """
    _check_pair(y, z)
    vxy = distance_covariance_sq(y, z)
    vx = distance_covariance_sq(y, y)
    vy = distance_covariance_sq(z, z)
    denom = np.sqrt(vx * vy)
    if denom <= 0.0 or not np.isfinite(denom):
        return 0.0
    # The V-statistic can land a hair below zero through rounding.
    return float(np.sqrt(max(vxy, 0.0) / denom))


def centered_distance_matrix(s: np.ndarray) -> np.ndarray:
    """Doubly centered pairwise-distance matrix, evaluated eagerly."""
    node = ad.placeholder("s")
    graph = ad.Graph({"c": _centered_distances(node)})
    return graph.forward({"s": np.asarray(s, dtype=np.float64)})["c"]


def permutation_independence_test(y: np.ndarray, z: np.ndarray,
                                  num_permutations: int = 200,
                                  seed: int = 0) -> dict:
    """Permutation test of independence using dcov2 as the statistic.

    Rows of ``z`` are permuted ``num_permutations`` times with a generator
    seeded by ``seed``; the p-value uses the add-one estimate
    (1 + #{permuted >= observed}) / (1 + num_permutations), so it is never
    exactly zero.
    """
    _check_pair(y, z)
    if num_permutations < 1:
        raise ValueError("num_permutations must be >= 1")
    y = np.asarray(y, dtype=np.float64)
    z = np.asarray(z, dtype=np.float64)
    observed = distance_covariance_sq(y, z)
    # Permuting z's rows permutes its distance matrix symmetrically, and
    # double centering commutes with that, so every permuted statistic is
    # a reindexed mean over the two matrices computed once up front.
    a = centered_distance_matrix(y)
    b = centered_distance_matrix(z)
    rng = np.random.default_rng(seed)
    exceed = 0
    for _ in range(num_permutations):
        perm = rng.permutation(z.shape[0])
        if float(np.mean(a * b[np.ix_(perm, perm)])) >= observed:
            exceed += 1
    p = (1.0 + exceed) / (1.0 + num_permutations)
    return {"statistic": observed, "p_value": p,
            "num_permutations": num_permutations}
