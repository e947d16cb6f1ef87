"""
Chebyshev collocation helpers for the grid backend of the Fourier-Taylor algebra.

Nodes are Chebyshev-Gauss-Lobatto points ordered from the right endpoint to the left one,
which is the ordering the Weideman-Reddy differentiation matrix expects.
"""

import math
from typing import Sequence, Tuple

import numpy as np
from scipy.linalg import toeplitz


def chebdiff(num_nodes: int) -> Tuple[np.ndarray, np.ndarray]:
    """
    First-derivative matrix on Chebyshev-Gauss-Lobatto points of [-1, 1].

    Uses the trigonometric form of x_k - x_j and the flipping trick for accuracy.

    Args:
        num_nodes: Number of collocation points (>= 2)

    Returns:
        Tuple of (nodes, D) with nodes descending from 1 to -1
    """
    if num_nodes < 2:
        raise ValueError(f"At least two Chebyshev nodes are required, got {num_nodes}")

    n = num_nodes
    n1 = n // 2
    n2 = int(math.ceil(n / 2.0))
    k = np.arange(n).reshape(n, 1)
    th = k * math.pi / (n - 1)

    x = np.sin(math.pi * np.arange(n - 1, -1 - n, -2) / (2.0 * (n - 1)))

    t = np.tile(th / 2.0, n)
    dx = 2 * np.sin(t.T + t) * np.sin(t.T - t)
    dx[n1:, :] = -np.flipud(np.fliplr(dx[:n2, :]))
    np.fill_diagonal(dx, 1.0)
    z = 1.0 / dx
    np.fill_diagonal(z, 0.0)

    c = toeplitz((-1.0) ** k)
    c[0, :] = c[0, :] * 2
    c[-1, :] = c[-1, :] * 2
    c[:, 0] = c[:, 0] / 2
    c[:, -1] = c[:, -1] / 2

    d = z * (c * np.tile(np.ones((n, 1)), n) - np.eye(n))
    np.fill_diagonal(d, -np.sum(d.T, axis=0))
    return x.reshape(n), d


def lobatto_nodes(num_nodes: int, lower: float, upper: float) -> np.ndarray:
    """Chebyshev-Gauss-Lobatto nodes mapped to [lower, upper], descending."""
    x, _ = chebdiff(num_nodes)
    return lower + (x + 1.0) * (upper - lower) / 2.0


def derivative_matrix(num_nodes: int, lower: float, upper: float) -> np.ndarray:
    """Differentiation matrix for nodes mapped to [lower, upper]."""
    _, d = chebdiff(num_nodes)
    return d * (2.0 / (upper - lower))


def barycentric_weights(num_nodes: int) -> np.ndarray:
    """Barycentric weights of the Lobatto points: alternating signs, halved at the ends."""
    w = (-1.0) ** np.arange(num_nodes)
    w[0] *= 0.5
    w[-1] *= 0.5
    return w


def interpolation_vector(nodes: np.ndarray, weights: np.ndarray, x: float) -> np.ndarray:
    """
    Row vector v with sum_j v_j f(x_j) equal to the polynomial interpolant at x.

    Args:
        nodes: Interpolation nodes
        weights: Barycentric weights for the nodes
        x: Evaluation point (may lie outside the node interval)

    Returns:
        Array of interpolation coefficients, same length as nodes
    """
    diff = x - nodes
    exact = np.flatnonzero(diff == 0.0)
    if exact.size:
        v = np.zeros_like(nodes)
        v[exact[0]] = 1.0
        return v
    q = weights / diff
    return q / q.sum()


def tensor_interpolation_vector(
    axes_nodes: Sequence[np.ndarray], axes_weights: Sequence[np.ndarray], point: Sequence[float]
) -> np.ndarray:
    """Flattened (C-order) tensor product of per-axis interpolation vectors."""
    vec = np.ones(1)
    for nodes, weights, x in zip(axes_nodes, axes_weights, point):
        vec = np.outer(vec, interpolation_vector(nodes, weights, float(x))).ravel()
    return vec


def apply_along_axis(matrix: np.ndarray, values: np.ndarray, grid_shape: Tuple[int, ...],
                     axis: int) -> np.ndarray:
    """
    Apply a square matrix along one tensor axis of flattened grid values.

    Args:
        matrix: (N_axis, N_axis) operator
        values: Array of shape (prod(grid_shape), *trailing)
        grid_shape: Per-axis node counts
        axis: Tensor axis to act on

    Returns:
        Array with the same shape as values
    """
    trailing = values.shape[1:]
    tensor = values.reshape(grid_shape + trailing)
    out = np.tensordot(matrix, tensor, axes=([1], [axis]))
    out = np.moveaxis(out, 0, axis)
    return out.reshape(values.shape)
