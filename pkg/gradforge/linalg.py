"""Dense vector and matrix operations used by the forward and backward passes.

Vectors are 1-D float64 arrays, matrices 2-D C-ordered (row-major) float64
arrays, so ``W[j, k]`` is the weight from neuron ``k`` of the previous layer
into neuron ``j``. Nothing here broadcasts: every shape mismatch raises
:class:`ShapeError`.
"""
import numpy as np
import numpy.typing as npt

from .errors import ShapeError

Vector = npt.NDArray[np.float64]
Matrix = npt.NDArray[np.float64]


def as_vector(values, name="vector"):
    v = np.asarray(values, dtype=np.float64)
    if v.ndim != 1 or v.size == 0:
        raise ShapeError(f"{name} must be a nonempty 1-D array, got shape {v.shape}")
    return v


def as_matrix(values, name="matrix"):
    m = np.ascontiguousarray(values, dtype=np.float64)
    if m.ndim != 2 or m.size == 0:
        raise ShapeError(f"{name} must be a nonempty 2-D array, got shape {m.shape}")
    return m


def matvec(W, a):
    """W a."""
    if W.ndim != 2 or a.ndim != 1 or W.shape[1] != a.shape[0]:
        raise ShapeError(f"matvec: W has shape {W.shape}, a has shape {a.shape}")
    return W @ a


def transpose_matvec(W, d):
    """W^T d, the action that carries deltas one layer back."""
    if W.ndim != 2 or d.ndim != 1 or W.shape[0] != d.shape[0]:
        raise ShapeError(f"transpose_matvec: W has shape {W.shape}, d has shape {d.shape}")
    return W.T @ d


def hadamard(x, y):
    """Componentwise product."""
    if x.shape != y.shape:
        raise ShapeError(f"hadamard: shapes {x.shape} and {y.shape} differ")
    return x * y


def outer(u, v):
    return np.outer(u, v)


def sq_norm(v):
    """Squared Euclidean norm. For matrices this is the squared Frobenius norm."""
    return float(np.vdot(v, v))


def diag(v):
    return np.diag(v)
