"""Linear operators with forward/adjoint products and spectral-norm estimates.

Every stepsize condition in the package is phrased through the largest
singular value ``sigma = sqrt(||A A^T||)`` of the coupling operator, so each
:class:`LinearMap` carries a write-once cache for it.
"""

import logging
import warnings

import numpy as np

logger = logging.getLogger(__name__)

__all__ = [
    "LinearMap",
    "ShapeError",
    "SpectralNormWarning",
    "dense",
    "identity",
    "diagonal",
    "difference_matrix",
    "zero_map",
    "load_matrix_csv",
    "save_matrix_csv",
    "apply",
    "apply_adjoint",
    "estimate_spectral_norm",
]


class ShapeError(ValueError):
    """Raised when a vector does not match the operator dimensions."""


class SpectralNormWarning(RuntimeWarning):
    """Power iteration hit ``max_iter`` before reaching ``tol``."""


_KINDS = ("dense", "difference", "identity", "diagonal", "zero")


class LinearMap:
    """A linear map ``R^cols -> R^rows``.

    Parameters
    ----------
    rows, cols : int
        Output and input dimension. Both must be positive.
    kind : {'dense', 'difference', 'identity', 'diagonal', 'zero'}
        Representation. ``'difference'`` is the first-difference stencil
        ``(Bv)_i = v_{i+1} - v_i`` and is never materialized.
    data : ndarray, optional
        The matrix for ``'dense'``, the diagonal entries for ``'diagonal'``.
    """

    __slots__ = ("rows", "cols", "kind", "_data", "_sigma")

    def __init__(self, rows, cols, kind, data=None):
        rows, cols = int(rows), int(cols)
        if rows <= 0 or cols <= 0:
            raise ShapeError(f"degenerate operator shape ({rows}, {cols})")
        if kind not in _KINDS:
            raise ValueError(f"unknown operator kind {kind!r}")
        if kind == "dense":
            data = np.array(data, dtype=float)
            if data.shape != (rows, cols):
                raise ShapeError(f"matrix shape {data.shape} != ({rows}, {cols})")
            data.setflags(write=False)
        elif kind == "diagonal":
            data = np.array(data, dtype=float).ravel()
            if rows != cols or data.shape != (rows,):
                raise ShapeError("diagonal operator needs rows == cols == len(diag)")
            data.setflags(write=False)
        elif kind == "difference" and rows != cols - 1:
            raise ShapeError("difference operator must be (n-1) x n")
        elif kind == "identity" and rows != cols:
            raise ShapeError("identity operator must be square")
        self.rows = rows
        self.cols = cols
        self.kind = kind
        self._data = data
        self._sigma = None

    def __repr__(self):
        return f"LinearMap({self.rows}x{self.cols}, kind={self.kind!r})"

    @property
    def shape(self):
        return (self.rows, self.cols)

    @property
    def matrix(self):
        """Materialized matrix (for tests and serialization of small maps)."""
        if self.kind == "dense":
            return self._data
        if self.kind == "identity":
            return np.eye(self.rows)
        if self.kind == "diagonal":
            return np.diag(self._data)
        if self.kind == "zero":
            return np.zeros((self.rows, self.cols))
        out = np.zeros((self.rows, self.cols))
        idx = np.arange(self.rows)
        out[idx, idx] = -1.0
        out[idx, idx + 1] = 1.0
        return out

    @property
    def is_zero(self):
        return self.kind == "zero"

    def _check(self, v, n, what):
        v = np.asarray(v, dtype=float)
        if v.ndim != 1 or v.shape[0] != n:
            raise ShapeError(f"{what} expects a vector of length {n}, got shape {v.shape}")
        return v

    def apply(self, v):
        v = self._check(v, self.cols, "apply")
        if self.kind == "dense":
            return self._data @ v
        if self.kind == "difference":
            return v[1:] - v[:-1]
        if self.kind == "identity":
            return v.copy()
        if self.kind == "diagonal":
            return self._data * v
        return np.zeros(self.rows)

    def apply_adjoint(self, w):
        w = self._check(w, self.rows, "apply_adjoint")
        if self.kind == "dense":
            return self._data.T @ w
        if self.kind == "difference":
            out = np.zeros(self.cols)
            out[:-1] -= w
            out[1:] += w
            return out
        if self.kind == "identity":
            return w.copy()
        if self.kind == "diagonal":
            return self._data * w
        return np.zeros(self.cols)

    __call__ = apply

    @property
    def T(self):
        return _Adjoint(self)

    def exact_sigma(self):
        """Closed-form operator norm for structured maps, ``None`` for dense."""
        if self.kind == "identity":
            return 1.0
        if self.kind == "zero":
            return 0.0
        if self.kind == "diagonal":
            return float(np.max(np.abs(self._data)))
        if self.kind == "difference":
            n = self.cols
            # top eigenvalue of the path-graph Laplacian B^T B
            return float(np.sqrt(2.0 - 2.0 * np.cos((n - 1) * np.pi / n)))
        return None

    @property
    def sigma(self):
        """Operator 2-norm; closed form when available, else power iteration."""
        if self._sigma is None:
            exact = self.exact_sigma()
            if exact is not None:
                self._sigma = exact
            else:
                estimate_spectral_norm(self)
        return self._sigma

    @property
    def cached_sigma(self):
        return self._sigma


class _Adjoint:
    __slots__ = ("op",)

    def __init__(self, op):
        self.op = op

    def __call__(self, w):
        return self.op.apply_adjoint(w)


def dense(matrix):
    matrix = np.atleast_2d(np.asarray(matrix, dtype=float))
    return LinearMap(matrix.shape[0], matrix.shape[1], "dense", matrix)


def identity(n):
    return LinearMap(n, n, "identity")


def diagonal(*diag):
    """``diagonal(3, 1)`` or ``diagonal([3, 1])``."""
    if len(diag) == 1:
        diag = np.atleast_1d(diag[0])
    d = np.asarray(diag, dtype=float)
    return LinearMap(d.size, d.size, "diagonal", d)


def difference_matrix(n):
    """The ``(n-1) x n`` forward-difference operator, stored as a stencil."""
    if int(n) < 2:
        raise ValueError("difference_matrix needs n >= 2")
    return LinearMap(int(n) - 1, int(n), "difference")


def zero_map(rows, cols):
    return LinearMap(rows, cols, "zero")


def load_matrix_csv(path):
    """Read a row-major comma-separated matrix file into a dense map."""
    mat = np.loadtxt(path, delimiter=",", ndmin=2)
    return dense(mat)


def save_matrix_csv(path, op):
    mat = op.matrix if isinstance(op, LinearMap) else np.atleast_2d(op)
    np.savetxt(path, mat, delimiter=",", fmt="%.17g")


def apply(op, v):
    return op.apply(v)


def apply_adjoint(op, w):
    return op.apply_adjoint(w)


def estimate_spectral_norm(op, tol=1e-8, max_iter=5000, seed=0):
    """Largest singular value of `op` by power iteration.

    Iterates on ``A^T A`` or ``A A^T`` (whichever is smaller) from a seeded
    Gaussian start. Stops when the relative change of the estimate drops
    below `tol`; if that never happens a :class:`SpectralNormWarning` is
    issued and the last estimate is returned. The result is stored in the
    operator cache unless a value is already cached.
    """
    if tol <= 0 or max_iter < 1:
        raise ValueError("need tol > 0 and max_iter >= 1")
    rng = np.random.default_rng(seed)
    if op.rows < op.cols:
        # A A^T on the row space
        def gram(w):
            return op.apply(op.apply_adjoint(w))
        v = rng.standard_normal(op.rows)
    else:
        def gram(w):
            return op.apply_adjoint(op.apply(w))
        v = rng.standard_normal(op.cols)
    v /= np.linalg.norm(v)
    est = 0.0
    converged = False
    for it in range(max_iter):
        w = gram(v)
        lam = float(v @ w)
        nw = np.linalg.norm(w)
        if nw == 0.0:
            est, converged = 0.0, True
            break
        new = float(np.sqrt(max(lam, 0.0)))
        v = w / nw
        if it > 0 and abs(new - est) <= tol * new:
            est, converged = new, True
            break
        est = new
    if not converged:
        warnings.warn(
            f"power iteration did not reach tol={tol:g} in {max_iter} iterations",
            SpectralNormWarning,
            stacklevel=2,
        )
    else:
        logger.debug("spectral norm %.12g after %d iterations", est, it + 1)
    if op._sigma is None:
        op._sigma = est
    return est
