"""Small dense numerical kernels.

Three routines carry the rest of the package:

* :func:`sv_product` -- product of the singular values of a wide matrix,
  i.e. ``sqrt(det(M @ M.T))``, used as the differentiability metric when
  designing acquisition sequences.
* :func:`nnls` -- Lawson-Hanson active-set nonnegative least squares, used
  for unmixing.
* :func:`linear_fit` -- ordinary least-squares line with R^2, used for
  calibration.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ConvergenceError, ShapeError, ValidationError

__all__ = [
    "LineFit",
    "as_dense",
    "gram_determinant",
    "sv_product",
    "nnls",
    "linear_fit",
]

# determinant values below this are reported as exactly zero
DET_ABS_TOL = 1e-30


def as_dense(M, name="matrix"):
    """Validate and return ``M`` as a finite 2-D float array."""
    A = np.asarray(M, dtype=float)
    if A.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got shape {A.shape}")
    if A.shape[0] < 1 or A.shape[1] < 1:
        raise ShapeError(f"{name} must have at least one row and column")
    if not np.all(np.isfinite(A)):
        raise ValidationError(f"{name} contains non-finite entries")
    return A


def _gram_det_batch(stack):
    """det(M M^T) for a stack of wide matrices, shape (..., k, n) with k <= n.

    The Gram determinant is evaluated as prod(diag(R))**2 where R comes from
    a Householder QR of M^T.  Forming M M^T explicitly squares the condition
    number and loses about half the significant digits on nearly dependent
    rows; the orthogonal factorization does not.
    """
    stack = np.asarray(stack, dtype=float)
    k, n = stack.shape[-2:]
    R = np.linalg.qr(np.swapaxes(stack, -1, -2), mode="r")
    diag = np.abs(np.diagonal(R, axis1=-2, axis2=-1))
    det = np.prod(diag * diag, axis=-1)
    # rank-deficiency threshold, relative to Hadamard's bound prod ||row||^2
    row_sq = np.sum(stack * stack, axis=-1)
    bound = np.prod(row_sq, axis=-1)
    rel = (max(k, n) * np.finfo(float).eps) ** 2
    tiny = (det <= DET_ABS_TOL) | (det <= rel * bound)
    return np.where(tiny, 0.0, det)


def gram_determinant(M):
    """Return ``det(M @ M.T)`` (the D-optimality criterion), clamped at 0.

    Raises
    ------
    ShapeError
        If ``M`` has more rows than columns.
    """
    A = as_dense(M)
    if A.shape[0] > A.shape[1]:
        raise ShapeError(
            f"need rows <= cols for a Gram determinant, got {A.shape}"
        )
    return float(_gram_det_batch(A))


def sv_product(M):
    """Product of the singular values of a matrix with ``rows <= cols``.

    Equal to ``sqrt(det(M @ M.T))``. Returns 0.0 when the rows are linearly
    dependent to working precision.

    Parameters
    ----------
    M : array_like, shape (k, n)
        Matrix with ``k <= n``; rows are signals, columns are samples.

    Returns
    -------
    float
        Nonnegative product of the ``k`` singular values.

    Examples
    --------
    >>> sv_product([[1.0, 1.0], [1.0, -1.0]])
    2.0
    """
    return float(np.sqrt(gram_determinant(M)))


def sv_product_batch(stack):
    """Vectorized :func:`sv_product` over a stack of shape (b, k, n)."""
    stack = np.asarray(stack, dtype=float)
    if stack.ndim != 3:
        raise ShapeError("expected a (batch, rows, cols) stack")
    if stack.shape[1] > stack.shape[2]:
        raise ShapeError(f"need rows <= cols, got {stack.shape[1:]}")
    return np.sqrt(_gram_det_batch(stack))


def nnls(A, y, max_iter=None, tol=None):
    """Solve ``min ||A c - y||_2`` subject to ``c >= 0``.

    Lawson-Hanson active-set method. Variables move from the zero set to the
    passive set one at a time (largest positive dual first); the inner loop
    interpolates back to feasibility whenever an unconstrained passive-set
    solve goes nonpositive.

    Parameters
    ----------
    A : array_like, shape (m, n)
    y : array_like, shape (m,)
    max_iter : int, optional
        Cap on outer iterations. Default ``3 * n``.
    tol : float, optional
        Dual-feasibility tolerance. Default ``1e-8 * max|A^T y|``.

    Returns
    -------
    c : ndarray, shape (n,)
        Nonnegative minimizer.

    Raises
    ------
    ValidationError
        Non-finite input or mismatched lengths.
    ConvergenceError
        The cap was reached; ``exc.best`` holds the last feasible iterate.
    """
    A = as_dense(A, "A")
    y = np.asarray(y, dtype=float)
    if y.ndim != 1 or y.shape[0] != A.shape[0]:
        raise ShapeError(f"y must have length {A.shape[0]}, got shape {y.shape}")
    if not np.all(np.isfinite(y)):
        raise ValidationError("y contains non-finite entries")
    m, n = A.shape
    if max_iter is None:
        max_iter = 3 * n
    Aty = A.T @ y
    if tol is None:
        tol = 1e-8 * float(np.max(np.abs(Aty)))

    x = np.zeros(n)
    passive = np.zeros(n, dtype=bool)
    w = Aty.copy()
    outer = 0
    while not passive.all() and np.max(np.where(passive, -np.inf, w)) > tol:
        if outer >= max_iter:
            raise ConvergenceError(
                f"nnls did not converge in {max_iter} iterations", best=x.copy()
            )
        outer += 1
        t = int(np.argmax(np.where(passive, -np.inf, w)))
        passive[t] = True
        z = _passive_solve(A, y, passive)
        # inner loop: step back toward x until every passive entry is positive
        while np.any(z[passive] <= 0.0):
            idx = np.flatnonzero(passive & (z <= 0.0))
            gap = x[idx] - z[idx]
            ratios = np.divide(x[idx], gap, out=np.zeros_like(gap), where=gap > 0)
            k = int(np.argmin(ratios))
            x = x + ratios[k] * (z - x)
            # the blocking index always leaves, whatever rounding says
            x[idx[k]] = 0.0
            passive &= x > 0.0
            x[~passive] = 0.0
            z = _passive_solve(A, y, passive)
        x = z
        w = A.T @ (y - A @ x)
    return x


def _passive_solve(A, y, passive):
    z = np.zeros(A.shape[1])
    if passive.any():
        z[passive] = np.linalg.lstsq(A[:, passive], y, rcond=None)[0]
    return z


@dataclass(frozen=True)
class LineFit:
    """Least-squares line ``y = slope * x + intercept``."""

    slope: float
    intercept: float
    r_squared: float

    def predict(self, x):
        return self.slope * np.asarray(x, dtype=float) + self.intercept

    def invert(self, y):
        """Map a y value back to x; requires a nonzero slope."""
        if self.slope == 0.0:
            raise ValidationError("cannot invert a line with zero slope")
        return (np.asarray(y, dtype=float) - self.intercept) / self.slope

    def to_dict(self):
        return {
            "slope": self.slope,
            "intercept": self.intercept,
            "r_squared": self.r_squared,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(float(d["slope"]), float(d["intercept"]), float(d["r_squared"]))


def linear_fit(x, y):
    """Ordinary least-squares line through ``(x, y)`` with R^2.

    When ``y`` is constant the total sum of squares vanishes; R^2 is then
    defined as 1 (the fitted constant explains the data exactly).

    Raises
    ------
    ValidationError
        Fewer than two points, length mismatch, non-finite values, or all
        ``x`` identical.
    """
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if x.shape != y.shape:
        raise ShapeError(f"x and y lengths differ: {x.size} vs {y.size}")
    if x.size < 2:
        raise ValidationError("need at least two points for a line fit")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise ValidationError("non-finite values in line fit input")
    xm, ym = x.mean(), y.mean()
    dx, dy = x - xm, y - ym
    sxx = float(dx @ dx)
    if sxx <= (np.finfo(float).eps * max(1.0, float(np.max(np.abs(x))))) ** 2 * x.size:
        raise ValidationError("all x values are identical; slope is undefined")
    slope = float(dx @ dy) / sxx
    intercept = ym - slope * xm
    resid = y - (slope * x + intercept)
    ss_res = float(resid @ resid)
    ss_tot = float(dy @ dy)
    scale = max(1.0, float(np.max(np.abs(y)))) ** 2 * x.size
    if ss_tot <= 1e-24 * scale:
        r2 = 1.0
    else:
        r2 = min(1.0, max(0.0, 1.0 - ss_res / ss_tot))
    return LineFit(float(slope), float(intercept), float(r2))
