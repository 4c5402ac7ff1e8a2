import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .errors import SingularSelectionError

#: Smallest admissible Cholesky pivot, relative to the largest Gram diagonal.
GRAM_RTOL = 1e-12


class Gram:
    """Cholesky factor of ``X.T @ X`` with reproducible singularity detection.

    A pivot ``L_ii**2`` below ``GRAM_RTOL * max(diag(G))`` is treated as a
    rank deficiency.
    """

    def __init__(self, X, what="active set"):
        X = np.asarray(X, dtype=float)
        self.size = X.shape[1]
        G = X.T @ X
        self.gram = G
        if self.size == 0:
            self._factor = None
            return
        scale = float(np.max(np.diag(G)))
        if not np.isfinite(scale) or scale <= 0.0:
            raise SingularSelectionError(f"Gram matrix of {what} has a zero column")
        try:
            factor = cho_factor(G, lower=True, check_finite=False)
        except np.linalg.LinAlgError as exc:
            raise SingularSelectionError(f"Gram matrix of {what} is singular") from exc
        pivots = np.diag(factor[0]) ** 2
        if np.min(pivots) < GRAM_RTOL * scale:
            raise SingularSelectionError(
                f"Gram matrix of {what} is singular "
                f"(pivot {np.min(pivots):.3e} < {GRAM_RTOL:.0e} x {scale:.3e})"
            )
        self._factor = factor

    def solve(self, rhs):
        rhs = np.asarray(rhs, dtype=float)
        if self.size == 0:
            return np.zeros((0,) + rhs.shape[1:])
        return cho_solve(self._factor, rhs, check_finite=False)
