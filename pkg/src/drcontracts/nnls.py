"""Non-negative least squares by the Lawson-Hanson active-set method."""

from __future__ import annotations

import numpy as np

GRADIENT_TOLERANCE = 1e-10


def _solve_passive(a: np.ndarray, b: np.ndarray, passive: np.ndarray) -> np.ndarray:
    """Unconstrained least squares restricted to the passive columns."""
    cols = a[:, passive]
    gram = cols.T @ cols
    rhs = cols.T @ b
    try:
        return np.linalg.solve(gram, rhs)
    except np.linalg.LinAlgError:
        return np.linalg.lstsq(cols, b, rcond=None)[0]


def nnls(
    a,
    b,
    *,
    tol: float = GRADIENT_TOLERANCE,
    max_iter: int | None = None,
) -> tuple[np.ndarray, float]:
    """Minimize ``||a @ x - b||`` subject to ``x >= 0``.

    Parameters
    ----------
    a : (m, n) array_like
        Design matrix.
    b : (m,) array_like
        Target vector.
    tol : float
        Dual-feasibility tolerance on the gradient ``a.T @ (b - a @ x)``.
    max_iter : int, optional
        Cap on active-set iterations; defaults to ``3 * n``.

    Returns
    -------
    x : (n,) ndarray
        The non-negative solution.
    rnorm : float
        Residual norm ``||a @ x - b||``.

    Notes
    -----
    Deterministic: the entering variable is the one with the largest positive
    gradient, lowest index on ties, so repeated runs produce identical output.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.ndim != 2:
        raise ValueError("a must be a 2-d matrix")
    m, n = a.shape
    if b.shape != (m,):
        raise ValueError(f"b must have shape ({m},), got {b.shape}")
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise ValueError("a and b must be finite")
    if max_iter is None:
        max_iter = max(3 * n, 30)

    x = np.zeros(n)
    passive = np.zeros(n, dtype=bool)
    w = a.T @ (b - a @ x)

    for _ in range(max_iter):
        candidates = ~passive & (w > tol)
        if not candidates.any():
            break
        # argmax returns the first (lowest-index) maximizer
        j = int(np.argmax(np.where(candidates, w, -np.inf)))
        passive[j] = True
        while True:
            s = np.zeros(n)
            s[passive] = _solve_passive(a, b, passive)
            if np.all(s[passive] > 0.0):
                x = s
                break
            # Step toward s until the first passive variable hits zero.
            blocking = passive & (s <= 0.0)
            denom = x[blocking] - s[blocking]
            ratios = np.divide(
                x[blocking],
                denom,
                out=np.zeros_like(denom),
                where=denom > 0.0,
            )
            step = float(ratios.min())
            x = x + step * (s - x)
            drop = passive & (x <= tol)
            x[drop] = 0.0
            passive[drop] = False
            if not passive.any():
                break
        w = a.T @ (b - a @ x)

    residual = b - a @ x
    return x, float(np.linalg.norm(residual))
