"""Central finite-difference derivatives for validating the AD sweep.

These routines evaluate objectives on plain floats only, independent of the
operator-overloading path they are used to check.  One Richardson
extrapolation step (combining steps h and h/2) cancels the leading h^2
truncation term, so the oracle stays trustworthy at the 1e-6 level even on
wide variable ranges where a single central difference would not be.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

__all__ = [
    "fd_gradient",
    "fd_hessian",
    "max_relative_error",
]


def _steps(x: np.ndarray, h: float) -> np.ndarray:
    return h * np.maximum(1.0, np.abs(x))


def _central_gradient(f: Callable, x: np.ndarray, hs: np.ndarray) -> np.ndarray:
    grad = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = hs[i]
        grad[i] = (f(x + e) - f(x - e)) / (2.0 * hs[i])
    return grad


def fd_gradient(f: Callable, x, h: float = 1e-5) -> np.ndarray:
    """Richardson-extrapolated central gradient, step h*max(1, |x_i|)."""
    x = np.asarray(x, dtype=float)
    hs = _steps(x, h)
    coarse = _central_gradient(f, x, hs)
    fine = _central_gradient(f, x, 0.5 * hs)
    return (4.0 * fine - coarse) / 3.0


def _central_hessian(f: Callable, x: np.ndarray, hs: np.ndarray) -> np.ndarray:
    n = x.size
    hess = np.empty((n, n))
    f0 = f(x)
    for i in range(n):
        ei = np.zeros(n)
        ei[i] = hs[i]
        hess[i, i] = (f(x + ei) - 2.0 * f0 + f(x - ei)) / hs[i] ** 2
        for j in range(i + 1, n):
            ej = np.zeros(n)
            ej[j] = hs[j]
            mixed = (
                f(x + ei + ej) - f(x + ei - ej) - f(x - ei + ej) + f(x - ei - ej)
            ) / (4.0 * hs[i] * hs[j])
            hess[i, j] = mixed
            hess[j, i] = mixed
    return hess


def fd_hessian(f: Callable, x, h: float = 1e-3) -> np.ndarray:
    """Richardson-extrapolated second-order central Hessian.

    The default step is larger than the gradient's because the second
    difference divides by h^2: for objective magnitudes in the thousands a
    1e-4 step would sit below the roundoff floor eps*|f|/h^2.
    """
    x = np.asarray(x, dtype=float)
    hs = _steps(x, h)
    coarse = _central_hessian(f, x, hs)
    fine = _central_hessian(f, x, 0.5 * hs)
    return (4.0 * fine - coarse) / 3.0


def max_relative_error(approx: np.ndarray, reference: np.ndarray) -> float:
    """Largest entrywise deviation scaled by max(1, largest reference entry)."""
    approx = np.asarray(approx, dtype=float)
    reference = np.asarray(reference, dtype=float)
    scale = max(1.0, float(np.max(np.abs(reference))) if reference.size else 0.0)
    return float(np.max(np.abs(approx - reference))) / scale
