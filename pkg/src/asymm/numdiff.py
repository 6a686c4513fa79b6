"""Central finite-difference helpers.

Used as the independent cross-check against every analytic gradient in the
package, and by the strong-convexity diagnostic. Never on the solve path.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

Array = np.ndarray


def central_gradient(fun: Callable[[Array], float], x: Array, step: float = 1e-6) -> Array:
    x = np.asarray(x, dtype=float)
    grad = np.zeros_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = step
        grad[i] = (fun(x + e) - fun(x - e)) / (2.0 * step)
    return grad


def central_jacobian(fun: Callable[[Array], Array], x: Array, step: float = 1e-6) -> Array:
    """Jacobian with shape ``(len(x), len(fun(x)))``: columns are component gradients."""
    x = np.asarray(x, dtype=float)
    f0 = np.asarray(fun(x), dtype=float)
    jac = np.zeros((x.size, f0.size))
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = step
        jac[i, :] = (np.asarray(fun(x + e)) - np.asarray(fun(x - e))) / (2.0 * step)
    return jac


def hessian_from_gradient(grad: Callable[[Array], Array], x: Array, step: float = 1e-5) -> Array:
    """Symmetrized finite-difference Hessian from an analytic gradient."""
    x = np.asarray(x, dtype=float)
    n = x.size
    hess = np.zeros((n, n))
    for i in range(n):
        e = np.zeros_like(x)
        e[i] = step
        hess[:, i] = (np.asarray(grad(x + e)) - np.asarray(grad(x - e))) / (2.0 * step)
    return 0.5 * (hess + hess.T)


def gradient_mismatch(analytic: Array, numeric: Array) -> float:
    """Relative disagreement, guarded against near-zero gradients."""
    analytic = np.asarray(analytic, dtype=float)
    numeric = np.asarray(numeric, dtype=float)
    return float(np.linalg.norm(analytic - numeric) / max(1.0, np.linalg.norm(numeric)))
