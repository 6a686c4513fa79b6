"""Node-local optimization problems and the benchmark instance builders.

A :class:`LocalProblem` bundles one node's private objective and constraint
evaluators together with sizing metadata. Evaluators are plain callables
returning fresh arrays, so problems are safe to evaluate from anywhere.

Two benchmark families are provided: range-based source localization with
annular (crown) constraint sets, and a small tanh network trained as a
nonlinear classifier. A third, unconstrained quadratic family exists for
tests that need known curvature.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

Array = np.ndarray

# Decision-variable layout of the classifier network: 2-4-2-1 units with
# biases on every layer.
NN_LAYER_SIZES = (2, 4, 2, 1)
NN_DIM = 25


@dataclass(kw_only=True)
class LocalProblem:
    """One node's private objective f, equalities h and inequalities g.

    ``jac_h`` / ``jac_g`` return ``(dim_x, m)`` arrays whose columns are the
    gradients of the individual constraint components. ``hessian_bound``,
    when set, upper-bounds the spectral norm of every Hessian of f and of
    each constraint component; leave it ``None`` when no global bound exists
    (descent steps then fall back to adaptive step-size search).
    """

    dim_x: int
    m_eq: int
    m_ineq: int
    f: Callable[[Array], float]
    grad_f: Callable[[Array], Array]
    h: Callable[[Array], Array] | None = None
    jac_h: Callable[[Array], Array] | None = None
    g: Callable[[Array], Array] | None = None
    jac_g: Callable[[Array], Array] | None = None
    hessian_bound: float | None = None

    def __post_init__(self):
        if self.dim_x < 1:
            raise ValueError("dim_x must be positive")
        if self.m_eq < 0 or self.m_ineq < 0:
            raise ValueError("constraint counts must be nonnegative")
        if self.m_eq > 0 and (self.h is None or self.jac_h is None):
            raise ValueError("m_eq > 0 requires h and jac_h evaluators")
        if self.m_ineq > 0 and (self.g is None or self.jac_g is None):
            raise ValueError("m_ineq > 0 requires g and jac_g evaluators")
        if self.hessian_bound is not None and self.hessian_bound < 0:
            raise ValueError("hessian_bound must be nonnegative")

    def _check_x(self, x: Array) -> Array:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dim_x,):
            raise ValueError(f"expected x of shape ({self.dim_x},), got {x.shape}")
        return x

    def objective(self, x: Array) -> float:
        return float(self.f(self._check_x(x)))

    def objective_grad(self, x: Array) -> Array:
        out = np.asarray(self.grad_f(self._check_x(x)), dtype=float)
        if out.shape != (self.dim_x,):
            raise ValueError("objective gradient has wrong shape")
        return out

    def constraints(self, x: Array) -> tuple[Array, Array]:
        """Return stacked equality and inequality values ``(h, g)``."""
        x = self._check_x(x)
        h = np.zeros(0) if self.h is None else np.asarray(self.h(x), dtype=float)
        g = np.zeros(0) if self.g is None else np.asarray(self.g(x), dtype=float)
        if h.shape != (self.m_eq,):
            raise ValueError(f"h returned shape {h.shape}, declared m_eq={self.m_eq}")
        if g.shape != (self.m_ineq,):
            raise ValueError(f"g returned shape {g.shape}, declared m_ineq={self.m_ineq}")
        return h, g

    def constraint_jacobians(self, x: Array) -> tuple[Array, Array]:
        """Return ``(dim_x, m_eq)`` and ``(dim_x, m_ineq)`` Jacobian matrices."""
        x = self._check_x(x)
        jh = (np.zeros((self.dim_x, 0)) if self.jac_h is None
              else np.asarray(self.jac_h(x), dtype=float))
        jg = (np.zeros((self.dim_x, 0)) if self.jac_g is None
              else np.asarray(self.jac_g(x), dtype=float))
        if jh.shape != (self.dim_x, self.m_eq):
            raise ValueError(f"jac_h returned shape {jh.shape}")
        if jg.shape != (self.dim_x, self.m_ineq):
            raise ValueError(f"jac_g returned shape {jg.shape}")
        return jh, jg


@dataclass(kw_only=True)
class LocalizationProblem(LocalProblem):
    """Crown-constrained node of the source localization benchmark.

    Feasible set is the annulus ``inner_radius <= |x - anchor| <= outer_radius``
    (nonconvex for inner_radius > 0); objective is ``x . x``.
    """

    anchor: Array
    inner_radius: float
    outer_radius: float

    def __post_init__(self):
        super().__post_init__()
        if not 0.0 <= self.inner_radius <= self.outer_radius:
            raise ValueError("need 0 <= inner_radius <= outer_radius")


@dataclass(kw_only=True)
class NnClassifierProblem(LocalProblem):
    """Sum-of-squares classification loss over a node's private samples."""

    points: Array   # (m, 2)
    labels: Array   # (m,) in {-1, +1}


# --------------------------------------------------------------------------
# classifier network
# --------------------------------------------------------------------------

def unpack_weights(x: Array) -> tuple[Array, Array, Array, Array, Array, float]:
    """Split the 25-vector into (w1, b1, w2, b2, w3, b3)."""
    x = np.asarray(x, dtype=float)
    if x.shape != (NN_DIM,):
        raise ValueError(f"expected shape ({NN_DIM},), got {x.shape}")
    w1 = x[0:8].reshape(2, 4)
    b1 = x[8:12]
    w2 = x[12:20].reshape(4, 2)
    b2 = x[20:22]
    w3 = x[22:24].reshape(2, 1)
    b3 = float(x[24])
    return w1, b1, w2, b2, w3, b3


def pack_weights(w1, b1, w2, b2, w3, b3) -> Array:
    """Inverse of :func:`unpack_weights` (exact round trip)."""
    return np.concatenate([
        np.asarray(w1, dtype=float).reshape(8),
        np.asarray(b1, dtype=float).reshape(4),
        np.asarray(w2, dtype=float).reshape(8),
        np.asarray(b2, dtype=float).reshape(2),
        np.asarray(w3, dtype=float).reshape(2),
        np.atleast_1d(np.asarray(b3, dtype=float)).reshape(1),
    ])


def nn_forward(z: Array, x: Array) -> float:
    """Network output in (-1, 1) for a single input point."""
    return float(nn_forward_many(np.asarray(z, dtype=float).reshape(1, 2), x)[0])


def nn_forward_many(points: Array, x: Array) -> Array:
    """Vectorized network output for a ``(m, 2)`` batch of points."""
    w1, b1, w2, b2, w3, b3 = unpack_weights(x)
    pts = np.asarray(points, dtype=float)
    l1 = np.tanh(pts @ w1 + b1)            # (m, 4)
    l2 = np.tanh(l1 @ w2 + b2)             # (m, 2)
    return np.tanh(l2 @ w3[:, 0] + b3)     # (m,)


def nn_loss(x: Array, points: Array, labels: Array) -> float:
    out = nn_forward_many(points, x)
    r = out - np.asarray(labels, dtype=float)
    return float(r @ r)


def nn_loss_grad(x: Array, points: Array, labels: Array) -> Array:
    """Exact gradient of :func:`nn_loss` via backpropagation."""
    w1, b1, w2, b2, w3, b3 = unpack_weights(x)
    pts = np.asarray(points, dtype=float)
    y = np.asarray(labels, dtype=float)

    l1 = np.tanh(pts @ w1 + b1)
    l2 = np.tanh(l1 @ w2 + b2)
    out = np.tanh(l2 @ w3[:, 0] + b3)

    # residual of the squared loss, then chain through the tanh layers
    d3 = 2.0 * (out - y) * (1.0 - out * out)          # (m,)
    gw3 = l2.T @ d3                                    # (2,)
    gb3 = float(np.sum(d3))
    d2 = np.outer(d3, w3[:, 0]) * (1.0 - l2 * l2)      # (m, 2)
    gw2 = l1.T @ d2                                    # (4, 2)
    gb2 = d2.sum(axis=0)
    d1 = (d2 @ w2.T) * (1.0 - l1 * l1)                 # (m, 4)
    gw1 = pts.T @ d1                                   # (2, 4)
    gb1 = d1.sum(axis=0)
    return pack_weights(gw1, gb1, gw2, gb2, gw3.reshape(2, 1), gb3)


# --------------------------------------------------------------------------
# benchmark builders
# --------------------------------------------------------------------------

# Below this distance from the anchor the crown constraint gradient is taken
# as zero: the norm is nonsmooth only at that single point and iterates never
# land there, but the guard keeps evaluations NaN-free.
_ANCHOR_GUARD = 1e-12


def _make_localization(anchor: Array, r: float, big_r: float) -> LocalizationProblem:
    anchor = np.asarray(anchor, dtype=float)

    def g(x):
        d = float(np.linalg.norm(x - anchor))
        return np.array([d - big_r, r - d])

    def jac_g(x):
        diff = x - anchor
        d = float(np.linalg.norm(diff))
        u = np.zeros_like(diff) if d < _ANCHOR_GUARD else diff / d
        return np.column_stack([u, -u])

    return LocalizationProblem(
        dim_x=anchor.shape[0], m_eq=0, m_ineq=2,
        f=lambda x: float(x @ x), grad_f=lambda x: 2.0 * x,
        g=g, jac_g=jac_g,
        anchor=anchor, inner_radius=r, outer_radius=big_r,
    )


def build_localization_instance(seed: int, n_nodes: int, *, box: float = 2.5,
                                kappa_max: float = 0.3, dim: int = 2,
                                ) -> tuple[list[LocalizationProblem], Array]:
    """Draw a random localization instance.

    The source and the anchors are uniform in ``[-box, box]^dim``; each node
    measures its distance to the source with uniform noise ``|w_i| <= kappa_i``
    and ``kappa_i`` uniform in ``[0, kappa_max]``. Returns the per-node
    problems and the true source position, which is feasible for every crown
    by construction.
    """
    if n_nodes < 1:
        raise ValueError("n_nodes must be >= 1")
    rng = np.random.default_rng(seed)
    x_star = rng.uniform(-box, box, size=dim)
    problems = []
    for _ in range(n_nodes):
        c = rng.uniform(-box, box, size=dim)
        kappa = float(rng.uniform(0.0, kappa_max))
        w = float(rng.uniform(-kappa, kappa))
        y = float(np.linalg.norm(x_star - c)) + w
        # y - kappa can dip below zero when the anchor sits near the source;
        # clamping keeps the crown well formed and never excludes the source.
        problems.append(_make_localization(c, max(0.0, y - kappa), y + kappa))
    return problems, x_star


def build_nn_problems(points: Array, labels: Array, n_nodes: int) -> list[NnClassifierProblem]:
    """Split a labeled dataset evenly across nodes (contiguous slices)."""
    points = np.asarray(points, dtype=float)
    labels = np.asarray(labels, dtype=float)
    m = points.shape[0]
    if m % n_nodes != 0:
        raise ValueError("dataset size must be divisible by n_nodes")
    per = m // n_nodes
    problems = []
    for i in range(n_nodes):
        zi = points[i * per:(i + 1) * per]
        yi = labels[i * per:(i + 1) * per]
        problems.append(NnClassifierProblem(
            dim_x=NN_DIM, m_eq=0, m_ineq=0,
            f=lambda x, zi=zi, yi=yi: nn_loss(x, zi, yi),
            grad_f=lambda x, zi=zi, yi=yi: nn_loss_grad(x, zi, yi),
            points=zi, labels=yi,
        ))
    return problems


def build_quadratic_problems(seed: int, n_nodes: int, dim: int,
                             ) -> list[LocalProblem]:
    """Random well-conditioned quadratics ``0.5 x'Qx + b'x`` with known curvature."""
    rng = np.random.default_rng(seed)
    problems = []
    for _ in range(n_nodes):
        a = rng.normal(size=(dim, dim))
        q = a @ a.T + np.eye(dim)
        b = rng.normal(size=dim)
        bound = float(np.linalg.norm(q, 2))
        problems.append(LocalProblem(
            dim_x=dim, m_eq=0, m_ineq=0,
            f=lambda x, q=q, b=b: float(0.5 * x @ q @ x + b @ x),
            grad_f=lambda x, q=q, b=b: q @ x + b,
            hessian_bound=bound,
        ))
    return problems


# --------------------------------------------------------------------------
# classifier datasets
# --------------------------------------------------------------------------

def two_moons(seed: int, n_points: int, noise: float = 0.1) -> tuple[Array, Array]:
    """Two interleaved half circles; labels -1 (lower moon) and +1 (upper)."""
    rng = np.random.default_rng(seed)
    n_up = n_points // 2
    n_lo = n_points - n_up
    t_up = rng.uniform(0.0, np.pi, size=n_up)
    t_lo = rng.uniform(0.0, np.pi, size=n_lo)
    upper = np.column_stack([np.cos(t_up), np.sin(t_up)])
    lower = np.column_stack([1.0 - np.cos(t_lo), 0.5 - np.sin(t_lo)])
    pts = np.vstack([upper, lower]) + rng.normal(scale=noise, size=(n_points, 2))
    labels = np.concatenate([np.ones(n_up), -np.ones(n_lo)])
    order = rng.permutation(n_points)
    return pts[order], labels[order]


def nested_circles(seed: int, n_points: int, noise: float = 0.1,
                   radii: tuple[float, float] = (1.0, 2.0)) -> tuple[Array, Array]:
    """Two concentric circles; inner circle labeled +1, outer -1."""
    rng = np.random.default_rng(seed)
    n_in = n_points // 2
    n_out = n_points - n_in
    t_in = rng.uniform(0.0, 2 * np.pi, size=n_in)
    t_out = rng.uniform(0.0, 2 * np.pi, size=n_out)
    inner = radii[0] * np.column_stack([np.cos(t_in), np.sin(t_in)])
    outer = radii[1] * np.column_stack([np.cos(t_out), np.sin(t_out)])
    pts = np.vstack([inner, outer]) + rng.normal(scale=noise, size=(n_points, 2))
    labels = np.concatenate([np.ones(n_in), -np.ones(n_out)])
    order = rng.permutation(n_points)
    return pts[order], labels[order]
