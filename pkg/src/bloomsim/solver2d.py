"""P1 finite-element solver with backward-Euler/Newton stepping.

The three fields (B, p, P) live on the nodes of a triangular lake mesh with
zero-flux boundaries.  Spatial operators are the standard P1 matrices: the
mass matrix M (consistent form exposed by :func:`assemble_fem`, row-sum
lumped form driving the time stepping), the stiffness matrix K (scaled by
the diffusivity of each field), and an advection matrix C(v) = integral
(v . grad phi_j) phi_i, linear in the wind vector and shared by all fields
up to the dimensionless advection scalars.  Reactions are interpolated
nodewise (group finite elements), which makes the internal uptake/recycling
exchange between p and P cancel exactly and keeps the closed phosphorus
budget conservative to solver tolerance; with the lumped mass it also keeps
pure diffusion positivity preserving on Delaunay meshes.

Each backward-Euler step solves the nonlinear system with a Newton iteration
using the analytic reaction Jacobian and a sparse direct factorization.  A
step that fails to converge is retried as two half steps before giving up.
The quota in the growth term is regularized as B/(p + eps) with a fixed
small eps, so no branch is needed as the bloom dies out.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.sparse import bmat, csr_matrix, diags
from scipy.sparse.linalg import spsolve

from .core import (
    EPS_B,
    ModelParams,
    _reaction_jacobian_arrays,
    _reaction_rates_arrays,
    q_hat,
)
from .mesh import TriMesh
from .wind import as_wind

__all__ = [
    "EPS_P",
    "Field2D",
    "FemOperators",
    "NewtonError",
    "assemble_fem",
    "newton_be_step",
    "simulate_2d",
]

#: Regularization added to p in the growth quota B/(p + EPS_P); small against
#: the positive-equilibrium internal phosphorus (~0.2 mgP/m2).
EPS_P = 1e-10

#: Below this biomass the pointwise quota p/B is dominated by the EPS_P
#: regularization floor (p ~ Q B approaches EPS_P once B ~ EPS_P / Q_m), so
#: tube checks only apply above it.
QUOTA_B_FLOOR = 1e-6


class NewtonError(RuntimeError):
    """Backward-Euler Newton iteration failed to converge."""


@dataclass
class Field2D:
    """Nodal fields on a triangular mesh."""

    B: np.ndarray
    p: np.ndarray
    P: np.ndarray

    def __post_init__(self) -> None:
        self.B = np.asarray(self.B, dtype=float)
        self.p = np.asarray(self.p, dtype=float)
        self.P = np.asarray(self.P, dtype=float)
        if not (self.B.shape == self.p.shape == self.P.shape) or self.B.ndim != 1:
            raise ValueError("B, p, P must be equal-length 1D arrays")

    @classmethod
    def uniform(cls, mesh: TriMesh, B: float, Q: float, P: float) -> "Field2D":
        ones = np.ones(mesh.n_nodes)
        return cls(B * ones, Q * B * ones, P * ones)

    @classmethod
    def bump(
        cls,
        mesh: TriMesh,
        B_base: float = 0.5,
        B_peak: float = 5.0,
        Q0: float = 0.02,
        P0: float = 0.15,
        center=None,
        width: float | None = None,
    ) -> "Field2D":
        """Gaussian biomass bump over a uniform background."""
        xy = mesh.nodes
        center = xy.mean(axis=0) if center is None else np.asarray(center, dtype=float)
        if width is None:
            extent = xy.max(axis=0) - xy.min(axis=0)
            width = 0.2 * float(extent.max())
        r2 = ((xy - center) ** 2).sum(axis=1)
        B = B_base + B_peak * np.exp(-r2 / width**2)
        return cls(B, Q0 * B, np.full(mesh.n_nodes, P0))

    def stack(self) -> np.ndarray:
        return np.concatenate([self.B, self.p, self.P])

    @classmethod
    def unstack(cls, y: np.ndarray) -> "Field2D":
        n = y.size // 3
        return cls(y[:n], y[n : 2 * n], y[2 * n :])

    def quota(self, params: ModelParams) -> np.ndarray:
        """Pointwise p/B, with q_hat where biomass has numerically vanished."""
        qh = q_hat(params)
        return np.where(self.B > EPS_B, self.p / np.maximum(self.B, EPS_B), qh)

    def validate(
        self,
        params: ModelParams,
        positivity_tol: float = 1e-10,
        quota_tol: float = 1e-6,
    ) -> None:
        """Positivity everywhere; the quota tube where biomass is alive.

        The tube check masks nodes below :data:`QUOTA_B_FLOOR`: underneath
        it the regularized growth quota B/(p + eps) deliberately departs
        from p/B, so the raw ratio carries no information there.
        """
        if min(self.B.min(), self.p.min(), self.P.min()) < -positivity_tol:
            raise ValueError("negative nodal value beyond tolerance")
        mask = self.B > QUOTA_B_FLOOR
        if mask.any():
            q = self.p[mask] / self.B[mask]
            if q.min() < params.Q_m - quota_tol or q.max() > params.Q_M + quota_tol:
                raise ValueError("cell quota left the [Q_m, Q_M] tube")


@dataclass
class FemOperators:
    """Assembled P1 matrices for one mesh."""

    M: csr_matrix       # consistent mass
    K: csr_matrix       # stiffness (unscaled Laplacian)
    Cx: csr_matrix      # advection in x for unit wind
    Cy: csr_matrix      # advection in y

    def advection(self, v) -> csr_matrix:
        """C(v) = vx Cx + vy Cy, linear in the wind vector."""
        return float(v[0]) * self.Cx + float(v[1]) * self.Cy

    @property
    def M_lumped(self) -> csr_matrix:
        """Row-sum (diagonal) lumped mass matrix.

        Time stepping uses the lumped form: on a Delaunay mesh the implicit
        diffusion operator M_L + dt a K is then an M-matrix, so pure
        diffusion preserves positivity, and nodewise reactions decouple
        from neighbour rates.  Row sums match the consistent matrix, so all
        mass-weighted totals coincide between the two.
        """
        if not hasattr(self, "_M_lumped"):
            self._M_lumped = diags(np.asarray(self.M.sum(axis=1)).ravel()).tocsr()
        return self._M_lumped


def _assemble_operators(mesh: TriMesh) -> FemOperators:
    n = mesh.n_nodes
    tris = mesh.triangles
    areas = mesh.areas
    gx, gy = mesh.grad_x, mesh.grad_y

    rows, cols = [], []
    m_vals, k_vals, cx_vals, cy_vals = [], [], [], []
    for i_loc in range(3):
        for j_loc in range(3):
            rows.append(tris[:, i_loc])
            cols.append(tris[:, j_loc])
            mass = areas / (6.0 if i_loc == j_loc else 12.0)
            m_vals.append(mass)
            k_vals.append(areas * (gx[:, i_loc] * gx[:, j_loc] + gy[:, i_loc] * gy[:, j_loc]))
            # integral phi_i (grad phi_j) over the element: grad is constant,
            # integral of phi_i is area/3
            cx_vals.append(areas / 3.0 * gx[:, j_loc])
            cy_vals.append(areas / 3.0 * gy[:, j_loc])

    rows = np.concatenate(rows)
    cols = np.concatenate(cols)

    def build(vals):
        return csr_matrix((np.concatenate(vals), (rows, cols)), shape=(n, n))

    return FemOperators(build(m_vals), build(k_vals), build(cx_vals), build(cy_vals))


def _operators_for(mesh: TriMesh) -> FemOperators:
    # cached on the mesh itself; meshes are immutable once built
    ops = getattr(mesh, "_fem_operators", None)
    if ops is None:
        ops = _assemble_operators(mesh)
        mesh._fem_operators = ops
    return ops


def assemble_fem(mesh: TriMesh, v, params: ModelParams):
    """Mass, stiffness, and advection matrices for a wind vector ``v``.

    Returns ``(M, K, C)`` with M symmetric positive definite, K symmetric
    positive semidefinite with zero row sums, and C = C(v) linear in the
    wind.  The model equations use alpha K, beta K and beta_B C, beta_P C;
    the dimensionless advection scalars are applied by the caller.
    """
    ops = _operators_for(mesh)
    return ops.M, ops.K, ops.advection(v)


def _step_matrices(ops: FemOperators, v, params: ModelParams):
    C = ops.advection(v)
    L_B = params.alpha * ops.K + params.beta_B * C
    L_P = params.beta * ops.K + params.beta_P * C
    return L_B, L_P


def newton_be_step(
    U_n: Field2D,
    dt: float,
    t_next: float,
    mesh: TriMesh,
    wind,
    params: ModelParams,
    tol: float = 1e-12,
    max_iter: int = 25,
    _depth: int = 0,
) -> Field2D:
    """One backward-Euler step of size ``dt`` ending at ``t_next``.

    Solves ``M_L (U - U_n) + dt (L U - M_L R(U)) = 0`` by Newton with the
    exact sparse Jacobian, where ``M_L`` is the lumped mass matrix (see
    :meth:`FemOperators.M_lumped`).  ``tol`` is relative to the scale of
    ``M_L U_n``.  On non-convergence the step is retried as two half steps
    (three levels deep) before raising :class:`NewtonError`.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    ops = _operators_for(mesh)
    v = as_wind(wind)(t_next)
    L_B, L_P = _step_matrices(ops, v, params)
    M = ops.M_lumped

    y_n = U_n.stack()
    n = mesh.n_nodes
    scale = max(1.0, float(np.linalg.norm(M @ U_n.B)), float(np.linalg.norm(M @ U_n.p)),
                float(np.linalg.norm(M @ U_n.P)))

    def residual(y):
        B, p, P = y[:n], y[n : 2 * n], y[2 * n :]
        R_B, R_p, R_P = _reaction_rates_arrays(B, p, P, params, p_reg=EPS_P)
        F_B = M @ (B - U_n.B) + dt * (L_B @ B - M @ R_B)
        F_p = M @ (p - U_n.p) + dt * (L_B @ p - M @ R_p)
        F_P = M @ (P - U_n.P) + dt * (L_P @ P - M @ R_P)
        return np.concatenate([F_B, F_p, F_P])

    def jacobian(y):
        B, p, P = y[:n], y[n : 2 * n], y[2 * n :]
        blocks = _reaction_jacobian_arrays(B, p, P, params, p_reg=EPS_P)

        def blk(name_i, name_j, L=None):
            base = M + dt * L if L is not None else None
            react = dt * (M @ diags(blocks[(name_i, name_j)]))
            return (base - react) if base is not None else -react

        return bmat(
            [
                [blk("B", "B", L_B), blk("B", "p"), None],
                [blk("p", "B"), blk("p", "p", L_B), blk("p", "P")],
                [blk("P", "B"), blk("P", "p"), blk("P", "P", L_P)],
            ],
            format="csc",
        )

    y = y_n.copy()
    converged = False
    for _ in range(max_iter):
        F = residual(y)
        if np.linalg.norm(F) <= tol * scale:
            converged = True
            break
        if not np.all(np.isfinite(F)):
            break
        try:
            delta = spsolve(jacobian(y), -F)
        except RuntimeError:  # singular factorization
            break
        if not np.all(np.isfinite(delta)):
            break
        y = y + delta
    # non-finite residuals must count as failure, so compare negated
    if not converged and not (np.linalg.norm(residual(y)) <= tol * scale):
        if _depth >= 3:
            raise NewtonError(
                f"Newton did not converge at t={t_next:g} (dt={dt:g})"
            )
        half = newton_be_step(
            U_n, dt / 2, t_next - dt / 2, mesh, wind, params, tol, max_iter, _depth + 1
        )
        return newton_be_step(
            half, dt / 2, t_next, mesh, wind, params, tol, max_iter, _depth + 1
        )
    return Field2D.unstack(y)


@dataclass(frozen=True)
class Snapshots2D:
    """Fields captured at the requested output times."""

    times: np.ndarray
    fields: list
    mesh: TriMesh
    params: ModelParams

    def validate(self, **tolerances) -> None:
        for f in self.fields:
            f.validate(self.params, **tolerances)


def simulate_2d(
    initial: Field2D,
    mesh: TriMesh,
    wind,
    params: ModelParams,
    dt: float,
    t_end: float,
    output_times,
    tol: float = 1e-12,
    validate: bool = True,
) -> Snapshots2D:
    """March the lake model to ``t_end``, storing the requested snapshots.

    The wind is re-evaluated at the end time of every step.  Steps of size
    ``dt`` are shortened where needed to land exactly on each output time.
    Emits a one-time warning when the cell Peclet number exceeds one
    (pure Galerkin advection can then oscillate).
    """
    output_times = np.asarray(sorted(set(float(t) for t in output_times)), dtype=float)
    if output_times.size == 0 or output_times[0] < 0 or output_times[-1] > t_end:
        raise ValueError("output times must lie in [0, t_end]")

    wind_fn = as_wind(wind)
    h_mesh = mesh.max_edge_length()
    peclet_warned = False

    snapshots: list[Field2D] = []
    taken: list[float] = []
    if output_times[0] == 0.0:
        snapshots.append(Field2D(initial.B.copy(), initial.p.copy(), initial.P.copy()))
        taken.append(0.0)

    t = 0.0
    U = initial
    for target in output_times[output_times > 0.0]:
        while t < target - 1e-12:
            step = min(dt, target - t)
            t_next = t + step
            if not peclet_warned:
                vx, vy = wind_fn(t_next)
                speed = params.beta_B * float(np.hypot(vx, vy))
                peclet = h_mesh * speed / (2.0 * params.alpha)
                if peclet > 1.0:
                    warnings.warn(
                        f"cell Peclet number {peclet:.2g} > 1: un-stabilized "
                        "Galerkin advection may oscillate",
                        RuntimeWarning,
                    )
                    peclet_warned = True
            U = newton_be_step(U, step, t_next, mesh, wind_fn, params, tol=tol)
            t = t_next
        snapshots.append(U)
        taken.append(t)

    result = Snapshots2D(np.array(taken), snapshots, mesh, params)
    if validate:
        result.validate()
    return result
