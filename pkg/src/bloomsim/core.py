"""Model parameters and closed-form reaction kernels.

Everything downstream (ODE integration, linear stability, the 1D and 2D
solvers, the sensitivity pipeline) calls into this module for the biology:
light attenuation through the water column, light-limited growth, quota-based
phosphorus uptake, the extinction-state quota ``q_hat``, the persistence
threshold ``r0``, and the pointwise reaction rates of the three-component
state (biomass B, internal phosphorus p, dissolved phosphorus P).

All functions here are pure and accept scalars or NumPy arrays where that is
meaningful, so they can be cross-checked against independent oracles and
called from any number of concurrent workers.

Units follow the parameter table in :class:`ModelParams`: biomass in mgC/m2,
phosphorus pools in mgP/m2, time in days, lengths in metres.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

__all__ = [
    "EPS_B",
    "DomainError",
    "ModelParams",
    "HomState",
    "default_params",
    "light_intensity",
    "growth_h",
    "growth_h_prime",
    "uptake_rho",
    "uptake_eta",
    "q_hat",
    "r0",
    "b_bar",
    "reaction_rhs",
    "reaction_jacobian",
]

# Biomass threshold below which the cell quota p/B is replaced by the
# extinction-state quota q_hat (the ratio is otherwise 0/0 at extinction).
EPS_B = 1e-12


class DomainError(ValueError):
    """An argument lies outside the physical domain of a kernel."""


@dataclass(frozen=True)
class ModelParams:
    """Physical constants of the lake model.

    Attributes
    ----------
    alpha : float
        Diffusivity of biomass and internal phosphorus (m2/day).
    beta : float
        Diffusivity of dissolved phosphorus (m2/day).
    beta_B, beta_P : float
        Dimensionless advection scalars for biomass and dissolved phosphorus.
    r : float
        Maximum production rate (1/day).
    Q_m, Q_M : float
        Cell quota at which growth and uptake cease respectively (mgP/mgC),
        with ``Q_m < Q_M``.
    z_m : float
        Epilimnion depth (m).
    k : float
        Specific light attenuation of biomass (m2/mgC).
    K_bg : float
        Background light attenuation (1/m).
    H : float
        Light half-saturation (umol/(m2 day)).
    I_in : float
        Surface light intensity (umol/(m2 day)).
    l : float
        Loss rate (1/day).
    D : float
        Epilimnion/hypolimnion exchange rate (m/day).
    rho_m : float
        Maximum phosphorus uptake rate (mgP/mgC/day).
    P_h : float
        Hypolimnion dissolved phosphorus (mgP/m2), may be zero.
    M : float
        Uptake half-saturation (mgP/m2).
    P_in : float
        Optional external phosphorus source (mgP/m2/day), defaults to zero.
    """

    alpha: float
    beta: float
    beta_B: float
    beta_P: float
    r: float
    Q_m: float
    Q_M: float
    z_m: float
    k: float
    K_bg: float
    H: float
    I_in: float
    l: float
    D: float
    rho_m: float
    P_h: float
    M: float
    P_in: float = 0.0

    def __post_init__(self) -> None:
        positive = [
            "r", "Q_m", "Q_M", "z_m", "k", "K_bg", "H", "I_in", "l",
            "rho_m", "M",
        ]
        # movement and exchange coefficients may be exactly zero, which the
        # conservation checks (closed phosphorus budget) rely on
        nonnegative = ["alpha", "beta", "beta_B", "beta_P", "D", "P_h", "P_in"]
        for name in positive:
            value = getattr(self, name)
            if not (np.isfinite(value) and value > 0):
                raise DomainError(f"parameter {name} must be positive, got {value!r}")
        for name in nonnegative:
            value = getattr(self, name)
            if not (np.isfinite(value) and value >= 0):
                raise DomainError(f"parameter {name} must be nonnegative, got {value!r}")
        if not self.Q_m < self.Q_M:
            raise DomainError(f"Q_m must be < Q_M, got {self.Q_m} >= {self.Q_M}")

    def replace(self, **overrides) -> "ModelParams":
        """A copy with the given fields replaced (validated again)."""
        return replace(self, **overrides)

    @property
    def exchange(self) -> float:
        """Specific vertical exchange rate D/z_m (1/day)."""
        return self.D / self.z_m

    @property
    def total_loss(self) -> float:
        """Combined specific loss l + D/z_m (1/day)."""
        return self.l + self.D / self.z_m


#: Baseline constants used throughout the bundled scenarios; r and P_h vary
#: by scenario and must be chosen explicitly.
_BASE_CONSTANTS = dict(
    alpha=0.01,
    beta=0.02,
    beta_B=0.05,
    beta_P=0.075,
    z_m=5.0,
    Q_m=0.004,
    Q_M=0.04,
    K_bg=0.3,
    k=0.0004,
    I_in=300.0,
    H=120.0,
    l=0.35,
    D=0.02,
    rho_m=1.0,
    M=1.5,
)


def default_params(r: float = 1.0, P_h: float = 0.2, **overrides) -> ModelParams:
    """Baseline parameter set with a chosen production rate and P_h."""
    merged = dict(_BASE_CONSTANTS, r=r, P_h=P_h)
    merged.update(overrides)
    return ModelParams(**merged)


@dataclass(frozen=True)
class HomState:
    """A spatially homogeneous state (B, p, P), all nonnegative."""

    B: float
    p: float
    P: float

    def __post_init__(self) -> None:
        for name in ("B", "p", "P"):
            value = getattr(self, name)
            if not (np.isfinite(value) and value >= 0):
                raise DomainError(f"state component {name} must be >= 0, got {value!r}")

    def quota(self, params: ModelParams) -> float:
        """Cell quota p/B, or q_hat(params) when B is (numerically) zero."""
        if self.B > EPS_B:
            return self.p / self.B
        return q_hat(params)

    def check_quota(self, params: ModelParams, tol: float = 1e-9) -> None:
        """Raise unless Q_m <= p/B <= Q_M (within tol) whenever B > 0."""
        if self.B > EPS_B:
            q = self.p / self.B
            if not (params.Q_m - tol <= q <= params.Q_M + tol):
                raise DomainError(f"cell quota {q} outside [{params.Q_m}, {params.Q_M}]")

    def as_array(self) -> np.ndarray:
        return np.array([self.B, self.p, self.P], dtype=float)


def light_intensity(s, B, params: ModelParams):
    """Light intensity at depth ``s`` under biomass ``B``.

    Exponential (Lambert-Beer) decay ``I_in * exp(-(K_bg + k B) s)``,
    strictly decreasing in both arguments.
    """
    s = np.asarray(s, dtype=float)
    B = np.asarray(B, dtype=float)
    if np.any(s < 0):
        raise DomainError("depth s must be >= 0")
    if np.any(B < 0):
        raise DomainError("biomass B must be >= 0")
    out = params.I_in * np.exp(-(params.K_bg + params.k * B) * s)
    return float(out) if out.ndim == 0 else out


def growth_h(B, params: ModelParams):
    """Depth-averaged light limitation factor of growth.

    ``h(B) = ln[(H + I_in) / (H + I(z_m, B))] / (z_m (k B + K_bg))``.
    Positive for all ``B >= 0`` and strictly decreasing (denser blooms shade
    themselves).
    """
    B = np.asarray(B, dtype=float)
    if np.any(B < 0):
        raise DomainError("biomass B must be >= 0")
    g = params.z_m * (params.k * B + params.K_bg)
    I_bottom = params.I_in * np.exp(-g)
    out = np.log((params.H + params.I_in) / (params.H + I_bottom)) / g
    return float(out) if out.ndim == 0 else out


def growth_h_prime(B, params: ModelParams):
    """Analytic derivative dh/dB of :func:`growth_h`.

    Writing g = z_m (k B + K_bg) and I(g) = I_in exp(-g),
    ``h = ln[(H + I_in)/(H + I(g))] / g`` and

        dh/dg = [g I(g)/(H + I(g)) - ln((H + I_in)/(H + I(g)))] / g^2,

    then dh/dB = z_m k dh/dg.  Negative for all B >= 0.
    """
    B = np.asarray(B, dtype=float)
    if np.any(B < 0):
        raise DomainError("biomass B must be >= 0")
    g = params.z_m * (params.k * B + params.K_bg)
    I_bottom = params.I_in * np.exp(-g)
    num = np.log((params.H + params.I_in) / (params.H + I_bottom))
    dnum_dg = I_bottom / (params.H + I_bottom)
    out = params.z_m * params.k * (dnum_dg * g - num) / g**2
    return float(out) if out.ndim == 0 else out


def uptake_rho(Q, P, params: ModelParams):
    """Per-carbon phosphorus uptake rate rho(Q, P).

    ``rho_m ((Q_M - Q)/(Q_M - Q_m)) P/(P + M)``, zero at the full quota
    Q = Q_M and saturating towards rho_m for starved cells in rich water.
    """
    Q = np.asarray(Q, dtype=float)
    P = np.asarray(P, dtype=float)
    if np.any(Q < params.Q_m) or np.any(Q > params.Q_M):
        raise DomainError(f"quota outside [{params.Q_m}, {params.Q_M}]")
    if np.any(P < 0):
        raise DomainError("P must be >= 0")
    out = params.rho_m * (params.Q_M - Q) / (params.Q_M - params.Q_m) * P / (P + params.M)
    return float(out) if out.ndim == 0 else out


def uptake_eta(B, p, P, params: ModelParams):
    """Areal uptake eta(B, p, P) = rho_m ((Q_M B - p)/(Q_M - Q_m)) P/(P+M).

    Equals ``rho(p/B, P) * B`` for B > 0, and is well defined (zero) at
    B = p = 0, which removes the quota singularity of the per-carbon form.
    """
    B = np.asarray(B, dtype=float)
    p = np.asarray(p, dtype=float)
    P = np.asarray(P, dtype=float)
    out = (
        params.rho_m
        * (params.Q_M * B - p)
        / (params.Q_M - params.Q_m)
        * P
        / (P + params.M)
    )
    return float(out) if out.ndim == 0 else out


def _rho_tilde(P: float, params: ModelParams) -> float:
    # quota-free uptake coefficient rho_m/(Q_M - Q_m) * P/(P+M)
    return params.rho_m / (params.Q_M - params.Q_m) * P / (P + params.M)


def q_hat(params: ModelParams) -> float:
    """Cell quota of the extinction state.

    A convex combination of Q_m and Q_M,

        q_hat = (rho~(P_h) Q_M + r Q_m h(0)) / (rho~(P_h) + r h(0)),

    with weight ``r h(0) / (rho~(P_h) + r h(0))`` on Q_m.  Equals Q_m when
    P_h = 0 and tends to Q_M as hypolimnion phosphorus becomes unlimited.
    """
    rt = _rho_tilde(params.P_h, params)
    rh0 = params.r * growth_h(0.0, params)
    return (rt * params.Q_M + rh0 * params.Q_m) / (rt + rh0)


def r0(params: ModelParams) -> float:
    """Basic ecological reproductive index.

    ``r0 = r h(0) (1 - Q_m / q_hat) / (l + D/z_m)``.  Blooms persist when
    this exceeds one; it vanishes exactly when P_h = 0.
    """
    qh = q_hat(params)
    return params.r * growth_h(0.0, params) * (1.0 - params.Q_m / qh) / params.total_loss


def b_bar(params: ModelParams) -> float:
    """Biomass bound from the light-limited net growth balance.

    Root of the bracket in the growth/loss comparison,

        b_bar = (1/k) [ r ((Q_M - Q_m)/Q_M) ln((H + I_in)/H) / (z_m l + D)
                        - K_bg ],

    which may be negative; a negative value signals decay from any initial
    condition.  Trajectories satisfy B <= max(B(0), b_bar) when b_bar > 0.
    """
    growth_ceiling = (
        params.r
        * (params.Q_M - params.Q_m)
        / params.Q_M
        * math.log((params.H + params.I_in) / params.H)
        / (params.z_m * params.l + params.D)
    )
    return (growth_ceiling - params.K_bg) / params.k


def reaction_rhs(state: HomState, params: ModelParams) -> np.ndarray:
    """Movement-free rates (dB/dt, dp/dt, dP/dt) at a homogeneous state.

    The growth factor ``1 - Q_m B/p`` uses q_hat in place of p/B when B is
    numerically zero; internal uptake and recycling cancel exactly between
    the p and P equations, so ``dp + dP`` involves only the exchange and
    source terms.

    Raises
    ------
    DomainError
        If B > 0 while p = 0 (the quota would sit below Q_m).
    """
    B, p, P = state.B, state.p, state.P
    loss = params.total_loss
    if B > EPS_B:
        if p <= 0:
            raise DomainError("B > 0 with p = 0: cell quota undefined below Q_m")
        growth = params.r * (1.0 - params.Q_m * B / p) * growth_h(B, params) * B
    else:
        growth = params.r * (1.0 - params.Q_m / q_hat(params)) * growth_h(B, params) * B
    e = uptake_eta(B, p, P, params)
    dB = growth - loss * B
    dp = e - loss * p
    dP = params.exchange * (params.P_h - P) + params.P_in - e + params.l * p
    return np.array([dB, dp, dP])


def reaction_jacobian(
    B: float,
    p: float,
    P: float,
    params: ModelParams,
    quota_inv: float | None = None,
) -> np.ndarray:
    """3x3 Jacobian of :func:`reaction_rhs` with respect to (B, p, P).

    ``quota_inv`` overrides the ratio B/p; at extinction states it must be
    supplied as ``1/q_hat`` since the literal ratio is 0/0.  The (1,3) entry
    is identically zero (growth does not see dissolved phosphorus) and the
    (3,1) entry equals minus the (2,1) entry (uptake swaps pools).
    """
    if quota_inv is None:
        if B <= EPS_B:
            quota_inv = 1.0 / q_hat(params)
        elif p <= 0:
            raise DomainError("B > 0 with p = 0: cell quota undefined below Q_m")
        else:
            quota_inv = B / p
    loss = params.total_loss
    hB = growth_h(B, params)
    hpB = growth_h_prime(B, params)
    monod = P / (P + params.M)
    dmonod = params.M / (P + params.M) ** 2
    span = params.Q_M - params.Q_m

    a11 = (
        params.r * (1.0 - 2.0 * params.Q_m * quota_inv) * hB
        + params.r * (1.0 - params.Q_m * quota_inv) * hpB * B
        - loss
    )
    a12 = params.r * params.Q_m * quota_inv**2 * hB
    a21 = params.rho_m * params.Q_M / span * monod
    a22 = -params.rho_m / span * monod - loss
    a23 = params.rho_m * (params.Q_M * B - p) / span * dmonod
    a32 = params.rho_m / span * monod + params.l
    a33 = -params.exchange - params.rho_m * (params.Q_M * B - p) / span * dmonod
    return np.array(
        [
            [a11, a12, 0.0],
            [a21, a22, a23],
            [-a21, a32, a33],
        ]
    )


def _reaction_rates_arrays(B, p, P, params: ModelParams, p_reg: float = 0.0):
    """Vectorized reaction rates with the (p + eps) regularized quota.

    Used by the spatial solvers, where the regularization keeps the growth
    factor bounded as p -> 0 without a state-dependent branch.  Nonlinear
    coefficients are evaluated at states clipped to the physical range so
    that slightly negative Newton trial iterates cannot blow up; the linear
    loss terms keep the raw values, which preserves the exact uptake and
    recycling cancellation between the p and P rows.  Returns the triple
    (R_B, R_p, R_P) of nodewise rates.
    """
    Bc = np.maximum(np.asarray(B, dtype=float), 0.0)
    pc = np.maximum(np.asarray(p, dtype=float), 0.0)
    Pc = np.maximum(np.asarray(P, dtype=float), 0.0)
    loss = params.total_loss
    hB = growth_h(Bc, params)
    growth = params.r * (1.0 - params.Q_m * Bc / (pc + p_reg)) * hB * Bc
    e = uptake_eta(Bc, pc, Pc, params)
    R_B = growth - loss * B
    R_p = e - loss * p
    R_P = params.exchange * (params.P_h - P) + params.P_in - e + params.l * p
    return R_B, R_p, R_P


def _reaction_jacobian_arrays(B, p, P, params: ModelParams, p_reg: float = 0.0):
    """Vectorized nodewise Jacobian blocks of :func:`_reaction_rates_arrays`.

    Returns a dict keyed by ('B','p','P') x ('B','p','P') of arrays matching
    the input shape; the regularized denominator (p + eps) is differentiated
    exactly.  States are clipped like in the rates function (the slope of
    the clamp itself is ignored, which only perturbs Newton paths through
    unphysical trial points).
    """
    B = np.maximum(np.asarray(B, dtype=float), 0.0)
    p = np.maximum(np.asarray(p, dtype=float), 0.0)
    P = np.maximum(np.asarray(P, dtype=float), 0.0)
    loss = params.total_loss
    hB = growth_h(B, params)
    hpB = growth_h_prime(B, params)
    monod = P / (P + params.M)
    dmonod = params.M / (P + params.M) ** 2
    span = params.Q_M - params.Q_m
    pr = p + p_reg

    dG_dB = (
        params.r * hB
        + params.r * hpB * B
        - params.r * params.Q_m * (hpB * B**2 + 2.0 * hB * B) / pr
    )
    dG_dp = params.r * params.Q_m * hB * B**2 / pr**2
    deta_dB = params.rho_m * params.Q_M / span * monod
    deta_dp = -params.rho_m / span * monod
    deta_dP = params.rho_m * (params.Q_M * B - p) / span * dmonod

    zero = np.zeros_like(np.asarray(B, dtype=float))
    return {
        ("B", "B"): dG_dB - loss,
        ("B", "p"): dG_dp,
        ("B", "P"): zero,
        ("p", "B"): deta_dB,
        ("p", "p"): deta_dp - loss,
        ("p", "P"): deta_dP,
        ("P", "B"): -deta_dB,
        ("P", "p"): -deta_dp + params.l,
        ("P", "P"): -params.exchange - deta_dP,
    }
