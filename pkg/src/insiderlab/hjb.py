"""Generator, HJB infimum, and the closed-form example solutions.

The candidate value fields G(t, x) are checked against the generator

    A^u G = dG/dt + (1/2) sigma(t,x,u)^2 d2G/dx2 + (b(t,x,u) + alpha sigma) dG/dx

and the pointwise HJB condition inf_u { A^u G + a u^2 } = 0.  Two closed
forms are shipped:

* the discounted-wealth example  dX = r X dt + u sigma dB  with
  G = -x b e^{-r(t-T)} + (b^2/4a) int_0^t sigma^2 alpha^2 e^{-2r(s-T)} ds - rho0
  and optimal control u* = alpha sigma b e^{-r(t-T)} / (2a);

* the drifted example  dX = u dt + u dB  with u* = b (alpha + 1) / (2a),
  whose value function V = -b x - (b^2/4a) E int_t^T (alpha+1)^2 ds is
  derived from its G (it is not displayed in closed form anywhere, so all
  its targets are treated as derived).

Both examples are instances of the wealth dynamics
dX = [r X + (rtilde - r) u] dt + sigma u dB: the first with rtilde = r, the
second with r = 0, rtilde = 1, sigma = 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .controlled_sde import ControlPolicy, formula_policy
from .enlargement import InfoDriftField, drift_matrix, tail_square_integral
from .optimality import EstimateWithError
from .paths import (
    TimeGrid,
    WeightFunction,
    as_weight,
    iter_increment_chunks,
)

__all__ = [
    "ModelParams",
    "NonConvexError",
    "generator_Au",
    "example1_control",
    "example1_policy",
    "example1_G",
    "example1_rho0",
    "example1_value",
    "Example1ValueField",
    "example2_control",
    "example2_policy",
    "example2_rho0",
    "example2_value",
    "hjb_pointwise_infimum",
]


class NonConvexError(ValueError):
    """The quadratic in u is not strictly convex; no interior minimizer."""


@dataclass(frozen=True, eq=False)
class ModelParams:
    """Coefficients of the wealth/HJB examples on [t0, T] with horizon T1 > T.

    ``sigma_fn`` and ``m`` accept constants or callables of time; both are
    coerced to WeightFunction.  ``rtilde`` defaults to r (no excess return).
    Validation enforces a, b > 0, t0 < T < T1 and a diffusion bounded away
    from zero on [0, T].
    """

    r: float
    sigma_fn: WeightFunction
    a: float
    b: float
    T: float
    t1: float
    m: WeightFunction
    x0: float = 0.0
    t0: float = 0.0
    rtilde: float | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "sigma_fn", as_weight(self.sigma_fn))
        object.__setattr__(self, "m", as_weight(self.m))
        if not (self.a > 0 and self.b > 0):
            raise ValueError(f"need a, b > 0, got a={self.a}, b={self.b}")
        if not (0.0 <= self.t0 < self.T < self.t1):
            raise ValueError(
                f"need 0 <= t0 < T < T1, got t0={self.t0}, T={self.T}, "
                f"T1={self.t1}"
            )
        probes = np.abs(self.sigma_fn.nodes(np.linspace(0.0, self.T, 257)))
        if float(probes.min()) <= 0.0:
            raise ValueError("sigma must stay away from 0 on [0, T]")
        if not np.all(np.isfinite(probes)):
            raise ValueError("sigma must be bounded on [0, T]")
        object.__setattr__(self, "sigma_inf", float(probes.min()))
        object.__setattr__(self, "sigma_sup", float(probes.max()))

    @property
    def excess_rate(self) -> float:
        return 0.0 if self.rtilde is None else self.rtilde - self.r

    def grid(self, n_steps: int) -> TimeGrid:
        g = TimeGrid(0.0, self.t1, int(n_steps))
        g.index_of(self.T)  # T must be a node
        g.index_of(self.t0)
        return g

    @classmethod
    def benchmark(cls, **overrides) -> "ModelParams":
        """m == 1, T = 1, T1 = 2, r = 0, sigma == 1, a = b = 1, x0 = 0."""
        defaults = dict(
            r=0.0, sigma_fn=1.0, a=1.0, b=1.0, T=1.0, t1=2.0, m=1.0,
            x0=0.0, t0=0.0,
        )
        defaults.update(overrides)
        return cls(**defaults)


def generator_Au(
    Gt: float, Gx: float, Gxx: float, b_val: float, sigma_val: float, alpha: float
) -> float:
    """A^u G for given derivative values and coefficients at (t, x, u)."""
    return Gt + 0.5 * sigma_val * sigma_val * Gxx + (b_val + alpha * sigma_val) * Gx


def hjb_pointwise_infimum(
    Gt: float,
    Gx: float,
    Gxx: float,
    alpha: float,
    sigma: float,
    params: ModelParams,
    x: float,
    t: float,
) -> tuple[float, float]:
    """Minimize u -> A^u G + a u^2 over the wealth dynamics at one point.

    The expression is the quadratic
        [Gt + r x Gx] + [(excess + alpha sigma) Gx] u + [a + sigma^2 Gxx / 2] u^2
    and requires sigma^2 Gxx + 2a > 0 (second-derivative criterion); the
    minimizer is u_min = -(excess + alpha sigma) Gx / (sigma^2 Gxx + 2a).

    Returns (u_min, minimized value); the value is the HJB residual when G
    solves the equation.
    """
    curv = sigma * sigma * Gxx + 2.0 * params.a
    if not curv > 0.0:
        raise NonConvexError(
            f"sigma^2 Gxx + 2a = {curv:.3g} <= 0: quadratic not strictly convex"
        )
    lin = (params.excess_rate + alpha * sigma) * Gx
    const = Gt + params.r * x * Gx
    u_min = -lin / curv
    value = const + lin * u_min + 0.5 * curv * u_min * u_min
    return u_min, value


# ---------------------------------------------------------------------------
# Example: discounted wealth, dX = r X dt + u sigma dB
# ---------------------------------------------------------------------------

def example1_control(alpha: float, sigma: float, t: float, params: ModelParams):
    """u* = alpha sigma b e^{-r(t-T)} / (2a); arrays broadcast."""
    return alpha * sigma * params.b * np.exp(-params.r * (t - params.T)) / (2 * params.a)


def example1_policy(params: ModelParams) -> ControlPolicy:
    sig = params.sigma_fn

    def fn(t, alpha, L):
        return example1_control(alpha, sig.nodes(np.asarray(t, dtype=float)), t, params)

    return formula_policy("example1-optimal", fn)


def _example1_integrand(params: ModelParams, times: np.ndarray,
                        alpha: np.ndarray) -> np.ndarray:
    """(b^2/4a) sigma^2 alpha^2 e^{-2r(s-T)} at the given nodes."""
    sig = params.sigma_fn.nodes(times)
    w = np.exp(-2.0 * params.r * (times - params.T)) * sig * sig
    return (params.b**2 / (4.0 * params.a)) * w * alpha * alpha


def example1_G(
    params: ModelParams,
    t: float,
    x: float,
    field: InfoDriftField,
    rho0: float = 0.0,
) -> float:
    """G(t, x) = f(t) x + g_t with f(t) = -b e^{-r(t-T)} and trapezoid g.

    g_t accumulates the running integrand along the field's own path and
    subtracts rho0 (the centering constant E[g_T], estimated separately).
    """
    grid = field.path.grid
    i = grid.index_of(t)
    if i > field.i_last:
        raise ValueError(f"t={t} beyond the decision horizon {field.horizon}")
    f_t = -params.b * math.exp(-params.r * (t - params.T))
    times = grid.times[: i + 1]
    integrand = _example1_integrand(params, times, field.alpha[: i + 1])
    g_t = float(np.trapezoid(integrand, dx=grid.dt)) - rho0
    return f_t * x + g_t


def _mc_integral(
    params: ModelParams,
    t: float,
    n_paths: int,
    seed: int,
    n_steps: int,
    integrand_fn: Callable[[np.ndarray, np.ndarray], np.ndarray],
    informed: bool = True,
) -> EstimateWithError:
    """E int_t^T integrand(s, alpha_s) ds by chunked trapezoid quadrature.

    ``informed=False`` replaces alpha by 0, which makes the integrand
    deterministic (every sample identical, zero standard error).
    """
    if n_paths < 2:
        raise ValueError("n_paths must be >= 2")
    grid = params.grid(n_steps)
    i_from, i_last = grid.index_of(t), grid.index_of(params.T)
    if not i_from < i_last:
        raise ValueError(f"need t < T, got t={t}")
    m_nodes = params.m.nodes(grid.times)
    q = tail_square_integral(m_nodes, grid.dt)
    times = grid.times[i_from : i_last + 1]
    vals = np.empty(n_paths)
    for start, dB in iter_increment_chunks(grid, seed, n_paths):
        if informed:
            alpha, _ = drift_matrix(dB, m_nodes, q, i_last)
        else:
            alpha = np.zeros((dB.shape[0], i_last + 1))
        block = integrand_fn(times, alpha[:, i_from:])
        vals[start : start + dB.shape[0]] = np.trapezoid(block, dx=grid.dt, axis=1)
    return EstimateWithError.from_samples(vals, seed)


def example1_rho0(
    params: ModelParams, n_paths: int, seed: int, n_steps: int = 2048
) -> EstimateWithError:
    """rho0 = (b^2/4a) E int_0^T sigma^2 alpha^2 e^{-2r(s-T)} ds."""
    return _mc_integral(
        params, 0.0, n_paths, seed, n_steps,
        lambda times, alpha: _example1_integrand(params, times, alpha),
    )


def example1_value(
    params: ModelParams,
    t: float,
    x: float,
    n_paths: int,
    seed: int,
    n_steps: int = 2048,
    informed: bool = True,
) -> EstimateWithError:
    """V(t, x) = -x b e^{-r(t-T)} - (b^2/4a) E int_t^T sigma^2 alpha^2 e^{-2r(s-T)} ds.

    The x-term is deterministic; the standard error comes entirely from the
    Monte Carlo integral.  With ``informed=False`` the integral vanishes and
    V reduces to the discounted-endowment term.
    """
    integral = _mc_integral(
        params, t, n_paths, seed, n_steps,
        lambda times, alpha: _example1_integrand(params, times, alpha),
        informed=informed,
    )
    det = x * params.b * math.exp(-params.r * (t - params.T))
    return EstimateWithError(
        mean=-(det + integral.mean),
        std_error=integral.std_error,
        n_samples=integral.n_samples,
        seed=seed,
    )


class Example1ValueField:
    """G and its partial derivatives along one drift field's path.

    Gt is analytic: f'(t) x + g'(t) with f' = r b e^{-r(t-T)} and
    g'(t) the running integrand, so residual checks carry no
    finite-difference error.  Gxx vanishes because G is affine in x.
    """

    def __init__(self, params: ModelParams, field: InfoDriftField, rho0: float = 0.0):
        self.params = params
        self.field = field
        self.rho0 = rho0
        grid = field.path.grid
        self._times = grid.times[: field.i_last + 1]
        self._integrand = _example1_integrand(params, self._times, field.alpha)
        cum = np.concatenate(
            [[0.0], np.cumsum(0.5 * (self._integrand[:-1] + self._integrand[1:]))]
        ) * grid.dt
        self._g = cum - rho0

    def f(self, i: int) -> float:
        return -self.params.b * math.exp(-self.params.r * (self._times[i] - self.params.T))

    def G(self, i: int, x: float) -> float:
        return self.f(i) * x + self._g[i]

    def Gt(self, i: int, x: float) -> float:
        fprime = self.params.r * self.params.b * math.exp(
            -self.params.r * (self._times[i] - self.params.T)
        )
        return fprime * x + self._integrand[i]

    def Gx(self, i: int) -> float:
        return self.f(i)

    def Gxx(self, i: int) -> float:
        return 0.0


# ---------------------------------------------------------------------------
# Example: drifted wealth, dX = u dt + u dB
# ---------------------------------------------------------------------------

def example2_control(alpha, params: ModelParams):
    """u* = b (alpha + 1) / (2a); arrays broadcast."""
    return params.b * (alpha + 1.0) / (2.0 * params.a)


def example2_policy(params: ModelParams) -> ControlPolicy:
    return formula_policy(
        "example2-optimal", lambda t, alpha, L: example2_control(alpha, params)
    )


def example2_params(a: float = 1.0, b: float = 1.0, T: float = 1.0,
                    t1: float = 2.0, m=1.0, x0: float = 0.0) -> ModelParams:
    """dX = u dt + u dB as wealth dynamics: r = 0, rtilde = 1, sigma = 1."""
    return ModelParams(
        r=0.0, sigma_fn=1.0, a=a, b=b, T=T, t1=t1, m=m, x0=x0, rtilde=1.0
    )


def example2_rho0(
    params: ModelParams, n_paths: int, seed: int, n_steps: int = 2048
) -> EstimateWithError:
    """rho0 = (b^2/4a) E int_0^T (alpha + 1)^2 ds."""
    c = params.b**2 / (4.0 * params.a)
    return _mc_integral(
        params, 0.0, n_paths, seed, n_steps,
        lambda times, alpha: c * (alpha + 1.0) ** 2,
    )


def example2_value(
    params: ModelParams,
    t: float,
    x: float,
    n_paths: int,
    seed: int,
    n_steps: int = 2048,
    informed: bool = True,
) -> EstimateWithError:
    """V(t, x) = -b x - (b^2/4a) E int_t^T (alpha + 1)^2 ds (derived form).

    ``informed=False`` drops the drift: the integral collapses to the
    deterministic (b^2/4a)(T - t).
    """
    c = params.b**2 / (4.0 * params.a)
    integral = _mc_integral(
        params, t, n_paths, seed, n_steps,
        lambda times, alpha: c * (alpha + 1.0) ** 2,
        informed=informed,
    )
    return EstimateWithError(
        mean=-(params.b * x + integral.mean),
        std_error=integral.std_error,
        n_samples=integral.n_samples,
        seed=seed,
    )
