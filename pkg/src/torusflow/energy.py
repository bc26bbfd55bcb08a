"""Internal energies driving the diffusion, and their derived objects.

For an energy density E the pressure function is F' (t) = t E'(t) - E(t), so
that div(rho grad E'(rho)) = Lap F'(rho) and F''(t) = t E''(t).  Supported
kinds:

    entropy     E = t log t     F = t^2/2              (linear diffusion)
    power(m)    E = t^m, m > 1  F = (m-1)/(m+1) t^(m+1) (porous medium)
    zero        E = 0           F = 0                   (pure drift)

``regularize`` builds the uniformly elliptic truncation F_eps whose curvature
is clamped to [eps, 1/eps]: quadratic of curvature eps below delta_eps, F
itself on [delta_eps, M_eps], quadratic of curvature 1/eps above M_eps, glued
C^1 at both junctions.

``kl_prox`` is the scalar building block of the entropic minimizing-movement
step: the unique minimizer over rho >= 0 of

    eps * (rho log(rho/s) - rho + s) + tau * (E(rho) + u * rho).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "InternalEnergy",
    "RegularizedEnergy",
    "evaluate",
    "regularize",
    "mccann_check",
    "kl_prox",
    "validate_growth",
]

_KINDS = ("entropy", "power", "zero")


@dataclass(frozen=True)
class InternalEnergy:
    """Convex energy density on R+ with E(0) = 0, described by its kind."""

    kind: str
    m: float = 1.0   # growth exponent; fixed to 1 for entropy and zero kinds
    C: float = 10.0  # reference constant for the growth-hypothesis validator

    def __post_init__(self) -> None:
        if self.kind not in _KINDS:
            raise ValueError(f"unknown energy kind {self.kind!r}")
        if self.kind == "power" and not self.m > 1:
            raise ValueError("power energies need exponent m > 1")
        if self.kind in ("entropy", "zero") and self.m != 1.0:
            raise ValueError(f"{self.kind} energy has fixed exponent m = 1")
        if not self.C > 0:
            raise ValueError("reference constant C must be positive")

    @classmethod
    def entropy(cls, C: float = 10.0) -> "InternalEnergy":
        return cls(kind="entropy", C=C)

    @classmethod
    def power(cls, m: float, C: float = 10.0) -> "InternalEnergy":
        return cls(kind="power", m=float(m), C=C)

    @classmethod
    def zero(cls) -> "InternalEnergy":
        return cls(kind="zero")

    # Pointwise maps, vectorized over numpy arrays.  E'' is unbounded at 0
    # for the entropy kind, so callers sample it on positive arguments only.

    def _apply(self, t, fn):
        t = np.asarray(t, dtype=float)
        scalar = t.ndim == 0
        out = fn(np.atleast_1d(t))
        return float(out[0]) if scalar else out

    def e(self, t):
        def fn(tt):
            if self.kind == "entropy":
                out = np.zeros_like(tt)
                pos = tt > 0
                out[pos] = tt[pos] * np.log(tt[pos])
                return out
            if self.kind == "power":
                return tt**self.m
            return np.zeros_like(tt)

        return self._apply(t, fn)

    def e_prime(self, t):
        def fn(tt):
            if self.kind == "entropy":
                return np.log(tt) + 1.0
            if self.kind == "power":
                return self.m * tt ** (self.m - 1.0)
            return np.zeros_like(tt)

        return self._apply(t, fn)

    def e_second(self, t):
        def fn(tt):
            if self.kind == "entropy":
                return 1.0 / tt
            if self.kind == "power":
                return self.m * (self.m - 1.0) * tt ** (self.m - 2.0)
            return np.zeros_like(tt)

        return self._apply(t, fn)

    def f(self, t):
        def fn(tt):
            if self.kind == "entropy":
                return 0.5 * tt**2
            if self.kind == "power":
                return (self.m - 1.0) / (self.m + 1.0) * tt ** (self.m + 1.0)
            return np.zeros_like(tt)

        return self._apply(t, fn)

    def f_prime(self, t):
        def fn(tt):
            if self.kind == "entropy":
                return tt.copy()
            if self.kind == "power":
                return (self.m - 1.0) * tt**self.m
            return np.zeros_like(tt)

        return self._apply(t, fn)

    def f_second(self, t):
        def fn(tt):
            if self.kind == "entropy":
                return np.ones_like(tt)
            if self.kind == "power":
                return self.m * (self.m - 1.0) * tt ** (self.m - 1.0)
            return np.zeros_like(tt)

        return self._apply(t, fn)

    def total(self, values: np.ndarray, cell_volume: float) -> float:
        """Integral of E over a density sampled on cells."""
        return float(np.sum(self.e(values)) * cell_volume)


_WHICH = {"E": "e", "F": "f", "Fp": "f_prime", "Fpp": "f_second"}


def evaluate(energy: InternalEnergy, t, which: str):
    """Evaluate E, F, F' or F'' at t >= 0 (vectorized)."""
    if which not in _WHICH:
        raise ValueError(f"which must be one of {sorted(_WHICH)}, got {which!r}")
    if np.any(np.asarray(t) < 0):
        raise ValueError("energies are defined on t >= 0")
    return getattr(energy, _WHICH[which])(t)


def validate_growth(
    energy: InternalEnergy, t_max: float = 10.0, samples: int = 200
) -> list[str]:
    """Sampled check of the convexity/growth hypotheses; returns warnings.

    Checks E(0) = 0, midpoint convexity, E''(t) >= t^(m-2)/C and
    F'(t) <= C (1 + t^m) on a positive sample.
    """
    warnings: list[str] = []
    tol = 1e-10
    if abs(float(energy.e(0.0))) > tol:
        warnings.append(f"{energy.kind}: E(0) != 0")
    t = np.linspace(1e-6, t_max, samples)
    ea, eb, emid = energy.e(t[:-1]), energy.e(t[1:]), energy.e(0.5 * (t[:-1] + t[1:]))
    if np.any(emid > 0.5 * (ea + eb) + tol):
        warnings.append(f"{energy.kind}: E fails midpoint convexity on sample")
    if energy.kind != "zero":
        m, C = energy.m, energy.C
        if np.any(energy.e_second(t) < t ** (m - 2.0) / C - tol):
            warnings.append(f"{energy.kind}: E'' < t^(m-2)/C on sample (C={C})")
        if np.any(energy.f_prime(t) > C * (1.0 + t**m) + tol):
            warnings.append(f"{energy.kind}: F' > C(1+t^m) on sample (C={C})")
    return warnings


@dataclass(frozen=True)
class RegularizedEnergy:
    """Uniformly elliptic truncation F_eps of the base energy's F."""

    base: InternalEnergy
    eps: float
    delta_eps: float = field(init=False)
    M_eps: float = field(init=False)

    def __post_init__(self) -> None:
        if not (0.0 < self.eps < 1.0):
            raise ValueError("eps must lie in (0, 1)")
        if self.base.kind == "zero":
            raise ValueError("cannot regularize an energy with F'' identically zero")
        # Closed-form junctions: smallest rho with F'' >= eps, largest with
        # F'' <= 1/eps.  Entropy has F'' == 1, so the truncation is trivial.
        if self.base.kind == "entropy":
            delta, M = 0.0, math.inf
        else:
            m = self.base.m
            c = m * (m - 1.0)
            delta = (self.eps / c) ** (1.0 / (m - 1.0))
            M = (1.0 / (self.eps * c)) ** (1.0 / (m - 1.0))
        object.__setattr__(self, "delta_eps", delta)
        object.__setattr__(self, "M_eps", M)

    def _eval(self, t, middle, below, above):
        t = np.asarray(t, dtype=float)
        scalar = t.ndim == 0
        tt = np.atleast_1d(t)
        out = np.asarray(middle(tt), dtype=float).copy()
        lo = tt < self.delta_eps
        hi = tt > self.M_eps
        if np.any(lo):
            out[lo] = below(tt[lo])
        if np.any(hi):
            out[hi] = above(tt[hi])
        return float(out[0]) if scalar else out

    def f(self, t):
        base, d, M, eps = self.base, self.delta_eps, self.M_eps, self.eps
        return self._eval(
            t,
            base.f,
            lambda tt: base.f(d) + base.f_prime(d) * (tt - d) + 0.5 * eps * (tt - d) ** 2,
            lambda tt: base.f(M) + base.f_prime(M) * (tt - M) + 0.5 / eps * (tt - M) ** 2,
        )

    def f_prime(self, t):
        base, d, M, eps = self.base, self.delta_eps, self.M_eps, self.eps
        return self._eval(
            t,
            base.f_prime,
            lambda tt: base.f_prime(d) + eps * (tt - d),
            lambda tt: base.f_prime(M) + (tt - M) / eps,
        )

    def f_second(self, t):
        return self._eval(
            t,
            self.base.f_second,
            lambda tt: np.full_like(tt, self.eps),
            lambda tt: np.full_like(tt, 1.0 / self.eps),
        )


def regularize(energy: InternalEnergy, eps: float) -> RegularizedEnergy:
    return RegularizedEnergy(base=energy, eps=float(eps))


def mccann_check(energy: InternalEnergy, dim: int, samples: int = 64) -> bool:
    """Sampled displacement-convexity test: r -> r^d E(r^-d) must be convex
    nonincreasing on a log-spaced sample."""
    if samples < 3:
        raise ValueError("need at least 3 sample points")
    r = np.logspace(-2, 2, samples)

    def g(rr):
        return rr**dim * np.asarray(energy.e(rr ** (-float(dim))), dtype=float)

    vals = g(r)
    tol = 1e-10 * max(1.0, float(np.max(np.abs(vals))))
    if np.any(np.diff(vals) > tol):
        return False
    mid = 0.5 * (r[:-1] + r[1:])
    if np.any(g(mid) > 0.5 * (vals[:-1] + vals[1:]) + tol):
        return False
    return True


def _kl_prox_power(
    energy: InternalEnergy,
    s: np.ndarray,
    eps: float,
    tau: float,
    u: np.ndarray,
    tol: float,
    max_iter: int,
) -> np.ndarray:
    """Safeguarded Newton (in log rho) on the strictly increasing optimality
    condition eps*log(rho/s) + tau*(m rho^(m-1) + u) = 0."""
    m = energy.m
    log_s = np.log(s)
    # Bracket: E' >= 0 for power energies, so the root lies below
    # s * exp(|u| tau / eps) + 1; the floor 1e-300 is below every tolerance.
    z_lo = np.full_like(s, np.log(1e-300))
    z_hi = np.log(s * np.exp(np.minimum(np.abs(u) * tau / eps, 600.0)) + 1.0)
    z = np.minimum(log_s, z_hi)

    def residual(zz):
        return eps * (zz - log_s) + tau * (m * np.exp((m - 1.0) * zz) + u)

    g = residual(z)
    done = np.abs(g) <= tol
    for _ in range(max_iter):
        if np.all(done):
            break
        z_lo = np.where(~done & (g < 0), z, z_lo)
        z_hi = np.where(~done & (g > 0), z, z_hi)
        gp = eps + tau * m * (m - 1.0) * np.exp((m - 1.0) * z)
        z_new = z - g / gp
        bad = (z_new <= z_lo) | (z_new >= z_hi) | ~np.isfinite(z_new)
        z_new = np.where(bad, 0.5 * (z_lo + z_hi), z_new)
        z = np.where(done, z, z_new)
        g = residual(z)
        done = done | (np.abs(g) <= tol)
    if not np.all(done):
        raise RuntimeError(
            "kl_prox did not converge; parameters are pathological "
            f"(eps={eps}, tau={tau}, max |residual|={float(np.max(np.abs(g)))})"
        )
    return np.exp(z)


def kl_prox(energy: InternalEnergy, s, eps: float, tau: float, u=0.0):
    """Proximal map of tau*(E + u . ) in the eps-weighted KL geometry.

    Entropy and zero kinds are solved in closed form; power kinds by
    safeguarded Newton converged to |first-order residual| <= 1e-12.
    Vectorized over s and u.
    """
    if eps <= 0 or tau <= 0:
        raise ValueError("eps and tau must be positive")
    s_arr = np.asarray(s, dtype=float)
    if np.any(s_arr <= 0):
        raise ValueError("prox center s must be positive")
    u_arr = np.broadcast_to(np.asarray(u, dtype=float), s_arr.shape).astype(float)
    scalar = s_arr.ndim == 0
    s_arr = np.atleast_1d(s_arr)
    u_arr = np.atleast_1d(u_arr)

    if energy.kind == "zero":
        out = s_arr * np.exp(-tau * u_arr / eps)
    elif energy.kind == "entropy":
        out = np.exp((eps * np.log(s_arr) - tau * (1.0 + u_arr)) / (eps + tau))
    else:
        out = _kl_prox_power(energy, s_arr, eps, tau, u_arr, tol=1e-12, max_iter=200)
    return float(out[0]) if scalar else out
