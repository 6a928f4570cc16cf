"""Analytic oracles: Bessel functions and zeros, the vibrating-annulus
manufactured solution, string eigenfrequencies, and L2 error norms."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

_SERIES_CUTOFF = 12.0


def bessel_j(n, x):
    """Bessel function of the first kind J_n, accurate to ~1e-12 on [0, 60].

    Uses the ascending series for small arguments and Miller's backward
    recurrence with J0-sum normalization for moderate and large arguments.
    Accepts scalars or arrays.
    """
    if n < 0:
        raise ValueError("order must be non-negative")
    x = np.asarray(x, dtype=float)
    scalar = x.ndim == 0
    x = np.atleast_1d(x).copy()
    if np.any(x < 0):
        raise ValueError("argument must be non-negative")
    out = np.empty_like(x)
    small = x <= _SERIES_CUTOFF
    if np.any(small):
        out[small] = _bessel_series(n, x[small])
    if np.any(~small):
        out[~small] = _bessel_miller(n, x[~small])
    return float(out[0]) if scalar else out


def _bessel_series(n, x):
    half = 0.5 * x
    term = np.ones_like(x)
    for m in range(1, n + 1):
        term = term * half / m
    total = term.copy()
    halfsq = half * half
    for k in range(1, 80):
        term = -term * halfsq / (k * (n + k))
        total += term
        if np.max(np.abs(term)) < 1e-18 * max(1.0, float(np.max(np.abs(total)))):
            break
    return total


def _bessel_miller(n, x):
    xmax = float(np.max(x))
    start = int(xmax + 12.0 * xmax ** (1.0 / 3.0) + n + 20)
    if start % 2:
        start += 1
    f_up = np.zeros_like(x)  # f_{k+1}
    f_k = np.full_like(x, 1e-30)
    target = np.zeros_like(x)
    even_sum = np.zeros_like(x)
    if n == start:
        target = f_k.copy()
    for k in range(start, 0, -1):
        f_dn = (2.0 * k / x) * f_k - f_up
        f_up = f_k
        f_k = f_dn
        idx = k - 1
        if idx == n:
            target = f_k.copy()
        if idx >= 2 and idx % 2 == 0:
            even_sum += 2.0 * f_k
        big = np.abs(f_k) > 1e250
        if np.any(big):
            scale = np.where(big, 1.0 / np.abs(f_k), 1.0)
            f_k *= scale
            f_up *= scale
            target *= scale
            even_sum *= scale
    norm = f_k + even_sum  # f_0 + 2 sum_{even k >= 2} f_k = 1
    return target / norm


def bessel_zero(n, k, tol=1e-12):
    """k-th positive zero of J_n by sign-bracketing and bisection."""
    if k < 1:
        raise ValueError("zero index starts at 1")
    step = np.pi / 8.0
    x = max(n, 1.0) * 1.0 + 1e-6
    limit = x + (n + 10 + k) * 4.0 * np.pi
    found = 0
    prev_x = x
    prev_v = bessel_j(n, x)
    while x < limit:
        x += step
        v = bessel_j(n, x)
        if prev_v == 0.0:
            found += 1
            if found == k:
                return prev_x
        elif prev_v * v < 0.0:
            found += 1
            if found == k:
                lo, hi = prev_x, x
                for _ in range(200):
                    mid = 0.5 * (lo + hi)
                    vm = bessel_j(n, mid)
                    if prev_v * vm <= 0.0:
                        hi = mid
                    else:
                        lo = mid
                        prev_v = bessel_j(n, lo)
                    if hi - lo < tol:
                        break
                return 0.5 * (lo + hi)
        prev_x, prev_v = x, v
    raise ValueError(f"zero {k} of J_{n} not found in scan window")


@dataclass(frozen=True)
class ManufacturedSolution:
    """Separable free-vibration field on the annulus with homogeneous edges.

    u(r, theta, t) = R(r) cos(omega t) cos(m theta) with R a Bessel function
    whose zeros are the annulus radii; it solves u_tt = kappa Lap(u) with
    kappa = omega**2.
    """

    angular_wavenumber: int
    omega: float
    inner_radius: float
    outer_radius: float

    @property
    def period(self):
        return 2.0 * np.pi / self.omega

    @property
    def kappa(self):
        return self.omega**2

    def radial(self, r):
        return bessel_j(self.angular_wavenumber, r)

    def value(self, r, theta, t):
        return (
            self.radial(r)
            * np.cos(self.omega * t)
            * np.cos(self.angular_wavenumber * np.asarray(theta))
        )

    def velocity(self, r, theta, t):
        return (
            -self.omega
            * self.radial(r)
            * np.sin(self.omega * t)
            * np.cos(self.angular_wavenumber * np.asarray(theta))
        )

    def initial_value(self, r, theta):
        return self.value(r, theta, 0.0)

    def initial_velocity(self, r, theta):
        return np.zeros_like(np.asarray(r, dtype=float))


def annulus_solution():
    """The benchmark field: J_4 radial profile between its 2nd and 4th zeros."""
    lam2 = bessel_zero(4, 2)
    lam4 = bessel_zero(4, 4)
    return ManufacturedSolution(
        angular_wavenumber=4, omega=lam2, inner_radius=lam2, outer_radius=lam4
    )


def string_frequencies(k):
    """Exact fixed-fixed unit-string frequencies omega_k = k pi."""
    return np.pi * np.asarray(k, dtype=float)


def l2_error(system, coeffs_free, exact_xy, points_per_element=None):
    """Relative L2 distance between a coefficient grid and an exact field.

    ``exact_xy`` is a callable on physical coordinates (one argument in 1D,
    two in 2D). Quadrature uses at least degree+2 points per element.
    """
    p = max(s.degree for s in system.spaces)
    pts = points_per_element or (p + 2)
    if pts < p + 2:
        raise ValueError("error quadrature needs at least degree+2 points")
    full = system.inject(coeffs_free)
    if system.ndim == 1:
        xq, wq, E, _ = system.tables(0, pts)
        uh = E @ full
        ue = np.array([exact_xy(x) for x in xq])
        num = np.sum(wq * (uh - ue) ** 2) * system.rho
        den = np.sum(wq * ue**2) * system.rho
    else:
        _, wq1, E1, _ = system.tables(0, pts)
        _, wq2, E2, _ = system.tables(1, pts)
        g = system.geometry_grids(pts)
        uh = (E2 @ (E1 @ full).T).T
        ue = exact_xy(g["X"], g["Y"])
        W = (wq1[:, None] * wq2[None, :]) * g["det"]
        num = np.sum(W * (uh - ue) ** 2)
        den = np.sum(W * ue**2)
    if den <= 0.0:
        raise ValueError("exact field has zero norm")
    return float(np.sqrt(num / den))
