"""Shooting integrator for the bounded solution of phi'' = A(t) phi.

The coefficient A is represented as a piecewise log-log-linear table on a
uniform ln(t) grid (exact for pure power laws), extrapolated by the edge
slopes on both sides.  The bounded, decreasing solution is found by the
blow-up dichotomy: integrating the IVP phi(0)=1, phi'(0)=b forward, slopes
above the critical one eventually give phi' >= 0 with phi > 0, slopes below
give phi <= 0.  Bisection on b brackets the critical slope; a final affine
combination of the two bracket-endpoint sweeps (the ODE is linear in b)
removes the residual growing mode so tail values are usable close to the
float horizon.

Near zero, singular-but-integrable coefficients are started with a single
integral-form step of size H0: phi'(H0) = b + I0 with I0 the exact table
integral of A over (0, H0], and phi(H0) = 1 + b*H0 + J0 with J0 the exact
double integral, both computed from the piecewise power-law closed forms.
"""

from __future__ import annotations

import math

import numpy as np

from .backend import HAVE_NUMBA

if HAVE_NUMBA:
    from numba import njit
else:  # pragma: no cover

    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]

        def wrap(f):
            return f

        return wrap


H0_MAX = 1e-6      # cap on the first integral-form step
H0_MASS = 1e-4     # target integral of A over the bootstrap step

# Dormand-Prince 5(4) tableau.
_C2, _C3, _C4, _C5 = 0.2, 0.3, 0.8, 8.0 / 9.0
_A21 = 0.2
_A31, _A32 = 3.0 / 40.0, 9.0 / 40.0
_A41, _A42, _A43 = 44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0
_A51, _A52, _A53, _A54 = 19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0
_A61, _A62, _A63, _A64, _A65 = 9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0
_B1, _B3, _B4, _B5, _B6 = 35.0 / 384.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0
_E1, _E3, _E4, _E5, _E6, _E7 = (71.0 / 57600.0, -71.0 / 16695.0, 71.0 / 1920.0,
                                -17253.0 / 339200.0, 22.0 / 525.0, -1.0 / 40.0)

STATUS_NONE = 0
STATUS_TOO_HIGH = 1   # phi' turned nonnegative while phi > 0: slope above critical
STATUS_TOO_LOW = -1   # phi hit zero: slope below critical


@njit(cache=True, inline="always")
def _a_eval(t, lnt0, inv_h, loga, slope_lo, slope_hi):
    lx = math.log(t)
    pos = (lx - lnt0) * inv_h
    n = loga.shape[0]
    if pos <= 0.0:
        return math.exp(loga[0] + slope_lo * (lx - lnt0))
    if pos >= n - 1.0:
        return math.exp(loga[n - 1] + slope_hi * (lx - (lnt0 + (n - 1) / inv_h)))
    i = int(pos)
    frac = pos - i
    return math.exp(loga[i] * (1.0 - frac) + loga[i + 1] * frac)


@njit(cache=True)
def _sweep(b, lnt0, inv_h, loga, slope_lo, slope_hi, h0, phi_c, phi_b, dphi_c,
           dphi_b, t_max, rtol, atol, grid, vals, dvals, use_grid, stop_on_event):
    """One forward sweep from the integral-form bootstrap at t = h0.

    The bootstrap state is affine in the shot slope b: phi(h0) = phi_c +
    b*phi_b, phi'(h0) = dphi_c + b*dphi_b, with coefficients precomputed
    from exact table moments of A.  Returns (status, t_stop, n_filled).
    With use_grid, phi and phi' are recorded at the (sorted, > h0) grid
    times by forcing step landings.
    """
    t = h0
    y1 = phi_c + b * phi_b
    y2 = dphi_c + b * dphi_b
    status = STATUS_NONE
    if y2 >= 0.0:
        return STATUS_TOO_HIGH, t, 0
    h = min(1e-4, 0.1 / math.sqrt(_a_eval(h0, lnt0, inv_h, loga, slope_lo, slope_hi)))
    gi = 0
    n_grid = grid.shape[0]
    max_steps = 2_000_000
    for _ in range(max_steps):
        if status != STATUS_NONE and stop_on_event:
            break
        if t >= t_max:
            break
        h = min(h, t_max - t)
        if use_grid:
            while gi < n_grid and grid[gi] <= t * (1.0 + 1e-13):
                vals[gi] = y1
                dvals[gi] = y2
                gi += 1
            if gi < n_grid:
                gap = grid[gi] - t
                if 0.0 < gap <= h * 1.0000001:
                    h = gap
        # DP45 stages for y'' = A y
        a1 = _a_eval(t, lnt0, inv_h, loga, slope_lo, slope_hi)
        k1_1 = y2
        k1_2 = a1 * y1
        tt = t + _C2 * h
        u1 = y1 + h * _A21 * k1_1
        u2 = y2 + h * _A21 * k1_2
        a2 = _a_eval(tt, lnt0, inv_h, loga, slope_lo, slope_hi)
        k2_1 = u2
        k2_2 = a2 * u1
        tt = t + _C3 * h
        u1 = y1 + h * (_A31 * k1_1 + _A32 * k2_1)
        u2 = y2 + h * (_A31 * k1_2 + _A32 * k2_2)
        a3 = _a_eval(tt, lnt0, inv_h, loga, slope_lo, slope_hi)
        k3_1 = u2
        k3_2 = a3 * u1
        tt = t + _C4 * h
        u1 = y1 + h * (_A41 * k1_1 + _A42 * k2_1 + _A43 * k3_1)
        u2 = y2 + h * (_A41 * k1_2 + _A42 * k2_2 + _A43 * k3_2)
        a4 = _a_eval(tt, lnt0, inv_h, loga, slope_lo, slope_hi)
        k4_1 = u2
        k4_2 = a4 * u1
        tt = t + _C5 * h
        u1 = y1 + h * (_A51 * k1_1 + _A52 * k2_1 + _A53 * k3_1 + _A54 * k4_1)
        u2 = y2 + h * (_A51 * k1_2 + _A52 * k2_2 + _A53 * k3_2 + _A54 * k4_2)
        a5 = _a_eval(tt, lnt0, inv_h, loga, slope_lo, slope_hi)
        k5_1 = u2
        k5_2 = a5 * u1
        tt = t + h
        u1 = y1 + h * (_A61 * k1_1 + _A62 * k2_1 + _A63 * k3_1 + _A64 * k4_1 + _A65 * k5_1)
        u2 = y2 + h * (_A61 * k1_2 + _A62 * k2_2 + _A63 * k3_2 + _A64 * k4_2 + _A65 * k5_2)
        a6 = _a_eval(tt, lnt0, inv_h, loga, slope_lo, slope_hi)
        k6_1 = u2
        k6_2 = a6 * u1
        y1n = y1 + h * (_B1 * k1_1 + _B3 * k3_1 + _B4 * k4_1 + _B5 * k5_1 + _B6 * k6_1)
        y2n = y2 + h * (_B1 * k1_2 + _B3 * k3_2 + _B4 * k4_2 + _B5 * k5_2 + _B6 * k6_2)
        a7 = _a_eval(tt, lnt0, inv_h, loga, slope_lo, slope_hi)
        k7_1 = y2n
        k7_2 = a7 * y1n
        e1 = h * (_E1 * k1_1 + _E3 * k3_1 + _E4 * k4_1 + _E5 * k5_1 + _E6 * k6_1 + _E7 * k7_1)
        e2 = h * (_E1 * k1_2 + _E3 * k3_2 + _E4 * k4_2 + _E5 * k5_2 + _E6 * k6_2 + _E7 * k7_2)
        sc1 = atol + rtol * max(abs(y1), abs(y1n))
        sc2 = atol + rtol * max(abs(y2), abs(y2n))
        err = math.sqrt(0.5 * ((e1 / sc1) ** 2 + (e2 / sc2) ** 2))
        if err <= 1.0:
            t = t + h
            y1 = y1n
            y2 = y2n
            while use_grid and gi < n_grid and t >= grid[gi] * 0.999999999999:
                vals[gi] = y1
                dvals[gi] = y2
                gi += 1
            if status == STATUS_NONE:
                if y1 <= 0.0:
                    status = STATUS_TOO_LOW
                    if stop_on_event:
                        return status, t, gi
                elif y2 >= 0.0:
                    status = STATUS_TOO_HIGH
                    if stop_on_event:
                        return status, t, gi
        fac = 0.9 * (1.0 / err) ** 0.2 if err > 1e-300 else 5.0
        if fac < 0.2:
            fac = 0.2
        elif fac > 5.0:
            fac = 5.0
        h = h * fac
        if h < 1e-14:
            h = 1e-14
    return status, t, gi


def sweep_status(b, table, t_max, rtol, atol):
    """Integrate until a dichotomy signature (or t_max); return the status."""
    empty = np.empty(0)
    status, t_stop, _ = _sweep(
        b, table.lnt0, table.inv_h, table.loga, table.slope_lo, table.slope_hi,
        table.h0, table.phi_c, table.phi_b, table.dphi_c, table.dphi_b,
        t_max, rtol, atol, empty, empty, empty, False, True)
    return status, t_stop


def sweep_grid(b, table, grid, t_max, rtol, atol):
    """Integrate across all of [h0, t_max] recording phi, phi' on grid."""
    grid = np.asarray(grid, dtype=float)
    vals = np.full(grid.shape, np.nan)
    dvals = np.full(grid.shape, np.nan)
    status, t_stop, n = _sweep(
        b, table.lnt0, table.inv_h, table.loga, table.slope_lo, table.slope_hi,
        table.h0, table.phi_c, table.phi_b, table.dphi_c, table.dphi_b,
        t_max, rtol, atol, grid, vals, dvals, True, False)
    return vals, dvals, status, n


class ATable:
    """Uniform-in-ln(t) log-log table of a positive coefficient function."""

    __slots__ = ("lnt", "loga", "lnt0", "inv_h", "slope_lo", "slope_hi",
                 "h0", "phi_c", "phi_b", "dphi_c", "dphi_b")

    def __init__(self, lnt: np.ndarray, loga: np.ndarray):
        if lnt.size < 2:
            raise ValueError("coefficient table needs at least two knots")
        h = lnt[1] - lnt[0]
        if not np.allclose(np.diff(lnt), h, rtol=1e-9, atol=1e-12):
            raise ValueError("coefficient table knots must be uniform in ln t")
        self.lnt = lnt
        self.loga = loga
        self.lnt0 = float(lnt[0])
        self.inv_h = 1.0 / h
        self.slope_lo = float((loga[1] - loga[0]) / h)
        self.slope_hi = float((loga[-1] - loga[-2]) / h)
        self._bootstrap()

    def _bootstrap(self):
        """Pick h0 with integral of A over (0, h0] <= H0_MASS and precompute
        the second-order integral-form start, kept affine in the slope b:
        phi(h0) = phi_c + b*phi_b, phi'(h0) = dphi_c + b*dphi_b."""
        h0 = H0_MAX
        if self.integral(0.0, h0) > H0_MASS:
            lo, hi = 0.0, h0
            for _ in range(200):
                mid = 0.5 * (lo + hi)
                if mid <= 0.0 or mid == lo or mid == hi:
                    break
                if self.integral(0.0, mid) > H0_MASS:
                    hi = mid
                else:
                    lo = mid
            h0 = lo if lo > 0.0 else hi * 0.5
        self.h0 = h0
        i0 = self.integral(0.0, h0)
        m1 = self.integral(0.0, h0, moment=1)
        m2 = self.integral(0.0, h0, moment=2)
        j0 = h0 * i0 - m1
        self.phi_c = 1.0 + j0
        self.phi_b = h0 + h0 * m1 - m2
        self.dphi_c = i0
        self.dphi_b = 1.0 + m1

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        lx = np.log(t)
        pos = (lx - self.lnt0) * self.inv_h
        n = self.loga.size
        i = np.clip(pos.astype(np.int64), 0, n - 2)
        frac = pos - i
        core = self.loga[i] * (1.0 - frac) + self.loga[i + 1] * frac
        lo = self.loga[0] + self.slope_lo * (lx - self.lnt0)
        hi = self.loga[-1] + self.slope_hi * (lx - self.lnt[-1])
        out = np.where(pos <= 0.0, lo, np.where(pos >= n - 1.0, hi, core))
        return np.exp(out)

    # Piecewise power-law closed forms.  The left tail behaves like
    # A(t0)*(t/t0)**slope_lo, which must be integrable (slope_lo > -1).

    def _segment_integral(self, a_val, t_lo, sig, t_hi, moment=0):
        p = sig + 1.0 + moment
        r = t_hi / t_lo
        if abs(p) > 1e-12:
            return a_val * t_lo ** (1 + moment) * (r ** p - 1.0) / p
        return a_val * t_lo ** (1 + moment) * math.log(r)

    def integral(self, lo: float, hi: float, moment: int = 0) -> float:
        """Integral of t**moment * A(t) over (lo, hi], piecewise exact."""
        if hi <= lo:
            return 0.0
        knots = np.exp(self.lnt)
        total = 0.0
        if lo < knots[0]:
            if self.slope_lo + 1.0 + moment <= 1e-9 and lo == 0.0:
                raise ValueError("coefficient not integrable at zero")
            a0 = math.exp(self.loga[0])
            t_hi = min(hi, knots[0])
            p = self.slope_lo + 1.0 + moment
            total += a0 * knots[0] ** (1 + moment) / p * (
                (t_hi / knots[0]) ** p - (lo / knots[0]) ** p if lo > 0.0 else (t_hi / knots[0]) ** p)
            lo = t_hi
            if hi <= lo:
                return total
        n = knots.size
        for i in range(n - 1):
            t1, t2 = knots[i], knots[i + 1]
            if t2 <= lo:
                continue
            if t1 >= hi:
                break
            sig = (self.loga[i + 1] - self.loga[i]) * self.inv_h
            a1 = math.exp(self.loga[i])
            s_lo, s_hi = max(lo, t1), min(hi, t2)
            a_at = a1 * (s_lo / t1) ** sig
            total += self._segment_integral(a_at, s_lo, sig, s_hi, moment)
        if hi > knots[-1]:
            s_lo = max(lo, knots[-1])
            a_at = math.exp(self.loga[-1]) * (s_lo / knots[-1]) ** self.slope_hi
            p = self.slope_hi + 1.0 + moment
            if p <= 0:
                raise ValueError("tail integral diverges; should not be requested")
            total += self._segment_integral(a_at, s_lo, self.slope_hi, hi, moment)
        return total

    def first_moment(self, hi: float) -> float:
        return self.integral(0.0, hi, moment=1)

    def sqrt_integral(self, lo: float, hi: float) -> float:
        """Integral of sqrt(A); same machinery with halved log-slopes."""
        half = ATable.__new__(ATable)
        half.lnt = self.lnt
        half.loga = self.loga * 0.5
        half.lnt0 = self.lnt0
        half.inv_h = self.inv_h
        half.slope_lo = self.slope_lo * 0.5
        half.slope_hi = self.slope_hi * 0.5
        return ATable.integral(half, lo, hi)

    def time_for_sqrt_integral(self, target: float) -> float:
        """Smallest T with integral of sqrt(A) over (0, T] >= target."""
        t = 1.0
        s = self.sqrt_integral(0.0, t)
        while s < target:
            t *= 2.0
            s = self.sqrt_integral(0.0, t)
            if t > 1e12:
                raise ValueError("sqrt(A) accumulates too slowly; bad coefficient")
        lo_t = t / 2.0 if t > 1.0 else 0.0
        for _ in range(80):
            mid = 0.5 * (lo_t + t)
            if mid <= 0.0:
                break
            if self.sqrt_integral(0.0, mid) >= target:
                t = mid
            else:
                lo_t = mid
        return t


def from_callable(fn, lo: float = 1e-8, hi: float = 1e6, n: int = 2049) -> ATable:
    lnt = np.linspace(math.log(lo), math.log(hi), n)
    vals = np.asarray(fn(np.exp(lnt)), dtype=float)
    if not np.all(np.isfinite(vals)) or not np.all(vals > 0.0):
        raise ValueError("coefficient function must be positive and finite on the table grid")
    return ATable(lnt, np.log(vals))


def from_power(c: float, beta: float) -> ATable:
    lnt = np.linspace(math.log(1e-8), math.log(1e6), 17)
    return ATable(lnt, math.log(c) + beta * lnt)
