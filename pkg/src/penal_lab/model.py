"""Diffusion models in natural scale, described by their speed density.

A model is (m, x0) with m continuous and positive on (0, inf), m(x)
equivalent to c*x**beta at infinity for some c > 0 and beta > -1, and zero
an instantaneously reflecting barrier.  The generator convention is
G f = (1/m) f'' throughout, so the standard reflected Brownian motion has
m identically 2.  Exponent alpha = 1/(beta + 2) drives every asymptotic
rate downstream.

Speed densities come in three kinds: "constant", "power" (m = c*x**beta
exactly) and "table" (log-log interpolation of an arbitrary positive
expression, probed rather than analysed symbolically).  All kinds expose
the primitive M(x) = integral of m over [0, x], which the path kernels use
for exact segment averages of m along piecewise-linear paths; for beta < 0
the singularity at zero is integrable and M stays finite.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

PROBE_GRID = np.logspace(-6.0, 6.0, 241)

KIND_CONSTANT = 0
KIND_POWER = 1
KIND_TABLE = 2

_KIND_CODES = {"constant": KIND_CONSTANT, "power": KIND_POWER, "table": KIND_TABLE}

# Table extent for custom densities; beyond it the tail power law takes over.
_TAB_LO, _TAB_HI, _TAB_N = 1e-8, 1e8, 4097


class ModelError(ValueError):
    """Raised when a speed density or model violates the standing assumptions."""


def _safe_expr_fn(expr: str) -> Callable[[np.ndarray], np.ndarray]:
    allowed = {
        "exp": np.exp, "log": np.log, "sqrt": np.sqrt, "abs": np.abs,
        "pow": np.power, "pi": math.pi, "e": math.e,
    }
    code = compile(expr, "<speed-density>", "eval")
    for name in code.co_names:
        if name != "x" and name not in allowed:
            raise ModelError(f"name {name!r} not allowed in speed-density expression")

    def fn(x):
        return np.asarray(eval(code, {"__builtins__": {}}, {"x": x, **allowed}), dtype=float)

    return fn


@dataclass(frozen=True)
class SpeedDensity:
    """Speed-measure density m with tail parameters (beta, c, C).

    kind selects the exact representation used by the path kernels:
    constant and power are closed-form, table is a log-log-linear
    interpolant sampled from `evaluate` on construction.
    """

    evaluate: Callable[[np.ndarray], np.ndarray]
    beta: float
    c: float
    dominating_const: float
    kind: str = "power"
    tab_logx: np.ndarray = field(default_factory=lambda: np.empty(0))
    tab_logm: np.ndarray = field(default_factory=lambda: np.empty(0))
    tab_cum: np.ndarray = field(default_factory=lambda: np.empty(0))

    @property
    def alpha(self) -> float:
        return 1.0 / (self.beta + 2.0)

    @property
    def kind_code(self) -> int:
        return _KIND_CODES[self.kind]

    def __post_init__(self):
        if not self.beta > -1.0:
            raise ModelError(f"tail exponent beta must exceed -1, got {self.beta}")
        if not self.c > 0.0:
            raise ModelError(f"tail constant c must be positive, got {self.c}")
        if not self.dominating_const > 0.0:
            raise ModelError("dominating constant must be positive")
        if not 0.0 < self.alpha < 1.0:
            raise ModelError(f"alpha={self.alpha} outside (0,1)")
        vals = np.asarray(self.evaluate(PROBE_GRID), dtype=float)
        if not np.all(np.isfinite(vals)) or not np.all(vals > 0.0):
            raise ModelError("speed density must be positive and finite on the probe grid")
        if self.beta <= 0.0:
            bound = self.dominating_const * PROBE_GRID ** self.beta
        else:
            bound = self.dominating_const * (1.0 + PROBE_GRID ** self.beta)
        if np.any(vals > bound * (1.0 + 1e-9)):
            raise ModelError("speed density violates its domination bound on the probe grid")
        if self.kind == "table" and self.tab_logx.size == 0:
            object.__setattr__(self, "tab_logx", np.log(np.geomspace(_TAB_LO, _TAB_HI, _TAB_N)))
            xs = np.exp(self.tab_logx)
            ms = np.asarray(self.evaluate(xs), dtype=float)
            if not np.all(np.isfinite(ms)) or not np.all(ms > 0.0):
                raise ModelError("speed density not positive/finite on the table grid")
            object.__setattr__(self, "tab_logm", np.log(ms))
            object.__setattr__(self, "tab_cum", _table_cumulative(self.tab_logx, self.tab_logm))

    def check_tail(self, rtol: float = 0.05) -> None:
        """Assert m(x)/(c x^beta) is within rtol of 1 at x = 1e4 and 1e6."""
        for x in (1e4, 1e6):
            ratio = float(self.evaluate(np.array([x]))[0]) / (self.c * x ** self.beta)
            if abs(ratio - 1.0) > rtol:
                raise ModelError(f"tail ratio {ratio:.4f} at x={x:g} deviates more than {rtol:.0%}")

    def integral_to(self, x) -> np.ndarray:
        """Primitive M(x) = integral of m over [0, x]; finite for beta > -1."""
        x = np.asarray(x, dtype=float)
        if self.kind == "constant":
            return self.c * x
        if self.kind == "power":
            return self.c * np.power(x, self.beta + 1.0) / (self.beta + 1.0)
        return _table_cum_eval(np.maximum(x, 0.0), self.tab_logx, self.tab_logm,
                               self.tab_cum, self.beta, self.c)

    def band_mass(self, eps: float) -> float:
        """Integral of m over the occupation band [0, eps] (local-time norm)."""
        if eps <= 0.0:
            raise ModelError("occupation band width must be positive")
        return float(self.integral_to(eps))


def _table_cumulative(logx: np.ndarray, logm: np.ndarray) -> np.ndarray:
    """Cumulative integral of the log-log interpolant at the knots, from 0."""
    x = np.exp(logx)
    m = np.exp(logm)
    sig0 = (logm[1] - logm[0]) / (logx[1] - logx[0])
    if sig0 <= -1.0 + 1e-9:
        raise ModelError("speed density not integrable at zero (left slope <= -1)")
    cum = np.empty_like(x)
    cum[0] = m[0] * x[0] / (sig0 + 1.0)
    sig = np.diff(logm) / np.diff(logx)
    ratio = x[1:] / x[:-1]
    seg = np.where(
        np.abs(sig + 1.0) > 1e-12,
        m[:-1] * x[:-1] * (ratio ** (sig + 1.0) - 1.0) / (sig + 1.0),
        m[:-1] * x[:-1] * np.log(ratio),
    )
    cum[1:] = cum[0] + np.cumsum(seg)
    return cum


def _table_cum_eval(x, logx, logm, cum, beta, c):
    x = np.atleast_1d(np.asarray(x, dtype=float))
    out = np.empty_like(x)
    lo, hi = np.exp(logx[0]), np.exp(logx[-1])
    sig0 = (logm[1] - logm[0]) / (logx[1] - logx[0])
    m0 = np.exp(logm[0])

    below = x <= lo
    out[below] = m0 * lo / (sig0 + 1.0) * (x[below] / lo) ** (sig0 + 1.0)
    above = x >= hi
    # tail continues as c*x**beta
    out[above] = cum[-1] + c / (beta + 1.0) * (x[above] ** (beta + 1.0) - hi ** (beta + 1.0))
    mid = ~(below | above)
    if mid.any():
        xl = np.log(x[mid])
        i = np.clip(np.searchsorted(logx, xl, side="right") - 1, 0, logx.size - 2)
        sig = (logm[i + 1] - logm[i]) / (logx[i + 1] - logx[i])
        mi = np.exp(logm[i])
        xi = np.exp(logx[i])
        r = x[mid] / xi
        seg = np.where(np.abs(sig + 1.0) > 1e-12,
                       mi * xi * (r ** (sig + 1.0) - 1.0) / (sig + 1.0),
                       mi * xi * np.log(r))
        out[mid] = cum[i] + seg
    return out


@dataclass(frozen=True)
class DiffusionModel:
    """A validated (speed density, start point) pair under G f = (1/m) f''."""

    speed: SpeedDensity
    x0: float
    name: str

    def __post_init__(self):
        if self.x0 < 0.0:
            raise ModelError(f"start point must be >= 0, got {self.x0}")


def make_named_model(name: str, params: Sequence[float] = (), x0: float = 0.0,
                     expr: str | None = None, beta: float | None = None,
                     c: float | None = None, dominating_const: float | None = None,
                     ) -> DiffusionModel:
    """Build a validated model from the catalogue.

    reflected-bm:  m = 2, beta = 0, so G = (1/2) d^2/dx^2.
    bessel-power:  the 2r-th power of a Bessel process of dimension 2(1-r)
                   for r in (0,1); m = x**(1/r - 2) / (2 r^2), alpha = r.
    custom:        m given as an expression over x with declared tail
                   parameters; validated on a probe grid.
    """
    if name == "reflected-bm":
        two = lambda x: np.full_like(np.asarray(x, dtype=float), 2.0)
        speed = SpeedDensity(two, beta=0.0, c=2.0, dominating_const=2.0, kind="constant")
        speed.check_tail()
        return DiffusionModel(speed=speed, x0=x0, name=name)
    if name == "bessel-power":
        if len(params) != 1:
            raise ModelError("bessel-power takes exactly one parameter r")
        r = float(params[0])
        if not 0.0 < r < 1.0:
            raise ModelError(f"bessel-power exponent r must lie in (0,1), got {r}")
        b = 1.0 / r - 2.0
        cc = 1.0 / (2.0 * r * r)
        fn = lambda x, b=b, cc=cc: cc * np.power(np.asarray(x, dtype=float), b)
        speed = SpeedDensity(fn, beta=b, c=cc, dominating_const=cc, kind="power")
        speed.check_tail()
        return DiffusionModel(speed=speed, x0=x0, name=f"bessel-power-{r:g}")
    if name == "custom":
        if expr is None or beta is None or c is None:
            raise ModelError("custom model needs expr, beta and c")
        fn = _safe_expr_fn(expr)
        dom = dominating_const if dominating_const is not None else _fit_dominating(fn, beta)
        speed = SpeedDensity(fn, beta=float(beta), c=float(c),
                             dominating_const=float(dom), kind="table")
        return DiffusionModel(speed=speed, x0=x0, name="custom")
    raise ModelError(f"unknown model name {name!r}")


def _fit_dominating(fn, beta):
    vals = np.asarray(fn(PROBE_GRID), dtype=float)
    if not np.all(np.isfinite(vals)) or not np.all(vals > 0.0):
        raise ModelError("speed density must be positive and finite on the probe grid")
    if beta <= 0.0:
        return float(np.max(vals / PROBE_GRID ** beta) * (1.0 + 1e-9))
    return float(np.max(vals / (1.0 + PROBE_GRID ** beta)) * (1.0 + 1e-9))


def p_ratio(speed: SpeedDensity, u) -> np.ndarray | float:
    """p(u) = u**(-beta) * m(u); tends to c at infinity."""
    u_arr = np.asarray(u, dtype=float)
    if np.any(u_arr <= 0.0):
        raise ModelError("p_ratio requires u > 0")
    out = np.power(u_arr, -speed.beta) * np.asarray(speed.evaluate(u_arr), dtype=float)
    return float(out) if np.isscalar(u) or u_arr.ndim == 0 else out
