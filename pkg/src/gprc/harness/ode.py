"""Classical RK4 for scalar second-order ODEs with cubic Hermite dense output."""
from __future__ import annotations

from typing import Callable

import numpy as np
from scipy.interpolate import CubicHermiteSpline

__all__ = ["ODEBlowUpError", "OdeSolution", "ode_integrate"]


class ODEBlowUpError(FloatingPointError):
    pass


class OdeSolution:
    """Dense sampler ``t -> (u, u', u'')``.

    ``u`` and ``u'`` are cubic Hermite interpolants between RK4 nodes; ``u''``
    is recovered from the ODE itself at the interpolated state.
    """

    def __init__(self, t, u, du, ddu, rhs):
        self.t = t
        self.nodes = (u, du, ddu)
        self.rhs = rhs
        self._u = CubicHermiteSpline(t, u, du, extrapolate=False)
        self._du = CubicHermiteSpline(t, du, ddu, extrapolate=False)

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        if np.any(t < self.t[0] - 1e-12) or np.any(t > self.t[-1] + 1e-12):
            raise ValueError("requested times outside the integrated span")
        tc = np.clip(t, self.t[0], self.t[-1])
        u = self._u(tc)
        du = self._du(tc)
        return u, du, self.rhs(tc, u, du)


def ode_integrate(
    rhs: Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray],
    ic: tuple[float, float],
    t_span: tuple[float, float],
    step: float,
) -> OdeSolution:
    """Integrate ``u'' = rhs(t, u, u')`` from ``ic = (u(t0), u'(t0))``."""
    if not step > 0:
        raise ValueError("step must be positive")
    t0, t1 = map(float, t_span)
    nsteps = max(1, int(np.ceil((t1 - t0) / step - 1e-9)))
    t = np.linspace(t0, t1, nsteps + 1)
    h = (t1 - t0) / nsteps
    y = np.empty((nsteps + 1, 2))
    y[0] = ic

    def f(tt, s):
        return np.array([s[1], rhs(tt, s[0], s[1])])

    for i in range(nsteps):
        s, ti = y[i], t[i]
        k1 = f(ti, s)
        k2 = f(ti + h / 2, s + h / 2 * k1)
        k3 = f(ti + h / 2, s + h / 2 * k2)
        k4 = f(ti + h, s + h * k3)
        y[i + 1] = s + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        if not np.all(np.isfinite(y[i + 1])):
            raise ODEBlowUpError(f"non-finite state at t = {t[i + 1]:.6g}")
    ddu = rhs(t, y[:, 0], y[:, 1])
    return OdeSolution(t, y[:, 0], y[:, 1], np.asarray(ddu, dtype=float), rhs)
