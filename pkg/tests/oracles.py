"""Independent reference solutions used by the acceptance gate."""
import math

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq


def shoot_flat_cylinder(K: float, h: float, length: float = 1.0, bracket=(-8.0, 4.0)):
    """z-only solution of v'' = -2 K e^v on [0, L] with outward Neumann data v_n = 2 h e^{v/2}.

    Shoots from z = 0 with v(0) = s, v'(0) = -2 h e^{s/2} and solves for the
    boundary mismatch at z = L by brentq. Returns a callable z -> v(z).
    """

    def rhs(z, y):
        return [y[1], -2.0 * K * math.exp(y[0])]

    def run(s):
        return solve_ivp(rhs, (0.0, length), [s, -2.0 * h * math.exp(0.5 * s)],
                         rtol=1e-12, atol=1e-12, dense_output=True)

    def mismatch(s):
        sol = run(s)
        if sol.status != 0:
            return float("inf")
        v, dv = sol.y[:, -1]
        return dv - 2.0 * h * math.exp(0.5 * v)

    s = brentq(mismatch, *bracket, xtol=1e-14, rtol=1e-14)
    sol = run(s)
    return lambda z: sol.sol(np.asarray(z, dtype=float))[0]


def closed_form_case3(z):
    """K = -1, h = 1/2, L = 1: v = 2 log c - 2 log cos(c (z - 1/2)) with c = pi/3."""
    c = math.pi / 3
    return 2 * math.log(c) - 2 * np.log(np.cos(c * (np.asarray(z) - 0.5)))
