"""
Probing smoothness of curves numerically
========================================

Central differences at shrinking steps converge at rate 2 for smooth bodies.
A kink or a cusp shows up as a rate that is too small, or as a gap between
one-sided stencils that does not close.
"""
import math

from jetfield.fsmooth import smoothness_probe

bodies = {
    "lam^6 - lam^2 + 3 lam^5": lambda t: t**6 - t**2 + 3 * t**5,
    "|lam|": abs,
    "cbrt(lam)": lambda t: math.copysign(abs(t) ** (1 / 3), t),
    "lam |lam|": lambda t: t * abs(t),
}
for label, f in bodies.items():
    for lam0 in (0.0, 0.3):
        print(f"{label:>24} at {lam0}: {smoothness_probe(f, lam0, 3)}")
