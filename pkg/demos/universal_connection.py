"""
The universal connection of a system of connections
====================================================

A generic system over a 2-dimensional base, with a 1-dimensional fibre and
one parameter, is given by opaque coefficients eps0_0 and eps0_1.  Every
connection it selects is the pullback of one connection on the lifted
bundle, and the same holds for curvature.
"""
from jetfield.connections import (
    curvature, generic_connection_system, generic_gamma, liouville_check, make_universal,
    verify_universal,
)

system = generic_connection_system(2, 1, 1)
gamma = generic_gamma(system)  # an opaque parameter section g0(x0, x1)

up = make_universal(system)
R = curvature(up)
print(R.convention)
for key, value in R.table.items():
    print(key, "=", value)

report = verify_universal(system, gamma)
print("connection identity:", report.connection_identity)
print("curvature identity: ", report.curvature_identity)
# the terms that cancel only after the pullback
for key, term in report.cancelled_terms.items():
    print(key, ":", term)

# connections d_m + w_m d_t on M x R: the universal curvature is twice the
# canonical symplectic form once w_m is read as a cotangent coordinate
lv = liouville_check(2)
print("Liouville:", lv.passed, "normalization", lv.normalization)
print(lv.contact_form)
