"""
Tangent vectors of a mapping space, seen through a system of maps
=================================================================

The system z = w^2 * y selects, for every parameter w, a map y -> w^2 y.
Parameters w and -w select the same map, so curves in the parameter space
that differ can still induce the same tangent vector of the mapping space.
"""
from jetfield.expr import sym
from jetfield.fsmooth import Curve, first_order_contact, tangent_rep_map_space
from jetfield.maps import MapSystem, check_decomposition, injectivity_probe, iota, total_tangent

w, y, lam = sym("w"), sym("y"), sym("lam")
square = MapSystem(("w",), ("y",), ("z",), {"z": w**2 * y})

# the prolongation carries dotted coordinates; it splits into a parameter
# part and a source part
print(total_tangent(square).eval)
print("decomposes:", check_decomposition(square))

# two curves through opposite parameters
up = Curve(("w",), {"w": lam}, name="up")
down = Curve(("w",), {"w": -lam}, name="down")
print("up at 1:  ", tangent_rep_map_space(square, (up, 1)))
print("down at 1:", tangent_rep_map_space(square, (down, 1)))
print("same first-order contact:", first_order_contact(square, (up, 1), (down, 1)))

# at the level of tangent vectors of S the map iota forgets the sign
print(iota(square, {"w": 1, "d_w": 1}) == iota(square, {"w": -1, "d_w": -1}))

# a grid search finds the parameter pairs that select the same map
verdict = injectivity_probe(square, {"w": [-2, -1, 0, 1, 2]}, {"y": [-1.0, 0.5, 2.0]})
print(verdict.verdict, verdict.collisions)
