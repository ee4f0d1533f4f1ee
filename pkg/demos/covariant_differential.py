"""
Covariant differentials from a model file
=========================================

models/sections.jf declares a system of linear sections, a parameter section
sigma and an operator connection nabla.  The covariant differential of sigma
is the difference of two tangent representations; the connection and its
differential operator determine each other.
"""
from pathlib import Path

from jetfield.fconnections import (
    connection_from_operator, covariant_differential, is_linear, operator_from_connection,
)
from jetfield.model import load_model
from jetfield.sections import apply_section

model = load_model(Path(__file__).parent.parent / "models" / "sections.jf")
system = model.build("linear")
sigma = model.build("sigma")
nabla = model.build("nabla")

print("selected section:", apply_section(system, sigma))
for key, value in covariant_differential(nabla, sigma).items():
    print("nabla", key, "=", value)

D = operator_from_connection(nabla)
print("operator recipes:", D.recipes)
print("round trip:", connection_from_operator(D) == nabla)
print("linear:", is_linear(nabla))
