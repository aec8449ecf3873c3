"""svlab: discovering the degrees of freedom of dynamical systems from observations."""

__version__ = "0.1.0"
