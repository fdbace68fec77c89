"""Topology optimization with a neural network level set function.

The package couples a small dense network representing the level set field
with a regular-grid finite element model.  Boundary evolution is carried out
on the network parameters: the transport equation is collocated on all grid
nodes and reduced, through a least squares projection, to an ordinary
differential equation that an adaptive Runge-Kutta-Fehlberg integrator
advances each optimization iteration.
"""

__version__ = "0.1.0"

from .network import (
    NetworkArchitecture,
    ParameterVector,
    forward,
    grad_spatial,
    init_random,
    jacobian_params,
    load_checkpoint,
    param_count,
    save_checkpoint,
)

__all__ = [
    "NetworkArchitecture",
    "ParameterVector",
    "forward",
    "grad_spatial",
    "init_random",
    "jacobian_params",
    "load_checkpoint",
    "param_count",
    "save_checkpoint",
]
