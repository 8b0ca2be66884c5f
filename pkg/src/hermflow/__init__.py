"""Spectral simulator and verification suite for the Calabi-type flow of
Hermitian metrics on flat complex tori."""

from .torus import ScalarField, TorusGrid, make_grid
from .flow import FlowParams, FlowRun, Status, run

__version__ = "0.1.0"

__all__ = ["ScalarField", "TorusGrid", "make_grid", "FlowParams", "FlowRun", "Status", "run",
           "__version__"]
