"""Divergence-free, pressure-robust virtual element method for the 2D
incompressible Brinkman equations on general polygonal meshes, with a
residual a posteriori estimator and adaptive mesh refinement."""

__version__ = "0.1.0"
