"""Unfitted finite elements for incompressible flow coupled to finite-strain
poroelasticity, with Nitsche-based interface conditions."""

__version__ = "0.1.0"
