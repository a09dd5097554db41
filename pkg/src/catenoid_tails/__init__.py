"""Numerical laboratory for the stability analysis of the catenoid under the
hyperbolic vanishing mean curvature flow: exact operator identities, catenoid
geometry and spectrum, hyperboloidal foliation metrics, and r^p-weighted
energy monitors along a characteristic wave evolution."""

__version__ = "0.1.0"
