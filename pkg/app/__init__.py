"""
Aniso Toolkit
Simulation and numerical verification of anisotropic jump processes
"""

__version__ = "0.1.0"
