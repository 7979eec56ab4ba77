"""Hausdorff dimension of carpets through compensation functions of factor maps.

Modules
-------
symdyn        shifts of finite type, one-block factor maps, exact word counts
hypocheck     decide which construction of a compensation function applies
compensation  the compensation function G as an evaluable cylinder potential
pressure      pressure of tau G o pi, equilibrium masses, eigenfunction series
dimension     carpet dimension, McMullen's formula, weighted entropy oracle
specfile      JSON specification files
cli           the ``carpet`` command
"""

__version__ = "0.1.0"

from .errors import CarpetError

__all__ = ["CarpetError", "__version__"]
