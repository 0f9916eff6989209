"""Hecke operators on compressed discrete series representations of PGL(2, Z[1/p])."""

__version__ = "0.1.0"

from .errors import HeckeVirtError  # noqa: F401
