"""Chessboard estimates, block events and first-order gaps on lattice spin models."""

from ._accel import backend
from .lattice import Plane, SiteMap, TorusGeometry, block_sites, plane_reflection, theta_t_map
from .models import (
    Configuration,
    DilutedPotts,
    DilutedXY,
    Magnetostriction,
    NonlinearFerromagnet,
    O2AF,
    Potts,
    torus_energy,
)

__version__ = "0.1.0"

__all__ = [
    "Configuration",
    "DilutedPotts",
    "DilutedXY",
    "Magnetostriction",
    "NonlinearFerromagnet",
    "O2AF",
    "Plane",
    "Potts",
    "SiteMap",
    "TorusGeometry",
    "backend",
    "block_sites",
    "plane_reflection",
    "theta_t_map",
    "torus_energy",
]
