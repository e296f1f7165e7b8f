"""Simulation and signal toolkit for an inverted-Kresling capacitive twist sensor."""

__version__ = "0.1.0"

from .capacitance import (CapacitanceReading, ElectrodePair, ElectrodeSpec, capacitance_vs_twist,  # noqa: E402
                          electrode_placement, pair_capacitance, sensitivity)
from .geometry import FoldMesh, OrigamiParams, assemble, export_mesh  # noqa: E402
from .signal import TankConfig, calibrate_update, resonant_frequency, synthesize_acquisition  # noqa: E402
from .structure import (BarHingeModel, LoadCase, MaterialParams, from_mesh, solve_equilibrium,  # noqa: E402
                        torque_rotation_curve)

__all__ = [
    "BarHingeModel", "CapacitanceReading", "ElectrodePair", "ElectrodeSpec", "FoldMesh", "LoadCase",
    "MaterialParams", "OrigamiParams", "TankConfig", "assemble", "calibrate_update", "capacitance_vs_twist",
    "electrode_placement", "export_mesh", "from_mesh", "pair_capacitance", "resonant_frequency",
    "sensitivity", "solve_equilibrium", "synthesize_acquisition", "torque_rotation_curve",
]
