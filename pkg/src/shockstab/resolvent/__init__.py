"""
z = 1 近傍のレゾルベント解析。

companion (M_j(z))、jost (モード基底と Jost 解)、evans (Ev, θ, Φ)、
scattering (g̃ と留数)、green (空間 Green 関数) の順に依存する。
"""

from .companion import CompanionSystem, build_companion, center_block
from .evans import (
    EvansCircle,
    EvansData,
    EvansValue,
    basis_matrices,
    evans,
    evans_circle,
    extend_V,
    theta_families_and_V0,
    theta_product_defect,
)
from .green import (
    ResidueField,
    SpatialGreenData,
    delta_coefficients,
    fourier_green,
    green_from_basis,
    residue_field,
    spatial_green,
)
from .jost import JostFactory, JostSettings, ModeBasis, companion_and_basis, jost_solutions, mode_basis
from .scattering import ScatteringTable, scattering_coefficients
