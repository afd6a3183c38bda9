"""
保存型差分スキームの定常離散衝撃波プロファイルと、その線形安定性の数値検証。

依存順は conservation_model → scheme → symbol → profile → operator → resolvent
→ kernels → greenfn → stability。
"""

from .conservation_model import ConservationLaw, LaxShockData, classify_lax_shock
from .errors import ConfigError, HypothesisViolation, NumericalFailure, ShockStabError
from .greenfn import TemporalGreen, WaveDecomposition, decompose, estimate_constants, temporal_green_iterate
from .kernels import E_kernel, H_kernel, KernelParams, wave_template
from .operator import LinearizedOperator, build_operator, eigen_scan, kernel_vector_at_one
from .profile import Profile, solve_profile
from .scheme import StencilScheme, linearize_at_end_states, modified_lax_friedrichs
from .stability import DecayExperiment, orbital_decay, rate_table
from .symbol import SymbolData, build_symbol_data, track_eigenvalue_curves
