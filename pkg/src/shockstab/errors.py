"""
解析パイプライン共通の例外階層。

仮説違反 (HypothesisViolation) と数値的失敗 (NumericalFailure) を区別し、
CLI はそれぞれ終了コード 2 / 3 に対応付ける。各例外は違反した仮説名
(例: "H:Lax") を保持できる。
"""

from typing import Any, Dict, Optional


class ShockStabError(Exception):
    """全ての解析エラーの基底クラス。"""

    exit_code = 3
    hypothesis: Optional[str] = None

    def __init__(self, message: str, *, hypothesis: Optional[str] = None, **details: Any) -> None:
        super().__init__(message)
        if hypothesis is not None:
            self.hypothesis = hypothesis
        self.details: Dict[str, Any] = details

    def to_report(self) -> Dict[str, Any]:
        return {
            "error": type(self).__name__,
            "message": str(self),
            "hypothesis": self.hypothesis,
            "details": {k: _jsonable(v) for k, v in self.details.items()},
        }


class HypothesisViolation(ShockStabError):
    exit_code = 2


class NumericalFailure(ShockStabError):
    exit_code = 3


class ConfigError(ShockStabError, ValueError):
    exit_code = 2


# --------------------------------------------------------------------------- #
# conservation_model
# --------------------------------------------------------------------------- #

class NonHyperbolic(HypothesisViolation):
    hypothesis = "H:Lax"


class Characteristic(HypothesisViolation):
    hypothesis = "H:Lax"


class NotLax(HypothesisViolation):
    hypothesis = "H:Lax"


class RankineHugoniotMismatch(HypothesisViolation):
    hypothesis = "H:Lax"


# --------------------------------------------------------------------------- #
# scheme
# --------------------------------------------------------------------------- #

class StateOutOfDomain(NumericalFailure):
    pass


class CflViolation(HypothesisViolation):
    hypothesis = "cond:CFL"


class ConsistencyFailure(HypothesisViolation):
    hypothesis = "cond:consistency"


class CommutationFailure(HypothesisViolation):
    hypothesis = "H:VPAk"


class SingularEdgeMatrix(HypothesisViolation):
    hypothesis = "H:inv"


# --------------------------------------------------------------------------- #
# symbol
# --------------------------------------------------------------------------- #

class ZeroKappa(ShockStabError, ValueError):
    pass


class NotDissipative(HypothesisViolation):
    hypothesis = "H:F"


class NoDiffusivity(HypothesisViolation):
    hypothesis = "H:F"


class NegativeRealPart(HypothesisViolation):
    hypothesis = "H:F"


class DegenerateLeadingCoefficient(HypothesisViolation):
    hypothesis = "H:inv"


class NearMultipleRoot(HypothesisViolation):
    hypothesis = "H:Mpm1"


class CurveCollision(NumericalFailure):
    pass


class OutsideValidityRadius(NumericalFailure):
    pass


# --------------------------------------------------------------------------- #
# profile
# --------------------------------------------------------------------------- #

class NewtonDivergence(NumericalFailure):
    hypothesis = "H:SDSP"


class TruncationTooSmall(NumericalFailure):
    hypothesis = "H:CVexpo"


class TailBelowFloor(NumericalFailure):
    hypothesis = "H:CVexpo"


class SlowTailDecay(HypothesisViolation):
    hypothesis = "H:CVexpo"


# --------------------------------------------------------------------------- #
# operator
# --------------------------------------------------------------------------- #

class LengthMismatch(ShockStabError, ValueError):
    pass


class SpuriousModes(HypothesisViolation):
    hypothesis = "H:spec"


class UnstableEigenvalue(HypothesisViolation):
    hypothesis = "H:spec"


class KernelDimensionAmbiguous(HypothesisViolation):
    hypothesis = "H:Evans"


# --------------------------------------------------------------------------- #
# resolvent
# --------------------------------------------------------------------------- #

class SingularBlock(HypothesisViolation):
    hypothesis = "H:inv"


class IllConditionedVandermonde(NumericalFailure):
    hypothesis = "H:Mpm1"


class ContractionFailure(NumericalFailure):
    pass


class IntersectionDimensionMismatch(HypothesisViolation):
    hypothesis = "H:Evans"


class NearSingularResolvent(NumericalFailure):
    pass


class ResidueUnstable(NumericalFailure):
    pass


class EvansZeroCount(HypothesisViolation):
    hypothesis = "H:Evans"


class SingularBasisMatrix(NumericalFailure):
    pass


# --------------------------------------------------------------------------- #
# kernels / greenfn / stability
# --------------------------------------------------------------------------- #

class NonpositiveRealPart(ShockStabError, ValueError):
    pass


class IndexConstraintViolation(ShockStabError, ValueError):
    pass


class ConeTruncation(NumericalFailure):
    pass


class NodeNearSpectrum(NumericalFailure):
    pass


class ProvenanceDisagreement(NumericalFailure):
    pass


class NonConvergedLineSearch(NumericalFailure):
    pass


def _jsonable(value: Any) -> Any:
    if isinstance(value, complex):
        return {"re": value.real, "im": value.imag}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if hasattr(value, "tolist"):
        return _jsonable(value.tolist())
    return value
