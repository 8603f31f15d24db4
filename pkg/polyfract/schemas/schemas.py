from enum import Enum
from typing import Any, Dict, List, Literal, Optional

from pydantic import BaseModel, Field


# Axiom validation
class AxiomCheck(BaseModel):
    axiom: Literal["A1", "A2", "A3", "A4", "A5"]
    passed: bool
    witnesses: List[Dict[str, Any]] = []


class AxiomReport(BaseModel):
    passed: bool
    checks: List[AxiomCheck]

    def failed_axioms(self) -> List[str]:
        return [c.axiom for c in self.checks if not c.passed]

    def check(self, axiom: str) -> AxiomCheck:
        for c in self.checks:
            if c.axiom == axiom:
                return c
        raise KeyError(axiom)


# Contact points
class ContactVerdict(str, Enum):
    NONE_EXIST = "none_exist"
    EXISTS = "exists"
    UNKNOWN = "unknown"


class ContactPointReport(BaseModel):
    verdict: ContactVerdict
    route: str = Field(..., description="theorem, oracle or J=6 short-circuit")
    witness: Optional[Dict[str, Any]] = None
    level: Optional[int] = None
    reason: Optional[str] = None
    nic1: Optional[bool] = None
    nic2: Optional[bool] = None
    nic1_points: List[Dict[str, Any]] = []
    nic2_witnesses: List[Dict[str, Any]] = []
    oracle_agrees: Optional[bool] = None


# Verdicts
class VerdictStatus(str, Enum):
    CONDUCTIVELY_HOMOGENEOUS = "conductively_homogeneous"
    INCONCLUSIVE = "inconclusive"


class TheoremTag(str, Enum):
    J3 = "J3"
    ZJ_TRANSITIVE = "ZJ_transitive"
    ESSENTIAL_TRANSITIVE = "essential_transitive"
    EVEN_J_F_PARTIAL = "even_J_F_partial"
    TRIVIAL_G_F_PARTIAL = "trivial_G_F_partial"
    NONE = "none"


class Prerequisite(BaseModel):
    name: str
    passed: bool
    detail: Optional[str] = None


class Verdict(BaseModel):
    status: VerdictStatus
    theorem: TheoremTag
    prerequisites: List[Prerequisite] = []
    details: Dict[str, Any] = {}
    M_J: Optional[int] = Field(None, description="Neighborhood radius for energy runs")

    @property
    def applies(self) -> bool:
        return self.status == VerdictStatus.CONDUCTIVELY_HOMOGENEOUS


# Energy
class EnergyRow(BaseModel):
    system: str
    p: float
    M: int
    m: int
    quantity: str
    value: float
    iterations: int = 0
    residual: float = 0.0


class ScalingEstimate(BaseModel):
    p: float
    M: int
    values: Dict[int, float]
    ratios: Dict[int, float] = {}
    roots: Dict[int, float] = {}
    approximate: bool = True

    def last_ratio(self) -> float:
        return self.ratios[max(self.ratios)]


class DimarBracket(BaseModel):
    p_lo: float
    p_hi: float
    M: int
    m_max: int
    steps: int
    approximate: bool = True


# Full report
class SystemSummary(BaseModel):
    name: str
    J: int
    N: int
    r: str
    r_float: float
    group: Dict[str, Any]
    hausdorff_dimension: float
    weights: List[float]


class Report(BaseModel):
    schema_version: Literal["1"] = "1"
    system: SystemSummary
    axioms: AxiomReport
    essential_boundary: Optional[List[int]] = None
    vertex_in_K: Optional[List[int]] = None
    levels: List[Dict[str, Any]] = []
    contact: Optional[ContactPointReport] = None
    verdict: Optional[Verdict] = None
    energy: Optional[List[EnergyRow]] = None
    timing: Optional[Dict[str, float]] = None
