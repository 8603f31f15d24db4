from enum import Enum
from typing import List, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator


class GroupKind(str, Enum):
    TRIVIAL = "trivial"
    ROT = "rot"
    DIHEDRAL = "dihedral"
    DIHEDRAL_V = "dihedral_v"
    EXPLICIT = "explicit"


class PhiSpec(BaseModel):
    """z -> w^half_turns z, or w^half_turns conj(z) when conj is set."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    half_turns: int = Field(..., description="Rotation angle in units of pi/J")
    conj: bool = Field(default=False, description="Complex conjugate before rotating")


class GroupSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    kind: GroupKind = Field(..., description="Group constructor")
    k: Optional[int] = Field(None, description="Order parameter for rot and dihedral")
    elements: List[PhiSpec] = Field(default=[], description="Generators for explicit groups")

    @field_validator("k")
    @classmethod
    def k_positive(cls, v):
        if v is not None and v < 1:
            raise ValueError("k must be a positive integer")
        return v


class CellSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    id: str = Field(..., description="Letter of the alphabet S")
    phi: PhiSpec = Field(default_factory=lambda: PhiSpec(half_turns=0))
    center: str = Field(..., description="Point expression for c_s")

    @field_validator("id")
    @classmethod
    def id_not_empty(cls, v):
        assert len(v.strip()) > 0, "cell id cannot be empty"
        return v.strip()


class SystemDescription(BaseModel):
    """Parsed system file; no axiom has been checked yet."""

    model_config = ConfigDict(extra="forbid")

    format: Literal["polyfract/v1"] = "polyfract/v1"
    name: Optional[str] = Field(None, description="Display name")
    J: int = Field(..., description="Number of polygon sides")
    r: str = Field(..., description="Point expression for the contraction ratio")
    group: GroupSpec
    cells: List[CellSpec]

    @property
    def cell_ids(self) -> List[str]:
        return [c.id for c in self.cells]
