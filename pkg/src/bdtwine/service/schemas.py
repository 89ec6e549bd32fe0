"""Pydantic models for the service requests and the response envelope.

Every endpoint answers with the same envelope: ``ok`` is the aggregated
verdict (false when any residual, margin, or ordering check failed), and
``result`` carries the command-specific payload documented on the endpoint.
"""

from typing import List, Optional

from pydantic import BaseModel, ConfigDict, Field


class ModelConfig(BaseModel):
    """Birth-death chain: builtin scalar-rate kinds or tabulated rates."""

    model_config = ConfigDict(populate_by_name=True)

    kind: str = "mm_infty"
    lam: Optional[float] = Field(default=None, alias="lambda")
    nu: Optional[float] = None
    lam_table: Optional[List[float]] = None
    nu_table: Optional[List[float]] = None
    tail_rule: str = "hold_last"

    def as_config(self) -> dict:
        if self.kind == "table":
            return {
                "kind": "table",
                "lambda": self.lam_table,
                "nu": self.nu_table,
                "tail_rule": self.tail_rule,
            }
        return {"kind": self.kind, "lambda": self.lam, "nu": self.nu}


class WeightConfig(BaseModel):
    kind: str = "const"
    kappa: Optional[float] = None
    values: Optional[List[float]] = None
    tail_rule: str = "hold_ratio"

    def as_config(self) -> dict:
        if self.kind == "geometric":
            return {"kind": "geometric", "kappa": self.kappa}
        if self.kind == "table":
            return {"kind": "table", "values": self.values, "tail_rule": self.tail_rule}
        return {"kind": "const"}


class FunctionConfig(BaseModel):
    """Test function: a named member of the bounded-gradient corpus or a table."""

    kind: str = "corpus"
    name: str = "capped_rho"
    values: Optional[List[float]] = None


class PhiConfig(BaseModel):
    name: str = "square"
    p: float = 1.5


class FamilyConfig(BaseModel):
    kind: str = "geometric"
    kappa_min: float = 0.05
    kappa_max: float = 20.0
    dim: int = 24


class ValidateRequest(BaseModel):
    model: ModelConfig
    n: int = 200


class StationaryRequest(BaseModel):
    model: ModelConfig
    n: int = 200


class EvolveRequest(BaseModel):
    model: ModelConfig
    f: FunctionConfig = FunctionConfig()
    weight: WeightConfig = WeightConfig()
    t: float = 1.0
    n: int = 200
    tol: float = 1e-8


class IntertwineRequest(BaseModel):
    model: ModelConfig
    weight: WeightConfig = WeightConfig()
    t_grid: List[float] = [0.1, 0.5, 1.0, 2.0]
    n: int = 200
    tol: float = 1e-6
    seed: int = 42


class SubcommuteRequest(BaseModel):
    model: ModelConfig
    weight: WeightConfig = WeightConfig()
    phi: PhiConfig = PhiConfig()
    t_grid: List[float] = [0.2, 1.0]
    n: int = 200
    tol: float = 1e-8
    seed: int = 42


class BicommuteRequest(BaseModel):
    model: ModelConfig
    phi: PhiConfig = PhiConfig(name="rlogr")
    t_grid: List[float] = [0.2, 1.0]
    n: int = 200
    tol: float = 1e-8
    seed: int = 42


class CurvatureRequest(BaseModel):
    model: ModelConfig
    weight: WeightConfig = WeightConfig()
    n: int = 200
    with_kappa: bool = False
    tol: float = 1e-8


class OptimizeRequest(BaseModel):
    model: ModelConfig
    family: FamilyConfig = FamilyConfig()
    n: int = 200
    budget: int = 20000
    seed: int = 42


class GapReportRequest(BaseModel):
    model: ModelConfig
    family: FamilyConfig = FamilyConfig()
    n: int = 200
    budget: int = 20000
    seed: int = 42


class WassersteinRequest(BaseModel):
    model: Optional[ModelConfig] = None
    weight: WeightConfig = WeightConfig()
    x0_a: int = 0
    x0_b: Optional[int] = None
    t: float = 1.0
    n: int = 200
    with_lp: bool = False
    probs_a: Optional[List[float]] = None
    probs_b: Optional[List[float]] = None


class InequalitiesRequest(BaseModel):
    model: ModelConfig
    weight: WeightConfig = WeightConfig()
    n: int = 150
    checks: Optional[List[str]] = None
    seed: int = 42


class HittingRequest(BaseModel):
    model_config = ConfigDict(populate_by_name=True)

    lam: float = Field(alias="lambda")
    nu: float
    x: int = 0
    t: float = 1.0
    n: int = 200
    tol: float = 1e-6


class MehlerRequest(BaseModel):
    model_config = ConfigDict(populate_by_name=True)

    lam: float = Field(alias="lambda")
    nu: float
    x0: int = 0
    t: float = 1.0
    n: int = 200
    tol: float = 1e-8


class OrderRequest(BaseModel):
    check: str = "domination"
    model: Optional[ModelConfig] = None
    model_b: Optional[ModelConfig] = None
    x: int = 0
    x0: int = 0
    t: float = 1.0
    n: int = 200
    tol: float = 1e-8
    probs_a: Optional[List[float]] = None
    probs_b: Optional[List[float]] = None


class SimulateRequest(BaseModel):
    model: ModelConfig
    kind: str = "hitting"
    x0: int = 1
    t: float = 1.0
    paths: int = 10000
    seed: int = 42
    stream: int = 0
    n: int = 200


class Envelope(BaseModel):
    ok: bool
    command: str
    result: dict


class HealthResponse(BaseModel):
    status: str
