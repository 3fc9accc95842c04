"""
Pydantic models for API request/response types.
"""

from typing import Optional
from pydantic import BaseModel, Field


# Prediction models
class PredictRequest(BaseModel):
    features: list[list[float]] = Field(..., min_length=1, description="Feature rows, each of the checkpoint's input width")
    threshold: Optional[float] = Field(None, gt=0.0, lt=1.0, description="Decision threshold (default: the checkpoint's)")


class PredictResponse(BaseModel):
    node_ids: list[str]
    probabilities: list[list[float]]  # constrained ensemble mean per row
    labels: list[list[int]]  # ancestor-consistent 0/1 per row
    threshold: float


# Weight inspection models
class NodeWeight(BaseModel):
    node_id: str
    n_i: int = Field(..., description="Positive annotations after closure")
    f_i: float = Field(..., description="n_i / N_obs")
    w_i: float = Field(..., description="Raw imbalance weight")
    w_tilde: float = Field(..., description="Rescaled weight applied to positives")


class WeightsResponse(BaseModel):
    n_obs: int
    w0: float
    n_classes_mode: str
    nodes: list[NodeWeight]


# Run models
class RunMetadata(BaseModel):
    name: str
    updatedAt: str
    hasCheckpoint: bool
    hasMetrics: bool


class RunListResponse(BaseModel):
    runs: list[RunMetadata]
