"""Request/response models for the HTTP service."""
from __future__ import annotations

from typing import Literal

from pydantic import BaseModel, Field

from ..core import TransferMode
from ..mapping import MappingKind, MappingSpec
from ..search import Algorithm, AttackConfig

MappingName = Literal[
    "random", "similarity", "distance", "similarity-dist", "distance-dist"
]


class AttackSettings(BaseModel):
    algorithm: Literal["restart", "iterative"] = "restart"
    restarts: int = Field(default=100, ge=0)
    iters: int = Field(default=50, ge=0)
    patch_min: int = Field(default=3, ge=1)
    patch_max: int = Field(default=3, ge=1)
    mapping: MappingName = "random"
    mode: Literal["overwrite", "swap"] = "overwrite"
    seed: int = 0
    early_stop: bool = True

    def to_config(self) -> AttackConfig:
        return AttackConfig(
            algorithm=Algorithm(self.algorithm),
            restarts=self.restarts,
            iters=self.iters,
            patch_min=self.patch_min,
            patch_max=self.patch_max,
            mapping=MappingSpec(MappingKind(self.mapping)),
            transfer=TransferMode(self.mode),
            seed=self.seed,
            early_stop=self.early_stop,
        )


class AttackRequest(BaseModel):
    oracle: str
    image: str
    label: int = Field(ge=0)
    target: int | None = Field(default=None, ge=0)
    settings: AttackSettings = Field(default_factory=AttackSettings)
    out_dir: str | None = None


class AttackResponse(BaseModel):
    success: bool
    queries: int
    l0: int
    final_loss: float
    applied_moves: int
    outputs: dict[str, str] = {}


class CampaignRequest(BaseModel):
    oracle: str
    manifest: str
    settings: AttackSettings = Field(default_factory=AttackSettings)
    quota: int | None = Field(default=None, ge=1)
    workers: int = Field(default=1, ge=1)
    out_dir: str | None = None


class CampaignResponse(BaseModel):
    report: dict
    selection_counts: dict[str, int]
    selection_warnings: list[str]
    failed_items: list[str]


class MatrixRequest(BaseModel):
    oracle: str
    manifest: str
    settings: AttackSettings = Field(default_factory=AttackSettings)
    per_pair_quota: int = Field(default=5, ge=1)
    workers: int = Field(default=1, ge=1)
    out_dir: str | None = None


class MatrixResponse(BaseModel):
    matrix: dict


class PlotRequest(BaseModel):
    campaign_dir: str
    out_dir: str | None = None


class PlotResponse(BaseModel):
    outputs: dict[str, str]


class OracleInfoResponse(BaseModel):
    num_classes: int
    input_shape: list[int] | None
    concurrent_safe: bool


class HealthResponse(BaseModel):
    status: str
    version: str
