"""Request/response models for the release-line service."""

from __future__ import annotations

from typing import Any, Optional

from pydantic import BaseModel, Field


class HealthResponse(BaseModel):
    status: str = "ok"
    version: str


class BlueprintPayload(BaseModel):
    files: dict[str, str]
    metadata: dict[str, Any] = Field(default_factory=dict)


class InitLineRequest(BaseModel):
    name: str = Field(..., min_length=1, max_length=100, pattern=r"^[a-zA-Z0-9._-]+$")
    config: dict[str, Any] = Field(default_factory=dict)
    blueprint: Optional[BlueprintPayload] = None


class VersionInfo(BaseModel):
    version_id: str
    blueprint_hash: str
    parent: Optional[str]
    iteration: int


class LineSummary(BaseModel):
    name: str
    head: Optional[str]
    versions: list[VersionInfo]
    events: list[str]
    stopped: bool
    final_reported: bool


class LineListResponse(BaseModel):
    lines: list[str]


class IterateRequest(BaseModel):
    count: int = Field(1, ge=1, le=1000)


class IterateResponse(BaseModel):
    iterations_run: int
    stop_conditions: list[str]
    converged: bool
    stopped: bool
    head: str


class ReportRow(BaseModel):
    iteration: int
    gate: Optional[str]  # "Acc." / "Rej." / None for the baseline row
    f2p: Optional[int]
    p2f: Optional[int]
    rho_p2f: Optional[float]
    hit_rate: Optional[float]
    ftp: Optional[float]
    p2p: Optional[float]


class ReportResponse(BaseModel):
    name: str
    head: str
    rows: list[ReportRow]
    rendered: str


class VerifyResponse(BaseModel):
    ok: bool
    problems: list[str]


class IntentPayload(BaseModel):
    target_symptoms: list[str]
    rationale: str = ""


class GateEvaluateRequest(BaseModel):
    prev_records: str = Field(..., description="line-delimited record document")
    cand_records: str
    baseline_records: Optional[str] = None
    intent: Optional[IntentPayload] = None
    config: dict[str, Any] = Field(default_factory=dict)


class GateEvaluateResponse(BaseModel):
    accept: bool
    reasons: list[dict[str, Any]]
    flip_report: dict[str, Any]


class DiagnoseResponse(BaseModel):
    report: dict[str, Any]
    script_hash: str


class FinalReportResponse(BaseModel):
    head_version: str
    n_test: int
    n_passed: int
    pass_rate: float


class SimulateRequest(BaseModel):
    model: dict[str, Any] = Field(default_factory=dict)
    gate: dict[str, Any] = Field(default_factory=dict)
    stop: dict[str, Any] = Field(default_factory=dict)
    seed: int = 0
    iterations: int = Field(12, ge=1, le=200)
    disable_diagnosis: bool = False
    bad_release_threshold: int = 10
    line_name: Optional[str] = Field(
        None,
        description="when set, write full version-line artifacts under this name",
        pattern=r"^[a-zA-Z0-9._-]+$",
    )


class SimulateResponse(BaseModel):
    result: dict[str, Any]
    rendered: str


class SweepRequest(BaseModel):
    model: dict[str, Any] = Field(default_factory=dict)
    gate: dict[str, Any] = Field(default_factory=dict)
    stop: dict[str, Any] = Field(default_factory=dict)
    seeds: int = Field(20, ge=1, le=500)
    iterations: int = Field(12, ge=1, le=200)
    disable_diagnosis: bool = False
    bad_release_threshold: int = 10


class SweepResponse(BaseModel):
    seeds: int
    mean_bad_releases: float
    mean_promotions: float
    mean_rejections: float
    mean_promoted_f2p: float
    mean_promoted_p2f: float
    mean_promoted_p2f_rate: float
    mean_evaluated_p2f_rate: float
    mean_final_ftp: float
    mean_final_p2p: float
    per_seed: list[dict[str, Any]]
