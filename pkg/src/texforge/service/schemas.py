"""Request and response models for the texturing service."""

from __future__ import annotations

from pydantic import BaseModel, Field


class TextureRequest(BaseModel):
    mesh_path: str
    prompt: str
    out_dir: str
    seed: int | None = None
    backend: str | None = None
    config_path: str | None = None
    overrides: dict = Field(default_factory=dict)


class TextureResponse(BaseModel):
    run_dir: str
    atlas_path: str
    coverage: float
    views_processed: int
    config_hash: str


class EditRequest(BaseModel):
    mesh_path: str
    run_dir: str  # directory of the run being edited (atlas.png + meta.bin)
    prompt: str
    out_dir: str
    region_path: str | None = None     # PNG mask of atlas texels to repaint
    scribbled_path: str | None = None  # atlas copy with strokes painted on it
    seed: int | None = None
    backend: str | None = None
    config_path: str | None = None
    overrides: dict = Field(default_factory=dict)


class AugmentRequest(BaseModel):
    mesh_path: str
    out_path: str
    seed: int = 0
    k: int = 16
    amplitude: float = 0.05


class AugmentResponse(BaseModel):
    out_path: str
    eigen_index: int
    eigenvalue: float
    magnitude: float
    retries: int


class DatasetRequest(BaseModel):
    mesh_path: str
    run_dir: str
    subject: str
    out_dir: str
    count: int | None = None  # augmentation rounds; each round renders 6 views
    config_path: str | None = None
    overrides: dict = Field(default_factory=dict)


class DatasetResponse(BaseModel):
    out_dir: str
    count: int


class HealthResponse(BaseModel):
    status: str
    version: str
