"""HTTP facade over the texturing pipeline.

Handlers are plain functions on the request models; the CLI calls them
in-process and the FastAPI routes expose the same functions over HTTP, so
both paths execute identical code.
"""

from __future__ import annotations

import warnings
from dataclasses import replace
from pathlib import Path

from fastapi import FastAPI, HTTPException

import texforge
from texforge.config import RunConfig
from texforge.errors import ConfigError, ParseError, TexforgeError
from texforge.imutil import load_png
from texforge.mesh import MissingUVWarning, TextureAtlas, load_mesh, save_mesh
from texforge.pipeline import (
    edit_with_scribble,
    edit_with_text,
    prepare_transfer_dataset,
    texture_mesh,
)
from texforge.service import schemas
from texforge.spectral import augment_mesh
from texforge.trimap import MetaTexture


def build_config(
    config_path: str | None,
    overrides: dict,
    prompt: str | None = None,
    seed: int | None = None,
    backend: str | None = None,
) -> RunConfig:
    cfg = RunConfig.from_toml(config_path) if config_path else RunConfig()
    merged = dict(overrides)
    if prompt is not None:
        merged["prompt"] = prompt
    if seed is not None:
        merged["seed"] = seed
    if backend is not None:
        merged["backend"] = backend
    return cfg.merged(merged)


def _load_mesh_quiet(path: str):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", MissingUVWarning)
        return load_mesh(path)


def handle_texture(req: schemas.TextureRequest, should_stop=None) -> schemas.TextureResponse:
    cfg = build_config(req.config_path, req.overrides, req.prompt, req.seed, req.backend)
    mesh = _load_mesh_quiet(req.mesh_path)
    result = texture_mesh(mesh, cfg, run_dir=req.out_dir, should_stop=should_stop)
    return schemas.TextureResponse(
        run_dir=str(result.run_dir),
        atlas_path=str(result.run_dir / "atlas.png"),
        coverage=result.coverage,
        views_processed=result.counters["views_processed"],
        config_hash=cfg.content_hash(),
    )


def _load_run(run_dir: str) -> tuple[TextureAtlas, MetaTexture]:
    base = Path(run_dir)
    atlas_path = base / "atlas.png"
    meta_path = base / "meta.bin"
    if not atlas_path.exists() or not meta_path.exists():
        raise ConfigError(f"{run_dir} is not a finished run (needs atlas.png and meta.bin)")
    pixels = load_png(atlas_path)
    atlas = TextureAtlas(resolution=pixels.shape[0], pixels=pixels)
    return atlas, MetaTexture.load(meta_path)


def handle_edit(req: schemas.EditRequest, should_stop=None) -> schemas.TextureResponse:
    atlas, meta = _load_run(req.run_dir)
    cfg = build_config(req.config_path, req.overrides, req.prompt, req.seed, req.backend)
    cfg = replace(cfg, atlas_resolution=atlas.resolution)
    mesh = _load_mesh_quiet(req.mesh_path)

    if req.scribbled_path and req.region_path:
        raise ConfigError("give either a region mask or a scribbled atlas, not both")
    if req.scribbled_path:
        pixels = load_png(req.scribbled_path)
        if pixels.shape[0] != atlas.resolution:
            raise ConfigError("scribbled atlas resolution differs from the run atlas")
        scribbled = TextureAtlas(resolution=atlas.resolution, pixels=pixels)
        result = edit_with_scribble(
            mesh, atlas, scribbled, meta, req.prompt, cfg,
            run_dir=req.out_dir, should_stop=should_stop,
        )
    else:
        region = None
        if req.region_path:
            img = load_png(req.region_path)
            if img.shape[0] != atlas.resolution:
                raise ConfigError("region mask resolution differs from the run atlas")
            region = (img > 0.5) if img.ndim == 2 else (img > 0.5).any(axis=2)
        result = edit_with_text(
            mesh, atlas, meta, req.prompt, cfg,
            region_atlas=region, run_dir=req.out_dir, should_stop=should_stop,
        )

    return schemas.TextureResponse(
        run_dir=str(result.run_dir),
        atlas_path=str(result.run_dir / "atlas.png"),
        coverage=result.coverage,
        views_processed=result.counters["views_processed"],
        config_hash=cfg.content_hash(),
    )


def handle_augment(req: schemas.AugmentRequest) -> schemas.AugmentResponse:
    mesh = _load_mesh_quiet(req.mesh_path)
    variant, info = augment_mesh(mesh, k=req.k, amplitude=req.amplitude, seed=req.seed)
    save_mesh(variant, req.out_path)
    return schemas.AugmentResponse(
        out_path=req.out_path,
        eigen_index=info.eigen_index,
        eigenvalue=info.eigenvalue,
        magnitude=info.magnitude,
        retries=info.retries,
    )


def handle_dataset(req: schemas.DatasetRequest) -> schemas.DatasetResponse:
    atlas, _ = _load_run(req.run_dir)
    cfg = build_config(req.config_path, req.overrides)
    cfg = replace(cfg, atlas_resolution=atlas.resolution)
    mesh = _load_mesh_quiet(req.mesh_path)
    manifest = prepare_transfer_dataset(
        mesh, atlas, req.subject, req.out_dir, cfg, rounds=req.count
    )
    return schemas.DatasetResponse(out_dir=req.out_dir, count=len(manifest))


def create_app() -> FastAPI:
    app = FastAPI(title="texforge", version=texforge.__version__)

    def guarded(fn, *args):
        try:
            return fn(*args)
        except (ConfigError, ParseError, FileNotFoundError) as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        except TexforgeError as exc:
            raise HTTPException(status_code=500, detail=str(exc))

    @app.get("/health", response_model=schemas.HealthResponse)
    def health():
        return schemas.HealthResponse(status="ok", version=texforge.__version__)

    @app.get("/v1/defaults")
    def defaults():
        return RunConfig().to_dict()

    @app.post("/v1/texture", response_model=schemas.TextureResponse)
    def texture(req: schemas.TextureRequest):
        return guarded(handle_texture, req)

    @app.post("/v1/edit", response_model=schemas.TextureResponse)
    def edit(req: schemas.EditRequest):
        return guarded(handle_edit, req)

    @app.post("/v1/augment", response_model=schemas.AugmentResponse)
    def augment(req: schemas.AugmentRequest):
        return guarded(handle_augment, req)

    @app.post("/v1/dataset", response_model=schemas.DatasetResponse)
    def dataset(req: schemas.DatasetRequest):
        return guarded(handle_dataset, req)

    return app
