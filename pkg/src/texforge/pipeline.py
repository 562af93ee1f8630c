"""End-to-end texturing: render, plan, repaint, project, one view at a time.

Run directories are written deterministically: identical configuration and
inputs reproduce every byte (images are quantized before saving, the report
contains only counters, never wall-clock times).
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from texforge.backends import resolve_backend
from texforge.config import DATASET_VIEW_NAMES, RunConfig
from texforge.errors import EmptyForeground
from texforge.imutil import dilate_mask, fill_from_nearest, resize_linear, resize_nearest, save_png
from texforge.mesh import Mesh, TextureAtlas, ensure_uvs, normalize_vertices
from texforge.projection import (
    apply_projection,
    bleed_atlas,
    chart_coverage_mask,
    restrict_to_interior,
)
from texforge.render import (
    RenderOutput,
    Viewpoint,
    depth_to_conditioning,
    render,
    render_in_uv_space,
    resample_to_screen,
)
from texforge.sampler import Conditioning, DenoiserBackend, SamplingSchedule, sample_view
from texforge.spectral import augment_mesh
from texforge.trimap import (
    BACKGROUND,
    GENERATE,
    KEEP,
    REFINE,
    MetaTexture,
    compute_trimap,
    hard_projection_mask,
    soft_projection_mask,
    trimap_to_rgb,
)

log = logging.getLogger("texforge")


@dataclass
class ViewRecord:
    """Deterministic per-view statistics for the run report."""

    index: int
    azimuth: float
    elevation: float
    keep: int = 0
    refine: int = 0
    generate: int = 0
    painted_texels: int = 0
    backend_calls: int = 0

    def to_dict(self) -> dict:
        return {
            "index": self.index,
            "azimuth": self.azimuth,
            "elevation": self.elevation,
            "keep": self.keep,
            "refine": self.refine,
            "generate": self.generate,
            "painted_texels": self.painted_texels,
            "backend_calls": self.backend_calls,
        }


@dataclass
class RunResult:
    atlas: TextureAtlas
    meta: MetaTexture
    mesh: Mesh
    config: RunConfig
    records: list = field(default_factory=list)
    covered: np.ndarray | None = None
    painted: np.ndarray | None = None
    coverage: float = 0.0
    run_dir: Path | None = None
    counters: dict = field(default_factory=dict)


def _square_crop(mask: np.ndarray, margin: float) -> tuple[int, int, int, int]:
    """(y0, x0, side, side) box around the foreground with relative margin."""
    ys, xs = np.nonzero(mask)
    h, w = mask.shape
    bh = int(ys.max() - ys.min() + 1)
    bw = int(xs.max() - xs.min() + 1)
    side = int(np.ceil(max(bh, bw) * (1.0 + margin)))
    side = min(side, h, w)
    cy = int((ys.max() + ys.min()) // 2)
    cx = int((xs.max() + xs.min()) // 2)
    y0 = int(np.clip(cy - side // 2, 0, h - side))
    x0 = int(np.clip(cx - side // 2, 0, w - side))
    return y0, x0, side, side


def _prepare_mesh(mesh: Mesh, config: RunConfig) -> Mesh:
    radius = mesh.bounding_sphere_radius()
    if abs(radius - 0.6) > 1e-6:
        mesh = mesh.with_vertices(normalize_vertices(mesh.vertices))
    return ensure_uvs(mesh, config.atlas_resolution)


class _ViewPass:
    """All intermediate products of one view, for artifact dumps and tests."""

    __slots__ = (
        "screen", "labels_full", "labels_backend", "q_backend", "depth_cond",
        "output_backend", "soft_mask", "projection", "crop", "sample_info",
    )

    def __init__(self):
        self.screen = None
        self.labels_full = None
        self.labels_backend = None
        self.q_backend = None
        self.depth_cond = None
        self.output_backend = None
        self.soft_mask = None
        self.projection = None
        self.crop = None
        self.sample_info = None


def run_view(
    mesh: Mesh,
    atlas: TextureAtlas,
    meta: MetaTexture,
    view: Viewpoint,
    config: RunConfig,
    backend: DenoiserBackend,
    schedule: SamplingSchedule,
    region_atlas: np.ndarray | None = None,
) -> tuple[np.ndarray, _ViewPass]:
    """Process one view; returns (new atlas pixels, intermediates).

    The atlas object is not mutated; with zero steps the returned pixels are
    the input array itself.
    """
    vp = _ViewPass()
    screen = render(
        mesh, atlas, view, config.render_resolution, background=config.background_gray
    )
    vp.screen = screen
    if not screen.mask.any():
        raise EmptyForeground(
            f"view az={view.azimuth_deg} el={view.elevation_deg} sees no geometry"
        )

    labels = compute_trimap(screen, mesh, meta, config.refine_margin)
    if region_atlas is not None:
        region_s = resample_to_screen(
            screen, mesh, region_atlas.astype(np.uint8), nearest=True, fill=0
        ).astype(bool)
        outside = screen.mask & ~region_s
        labels[outside] = KEEP
        force = screen.mask & region_s & (labels == KEEP)
        labels[force] = REFINE
    vp.labels_full = labels

    if schedule.steps == 0:
        return atlas.pixels, vp
    if not ((labels == REFINE) | (labels == GENERATE)).any():
        return atlas.pixels, vp  # nothing to repaint; skip the backend entirely

    y0, x0, side, _ = _square_crop(screen.mask, config.crop_margin)
    vp.crop = (y0, x0, side)
    res = config.backend_resolution

    color_crop = screen.color[y0 : y0 + side, x0 : x0 + side]
    depth_filled = fill_from_nearest(screen.depth, screen.mask)
    depth_crop = depth_filled[y0 : y0 + side, x0 : x0 + side]
    labels_crop = labels[y0 : y0 + side, x0 : x0 + side]

    q_backend = resize_linear(color_crop, res)
    depth_backend = resize_linear(depth_crop.astype(np.float32), res)
    labels_backend = resize_nearest(labels_crop, res)
    mask_backend = labels_backend != BACKGROUND
    q_backend[~mask_backend] = config.background_gray
    depth_cond = depth_to_conditioning(depth_backend, mask_backend)
    vp.q_backend = q_backend
    vp.labels_backend = labels_backend
    vp.depth_cond = depth_cond

    out_backend, info = sample_view(backend, schedule, q_backend, labels_backend, depth_cond)
    vp.output_backend = out_backend
    vp.sample_info = info

    if config.seam_mask == "hard":
        soft = hard_projection_mask(labels_backend)
    else:
        soft = soft_projection_mask(labels_backend, config.seam_sigma)
    vp.soft_mask = soft

    out_full = screen.color.copy()
    out_full[y0 : y0 + side, x0 : x0 + side] = resize_linear(out_backend, side)
    weight_full = np.zeros((screen.height, screen.width), dtype=np.float32)
    weight_full[y0 : y0 + side, x0 : x0 + side] = resize_linear(soft, side)

    proj = render_in_uv_space(
        mesh, screen, image=out_full, weight_image=weight_full,
        atlas_resolution=config.atlas_resolution,
    )
    restrict_to_interior(proj, screen.mask, erosion=1)
    vp.projection = proj

    new_pixels = apply_projection(atlas.pixels, proj)
    return new_pixels, vp


def texture_mesh(
    mesh: Mesh,
    config: RunConfig,
    backend: DenoiserBackend | None = None,
    run_dir: str | Path | None = None,
    initial_atlas: TextureAtlas | None = None,
    initial_meta: MetaTexture | None = None,
    region_atlas: np.ndarray | None = None,
    should_stop=None,
) -> RunResult:
    """Texture a mesh over the configured view sequence.

    ``region_atlas`` limits repainting to the marked texels (editing).
    ``should_stop`` is polled between views; a stopped run still flushes
    everything produced so far.
    """
    mesh = _prepare_mesh(mesh, config)
    owns_backend = backend is None
    if backend is None:
        backend = resolve_backend(config.backend)
    backend.open(
        Conditioning(
            prompt=config.prompt,
            guidance_scale=config.guidance_scale,
            steps=config.steps,
            seed=config.seed,
        )
    )
    schedule = SamplingSchedule.from_config(config)

    atlas = initial_atlas.copy() if initial_atlas is not None else TextureAtlas.filled(
        config.atlas_resolution, config.background_gray
    )
    meta = initial_meta.copy() if initial_meta is not None else MetaTexture.empty(
        config.atlas_resolution
    )
    covered = chart_coverage_mask(mesh, config.atlas_resolution)
    painted = np.zeros_like(covered)

    out_dir = Path(run_dir) if run_dir is not None else None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        config.save_toml(out_dir / "config.toml")

    records: list[ViewRecord] = []
    counters = {"views_processed": 0, "backend_calls": 0, "denoise_steps": 0}

    try:
        for i, pair in enumerate(config.views):
            view = Viewpoint.from_pair(
                pair, radius=config.camera_radius, fov_deg=config.fov_deg
            )
            rec = ViewRecord(index=i, azimuth=float(pair[0]), elevation=float(pair[1]))
            try:
                new_pixels, vp = run_view(
                    mesh, atlas, meta, view, config, backend, schedule,
                    region_atlas=region_atlas,
                )
            except EmptyForeground:
                log.warning("view %d az=%.1f el=%.1f sees no geometry; skipped",
                            i, pair[0], pair[1])
                counters["views_processed"] += 1
                records.append(rec)
                continue
            rec.keep = int((vp.labels_full == KEEP).sum())
            rec.refine = int((vp.labels_full == REFINE).sum())
            rec.generate = int((vp.labels_full == GENERATE).sum())

            if schedule.steps > 0 and vp.projection is not None:
                atlas.pixels = new_pixels
                meta.update(vp.projection)
                newly = vp.projection.weight > 0
                painted |= newly
                rec.painted_texels = int(newly.sum())
                rec.backend_calls = (
                    vp.sample_info.backend_calls if vp.sample_info is not None else 0
                )
                counters["backend_calls"] += rec.backend_calls
                counters["denoise_steps"] += schedule.steps
            counters["views_processed"] += 1
            records.append(rec)

            if out_dir is not None:
                _dump_view(out_dir, i, vp)
                save_png(out_dir / f"atlas_{i:04d}.png", atlas.pixels)

            log.info(
                "view %d az=%.1f el=%.1f keep=%d refine=%d generate=%d",
                i, pair[0], pair[1], rec.keep, rec.refine, rec.generate,
            )
            if should_stop is not None and should_stop():
                log.info("stop requested; flushed after view %d", i)
                break
    finally:
        if owns_backend:
            backend.close()

    atlas.pixels = bleed_atlas(atlas.pixels, painted, radius=config.atlas_bleed_texels)

    n_cov = int(covered.sum())
    coverage = float((painted & covered).sum()) / n_cov if n_cov else 0.0
    result = RunResult(
        atlas=atlas, meta=meta, mesh=mesh, config=config, records=records,
        covered=covered, painted=painted, coverage=coverage,
        run_dir=out_dir, counters=counters,
    )

    if out_dir is not None:
        save_png(out_dir / "atlas.png", atlas.pixels)
        meta.save(out_dir / "meta.bin")
        _write_report(out_dir, result)
    return result


def _dump_view(out_dir: Path, index: int, vp: _ViewPass) -> None:
    vdir = out_dir / f"view_{index:04d}"
    vdir.mkdir(exist_ok=True)
    save_png(vdir / "trimap.png", trimap_to_rgb(vp.labels_full))
    if vp.q_backend is not None:
        save_png(vdir / "render.png", vp.q_backend)
        save_png(vdir / "depth.png", vp.depth_cond)
        save_png(vdir / "output.png", vp.output_backend)
        save_png(vdir / "mask.png", vp.soft_mask)


def _write_report(out_dir: Path, result: RunResult) -> None:
    report = {
        "config_hash": result.config.content_hash(),
        "prompt": result.config.prompt,
        "seed": result.config.seed,
        "atlas_resolution": result.config.atlas_resolution,
        "views_total": len(result.config.views),
        "coverage": result.coverage,
        "covered_texels": int(result.covered.sum()),
        "painted_texels": int((result.painted & result.covered).sum()),
        "views": [r.to_dict() for r in result.records],
        "timings": dict(result.counters),
    }
    (out_dir / "run.json").write_text(
        json.dumps(report, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def edit_with_text(
    mesh: Mesh,
    atlas: TextureAtlas,
    meta: MetaTexture,
    prompt: str,
    config: RunConfig,
    region_atlas: np.ndarray | None = None,
    backend: DenoiserBackend | None = None,
    run_dir: str | Path | None = None,
    should_stop=None,
) -> RunResult:
    """Repaint an existing texture under a new prompt.

    With a region mask only marked texels change. Without one the whole
    painted surface is treated as refinable: the quality cache is reset to
    zero on painted texels so every view relabels its painted foreground
    as refine instead of keep.
    """
    cfg = replace(config, prompt=prompt)
    if region_atlas is None:
        meta = meta.copy()
        meta.best_nz[meta.painted] = 0.0
    return texture_mesh(
        mesh, cfg, backend=backend, run_dir=run_dir,
        initial_atlas=atlas, initial_meta=meta, region_atlas=region_atlas,
        should_stop=should_stop,
    )


def scribble_region(
    base: TextureAtlas, scribbled: TextureAtlas, threshold: float, dilate_texels: int
) -> np.ndarray:
    """Texels the user touched: channel difference above threshold, grown a bit."""
    if base.pixels.shape != scribbled.pixels.shape:
        raise ValueError("scribbled atlas must match the base atlas resolution")
    diff = np.abs(scribbled.pixels.astype(np.float64) - base.pixels.astype(np.float64))
    region = (diff > threshold).any(axis=2)
    return dilate_mask(region, dilate_texels)


def edit_with_scribble(
    mesh: Mesh,
    base_atlas: TextureAtlas,
    scribbled_atlas: TextureAtlas,
    meta: MetaTexture,
    prompt: str,
    config: RunConfig,
    backend: DenoiserBackend | None = None,
    run_dir: str | Path | None = None,
    should_stop=None,
) -> RunResult:
    """Regenerate exactly where a scribbled copy of the atlas differs.

    The run starts from the scribbled atlas so the strokes steer the
    repaint; untouched texels are pinned by the region mask.
    """
    region = scribble_region(
        base_atlas, scribbled_atlas, config.scribble_threshold, config.scribble_dilate_texels
    )
    return edit_with_text(
        mesh, scribbled_atlas, meta, prompt, config,
        region_atlas=region, backend=backend, run_dir=run_dir, should_stop=should_stop,
    )


def prepare_transfer_dataset(
    mesh: Mesh,
    atlas: TextureAtlas,
    subject: str,
    out_dir: str | Path,
    config: RunConfig,
    rounds: int | None = None,
) -> list[dict]:
    """Render a captioned image set of the textured mesh for downstream training.

    Each round draws a smooth geometric variant of the mesh and renders it
    from the six canonical directions onto a randomly colored background,
    emitting an (image, depth, prompt) triple per view. Prompts carry a
    directional placeholder token, e.g. "a <D_overhead> photo of a couch".
    Fully deterministic per config seed.
    """
    mesh = _prepare_mesh(mesh, config)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    n_rounds = rounds if rounds is not None else config.dataset_size
    names = list(DATASET_VIEW_NAMES.items())
    rng = np.random.default_rng(config.seed)

    manifest = []
    i = 0
    for rnd in range(n_rounds):
        variant_seed = int(rng.integers(0, 2**31 - 1))
        variant, _ = augment_mesh(
            mesh, k=config.spectral_k, amplitude=config.spectral_amplitude,
            seed=variant_seed,
        )
        for name, (az, el) in names:
            view = Viewpoint(az, el, radius=config.camera_radius, fov_deg=config.fov_deg)
            shot = render(
                variant, atlas, view, config.render_resolution,
                background=config.background_gray,
            )
            color = shot.color.copy()
            color[~shot.mask] = rng.uniform(0.0, 1.0, size=3).astype(np.float32)
            depth = depth_to_conditioning(shot.depth, shot.mask)
            img_name = f"img_{i:04d}.png"
            depth_name = f"depth_{i:04d}.png"
            save_png(out_dir / img_name, color)
            save_png(out_dir / depth_name, depth)
            manifest.append(
                {
                    "image": img_name,
                    "depth": depth_name,
                    "prompt": f"a <D_{name}> photo of a {subject}",
                    "azimuth": float(az),
                    "elevation": float(el),
                    "round": rnd,
                }
            )
            i += 1
    (out_dir / "manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    return manifest
