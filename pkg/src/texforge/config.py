"""Run configuration: defaults, TOML round-trip and content hashing.

Precedence is CLI flag > config file > built-in default; the merged result
is snapshotted into every run directory so runs are reproducible from the
directory alone.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from texforge.errors import ConfigError


def default_views() -> list[tuple[float, float]]:
    """Eight ring views at 30 degrees elevation, plus near-top and
    near-bottom views.

    (azimuth_deg, elevation_deg) pairs. At camera radius 2 a 0.6-radius
    object shows a ~72 degree cap per view, so the 30-degree ring together
    with the two polar views keeps every latitude usably inside some view's
    cap; a steeper ring leaves a southern band that is only ever grazed
    near silhouettes and never gets painted.
    """
    ring = [(float(a), 30.0) for a in range(0, 360, 45)]
    return ring + [(0.0, 85.0), (0.0, -85.0)]


DATASET_VIEW_NAMES: dict[str, tuple[float, float]] = {
    "front": (0.0, 0.0),
    "back": (180.0, 0.0),
    "left": (90.0, 0.0),
    "right": (270.0, 0.0),
    "overhead": (0.0, 85.0),
    "bottom": (0.0, -85.0),
}


@dataclass
class RunConfig:
    """Everything a texturing run needs, with reproducible defaults."""

    prompt: str = ""
    seed: int = 0

    # resolutions
    atlas_resolution: int = 1024
    render_resolution: int = 1200
    backend_resolution: int = 512
    latent_downsample: int = 8

    # sampling
    steps: int = 50
    guidance_scale: float = 7.5
    inpaint_start: int = 10   # steps [inpaint_start, inpaint_end) use the inpaint mode
    inpaint_end: int = 20
    checker_cutoff: int = 25  # refine regions use a checkerboard through this step
    checker_period: int = 2   # full checker cycle in latent pixels
    seam_sigma: float = 9.0   # Gaussian sigma (backend pixels) for the soft seam mask
    seam_mask: str = "soft"   # "soft" feathers repaint edges; "hard" is a binary cut

    # trimap
    refine_margin: float = 0.1  # minimum normal-z improvement to repaint a texel
    crop_margin: float = 0.1    # padding around the foreground box sent to the backend

    # camera
    camera_radius: float = 2.0
    fov_deg: float = 40.0
    near: float = 0.1
    far: float = 10.0
    views: list = field(default_factory=default_views)

    # geometry augmentation
    spectral_k: int = 16
    spectral_amplitude: float = 0.05  # displacement cap, fraction of bounding radius

    # editing
    scribble_threshold: float = 4.0 / 255.0
    scribble_dilate_texels: int = 3

    # dataset generation
    dataset_size: int = 20

    # compositing
    background_gray: float = 0.5
    atlas_bleed_texels: int = 2

    backend: str = "mock"

    def __post_init__(self):
        self.views = [(float(a), float(e)) for a, e in self.views]
        if self.steps < 0:
            raise ConfigError("steps must be non-negative")
        if not (0 <= self.inpaint_start <= self.inpaint_end <= max(self.steps, self.inpaint_end)):
            raise ConfigError("inpaint window must satisfy 0 <= start <= end")
        if self.atlas_resolution < 4 or self.render_resolution < 4:
            raise ConfigError("resolutions must be at least 4")
        if self.backend_resolution % self.latent_downsample:
            raise ConfigError("backend resolution must be divisible by the latent downsample")
        for a, e in self.views:
            if not (-90.0 <= e <= 90.0):
                raise ConfigError(f"elevation {e} outside [-90, 90]")
        if self.seam_mask not in ("soft", "hard"):
            raise ConfigError("seam_mask must be 'soft' or 'hard'")

    @property
    def latent_resolution(self) -> int:
        return self.backend_resolution // self.latent_downsample

    def mode_for_step(self, step: int) -> str:
        """Which conditioning the backend gets at a given step index."""
        if step < 0 or step >= self.steps:
            raise ConfigError(f"step {step} outside [0, {self.steps})")
        if self.inpaint_start <= step < self.inpaint_end:
            return "inpaint"
        return "depth"

    def to_dict(self) -> dict:
        d = asdict(self)
        d["views"] = [[a, e] for a, e in self.views]
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def from_toml(cls, path: str | Path) -> "RunConfig":
        with open(path, "rb") as fh:
            try:
                data = tomllib.load(fh)
            except tomllib.TOMLDecodeError as exc:
                raise ConfigError(f"{path}: {exc}") from exc
        return cls.from_dict(data)

    def merged(self, overrides: dict) -> "RunConfig":
        """New config with non-None override values applied."""
        clean = {k: v for k, v in overrides.items() if v is not None}
        if not clean:
            return replace(self)
        base = self.to_dict()
        base.update(clean)
        return RunConfig.from_dict(base)

    def content_hash(self) -> str:
        """Stable short hash of the full configuration."""
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]

    def to_toml(self) -> str:
        lines = [f"# texforge run configuration (hash {self.content_hash()})"]
        for key, val in self.to_dict().items():
            lines.append(f"{key} = {_toml_value(val)}")
        return "\n".join(lines) + "\n"

    def save_toml(self, path: str | Path) -> None:
        Path(path).write_text(self.to_toml(), encoding="utf-8")


def _toml_value(val) -> str:
    if isinstance(val, bool):
        return "true" if val else "false"
    if isinstance(val, int):
        return str(val)
    if isinstance(val, float):
        return repr(float(val))
    if isinstance(val, str):
        return json.dumps(val)  # JSON string escaping is valid TOML for basic strings
    if isinstance(val, (list, tuple)):
        return "[" + ", ".join(_toml_value(v) for v in val) + "]"
    raise ConfigError(f"cannot serialize config value of type {type(val).__name__}")
