"""texforge: text-guided texture synthesis for triangle meshes."""

__version__ = "0.1.0"

from texforge.config import RunConfig
from texforge.mesh import Mesh, TextureAtlas, load_mesh, naive_uv_chart, save_mesh
from texforge.pipeline import (
    edit_with_scribble,
    edit_with_text,
    prepare_transfer_dataset,
    texture_mesh,
)
from texforge.render import Viewpoint, render, render_in_uv_space
from texforge.sampler import (
    Conditioning,
    DenoiserBackend,
    MockDenoiser,
    SamplingSchedule,
    sample_view,
)
from texforge.spectral import augment_mesh, eigenfunctions
from texforge.trimap import BACKGROUND, GENERATE, KEEP, REFINE, MetaTexture, compute_trimap

__all__ = [
    "BACKGROUND",
    "Conditioning",
    "DenoiserBackend",
    "GENERATE",
    "KEEP",
    "Mesh",
    "MetaTexture",
    "MockDenoiser",
    "REFINE",
    "RunConfig",
    "SamplingSchedule",
    "TextureAtlas",
    "Viewpoint",
    "augment_mesh",
    "compute_trimap",
    "edit_with_scribble",
    "edit_with_text",
    "eigenfunctions",
    "load_mesh",
    "naive_uv_chart",
    "prepare_transfer_dataset",
    "render",
    "render_in_uv_space",
    "sample_view",
    "save_mesh",
    "texture_mesh",
    "__version__",
]
