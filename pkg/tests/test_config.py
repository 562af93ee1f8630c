"""Run configuration: validation, round-trips, hashing."""

import pytest

from texforge.config import DATASET_VIEW_NAMES, RunConfig, default_views
from texforge.errors import ConfigError


class TestDefaults:
    def test_constructs_and_validates(self):
        cfg = RunConfig()
        assert cfg.steps == 50
        assert cfg.atlas_resolution == 1024
        assert cfg.latent_resolution == 64
        assert cfg.backend == "mock"

    def test_default_views_cover_ring_and_poles(self):
        views = default_views()
        assert len(views) == 10
        ring = views[:8]
        assert [a for a, _ in ring] == [0.0, 45.0, 90.0, 135.0, 180.0, 225.0, 270.0, 315.0]
        assert all(e == 30.0 for _, e in ring)
        assert views[8] == (0.0, 85.0) and views[9] == (0.0, -85.0)

    def test_dataset_views_named(self):
        assert set(DATASET_VIEW_NAMES) == {"front", "back", "left", "right",
                                           "overhead", "bottom"}
        assert DATASET_VIEW_NAMES["overhead"] == (0.0, 85.0)

    def test_views_coerced_to_float_tuples(self):
        cfg = RunConfig(views=[[10, 20], (30, 40)])
        assert cfg.views == [(10.0, 20.0), (30.0, 40.0)]


class TestModeForStep:
    def test_windows(self):
        cfg = RunConfig()
        trace = [cfg.mode_for_step(i) for i in range(cfg.steps)]
        assert trace[:10] == ["depth"] * 10
        assert trace[10:20] == ["inpaint"] * 10
        assert trace[20:] == ["depth"] * 30

    def test_out_of_range(self):
        cfg = RunConfig(steps=5, inpaint_start=1, inpaint_end=2)
        with pytest.raises(ConfigError):
            cfg.mode_for_step(-1)
        with pytest.raises(ConfigError):
            cfg.mode_for_step(5)


class TestValidation:
    def test_negative_steps(self):
        with pytest.raises(ConfigError):
            RunConfig(steps=-1)

    def test_inverted_inpaint_window(self):
        with pytest.raises(ConfigError):
            RunConfig(inpaint_start=20, inpaint_end=10)

    def test_tiny_resolution(self):
        with pytest.raises(ConfigError):
            RunConfig(atlas_resolution=2)

    def test_backend_resolution_divisibility(self):
        with pytest.raises(ConfigError):
            RunConfig(backend_resolution=100, latent_downsample=8)

    def test_elevation_bounds(self):
        with pytest.raises(ConfigError):
            RunConfig(views=[(0.0, 91.0)])

    def test_seam_mask_values(self):
        RunConfig(seam_mask="hard")
        with pytest.raises(ConfigError):
            RunConfig(seam_mask="feathered")


class TestRoundTrips:
    def test_dict_round_trip(self):
        cfg = RunConfig(prompt="a brass lantern", seed=9, steps=12,
                        inpaint_start=3, inpaint_end=6, views=[(15.0, -10.0)])
        back = RunConfig.from_dict(cfg.to_dict())
        assert back == cfg

    def test_unknown_key_rejected(self):
        with pytest.raises(ConfigError) as exc:
            RunConfig.from_dict({"promt": "typo"})
        assert "promt" in str(exc.value)

    def test_toml_round_trip(self, tmp_path):
        cfg = RunConfig(prompt='tricky "quoted" prompt', seed=3,
                        seam_sigma=4.5, views=[(0.0, 30.0), (180.0, -30.0)])
        p = tmp_path / "run.toml"
        cfg.save_toml(p)
        back = RunConfig.from_toml(p)
        assert back == cfg

    def test_toml_parse_error_wrapped(self, tmp_path):
        p = tmp_path / "bad.toml"
        p.write_text("steps = [unclosed\n")
        with pytest.raises(ConfigError):
            RunConfig.from_toml(p)

    def test_toml_validates_content(self, tmp_path):
        p = tmp_path / "bad.toml"
        p.write_text("steps = -4\n")
        with pytest.raises(ConfigError):
            RunConfig.from_toml(p)


class TestMerged:
    def test_override_wins(self):
        cfg = RunConfig(steps=50)
        out = cfg.merged({"steps": 12, "prompt": "p"})
        assert out.steps == 12 and out.prompt == "p"
        assert cfg.steps == 50  # original untouched

    def test_none_values_ignored(self):
        cfg = RunConfig(seed=7)
        out = cfg.merged({"seed": None, "prompt": None})
        assert out == cfg and out is not cfg

    def test_merged_revalidates(self):
        with pytest.raises(ConfigError):
            RunConfig().merged({"steps": -1})


class TestContentHash:
    def test_stable_across_instances(self):
        assert RunConfig(seed=1).content_hash() == RunConfig(seed=1).content_hash()

    def test_sensitive_to_every_field(self):
        base = RunConfig().content_hash()
        assert RunConfig(prompt="x").content_hash() != base
        assert RunConfig(seed=1).content_hash() != base
        assert RunConfig(seam_mask="hard").content_hash() != base
        assert RunConfig(views=[(0.0, 30.0)]).content_hash() != base

    def test_hash_appears_in_toml_header(self):
        cfg = RunConfig()
        assert cfg.content_hash() in cfg.to_toml().splitlines()[0]
