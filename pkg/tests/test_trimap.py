"""Quality cache, trimap labeling, and blend/seam masks."""

import math

import numpy as np
import pytest
from scipy import special

from texforge.mesh import TextureAtlas
from texforge.primitives import cube
from texforge.mesh import ensure_uvs
from texforge.render import AtlasProjection, Viewpoint, render, render_in_uv_space
from texforge.trimap import (
    BACKGROUND,
    GENERATE,
    KEEP,
    REFINE,
    MetaTexture,
    compute_trimap,
    downsample_labels,
    hard_projection_mask,
    realize_blend_mask,
    soft_projection_mask,
    trimap_to_rgb,
)
from texforge.imutil import checkerboard


def make_projection(res, weight, nz, covered=None, visible=None):
    """Hand-built projection for update tests."""
    covered = np.ones((res, res), bool) if covered is None else covered
    visible = np.ones((res, res), bool) if visible is None else visible
    return AtlasProjection(
        resolution=res,
        color=np.zeros((res, res, 3), np.float32),
        weight=np.asarray(weight, np.float32),
        covered=covered,
        visible=visible,
        face_id=np.zeros((res, res), np.int32),
        nz=np.asarray(nz, np.float32),
        screen_xy=np.zeros((res, res, 2), np.float32),
    )


class TestMetaTexture:
    def test_update_takes_max_only_where_painted(self):
        meta = MetaTexture.empty(4)
        w = np.zeros((4, 4), np.float32)
        w[0, :] = 1.0
        nz = np.full((4, 4), 0.5, np.float32)
        meta.update(make_projection(4, w, nz))
        assert meta.painted[0].all() and not meta.painted[1:].any()
        np.testing.assert_allclose(meta.best_nz[0], 0.5)

        # second view: better angle on column 0, worse elsewhere, zero weight on row 3
        w2 = np.ones((4, 4), np.float32)
        w2[3, :] = 0.0
        nz2 = np.full((4, 4), 0.3, np.float32)
        nz2[:, 0] = 0.9
        meta.update(make_projection(4, w2, nz2))
        assert meta.best_nz[0, 0] == pytest.approx(0.9)   # improved
        assert meta.best_nz[0, 1] == pytest.approx(0.5)   # kept the max
        assert meta.best_nz[1, 1] == pytest.approx(0.3)   # newly painted
        assert not meta.painted[3].any()                   # zero weight never claims

    def test_update_requires_visibility(self):
        meta = MetaTexture.empty(4)
        vis = np.zeros((4, 4), bool)
        vis[0, 0] = True
        meta.update(make_projection(4, np.ones((4, 4)), np.full((4, 4), 0.7), visible=vis))
        assert meta.painted[0, 0] and meta.painted.sum() == 1

    def test_bytes_round_trip(self):
        meta = MetaTexture.empty(8)
        meta.best_nz[2, 3] = 0.625
        meta.painted[2, 3] = True
        blob = meta.to_bytes()
        assert blob[:8] == b"TXMETA01"
        assert int.from_bytes(blob[8:12], "little") == 8
        assert int.from_bytes(blob[12:16], "little") == 8
        assert len(blob) == 16 + 8 * 8 * 4
        back = MetaTexture.from_bytes(blob)
        np.testing.assert_array_equal(back.painted, meta.painted)
        np.testing.assert_array_equal(back.best_nz, meta.best_nz)

    def test_file_round_trip(self, tmp_path):
        meta = MetaTexture.empty(4)
        meta.best_nz[1, 1] = 0.25
        meta.painted[1, 1] = True
        meta.save(tmp_path / "meta.bin")
        back = MetaTexture.load(tmp_path / "meta.bin")
        np.testing.assert_array_equal(back.best_nz, meta.best_nz)

    def test_truncated_blob_rejected(self):
        blob = MetaTexture.empty(4).to_bytes()
        with pytest.raises(Exception):
            MetaTexture.from_bytes(blob[:-3])
        with pytest.raises(Exception):
            MetaTexture.from_bytes(b"NOTMAGIC" + blob[8:])


class TestComputeTrimap:
    def test_fresh_cache_all_generate(self, cube_mesh):
        screen = render(cube_mesh, None, Viewpoint(10.0, 20.0), 300)
        labels = compute_trimap(screen, cube_mesh, MetaTexture.empty(1024))
        assert (labels[screen.mask] == GENERATE).all()
        assert (labels[~screen.mask] == BACKGROUND).all()

    def test_two_view_cube_label_swap(self):
        """Quality-driven relabeling, checked against hand-computed angles.

        View A at azimuth 72.5 sees the +z face nearly head-on and the +x
        face at grazing; view B at azimuth 17.5 swaps the roles. After
        painting from A, view B must refine the face it now sees better
        (gain 0.65 > margin) and keep the face it sees worse.
        """
        mesh = ensure_uvs(cube(), 1024)
        margin = 0.1

        az_a, az_b = 72.5, 17.5
        nz_face_z = lambda az: math.cos(math.radians(az))  # +z face alignment
        nz_face_x = lambda az: math.sin(math.radians(az))  # +x face alignment
        assert nz_face_z(az_b) - nz_face_z(az_a) > margin
        assert nz_face_x(az_a) - nz_face_x(az_b) > margin

        meta = MetaTexture.empty(1024)
        va = Viewpoint(az_a, 0.0)
        screen_a = render(mesh, None, va, 400)
        proj_a = render_in_uv_space(mesh, screen_a, atlas_resolution=1024)
        meta.update(proj_a)

        vb = Viewpoint(az_b, 0.0)
        screen_b = render(mesh, None, vb, 400)
        labels = compute_trimap(screen_b, mesh, meta, refine_margin=margin)

        normals = mesh.face_normals()
        plus_z = np.nonzero(normals[:, 2] > 0.99)[0]
        plus_x = np.nonzero(normals[:, 0] > 0.99)[0]
        lab_z = labels[np.isin(screen_b.face_id, plus_z)]
        lab_x = labels[np.isin(screen_b.face_id, plus_x)]
        assert (lab_z == REFINE).mean() > 0.99  # big angle gain: repaint
        assert (lab_x == KEEP).mean() > 0.99    # angle got worse: freeze

    def test_small_gain_stays_keep(self, cube_mesh):
        # same view twice: gain is exactly zero, everything painted keeps
        meta = MetaTexture.empty(1024)
        v = Viewpoint(30.0, 20.0)
        screen = render(cube_mesh, None, v, 300)
        meta.update(render_in_uv_space(cube_mesh, screen, atlas_resolution=1024))
        labels = compute_trimap(screen, cube_mesh, meta)
        fg = screen.mask
        assert (labels[fg] == KEEP).mean() > 0.99


class TestDownsampleLabels:
    def test_majority_vote(self):
        labels = np.full((4, 4), KEEP, np.int8)
        labels[:2, :2] = GENERATE  # one full block
        out = downsample_labels(labels, 2)
        assert out[0, 0] == GENERATE
        assert out[1, 1] == KEEP

    def test_tie_priority_refine_first(self):
        # one pixel of each label in a 2x2 block: refine wins the tie
        labels = np.array([[REFINE, GENERATE], [KEEP, BACKGROUND]], np.int8)
        assert downsample_labels(labels, 2)[0, 0] == REFINE
        labels = np.array([[GENERATE, GENERATE], [KEEP, KEEP]], np.int8)
        assert downsample_labels(labels, 2)[0, 0] == GENERATE

    def test_rejects_indivisible(self):
        with pytest.raises(ValueError):
            downsample_labels(np.zeros((5, 5), np.int8), 2)


class TestRealizeBlendMask:
    def test_labels_to_weights(self):
        labels = np.array([[KEEP, GENERATE], [BACKGROUND, GENERATE]], np.int8)
        m = realize_blend_mask(labels, step=0)
        np.testing.assert_array_equal(m, [[0, 1], [0, 1]])

    def test_refine_checker_through_cutoff(self):
        labels = np.full((8, 8), REFINE, np.int8)
        checker = checkerboard((8, 8), 2)
        for step in (0, 10, 25):
            np.testing.assert_array_equal(realize_blend_mask(labels, step, 25, 2), checker)
        for step in (26, 49):
            np.testing.assert_array_equal(
                realize_blend_mask(labels, step, 25, 2), np.ones((8, 8), np.float32)
            )

    def test_mixed_labels_cell_for_cell(self):
        rng = np.random.default_rng(0)
        labels = rng.choice(
            [BACKGROUND, KEEP, REFINE, GENERATE], size=(16, 16)
        ).astype(np.int8)
        checker = checkerboard((16, 16), 2)
        got = realize_blend_mask(labels, step=5, checker_cutoff=25, checker_period=2)
        expect = np.zeros((16, 16), np.float32)
        expect[labels == GENERATE] = 1.0
        ref = labels == REFINE
        expect[ref] = checker[ref]
        np.testing.assert_array_equal(got, expect)


class TestSeamMasks:
    def test_soft_mask_zero_outside_hard(self):
        labels = np.full((64, 64), KEEP, np.int8)
        labels[:, 32:] = GENERATE
        soft = soft_projection_mask(labels, sigma=5.0)
        # bitwise zero on the keep side: no weight ever leaks across
        assert (soft[:, :32] == 0.0).all()
        assert (soft[:, 32:] > 0.0).all()
        assert soft.max() <= 1.0

    def test_soft_mask_matches_erf_profile(self):
        """Blur of a half-plane step is the Gaussian CDF.

        Discrete Gaussian blur of a step function along x follows
        0.5 * erfc((edge - x)/ (sigma*sqrt(2))) up to discretization error;
        the soft mask multiplies that by the step itself.
        """
        sigma = 9.0
        n = 256
        edge = 128
        labels = np.full((n, n), KEEP, np.int8)
        labels[:, edge:] = GENERATE
        soft = soft_projection_mask(labels, sigma=sigma)
        xs = np.arange(edge, n - 40)  # stay away from the reflected border
        # blur value at cell x: integral of the kernel over the hard side;
        # cell centers sit at integer coordinates, boundary midway
        expected = 0.5 * special.erfc((edge - 0.5 - xs) / (sigma * math.sqrt(2.0)))
        got = soft[n // 2, edge : n - 40]
        np.testing.assert_allclose(got, expected, atol=2e-3)

    def test_hard_mask_is_binary_repaint_region(self):
        labels = np.array([[KEEP, REFINE], [GENERATE, BACKGROUND]], np.int8)
        np.testing.assert_array_equal(hard_projection_mask(labels), [[0, 1], [1, 0]])

    def test_soft_support_equals_hard_support(self):
        rng = np.random.default_rng(3)
        labels = rng.choice([KEEP, REFINE, GENERATE, BACKGROUND], size=(64, 64)).astype(np.int8)
        hard = hard_projection_mask(labels)
        soft = soft_projection_mask(labels, sigma=4.0)
        np.testing.assert_array_equal(soft > 0, hard > 0)


def test_trimap_rgb_distinct_colors():
    labels = np.array([[KEEP, REFINE, GENERATE, BACKGROUND]], np.int8)
    img = trimap_to_rgb(labels)
    rows = {tuple(np.round(c, 3)) for c in img[0]}
    assert len(rows) == 4
