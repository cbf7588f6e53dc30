from fractions import Fraction

import numpy as np
import pytest

from magnetohom.errors import InvalidParams, SeparationViolated
from magnetohom.geometry import (Ball, Box, InclusionSpec, build_mask, empty_mask, load_mask_dump,
                                 mask_from_occupancy, skw, sym, tile)

BALL = InclusionSpec.from_dicts([{"type": "ball", "center": [0.5, 0.5, 0.5], "radius": 0.25}])


def test_centered_ball_is_one_component():
    m = build_mask(BALL, 16)
    assert m.n_components == 1
    assert m.separation >= 1
    # voxel volume approaches 4/3 pi r^3
    assert abs(m.volume_fraction - 4 / 3 * np.pi * 0.25**3) < 0.01


def test_ball_touching_faces_rejected():
    spec = InclusionSpec.from_dicts([{"type": "ball", "center": [0.5, 0.5, 0.5], "radius": 0.5}])
    with pytest.raises(SeparationViolated):
        spec.check_well_separated()
    with pytest.raises(SeparationViolated):
        build_mask(spec, 16)


def test_two_boxes_two_components():
    spec = InclusionSpec((Box((0.1, 0.1, 0.1), (0.3, 0.3, 0.3)), Box((0.6, 0.6, 0.6), (0.9, 0.9, 0.9))))
    m = build_mask(spec, 16)
    assert m.n_components == 2


def test_invalid_shapes():
    with pytest.raises(InvalidParams):
        Ball((0.5, 0.5, 0.5), -1.0)
    with pytest.raises(InvalidParams):
        Box((0.5, 0.1, 0.1), (0.2, 0.3, 0.3))
    with pytest.raises(InvalidParams):
        InclusionSpec.from_dicts([{"type": "cone"}])


def test_empty_mask():
    m = empty_mask(8)
    assert m.n_components == 0 and m.volume_fraction == 0.0


def test_replicate_counts_components():
    m = build_mask(BALL, 8).replicate(2)
    assert m.N == 16 and m.n_components == 8
    assert np.array_equal(m.occupancy[:8, :8, :8], build_mask(BALL, 8).occupancy)


def test_at_is_periodic():
    m = build_mask(BALL, 16)
    assert m.at([0.5, 0.5, 0.5]) and m.at([1.5, -0.5, 2.5])
    assert not m.at([0.01, 0.01, 0.01])


def test_dump_roundtrip(tmp_path):
    m = build_mask(BALL, 8)
    m.dump(tmp_path / "mask.raw")
    assert np.array_equal(load_mask_dump(tmp_path / "mask.raw"), m.occupancy)


def test_mask_from_occupancy_rejects_face_voxels():
    occ = np.zeros((8, 8, 8), bool)
    occ[0, 3, 3] = True
    with pytest.raises(SeparationViolated):
        mask_from_occupancy(occ)


def test_tiling_exact_for_commensurate_epsilon():
    t = tile(Fraction(1, 4))
    assert len(t.interior_cells) == 64
    assert t.complement_measure == 0


def test_tiling_two_fifths():
    # 2 cells of width 2/5 per edge fit: covered 8 * (2/5)^3
    t = tile(Fraction(2, 5))
    assert len(t.interior_cells) == 8
    assert t.complement_measure == Fraction(61, 125)


def test_sym_skw_split(rng):
    G = rng.normal(size=(3, 3))
    assert np.allclose(sym(G) + skw(G), G)
    assert np.allclose(skw(G), -skw(G).T)
