import math

import numpy as np
import pytest

from detkit.anchors import AnchorConfig, base_anchors, tile


def test_unit_anchor():
    (a,) = base_anchors(AnchorConfig(16, (1,), (1,), 16))
    assert a.as_tuple() == (0.0, 0.0, 16.0, 16.0)
    assert a.center == (8.0, 8.0)


def test_default_config_has_nine_anchors():
    cfg = AnchorConfig()
    anchors = base_anchors(cfg)
    assert cfg.k == 9 and len(anchors) == 9
    # hand-derived: side s = 16*scale, w = s/sqrt(r), h = s*sqrt(r)
    expected = []
    for r in (0.5, 1, 2):
        for s in (8, 16, 32):
            side = 16 * s
            expected.append((side / math.sqrt(r), side * math.sqrt(r)))
    for a, (w, h) in zip(anchors, expected):
        assert a.width == pytest.approx(w, rel=1e-12)
        assert a.height == pytest.approx(h, rel=1e-12)
        assert a.center == pytest.approx((8.0, 8.0), abs=1e-9)


def test_ratio_four_box():
    (a,) = base_anchors(AnchorConfig(16, (1,), (4,), 16))
    assert a.width == pytest.approx(8.0, abs=1e-12)
    assert a.height == pytest.approx(32.0, abs=1e-12)
    assert a.area == pytest.approx(256.0, rel=1e-12)


def test_area_depends_only_on_scale():
    cfg = AnchorConfig(16, (0.5, 2, 7), (0.25, 0.7, 1, 3.3), 8)
    for n, a in enumerate(base_anchors(cfg)):
        scale = cfg.scales[n % len(cfg.scales)]
        assert abs(a.area - (16 * scale) ** 2) <= 1e-6 * (16 * scale) ** 2


@pytest.mark.parametrize("kwargs", [dict(scales=(0,)), dict(ratios=(-1,)), dict(scales=()),
                                    dict(stride=0), dict(base_size=-2)])
def test_invalid_config(kwargs):
    with pytest.raises(ValueError):
        AnchorConfig(**kwargs)


def test_single_position_is_base():
    cfg = AnchorConfig()
    s = tile(cfg, 1, 1)
    assert np.array_equal(s.boxes, np.array([b.as_tuple() for b in base_anchors(cfg)]))


def test_count_38_by_50():
    assert len(tile(AnchorConfig(), 38, 50)) == 17100


def test_translation_invariance():
    cfg = AnchorConfig()
    s = tile(cfg, 7, 5)
    origin = s.at(0, 0)
    for i in range(7):
        for j in range(5):
            shifted = origin + np.array([j * 16.0, i * 16.0, j * 16.0, i * 16.0])
            assert np.array_equal(s.at(i, j), shifted)
    assert s.bbox(s.index(2, 3, 4)).as_tuple() == tuple(s.at(2, 3)[4])


def test_anchor_set_is_read_only():
    s = tile(AnchorConfig(), 2, 2)
    with pytest.raises(ValueError):
        s.boxes[0, 0] = 1.0


def test_tile_rejects_bad_grid():
    with pytest.raises(ValueError):
        tile(AnchorConfig(), 0, 3)


def test_tile_overflow():
    with pytest.raises(OverflowError):
        tile(AnchorConfig(), 2**40, 2**40)
