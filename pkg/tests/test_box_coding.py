import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from detkit.box_coding import MAX_LOG_SCALE, BoxDelta, decode, decode_array, encode
from detkit.geometry import BBox


def boxes():
    return st.tuples(
        st.floats(-500, 500), st.floats(-500, 500), st.floats(0.5, 400), st.floats(0.5, 400)
    ).map(lambda v: BBox(v[0], v[1], v[0] + v[2], v[1] + v[3]))


def test_identity():
    a = BBox(3, 4, 10, 20)
    assert encode(a, a) == (0.0, 0.0, 0.0, 0.0)
    assert decode(BoxDelta(0, 0, 0, 0), a) == a


def test_shift_by_half_width():
    assert encode(BBox(5, 0, 15, 10), BBox(0, 0, 10, 10)) == (0.5, 0.0, 0.0, 0.0)


def test_double_width():
    d = encode(BBox(0, 0, 20, 10), BBox(0, 0, 10, 10))
    assert d.tx == 0.5 and d.ty == 0.0
    assert d.tw == pytest.approx(math.log(2), abs=1e-15) and d.th == 0.0


def test_decode_log2_doubles_about_centre():
    out = decode(BoxDelta(0, 0, math.log(2), math.log(2)), BBox(0, 0, 10, 10))
    assert out.as_tuple() == pytest.approx((-5, -5, 15, 15), abs=1e-12)


def test_decode_rejects_non_finite():
    with pytest.raises(ValueError):
        decode(BoxDelta(float("nan"), 0, 0, 0), BBox(0, 0, 1, 1))


def test_decode_clamps_huge_sizes():
    out = decode(BoxDelta(0, 0, 50.0, -50.0), BBox(0, 0, 10, 10))
    assert out.width == pytest.approx(10 * math.exp(MAX_LOG_SCALE))
    assert out.height == pytest.approx(10 * math.exp(-MAX_LOG_SCALE))


@given(boxes(), boxes())
def test_round_trip(t, a):
    back = decode(encode(t, a), a)
    assert np.allclose(back.as_tuple(), t.as_tuple(), rtol=0, atol=1e-9)


@given(st.tuples(*[st.floats(-1e3, 1e3)] * 4), boxes())
def test_decoded_boxes_always_valid(d, a):
    out = decode(BoxDelta(*d), a)
    assert out.x2 > out.x1 and out.y2 > out.y1


@given(boxes(), boxes(), st.floats(-300, 300), st.floats(-300, 300))
def test_translation_equivariance(t, a, dx, dy):
    d0 = encode(t, a)
    d1 = encode(t.translate(dx, dy), a.translate(dx, dy))
    assert np.allclose(d0, d1, rtol=1e-9, atol=1e-9)


def test_vectorised_decode_matches_scalar():
    rng = np.random.default_rng(0)
    anchors = np.array([[0, 0, 10, 20], [5, 5, 50, 9], [-3, 2, 1, 8]], dtype=float)
    deltas = rng.normal(size=(3, 4))
    vec = decode_array(deltas, anchors)
    for d, a, v in zip(deltas, anchors, vec):
        assert np.allclose(decode(BoxDelta(*d), BBox(*a)).as_tuple(), v, atol=1e-12)
