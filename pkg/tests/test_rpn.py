import numpy as np
import pytest

from detkit.rpn import (
    ConvLayer,
    DenseLayer,
    DetectionHead,
    FeatureMap,
    RpnWeights,
    ShapeError,
    conv_forward,
    head_forward,
    init_head,
    init_rpn,
    rpn_forward,
)

from oracles import naive_conv, softmax_ref


def test_identity_1x1():
    x = np.random.default_rng(0).normal(size=(3, 4, 5))
    w = np.eye(3).reshape(3, 3, 1, 1)
    out = conv_forward(FeatureMap(x), ConvLayer(w, np.zeros(3)))
    assert np.array_equal(out.data, x)


def test_zero_weights_give_bias():
    x = np.random.default_rng(1).normal(size=(2, 3, 3))
    out = conv_forward(FeatureMap(x), ConvLayer(np.zeros((4, 2, 3, 3)), [1, 2, 3, 4]))
    assert np.array_equal(out.data, np.broadcast_to(np.arange(1, 5.0)[:, None, None], (4, 3, 3)))


@pytest.mark.parametrize("ks", [1, 3])
def test_conv_matches_nested_loops(ks):
    rng = np.random.default_rng(ks)
    x = rng.normal(size=(3, 5, 5))
    w = rng.normal(size=(4, 3, ks, ks))
    b = rng.normal(size=4)
    out = conv_forward(FeatureMap(x), ConvLayer(w, b))
    assert np.max(np.abs(out.data - naive_conv(x, w, b))) <= 1e-9


def test_conv_linearity():
    rng = np.random.default_rng(5)
    layer = ConvLayer(rng.normal(size=(2, 3, 3, 3)), np.zeros(2))
    x, y = rng.normal(size=(2, 3, 6, 4))
    lhs = conv_forward(FeatureMap(2.5 * x - 0.75 * y), layer).data
    rhs = 2.5 * conv_forward(FeatureMap(x), layer).data - 0.75 * conv_forward(FeatureMap(y), layer).data
    assert np.max(np.abs(lhs - rhs)) <= 1e-9


def test_channel_mismatch():
    with pytest.raises(ShapeError):
        conv_forward(FeatureMap(np.zeros((2, 3, 3))), ConvLayer(np.zeros((1, 3, 1, 1)), [0]))


def test_feature_map_rejects_bad_input():
    with pytest.raises(ShapeError):
        FeatureMap(np.zeros((3, 0, 2)))
    with pytest.raises(ValueError):
        FeatureMap(np.full((1, 2, 2), np.inf))


def test_input_not_mutated():
    x = np.random.default_rng(2).normal(size=(3, 4, 4))
    keep = x.copy()
    rpn_forward(FeatureMap(x), init_rpn(3, k=9, seed=0))
    assert np.array_equal(x, keep)


@pytest.mark.parametrize("hw", [(1, 1), (1, 7), (5, 3), (12, 12)])
def test_rpn_shapes(hw):
    x = np.random.default_rng(0).normal(size=(4, *hw))
    out = rpn_forward(FeatureMap(x), init_rpn(4, k=9, seed=1), k=9)
    assert out.cls_map.data.shape == (18, *hw)
    assert out.reg_map.data.shape == (36, *hw)
    probs = out.probabilities()
    assert probs.shape == (*hw, 9, 2)
    assert np.max(np.abs(probs.sum(axis=-1) - 1)) <= 1e-6
    assert out.objectness().shape == (hw[0] * hw[1] * 9,)
    assert out.deltas().shape == (hw[0] * hw[1] * 9, 4)


def test_rpn_channel_layout():
    """Object logit lives on channel 2a, deltas on 4a..4a+3."""
    k, c = 2, 1
    shared = ConvLayer(np.pad(np.ones((1, 1, 1, 1)), ((0, 0), (0, 0), (1, 1), (1, 1))), [0])
    cls_w = np.zeros((2 * k, c, 1, 1))
    cls_b = np.array([3.0, 0.0, -1.0, 0.0])
    reg_b = np.arange(4 * k, dtype=float)
    out = rpn_forward(FeatureMap(np.ones((1, 1, 2))), RpnWeights(
        shared, ConvLayer(cls_w, cls_b), ConvLayer(np.zeros((4 * k, c, 1, 1)), reg_b)))
    obj = out.objectness()
    assert obj[0] == pytest.approx(softmax_ref([3.0, 0.0])[0])
    assert obj[1] == pytest.approx(softmax_ref([-1.0, 0.0])[0])
    assert np.array_equal(out.deltas()[1], [4, 5, 6, 7])
    assert np.array_equal(out.deltas()[3], [4, 5, 6, 7])


def test_rpn_sibling_count_errors():
    w = init_rpn(2, k=9)
    with pytest.raises(ShapeError, match="2k = 6"):
        rpn_forward(FeatureMap(np.zeros((2, 3, 3))), w, k=3)
    bad = RpnWeights(w.shared, w.cls, ConvLayer(np.zeros((30, 2, 1, 1)), np.zeros(30)))
    with pytest.raises(ShapeError, match="4k = 36"):
        rpn_forward(FeatureMap(np.zeros((2, 3, 3))), bad)


def test_rpn_deterministic():
    x = FeatureMap(np.random.default_rng(9).normal(size=(3, 6, 5)))
    a = rpn_forward(x, init_rpn(3, seed=4))
    b = rpn_forward(x, init_rpn(3, seed=4))
    assert np.array_equal(a.cls_map.data, b.cls_map.data)
    assert np.array_equal(a.reg_map.data, b.reg_map.data)


def test_head_counts_for_two_classes():
    head = init_head(7 * 7 * 4, num_classes=2, hidden=(16,), seed=0)
    out = head_forward(np.ones(7 * 7 * 4), head)
    assert out.class_probs.shape == (3,) and out.box_deltas.shape == (8,)
    assert out.class_probs.sum() == pytest.approx(1.0, abs=1e-6)
    assert out.delta_for(1) == tuple(out.box_deltas[4:8])


def test_head_zero_weights_uniform():
    head = DetectionHead((), DenseLayer(np.zeros((4, 5)), np.zeros(4)),
                         DenseLayer(np.zeros((12, 5)), np.zeros(12)), 3)
    out = head_forward(np.arange(5.0), head)
    assert np.allclose(out.class_probs, 0.25, atol=1e-15)


def test_head_matches_matmul_softmax():
    rng = np.random.default_rng(11)
    fc = DenseLayer(rng.normal(size=(6, 10)), rng.normal(size=6))
    cls = DenseLayer(rng.normal(size=(3, 6)), rng.normal(size=3))
    box = DenseLayer(rng.normal(size=(8, 6)), rng.normal(size=8))
    x = rng.normal(size=10)
    out = head_forward(x, DetectionHead((fc,), cls, box, 2))
    hidden = [max(0.0, sum(fc.weight[o, i] * x[i] for i in range(10)) + fc.bias[o]) for o in range(6)]
    logits = [sum(cls.weight[o, i] * hidden[i] for i in range(6)) + cls.bias[o] for o in range(3)]
    deltas = [sum(box.weight[o, i] * hidden[i] for i in range(6)) + box.bias[o] for o in range(8)]
    assert np.max(np.abs(out.class_probs - softmax_ref(logits))) <= 1e-9
    assert np.max(np.abs(out.box_deltas - deltas)) <= 1e-9


def test_head_errors():
    head = init_head(10, num_classes=2, hidden=(4,))
    with pytest.raises(ShapeError):
        head_forward(np.zeros(11), head)
    with pytest.raises(ShapeError):
        DetectionHead((), DenseLayer(np.zeros((2, 5)), np.zeros(2)),
                      DenseLayer(np.zeros((8, 5)), np.zeros(8)), 2)
