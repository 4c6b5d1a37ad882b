import numpy as np
import pytest

from cnnaccel.network import LayerSpec
from cnnaccel.oracle import (
    conv2d_ref, depthwise_ref, maxpool_ref, requantize_ref, requantize_array, conv_pixel_scalar,
)
from cnnaccel.qtensor import QTensor


def test_requantize_rounding():
    assert requantize_ref(3, 1, False) == 2
    assert requantize_ref(-3, 1, False) == -2
    assert requantize_ref(1000, 0, False) == 127
    assert requantize_ref(-5, 0, True) == 0
    a = np.arange(-300, 300)
    assert [requantize_ref(int(v), 2, False) for v in a] == requantize_array(a, 2, False).tolist()


def test_qtensor_range():
    with pytest.raises(ValueError):
        QTensor(np.array([200]))
    q = QTensor.zeros((2, 2))
    with pytest.raises(ValueError):
        q.values[0, 0] = 1


@pytest.mark.parametrize("s,p", [(1, 1), (1, 0), (2, 1), (2, 0)])
def test_conv_matches_scalar_loops(rng, s, p):
    l = LayerSpec("c", "standard_conv", 9, 9, 3, 5, 3, s, p, relu=False)
    x = QTensor.random((3, 9, 9), rng)
    w = QTensor.random((5, 3, 3, 3), rng)
    out = conv2d_ref(x, w, l, 0)
    for m in range(5):
        for y in range(l.out_h):
            for xx in range(l.out_w):
                want = requantize_ref(conv_pixel_scalar(x.values, w.values, l, m, y, xx), 0, False)
                assert out.values[m, y, xx] == want


def test_depthwise_is_per_channel(rng):
    l = LayerSpec("d", "depthwise_conv", 6, 6, 4, 4, 3, 1, 1)
    x = QTensor.random((4, 6, 6), rng)
    w = QTensor.random((4, 1, 3, 3), rng)
    out = depthwise_ref(x, w, l, 6)
    for c in range(4):
        lc = LayerSpec("c", "standard_conv", 6, 6, 1, 1, 3, 1, 1)
        one = conv2d_ref(QTensor(x.values[c:c + 1]), QTensor(w.values[c:c + 1]), lc, 6)
        assert np.array_equal(out.values[c], one.values[0])


def test_maxpool():
    x = QTensor(np.arange(16, dtype=np.int8).reshape(1, 4, 4))
    assert maxpool_ref(x).values.tolist() == [[[5, 7], [13, 15]]]
    with pytest.raises(ValueError):
        maxpool_ref(QTensor(np.zeros((1, 3, 4), dtype=np.int8)))


def test_shape_checks(rng):
    l = LayerSpec("c", "standard_conv", 6, 6, 2, 2, 3, 1, 1)
    with pytest.raises(ValueError):
        conv2d_ref(QTensor.random((3, 6, 6), rng), QTensor.random((2, 2, 3, 3), rng), l, 0)
