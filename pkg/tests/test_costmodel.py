import pytest
from hypothesis import given, strategies as st

from cnnaccel import costmodel as cm
from cnnaccel.costmodel import HardwareConfig, TilingChoice, TilingError, EnergyParams
from cnnaccel.network import LayerSpec, builtin_network

HW = HardwareConfig()


def test_hardware_defaults():
    assert HW.mac_budget == 1152
    assert HW.fsram_bank_bytes == 4096
    with pytest.raises(ValueError):
        HardwareConfig(mac_budget=2000)
    with pytest.raises(ValueError):
        HardwareConfig(frsram_bytes=1)


def test_output_reuse_ecnn_l1():
    l = builtin_network("ecnn")[0]
    a = cm.access_output_reuse(l, TilingChoice(32, 3))
    assert a.input_bytes == 3 * 258 * 258
    assert a.weight_bytes == 9 * 32 * 3
    assert a.output_bytes == 256 * 256 * 32
    assert a.total_bytes == 2_297_708
    pooled = cm.access_output_reuse(l, TilingChoice(32, 3), pooled=True)
    assert pooled.output_bytes == a.output_bytes // 4


def test_input_reuse_spills():
    l = LayerSpec("a", "standard_conv", 16, 16, 8, 64, 3, 1, 1)
    a = cm.access_input_reuse(l, TilingChoice(32, 4, 1, cm.INPUT_REUSE))
    assert a.input_bytes == 4 * 18 * 18 * 2
    assert a.output_bytes == 2 * 16 * 16 * 32 * 2 * 2


def test_tiling_limits():
    l = LayerSpec("a", "standard_conv", 16, 16, 8, 64, 3, 1, 1)
    with pytest.raises(TilingError):
        cm.access_output_reuse(l, TilingChoice(32, 5))
    with pytest.raises(TilingError):
        cm.cycles_for_layer(l, TilingChoice(33, 1))
    with pytest.raises(TilingError):
        TilingChoice(0, 1)


def test_cycles_closed_form():
    l = LayerSpec("a", "standard_conv", 16, 16, 8, 64, 3, 1, 1)
    assert cm.cycles_for_layer(l, TilingChoice(32, 4)) == 2 * 2 * (256 + 2)
    assert cm.cycles_for_layer(l, TilingChoice(32, 4), decomposed=True) == 2 * 2 * 258


def test_decomposition_cycles():
    l = builtin_network("vgg16")[0]
    assert cm.choose_tsize(l) == 16
    cols = cm.decomposed_column_cycles(l, 16, HW)
    assert len(cols) == 4
    assert cm.cycles_for_layer(l, TilingChoice(32, 3), decomposed=True) == 2 * max(cols)


def test_performance_and_energy():
    assert cm.performance(1.0) == 1152.0
    assert cm.performance(0.5, HardwareConfig(clock_hz=1e9)) == 1152.0
    with pytest.raises(ValueError):
        cm.performance(1.5)
    with pytest.raises(ValueError):
        cm.energy_efficiency(1.0, EnergyParams(0.0))


def test_ppfs_rule():
    net = builtin_network("ecnn")
    plan = [TilingChoice(32, 3)] + [TilingChoice(32, 4)] * 8
    acc = cm.network_access(net, plan, ofp=True, ppfs=True)
    for i in acc.on_chip_boundaries:
        assert acc.layers[i].output_bytes == 0 and acc.layers[i + 1].input_bytes == 0
    assert len(net) - 1 not in acc.on_chip_boundaries


@given(st.integers(1, 64), st.integers(1, 64), st.integers(4, 40), st.sampled_from([1, 2]),
       st.integers(1, 32), st.integers(1, 4))
def test_traffic_monotone_in_tm(n, m, hw_, s, tm, tn):
    l = LayerSpec("h", "standard_conv", hw_, hw_, n, m, 3, s, 1) if (hw_ - 1) % s <= 1 else None
    if l is None:
        return
    a = cm.access_output_reuse(l, TilingChoice(tm, tn))
    assert a.total_bytes == a.input_bytes + a.weight_bytes + a.output_bytes
    # each output value leaves the chip at least once
    assert a.output_bytes >= l.out_h * l.out_w * m
    assert cm.cycles_for_layer(l, TilingChoice(tm, tn)) * HW.mac_budget >= l.macs
