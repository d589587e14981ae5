import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from cellequalizer.converter import (
    DEFAULT_EFF_CURVE,
    ConvergenceError,
    ConverterParams,
    capacitor_voltages,
    converter_enabled,
    efficiency,
    transfer,
)

volts = st.floats(2.5, 4.3)


class TestCapacitorVoltages:
    def test_four_one(self):
        v = [3.6, 3.61, 3.62, 3.63, 3.64, 3.65, 3.66, 3.67]
        vc1, vc2 = capacitor_voltages(4, 1, v)
        assert vc1 == sum(v[0:4])
        assert vc2 == sum(v[1:3])

    def test_adjacent_blocks_nothing_on_c2(self):
        v = [3.6] * 8
        for l in range(1, 8):
            assert capacitor_voltages(l + 1, l, v)[1] == 0.0

    @given(st.data())
    def test_cell_counts(self, data):
        n = data.draw(st.integers(2, 16))
        k = data.draw(st.integers(2, n))
        l = data.draw(st.integers(1, k - 1))
        vc1, vc2 = capacitor_voltages(k, l, [1.0] * n)
        assert (vc1, vc2) == (k - l + 1, k - l - 1)

    @pytest.mark.parametrize("k,l", [(1, 1), (1, 2), (9, 1), (3, 0)])
    def test_rejects(self, k, l):
        with pytest.raises(ValueError):
            capacitor_voltages(k, l, [3.6] * 8)


class TestEfficiency:
    def test_measured_points(self):
        p = ConverterParams()
        assert efficiency(2.0, p) == pytest.approx(0.901)
        assert max(e for _, e in p.eff_curve) == pytest.approx(0.929)
        assert efficiency(0.9, p) == pytest.approx(0.929)

    def test_flat_outside_curve(self):
        p = ConverterParams()
        assert efficiency(0.0, p) == pytest.approx(DEFAULT_EFF_CURVE[0][1])
        assert efficiency(10.0, p) == pytest.approx(DEFAULT_EFF_CURVE[-1][1])

    def test_negative_power(self):
        with pytest.raises(ValueError):
            efficiency(-1.0, ConverterParams())

    @pytest.mark.parametrize(
        "kw",
        [dict(i_eq=0.0), dict(rated_power=0.0), dict(eff_curve=()), dict(eff_curve=((1, 0.9), (1, 0.8))),
         dict(eff_curve=((1, 1.2),))],
    )
    def test_invalid_params(self, kw):
        with pytest.raises(ValueError):
            ConverterParams(**kw)


class TestTransfer:
    @given(volts, volts, st.floats(0.05, 2.0))
    def test_power_identity(self, v_src, v_sink, i_eq):
        p = ConverterParams(i_eq=i_eq)
        r = transfer(v_src, v_sink, p)
        p_in = v_src * r.i_src
        p_out = v_sink * r.i_sink
        assert r.i_src == i_eq
        assert p_in == pytest.approx(p_out + r.p_loss, rel=1e-12)
        assert r.converged
        # the efficiency is the curve value at the realized output power
        assert r.efficiency == pytest.approx(efficiency(p_out, p), abs=1e-9)
        assert 0 < r.efficiency <= 1

    def test_example(self):
        r = transfer(3.7, 3.5, ConverterParams(i_eq=0.5))
        assert r.i_src == 0.5
        assert r.i_sink == pytest.approx(r.efficiency * 3.7 * 0.5 / 3.5)
        assert 0.905 < r.efficiency < 0.929

    def test_invalid_voltage(self):
        with pytest.raises(ValueError):
            transfer(0.0, 3.5, ConverterParams())

    def test_strict_non_convergence(self):
        with pytest.raises(ConvergenceError):
            transfer(3.7, 3.5, ConverterParams(), max_iter=1, tol=0.0, strict=True)

    def test_lenient_non_convergence(self):
        r = transfer(3.7, 3.5, ConverterParams(), max_iter=1, tol=0.0)
        assert not r.converged
        assert math.isclose(r.i_src * 3.7, r.i_sink * 3.5 + r.p_loss, rel_tol=1e-12)


class TestEnable:
    def test_band(self):
        assert not converter_enabled([3.6, 3.605, 3.595], 0.01)
        assert converter_enabled([3.6, 3.62, 3.58], 0.01)

    @given(st.lists(volts, min_size=2, max_size=16), st.floats(0, 0.2))
    def test_matches_definition(self, v, tol):
        avg = sum(v) / len(v)
        expected = any(abs(x - avg) > tol for x in v)
        if all(abs(abs(x - avg) - tol) > 1e-9 for x in v):
            assert converter_enabled(v, tol) == expected

    def test_invalid(self):
        with pytest.raises(ValueError):
            converter_enabled([3.6], 0.01)
        with pytest.raises(ValueError):
            converter_enabled([3.6, 3.7], -0.01)
