import csv
import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nanophot.architecture import DESIGN_A, ArchitectureDesign, preset_design, size_pumps, stage_ber
from nanophot.device import InvalidParameterError, default_calibration
from nanophot.explorer import (
    STATUS_OK,
    STATUS_ORDER,
    STATUS_UNREACHABLE,
    DesignPoint,
    SweepGrid,
    energy_per_pixel,
    evaluate_design,
    explore_mux_stage,
    explore_not,
    explore_xor,
    laser_inventory,
    not_power,
    run_design_flow,
    stage_targets,
    total_laser_power,
    valid_onset,
    xor_cell,
)

CALIB = default_calibration()


def design_a(**kw) -> ArchitectureDesign:
    base = {k: v for k, v in DESIGN_A.items() if k not in ("target_ber", "bsl")}
    base.update(kw)
    return ArchitectureDesign(**base)


def within_factor(x, ref, f):
    return ref / f <= x <= ref * f


@pytest.fixture(scope="module")
def flow_a():
    return run_design_flow(3.0, 0.5, CALIB, bsl=1024)


@pytest.fixture(scope="module")
def flow_b():
    return run_design_flow(4.0, 0.1, CALIB, bsl=512)


class TestGrid:
    def test_bad(self):
        with pytest.raises(InvalidParameterError):
            SweepGrid(q_range=(10, 5, 3))
        with pytest.raises(InvalidParameterError):
            SweepGrid(x_range=(0.1, 0.2, 0))
        with pytest.raises(InvalidParameterError):
            SweepGrid(target_ber=0.0)

    def test_single_cell(self):
        g = SweepGrid(q_range=(500, 500, 1), x_range=(0.2, 0.2, 1))
        assert g.q.tolist() == [500] and g.x.tolist() == [0.2]


class TestNot:
    def test_005_point(self):
        r = not_power(0.05, CALIB)
        assert r.olp_p == pytest.approx(2.9, rel=0.3)
        assert r.olp_input == pytest.approx(19.1, rel=0.3)
        assert not r.valid

    def test_010_share(self):
        r = not_power(0.10, CALIB)
        assert not r.valid
        assert r.input_share == pytest.approx(0.39, rel=0.3)

    def test_anchor(self):
        r = not_power(0.35, CALIB)
        assert r.olp_input == pytest.approx(0.7, rel=1e-9)
        assert r.valid

    def test_onset(self):
        rows = explore_not(np.round(np.arange(0.05, 0.80, 0.01), 4), CALIB)
        assert 0.15 <= valid_onset(rows) <= 0.25

    def test_onset_none(self):
        assert valid_onset(explore_not([0.05, 0.06], CALIB)) is None


class TestXor:
    def test_cell_unreachable(self):
        assert xor_cell(10000, 1.0, CALIB) == (math.inf, math.inf)

    def test_small_sweep_consistent_with_cells(self):
        g = SweepGrid(q_range=(5000, 10000, 3), x_range=(0.1, 0.2, 3))
        s = explore_xor(g, CALIB)
        for a, q in enumerate(s.q):
            for b, d in enumerate(s.dl):
                assert (s.olp_p[a, b], s.olp_input[a, b]) == xor_cell(q, d, CALIB)
        assert np.all(s.total == 2 * s.olp_p + s.olp_input)

    def test_best_prefers_minimum(self):
        g = SweepGrid(q_range=(2000, 10000, 5), x_range=(0.05, 0.3, 6))
        s = explore_xor(g, CALIB)
        a, b = s.best()
        assert s.valid[a, b]
        assert s.total[a, b] == s.total[s.valid].min()

    def test_csv(self, tmp_path):
        s = explore_xor(SweepGrid(q_range=(5000, 10000, 2), x_range=(0.1, 0.2, 2)), CALIB)
        s.write_csv(tmp_path / "x.csv")
        rows = list(csv.reader(open(tmp_path / "x.csv")))
        assert rows[0] == ["q", "x_nm", "total_uw", "olp_p_uw", "olp_in_uw", "ber", "valid"]
        assert len(rows) == 5


@pytest.fixture(scope="module")
def base():
    # the XOR split our model's sweep selects
    return size_pumps(design_a(delta_lambda_xor=0.19), CALIB)


class TestMuxStage:
    @pytest.mark.parametrize("n", [1, 2, 3])
    def test_cell_matches_scalar(self, base, n):
        d = base.truncated(n)
        sw = explore_mux_stage(d, n, [d.q_s_mux[-1]], [d.wls[-1]], CALIB)
        assert sw.ber[0, 0] == pytest.approx(stage_ber(d, CALIB), rel=1e-9, abs=1e-15)
        assert sw.olp_p[0, 0] == pytest.approx(d.olp_pump_mux[-1], rel=1e-9)

    @pytest.mark.parametrize("n,ref", [(1, 1e-4), (2, 1e-2), (3, 5e-1)])
    def test_stage_examples_within_one_order(self, base, n, ref):
        d = base.truncated(n)
        b = explore_mux_stage(d, n, [d.q_s_mux[-1]], [d.wls[-1]], CALIB).ber[0, 0]
        assert within_factor(b, ref, 10)

    def test_order_and_unreachable(self):
        d = size_pumps(design_a(delta_lambda_xor=0.19, q_s_mux=(2000.0, 1900.0, 500.0)), CALIB)
        sw = explore_mux_stage(d, 2, [1900.0, 3000.0], [0.1, 0.5, 50.0], CALIB)
        assert sw.status[0, 0] == STATUS_ORDER  # WLS below stage 1
        assert sw.status[1, 1] == STATUS_ORDER  # Q above stage 1
        assert sw.status[0, 2] == STATUS_UNREACHABLE
        assert sw.status[0, 1] == STATUS_OK
        assert np.isnan(sw.ber[0, 2])

    def test_stage1_high_q_best(self, base):
        sw = explore_mux_stage(base, 1, np.linspace(1000, 10000, 10), np.linspace(0.05, 0.22, 18), CALIB)
        a, _ = sw.min_ber()
        assert sw.q[a] == 10000


class TestFlow:
    def test_design_a_class(self, flow_a):
        p = flow_a.point
        d = p.design
        assert d.q_s_xor == d.q_s_mux[0] == 10000
        for got, ref in zip(d.q_s_mux, (10000, 1900, 500)):
            assert within_factor(got, ref, 2)
        for got, ref in zip(d.wls, (0.215, 1.19, 4.35)):
            assert within_factor(got, ref, 2)
        assert p.target_met and p.degenerate_target

    def test_design_b_class(self, flow_b):
        p = flow_b.point
        d = p.design
        for got, ref in zip((d.q_s_xor, *d.q_s_mux), (7700, 7700, 1600, 200)):
            assert within_factor(got, ref, 2)
        for got, ref in zip(d.wls, (0.275, 1.41, 11.3)):
            assert within_factor(got, ref, 2)
        assert p.target_met and not p.degenerate_target

    @pytest.mark.xfail(strict=True, reason="flow optimum differs from the tabulated Design A; see ledger")
    def test_design_a_exact(self, flow_a):
        d = flow_a.point.design
        assert d.q_s_mux == (10000, 1900, 500)
        assert d.wls == pytest.approx((0.215, 1.19, 4.35), rel=0.02)

    @pytest.mark.xfail(strict=True, reason="flow optimum differs from the tabulated Design B; see ledger")
    def test_design_b_exact(self, flow_b):
        d = flow_b.point.design
        assert (d.q_s_xor, *d.q_s_mux) == (7700, 7700, 1600, 200)
        assert d.wls == pytest.approx((0.275, 1.41, 11.3), rel=0.02)

    def test_stage_ber_increases(self, flow_a, flow_b):
        for f in (flow_a, flow_b):
            b = f.point.stage_ber
            assert list(b) == sorted(b)
            assert f.point.failing_stage is None

    def test_point_matches_evaluation(self, flow_b):
        p = flow_b.point
        again = evaluate_design(p.design, CALIB, p.target_ber, p.bsl)
        assert again.stage_ber == pytest.approx(p.stage_ber, rel=1e-9)

    def test_degenerate_zero_power(self):
        f = run_design_flow(0.0, 0.5, CALIB, xor_grid=SweepGrid((5000, 10000, 2), (0.1, 0.2, 2)),
                            q_range=(1000, 10000, 4), wls_ranges=((0.1, 1.0, 4), (0.5, 3.0, 4), (1.0, 8.0, 4)))
        p = f.point
        assert p.ber == 0.5 and p.target_met and p.degenerate_target
        assert any("0.5" in m for m in p.diagnostics)

    def test_single_cell_grid_returns_cell(self):
        f = run_design_flow(3.0, 0.5, CALIB, n_stages=1,
                            xor_grid=SweepGrid((10000, 10000, 1), (0.19, 0.19, 1)),
                            q_range=(10000, 10000, 1), wls_ranges=((0.2, 0.2, 1),))
        d = f.point.design
        assert (d.q_s_xor, d.delta_lambda_xor, d.q_s_mux, d.wls) == (10000, 0.19, (10000,), (0.2,))

    def test_infeasible_reports_failing_stage(self):
        f = run_design_flow(3.0, 1e-6, CALIB, xor_grid=SweepGrid((10000, 10000, 1), (0.19, 0.19, 1)),
                            q_range=(200, 10000, 5), wls_ranges=((0.05, 0.2, 4), (0.3, 1.0, 4), (1.5, 3.0, 4)))
        assert not f.point.target_met
        assert f.point.failing_stage is not None

    def test_stage_targets(self):
        t = stage_targets(1e-4, 1e-1, 3)
        assert t[0] == pytest.approx(1e-4) and t[-1] == pytest.approx(1e-1)
        assert t[1] == pytest.approx(math.sqrt(1e-5))

    def test_device_override(self):
        f = run_design_flow(3.0, 0.5, CALIB, n_stages=1, xor_grid=SweepGrid((10000, 10000, 1), (0.19, 0.19, 1)),
                            q_range=(10000, 10000, 1), wls_ranges=((0.2, 0.2, 1),), device={"er_mod": 0.1})
        assert f.point.design.er_mod == 0.1
        with pytest.raises(InvalidParameterError):
            run_design_flow(3.0, 0.5, CALIB, device={"q_s_xor": 1})

    def test_json_roundtrip(self, tmp_path, flow_b):
        p = tmp_path / "pt.json"
        flow_b.point.to_json(p)
        back = DesignPoint.from_json(p)
        assert back.design == flow_b.point.design
        assert back.stage_ber == flow_b.point.stage_ber


class TestEnergy:
    def test_design_b(self):
        e, t = energy_per_pixel(preset_design("B", CALIB), 512)
        assert t == 512.0
        assert within_factor(e, 8.5, 2)

    def test_zero_bsl(self):
        assert energy_per_pixel(preset_design("B", CALIB), 0) == (0.0, 0.0)

    def test_inventory(self):
        d = preset_design("A", CALIB)
        counts = {k: n for k, n, _ in laser_inventory(d)}
        assert counts == {"input": 8, "xor_pump": 16, "mux_pump_1": 4, "mux_pump_2": 2, "mux_pump_3": 1}
        manual = 8 * d.olp_input + 16 * d.olp_pump_xor + 4 * d.olp_pump_mux[0] + 2 * d.olp_pump_mux[1] + d.olp_pump_mux[2]
        assert total_laser_power(d) == pytest.approx(manual)

    @given(st.integers(0, 4096))
    def test_time_exact(self, bsl):
        assert energy_per_pixel(preset_design("A", CALIB), bsl)[1] == bsl


@settings(max_examples=30, deadline=None)
@given(st.floats(0.1, 20), st.floats(0, 100), st.lists(st.floats(0, 1000), min_size=3, max_size=3))
def test_valid_implies_power_rule(olp_in, xor_p, mux_p):
    d = design_a(olp_input=olp_in, olp_pump_xor=xor_p, olp_pump_mux=tuple(mux_p))
    p = evaluate_design(d, CALIB, 0.1, 256)
    if p.valid:
        assert olp_in <= 0.1 * min(xor_p, *mux_p)
    else:
        assert olp_in > 0.1 * min(xor_p, *mux_p)


def test_preset_b_flagged_invalid():
    assert not evaluate_design(preset_design("B", CALIB), CALIB, 0.1, 512).valid


def test_more_pump_same_design_changes_nothing_at_zero_input():
    d = replace(preset_design("A", CALIB), olp_input=0.0)
    assert evaluate_design(d, CALIB, 0.5, 256).ber == 0.5
