"""Scenario schema: defaults, strict unknown-key handling, field-named validation errors."""

import pytest

from gridstream.headtrace import HeadTrace, TraceError
from gridstream.scenario import ScenarioError, load_scenario, scenario_from_dict


class TestScenario:
    def test_minimal_file_applies_all_defaults(self, tmp_path):
        path = tmp_path / "s.yaml"
        path.write_text("{seed: 1}\n")
        sc = load_scenario(path)
        assert sc.seed == 1
        assert sc.grid.spacing_m == 500.0
        assert sc.grid.rows == 2 and sc.grid.cols == 3
        assert sc.fec.k == 8 and sc.fec.r == 2
        assert sc.video.fps == 30 and sc.video.mtu_bytes == 1400
        assert sc.playout.budget_ms == 200.0
        assert sc.view.captured_fov_h_deg == 110.0
        assert sc.control.position_gain == 10.0

    def test_zero_spacing_rejected_with_field_name(self):
        with pytest.raises(ScenarioError, match="grid.spacing"):
            scenario_from_dict({"seed": 1, "grid": {"spacing_m": 0}})

    def test_fec_field_size_limit(self):
        scenario_from_dict({"seed": 1, "fec": {"k": 8, "r": 2}})
        with pytest.raises(ScenarioError, match="fec.k"):
            scenario_from_dict({"seed": 1, "fec": {"k": 250, "r": 10}})

    def test_unknown_keys_are_errors(self):
        with pytest.raises(ScenarioError, match="grid.spacing_metres"):
            scenario_from_dict({"seed": 1, "grid": {"spacing_metres": 100}})
        with pytest.raises(ScenarioError, match="sneed"):
            scenario_from_dict({"sneed": 1})

    def test_empty_channel_list_rejected(self):
        with pytest.raises(ScenarioError, match="radio.channels"):
            scenario_from_dict({"seed": 1, "radio": {"channels": []}})

    def test_receiver_positions_grid_layout(self):
        sc = scenario_from_dict({"seed": 1})
        assert sc.receiver_positions() == {
            0: (0.0, 0.0), 1: (500.0, 0.0), 2: (1000.0, 0.0),
            3: (0.0, 500.0), 4: (500.0, 500.0), 5: (1000.0, 500.0),
        }

    def test_home_defaults_to_grid_centre(self):
        sc = scenario_from_dict({"seed": 1})
        assert sc.home_position() == (500.0, 250.0, 50.0)
        sc2 = scenario_from_dict({"seed": 1, "flight": {"home": [10, 20, 30]}})
        assert sc2.home_position() == (10.0, 20.0, 30.0)

    def test_unreadable_file_is_an_error(self, tmp_path):
        with pytest.raises(ScenarioError, match="missing.yaml"):
            load_scenario(tmp_path / "missing.yaml")

    def test_bitrate_ordering_enforced(self):
        with pytest.raises(ScenarioError, match="bitrate_initial"):
            scenario_from_dict(
                {"seed": 1, "video": {"bitrate_initial_bps": 99e6}}
            )

    def test_budget_must_exceed_margin(self):
        with pytest.raises(ScenarioError, match="playout.budget_ms"):
            scenario_from_dict(
                {"seed": 1, "playout": {"budget_ms": 10, "uplink_margin_ms": 20}}
            )


class TestHeadTrace:
    HEADER = "t_ms,yaw_deg,pitch_deg,x_m,y_m\n"

    def test_load_and_interpolate(self, tmp_path):
        path = tmp_path / "t.csv"
        path.write_text(self.HEADER + "0,0,0,0,0\n1000,30,-6,1.0,2.0\n")
        trace = HeadTrace.load(path)
        mid = trace.sample(500_000)
        assert mid.yaw == pytest.approx(15.0)
        assert mid.pitch == pytest.approx(-3.0)
        assert mid.pos[0] == pytest.approx(0.5)
        assert mid.pos[1] == pytest.approx(1.0)

    def test_holds_ends(self, tmp_path):
        path = tmp_path / "t.csv"
        path.write_text(self.HEADER + "0,5,0,0,0\n100,10,0,0,0\n")
        trace = HeadTrace.load(path)
        assert trace.sample(0).yaw == 5.0
        assert trace.sample(10_000_000).yaw == 10.0

    def test_empty_trace_is_stationary(self, tmp_path):
        path = tmp_path / "t.csv"
        path.write_text(self.HEADER)
        trace = HeadTrace.load(path)
        assert len(trace) == 0
        s = trace.sample(123_456)
        assert s.yaw == 0.0 and s.pos == (0.0, 0.0)

    def test_nonzero_first_sample_rejected(self, tmp_path):
        path = tmp_path / "t.csv"
        path.write_text(self.HEADER + "5,0,0,0,0\n")
        with pytest.raises(TraceError, match="t_ms=0"):
            HeadTrace.load(path)

    def test_non_increasing_time_rejected(self, tmp_path):
        path = tmp_path / "t.csv"
        path.write_text(self.HEADER + "0,0,0,0,0\n10,0,0,0,0\n10,1,0,0,0\n")
        with pytest.raises(TraceError, match="strictly increasing"):
            HeadTrace.load(path)

    def test_position_outside_tracking_space_rejected(self, tmp_path):
        path = tmp_path / "t.csv"
        path.write_text(self.HEADER + "0,0,0,3.0,0\n")
        with pytest.raises(TraceError, match="tracking space"):
            HeadTrace.load(path)

    def test_wrong_header_rejected(self, tmp_path):
        path = tmp_path / "t.csv"
        path.write_text("time,yaw\n0,0\n")
        with pytest.raises(TraceError, match="header"):
            HeadTrace.load(path)
