"""
时钟阶段测试

tiny_market 上手算的过程（p_antenna = 10，预算 300，三个同质竞拍者）：
    p = 1      每人 (3 根, 50 kHz)，需求 150 > 100
    p = 2..5   每人 (4 根, 44 kHz)，需求 132 > 100
    p = 6      成本 304 > 300，全部弃权，需求 0
共 6 轮，最后超额需求轮为 p = 5，供过于求。
"""
import dataclasses

import pandas as pd
import pytest

from app.errors import ConfigurationError, ConsistencyError, InvalidArgumentError, OutputError
from app.services import clock_engine
from app.services.bidder import BidderProfile, build_roster
from app.services.clock_engine import (
    TRACE_COLUMNS,
    detect_excess,
    run_clock_phase,
    trace_frame,
    verify_clock,
    write_trace,
)
from app.services.market_model import MarketConfig

P_ANTENNA = 10.0


@pytest.mark.unit
class TestRunClockPhase:
    """时钟阶段"""

    def test_hand_stepped_rounds(self, tiny_market, tiny_roster):
        clock = run_clock_phase(tiny_market, tiny_roster, P_ANTENNA)

        assert len(clock.rounds) == 6
        assert [r.p_spectrum for r in clock.rounds] == [1.0, 2.0, 3.0, 4.0, 5.0, 6.0]
        assert [r.excess_demand for r in clock.rounds] == [True] * 5 + [False]
        assert clock.rounds[0].aggregate_spectrum_demand == 150.0
        assert clock.rounds[1].aggregate_spectrum_demand == 132.0
        assert clock.terminal_round.bids == ()
        assert clock.last_excess_round.round_index == 4
        assert clock.last_excess_round.p_spectrum == 5.0
        assert clock.oversupply is True
        assert clock.allocated_round is clock.last_excess_round

    def test_packages_recorded_for_abstainers(self, tiny_market, tiny_roster):
        clock = run_clock_phase(tiny_market, tiny_roster, P_ANTENNA, keep_packages=True)
        last = clock.terminal_round
        assert set(last.packages) == {"vno-01", "vno-02", "vno-03"}
        assert last.packages["vno-01"].cost == 304.0

    def test_packages_not_kept_by_default(self, tiny_market, tiny_roster):
        clock = run_clock_phase(tiny_market, tiny_roster, P_ANTENNA)
        assert all(r.packages == {} for r in clock.rounds)

    def test_demand_equal_to_supply_stops(self, tiny_bidder):
        """需求恰好等于供给不算超额需求"""
        market = MarketConfig(total_antennas=4, total_spectrum=100.0, snr_linear=1.0,
                              num_bidders=2, reserve_spectrum_price=1.0, price_increment=1.0)
        clock = run_clock_phase(market, build_roster(tiny_bidder, market), P_ANTENNA)
        assert len(clock.rounds) == 1
        assert clock.terminal_round.aggregate_spectrum_demand == 100.0
        assert clock.last_excess_round is None
        assert clock.oversupply is False
        assert clock.allocated_round is clock.terminal_round

    def test_zero_budget(self, tiny_market):
        """预算为 0：第一轮全部弃权"""
        broke = BidderProfile(id="t", r_min=100.0, value_per_kbps=0.0)
        clock = run_clock_phase(tiny_market, build_roster(broke, tiny_market), P_ANTENNA)
        assert len(clock.rounds) == 1
        assert clock.terminal_round.bids == ()
        assert clock.oversupply is False

    def test_single_bidder_wins_at_reserve(self, tiny_bidder):
        market = MarketConfig(total_antennas=4, total_spectrum=100.0, snr_linear=1.0,
                              num_bidders=1, reserve_spectrum_price=1.0, price_increment=1.0)
        clock = run_clock_phase(market, build_roster(tiny_bidder, market), P_ANTENNA)
        assert len(clock.rounds) == 1
        assert clock.terminal_round.p_spectrum == 1.0
        assert len(clock.terminal_round.bids) == 1

    def test_single_bid_larger_than_supply(self, tiny_bidder):
        """单个出价就超过总频谱：价格一直涨到弃权"""
        market = MarketConfig(total_antennas=4, total_spectrum=40.0, snr_linear=1.0,
                              num_bidders=1, reserve_spectrum_price=1.0, price_increment=1.0)
        clock = run_clock_phase(market, build_roster(tiny_bidder, market), P_ANTENNA)
        assert clock.oversupply is True
        assert clock.last_excess_round.p_spectrum == 5.0

    def test_groups_identical_bidders(self, mocker, tiny_market, tiny_roster):
        """需求参数相同的竞拍者每轮只求解一次"""
        spy = mocker.spy(clock_engine, "optimal_package")
        clock = run_clock_phase(tiny_market, tiny_roster, P_ANTENNA)
        assert spy.call_count == len(clock.rounds)

    def test_invalid_inputs(self, tiny_market, tiny_roster):
        with pytest.raises(InvalidArgumentError):
            run_clock_phase(tiny_market, [], P_ANTENNA)
        with pytest.raises(InvalidArgumentError):
            run_clock_phase(tiny_market, tiny_roster, -1.0)

    def test_non_positive_increment(self, tiny_market, tiny_roster):
        """price_increment ≤ 0 的配置无法终止"""
        bad = MarketConfig.model_construct(**{**tiny_market.model_dump(), "price_increment": 0.0})
        with pytest.raises(ConfigurationError):
            run_clock_phase(bad, tiny_roster, P_ANTENNA)

    def test_round_limit(self, tiny_market, tiny_roster):
        with pytest.raises(ConfigurationError):
            run_clock_phase(tiny_market, tiny_roster, P_ANTENNA, max_rounds=3)

    def test_round_limit_zero_is_rejected(self, tiny_market, tiny_roster):
        """max_rounds=0 不回退到默认上限"""
        with pytest.raises(ConfigurationError, match="max_rounds"):
            run_clock_phase(tiny_market, tiny_roster, P_ANTENNA, max_rounds=0)

    def test_round_limit_exact(self, tiny_market, tiny_roster):
        """上限恰好等于所需轮数时正常结束"""
        clock = run_clock_phase(tiny_market, tiny_roster, P_ANTENNA, max_rounds=6)
        assert len(clock.rounds) == 6

    def test_detect_excess(self, tiny_market, tiny_roster):
        clock = run_clock_phase(tiny_market, tiny_roster, P_ANTENNA)
        assert detect_excess(clock.rounds[0].bids, tiny_market)
        assert not detect_excess(clock.rounds[0].bids[:2], tiny_market)


@pytest.mark.unit
class TestVerifyClock:
    """历史校验"""

    def test_valid_history(self, tiny_market, tiny_roster):
        clock = run_clock_phase(tiny_market, tiny_roster, P_ANTENNA)
        verify_clock(clock, tiny_market)

    def test_demand_monotone(self, fast_market, template_bidder):
        clock = run_clock_phase(fast_market, build_roster(template_bidder, fast_market), 300.0,
                                keep_packages=True)
        verify_clock(clock, fast_market)
        bids = [r.packages["vno-01"] for r in clock.rounds if r.bids]
        assert all(b.bandwidth <= a.bandwidth for a, b in zip(bids, bids[1:]))
        assert all(b.antennas >= a.antennas for a, b in zip(bids, bids[1:]))

    def test_detects_price_skip(self, tiny_market, tiny_roster):
        clock = run_clock_phase(tiny_market, tiny_roster, P_ANTENNA)
        rounds = list(clock.rounds)
        rounds[2] = dataclasses.replace(rounds[2], p_spectrum=3.5)
        broken = dataclasses.replace(clock, rounds=rounds)
        with pytest.raises(ConsistencyError):
            verify_clock(broken, tiny_market)

    def test_detects_bandwidth_increase(self, tiny_market, tiny_roster):
        clock = run_clock_phase(tiny_market, tiny_roster, P_ANTENNA)
        rounds = list(clock.rounds)
        # 第 0 轮 (3, 50) 与第 1 轮 (4, 44) 对调
        rounds[0] = dataclasses.replace(rounds[0], bids=clock.rounds[1].bids)
        rounds[1] = dataclasses.replace(rounds[1], bids=clock.rounds[0].bids)
        broken = dataclasses.replace(clock, rounds=rounds)
        with pytest.raises(ConsistencyError):
            verify_clock(broken, tiny_market)


@pytest.mark.unit
class TestTrace:
    """轮次明细"""

    def test_trace_frame(self, tiny_market, tiny_roster):
        clock = run_clock_phase(tiny_market, tiny_roster, P_ANTENNA, keep_packages=True)
        frame = trace_frame(clock)
        assert list(frame.columns) == list(TRACE_COLUMNS)
        assert len(frame) == 6 * 3
        assert set(frame[frame["round"] == 5]["decision"]) == {"abstain"}
        assert set(frame[frame["round"] < 5]["decision"]) == {"bid"}
        assert frame.iloc[0]["antennas"] == 3

    def test_write_trace(self, tmp_path, tiny_market, tiny_roster):
        clock = run_clock_phase(tiny_market, tiny_roster, P_ANTENNA, keep_packages=True)
        path = write_trace(clock, tmp_path / "out" / "trace.csv")
        frame = pd.read_csv(path)
        assert len(frame) == 18
        assert frame["p_spectrum"].max() == 6.0

    def test_write_trace_error_names_path(self, tmp_path, tiny_market, tiny_roster):
        clock = run_clock_phase(tiny_market, tiny_roster, P_ANTENNA, keep_packages=True)
        blocker = tmp_path / "file"
        blocker.write_text("x")
        with pytest.raises(OutputError, match="file"):
            write_trace(clock, blocker / "trace.csv")

    def test_trace_requires_packages(self, tiny_market, tiny_roster):
        clock = run_clock_phase(tiny_market, tiny_roster, P_ANTENNA)
        with pytest.raises(InvalidArgumentError, match="keep_packages"):
            trace_frame(clock)
