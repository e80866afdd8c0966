"""
拍卖服务 - 时钟阶段 → 胜者决定 → 结果统计
"""
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple
import logging
import time

from app.services.bidder import BidderProfile
from app.services.clock_engine import ClockResult, run_clock_phase, verify_clock
from app.services.market_model import MarketConfig
from app.services.metrics import AuctionOutcome, summarize
from app.services.metrics_collector import MetricsCollector
from app.services.winner_determination import (
    Allocation,
    WdpInstance,
    allocate_all,
    solve_wdp,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class RunStats:
    """一次拍卖的运行统计；没有求解 WDP 时 wdp_* 为 None"""
    rounds: int
    num_winners: int
    oversupply: bool
    duration_ms: float
    wdp_bids: Optional[int] = None
    wdp_nodes: Optional[int] = None
    wdp_optimal: Optional[bool] = None
    wdp_duration_ms: Optional[float] = None


def record_stats(stats: RunStats) -> None:
    """把运行统计写入 MetricsCollector（只在当前进程内有效）"""
    collector = MetricsCollector()
    collector.record_auction(
        rounds=stats.rounds,
        num_winners=stats.num_winners,
        oversupply=stats.oversupply,
        duration_ms=stats.duration_ms,
    )
    if stats.wdp_bids is not None:
        collector.record_wdp(
            num_bids=stats.wdp_bids,
            nodes_explored=stats.wdp_nodes,
            optimal=stats.wdp_optimal,
            duration_ms=stats.wdp_duration_ms,
        )


@dataclass(frozen=True)
class AuctionRun:
    """一次完整拍卖的产物"""
    clock: ClockResult
    allocation: Allocation
    outcome: AuctionOutcome
    stats: RunStats


def allocate(clock: ClockResult, market: MarketConfig,
             time_budget: Optional[float] = None) -> Tuple[Allocation, Optional[int], float]:
    """
    供过于求时对最后一个超额需求轮求解 WDP，否则终止轮的出价全部中标

    Returns:
        (分配, WDP 实例的出价数, WDP 耗时 ms)；没有求解 WDP 时出价数为 None
    """
    if not clock.oversupply:
        return allocate_all(clock.terminal_round), None, 0.0

    instance = WdpInstance.from_round(clock.last_excess_round, market)
    start = time.perf_counter()
    allocation = solve_wdp(instance, time_budget=time_budget)
    return allocation, len(instance.bids), (time.perf_counter() - start) * 1000


def run_auction(
    market: MarketConfig,
    bidders: Sequence[BidderProfile],
    p_antenna: float,
    time_budget: Optional[float] = None,
    check_invariants: bool = False,
    keep_packages: bool = False,
    record_metrics: bool = True,
) -> AuctionRun:
    """
    运行一次完整拍卖

    Args:
        market: 市场参数
        bidders: 竞拍者列表
        p_antenna: 天线单价
        time_budget: WDP 时间预算（秒），None 为精确求解
        check_invariants: 是否校验时钟历史（价格步长、需求单调性）
        keep_packages: 保存每轮所有竞拍者的组合，写轮次明细时需要
        record_metrics: 是否写入本进程的 MetricsCollector；
            子进程里运行时由父进程根据返回的 stats 记录

    Returns:
        AuctionRun
    """
    start = time.perf_counter()
    clock = run_clock_phase(market, bidders, p_antenna, keep_packages=keep_packages)
    if check_invariants:
        verify_clock(clock, market)
    allocation, wdp_bids, wdp_ms = allocate(clock, market, time_budget)
    outcome = summarize(clock, allocation, market)

    duration_ms = (time.perf_counter() - start) * 1000
    solved = wdp_bids is not None
    stats = RunStats(
        rounds=outcome.rounds,
        num_winners=outcome.num_winners,
        oversupply=outcome.oversupply,
        duration_ms=duration_ms,
        wdp_bids=wdp_bids,
        wdp_nodes=allocation.nodes_explored if solved else None,
        wdp_optimal=allocation.optimal if solved else None,
        wdp_duration_ms=wdp_ms if solved else None,
    )
    if record_metrics:
        record_stats(stats)
    logger.info(
        f"拍卖完成: {outcome.num_winners} 个赢家, 合并收益 {outcome.combined_revenue:.6g}, "
        f"耗时 {duration_ms:.1f}ms"
    )
    return AuctionRun(clock=clock, allocation=allocation, outcome=outcome, stats=stats)
