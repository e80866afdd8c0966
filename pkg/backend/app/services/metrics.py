"""
拍卖结果统计 - 合并收益、天线收益、赢家数、人均资源与成交频谱价格
"""
from dataclasses import dataclass
from typing import Dict, Tuple
import math

from app.errors import ConsistencyError
from app.services.clock_engine import ClockResult
from app.services.market_model import MarketConfig
from app.services.winner_determination import Allocation

# CSV 列顺序，新增字段只能追加在末尾
OUTCOME_COLUMNS: Tuple[str, ...] = (
    "r_min",
    "alpha",
    "p_antenna",
    "clearing_spectrum_price",
    "combined_revenue",
    "antenna_revenue",
    "spectrum_revenue",
    "num_winners",
    "mean_antennas",
    "mean_bandwidth",
    "spectrum_used",
    "spectrum_utilization",
    "revenue_per_khz",
    "rounds",
    "oversupply",
    "optimal",
)


@dataclass(frozen=True)
class AuctionOutcome:
    """单次拍卖的结果

    未中标者不付费；没有赢家时 mean_* 取 0。
    """
    allocation: Allocation
    clearing_spectrum_price: float  # 每 kHz
    p_antenna: float
    combined_revenue: float
    antenna_revenue: float
    spectrum_revenue: float
    num_winners: int
    mean_antennas: float
    mean_bandwidth: float  # kHz
    spectrum_used: float  # kHz
    spectrum_utilization: float
    revenue_per_khz: float
    rounds: int
    oversupply: bool
    optimal: bool


def summarize(clock: ClockResult, allocation: Allocation, market: MarketConfig) -> AuctionOutcome:
    """
    由时钟历史和分配结果计算全部统计量

    成交价格是被分配轮次的价格：供过于求时为最后一个超额需求轮，否则为终止轮。

    Args:
        clock: 时钟阶段结果
        allocation: 从 clock.allocated_round 的出价中选出的分配
        market: 市场参数

    Returns:
        AuctionOutcome

    Raises:
        ConsistencyError: 中标出价不在来源轮次中，或收益分解与 allocation.revenue 不一致
    """
    source = clock.allocated_round
    offered = set(source.bids)
    for bid in allocation.winning_bids:
        if bid not in offered:
            raise ConsistencyError(
                f"{bid.bidder_id} 的中标出价不在第 {source.round_index} 轮的出价中"
            )
    winners = allocation.winning_bids
    if len({bid.bidder_id for bid in winners}) != len(winners):
        raise ConsistencyError("同一竞拍者有多个中标出价")

    p_spectrum = source.p_spectrum
    p_antenna = source.p_antenna
    total_bandwidth = math.fsum(bid.bandwidth for bid in winners)
    total_antennas = sum(bid.antennas for bid in winners)
    if total_bandwidth > market.total_spectrum + 1e-9:
        raise ConsistencyError(
            f"中标带宽 {total_bandwidth} 超过总频谱 {market.total_spectrum}"
        )

    spectrum_revenue = p_spectrum * total_bandwidth
    antenna_revenue = p_antenna * total_antennas
    combined = spectrum_revenue + antenna_revenue
    if combined != allocation.revenue:
        raise ConsistencyError(
            f"收益分解 {combined!r} 与分配收益 {allocation.revenue!r} 不一致"
        )

    n = len(winners)
    return AuctionOutcome(
        allocation=allocation,
        clearing_spectrum_price=p_spectrum,
        p_antenna=p_antenna,
        combined_revenue=combined,
        antenna_revenue=antenna_revenue,
        spectrum_revenue=spectrum_revenue,
        num_winners=n,
        mean_antennas=total_antennas / n if n else 0.0,
        mean_bandwidth=total_bandwidth / n if n else 0.0,
        spectrum_used=total_bandwidth,
        spectrum_utilization=total_bandwidth / market.total_spectrum,
        revenue_per_khz=combined / market.total_spectrum,
        rounds=len(clock.rounds),
        oversupply=clock.oversupply,
        optimal=allocation.optimal,
    )


def outcome_row(outcome: AuctionOutcome, r_min: float, alpha: float) -> Dict[str, object]:
    """按 OUTCOME_COLUMNS 展开成一行"""
    row = {
        "r_min": r_min,
        "alpha": alpha,
        "p_antenna": outcome.p_antenna,
        "clearing_spectrum_price": outcome.clearing_spectrum_price,
        "combined_revenue": outcome.combined_revenue,
        "antenna_revenue": outcome.antenna_revenue,
        "spectrum_revenue": outcome.spectrum_revenue,
        "num_winners": outcome.num_winners,
        "mean_antennas": outcome.mean_antennas,
        "mean_bandwidth": outcome.mean_bandwidth,
        "spectrum_used": outcome.spectrum_used,
        "spectrum_utilization": outcome.spectrum_utilization,
        "revenue_per_khz": outcome.revenue_per_khz,
        "rounds": outcome.rounds,
        "oversupply": outcome.oversupply,
        "optimal": outcome.optimal,
    }
    return {column: row[column] for column in OUTCOME_COLUMNS}
