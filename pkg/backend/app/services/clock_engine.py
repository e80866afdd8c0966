"""
时钟阶段 - 频谱价格递增的价格发现过程

每轮公布频谱单价（天线单价全程固定），收集所有竞拍者的组合出价；
频谱总需求超过供给时价格加一个步长，进入下一轮，直到超额需求消失。
"""
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence
import logging

import pandas as pd

from app.config import settings
from app.errors import ConfigurationError, ConsistencyError, InvalidArgumentError, OutputError
from app.services.bidder import BidderProfile, Package, PackageBid, decide_bid, optimal_package
from app.services.market_model import MarketConfig

logger = logging.getLogger(__name__)

TRACE_COLUMNS = ("round", "p_spectrum", "bidder_id", "antennas", "bandwidth", "cost", "decision")


@dataclass(frozen=True, slots=True)
class RoundRecord:
    """一轮出价的记录"""
    round_index: int
    p_spectrum: float
    p_antenna: float
    bids: tuple  # tuple[PackageBid, ...]
    aggregate_spectrum_demand: float
    excess_demand: bool
    # 所有竞拍者（含弃权者）在本轮价格下的最优组合，只在 keep_packages 时保存
    packages: Dict[str, Package] = field(default_factory=dict, compare=False)


@dataclass(frozen=True)
class ClockResult:
    """时钟阶段结果"""
    rounds: List[RoundRecord]
    terminal_round: RoundRecord
    last_excess_round: Optional[RoundRecord]
    oversupply: bool

    @property
    def allocated_round(self) -> RoundRecord:
        """其出价进入最终分配的轮次"""
        if self.oversupply:
            return self.last_excess_round
        return self.terminal_round


def detect_excess(bids: Sequence[PackageBid], market: MarketConfig) -> bool:
    """频谱总需求是否超过供给；天线可共享，不参与判断"""
    return sum(bid.bandwidth for bid in bids) > market.total_spectrum


def _collect_round(
    market: MarketConfig,
    bidders: Sequence[BidderProfile],
    round_index: int,
    p_spectrum: float,
    p_antenna: float,
    keep_packages: bool = False,
) -> RoundRecord:
    # 需求参数相同的竞拍者只求解一次
    solved: Dict[tuple, Package] = {}
    packages: Dict[str, Package] = {}
    bids: List[PackageBid] = []
    for profile in bidders:
        key = profile.demand_key
        pkg = solved.get(key)
        if pkg is None:
            pkg = optimal_package(profile, p_spectrum, p_antenna, market)
            solved[key] = pkg
        if keep_packages:
            packages[profile.id] = pkg
        bid = decide_bid(profile, pkg, round_index)
        if bid is not None:
            bids.append(bid)

    demand = sum(bid.bandwidth for bid in bids)
    return RoundRecord(
        round_index=round_index,
        p_spectrum=p_spectrum,
        p_antenna=p_antenna,
        bids=tuple(bids),
        aggregate_spectrum_demand=demand,
        excess_demand=detect_excess(bids, market),
        packages=packages,
    )


def run_clock_phase(
    market: MarketConfig,
    bidders: Sequence[BidderProfile],
    p_antenna: float,
    max_rounds: Optional[int] = None,
    keep_packages: bool = False,
) -> ClockResult:
    """
    运行时钟阶段

    Args:
        market: 市场参数（起拍价、价格步长）
        bidders: 竞拍者列表，非空
        p_antenna: 天线单价，全程不变
        max_rounds: 轮数上限，None 时取 settings.MAX_CLOCK_ROUNDS
        keep_packages: 保存每轮所有竞拍者的最优组合（trace_frame 需要）

    Returns:
        完整的轮次历史
    """
    if not market.price_increment > 0:
        raise ConfigurationError(
            f"price_increment 必须 > 0，收到 {market.price_increment}（时钟无法终止）"
        )
    if not bidders:
        raise InvalidArgumentError("竞拍者列表为空")
    if p_antenna < 0:
        raise InvalidArgumentError(f"天线单价不能为负，收到 {p_antenna}")
    limit = settings.MAX_CLOCK_ROUNDS if max_rounds is None else max_rounds
    if limit < 1:
        raise ConfigurationError(f"max_rounds 必须 >= 1，收到 {limit}")

    rounds: List[RoundRecord] = []
    last_excess: Optional[RoundRecord] = None
    p_spectrum = market.reserve_spectrum_price

    while True:
        record = _collect_round(market, bidders, len(rounds), p_spectrum, p_antenna,
                                keep_packages)
        rounds.append(record)
        logger.debug(
            f"第 {record.round_index} 轮: 价格 {p_spectrum:.6g}, "
            f"出价 {len(record.bids)}, 需求 {record.aggregate_spectrum_demand:.6g} kHz"
        )
        if not record.excess_demand:
            break
        last_excess = record
        if len(rounds) >= limit:
            raise ConfigurationError(f"时钟阶段超过 {limit} 轮仍未结束")
        p_spectrum = p_spectrum + market.price_increment

    terminal = rounds[-1]
    oversupply = (
        last_excess is not None
        and terminal.aggregate_spectrum_demand < market.total_spectrum
    )
    logger.info(
        f"时钟阶段结束: {len(rounds)} 轮, 终止价格 {terminal.p_spectrum:.6g}, "
        f"终止需求 {terminal.aggregate_spectrum_demand:.6g} kHz, 供过于求={oversupply}"
    )
    return ClockResult(
        rounds=rounds,
        terminal_round=terminal,
        last_excess_round=last_excess,
        oversupply=oversupply,
    )


def verify_clock(clock: ClockResult, market: MarketConfig) -> None:
    """
    校验时钟历史：终止状态、价格步长、每个竞拍者的需求单调性

    带宽需求在其出价的轮次中不增，天线需求不减。

    Raises:
        ConsistencyError: 任何一项不满足
    """
    rounds = clock.rounds
    if not rounds or clock.terminal_round is not rounds[-1]:
        raise ConsistencyError("终止轮次不是最后一轮")
    if clock.terminal_round.excess_demand:
        raise ConsistencyError("终止轮次仍有超额需求")

    for prev, cur in zip(rounds, rounds[1:]):
        if cur.p_spectrum != prev.p_spectrum + market.price_increment:
            raise ConsistencyError(
                f"第 {cur.round_index} 轮价格 {cur.p_spectrum} 不等于上一轮加步长"
            )
        if not prev.excess_demand:
            raise ConsistencyError(f"第 {prev.round_index} 轮没有超额需求却继续加价")

    last_seen: Dict[str, Package] = {}
    for record in rounds:
        for bid in record.bids:
            before = last_seen.get(bid.bidder_id)
            if before is not None:
                if bid.bandwidth > before.bandwidth:
                    raise ConsistencyError(
                        f"{bid.bidder_id} 在第 {record.round_index} 轮带宽需求上升"
                    )
                if bid.antennas < before.antennas:
                    raise ConsistencyError(
                        f"{bid.bidder_id} 在第 {record.round_index} 轮天线需求下降"
                    )
            last_seen[bid.bidder_id] = bid.package


def trace_frame(clock: ClockResult) -> pd.DataFrame:
    """逐轮逐竞拍者的明细表，时钟阶段须以 keep_packages=True 运行"""
    if not all(record.packages for record in clock.rounds):
        raise InvalidArgumentError("时钟阶段没有保存每轮组合，请以 keep_packages=True 运行")
    rows = []
    for record in clock.rounds:
        bidding = {bid.bidder_id for bid in record.bids}
        for bidder_id, pkg in record.packages.items():
            rows.append({
                "round": record.round_index,
                "p_spectrum": record.p_spectrum,
                "bidder_id": bidder_id,
                "antennas": pkg.antennas,
                "bandwidth": pkg.bandwidth,
                "cost": pkg.cost,
                "decision": "bid" if bidder_id in bidding else "abstain",
            })
    return pd.DataFrame(rows, columns=list(TRACE_COLUMNS))


def write_trace(clock: ClockResult, path: Path) -> Path:
    """把明细表写成 CSV"""
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        trace_frame(clock).to_csv(path, index=False)
    except OSError as e:
        raise OutputError(f"写入轮次明细失败 {path}: {e}") from e
    logger.info(f"轮次明细已写入: {path}")
    return path
