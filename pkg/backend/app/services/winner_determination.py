"""
胜者决定 - 供过于求时在最后一个超额需求轮的出价中选收益最大的可行子集

按出价分支的深度优先搜索：每层决定一个出价选或不选，分支因子为 2，
深度不超过出价数。收益相同的分配中赢家多者优先，再比较排序后 id 元组的字典序。
"""
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, List, Optional, Sequence, Tuple
import heapq
import logging
import math
import time

import numpy as np
import pandas as pd

from app.errors import InstanceTooLargeError, InvalidArgumentError
from app.services.bidder import Package, PackageBid
from app.services.clock_engine import RoundRecord
from app.services.market_model import MarketConfig

logger = logging.getLogger(__name__)

MAX_BRUTE_FORCE_BIDS = 20
REVENUE_RTOL = 1e-9
SPECTRUM_EPS = 1e-9


@dataclass(frozen=True)
class WdpInstance:
    """WDP 实例：出价按提交轮次的价格计收益"""
    bids: Tuple[PackageBid, ...]
    total_spectrum: float
    p_spectrum: float
    p_antenna: float

    def __post_init__(self):
        object.__setattr__(self, "bids", tuple(self.bids))

    @classmethod
    def from_round(cls, record: RoundRecord, market: MarketConfig) -> "WdpInstance":
        """用某一轮的出价和价格构造实例"""
        return cls(
            bids=record.bids,
            total_spectrum=market.total_spectrum,
            p_spectrum=record.p_spectrum,
            p_antenna=record.p_antenna,
        )

    def bid_revenue(self, bid: PackageBid) -> float:
        return self.p_spectrum * bid.bandwidth + self.p_antenna * bid.antennas


@dataclass(frozen=True)
class Allocation:
    """WDP 的解；winning_bids 按 bidder_id 排序"""
    winning_bids: Tuple[PackageBid, ...]
    spectrum_used: float
    revenue: float
    optimal: bool
    nodes_explored: int = field(default=0, compare=False)

    @property
    def winner_ids(self) -> Tuple[str, ...]:
        return tuple(bid.bidder_id for bid in self.winning_bids)

    @property
    def num_winners(self) -> int:
        return len(self.winning_bids)


def allocation_revenue(bids: Sequence[PackageBid], p_spectrum: float, p_antenna: float) -> float:
    """一组出价的收益，与顺序无关

    按频谱部分加天线部分计算，与结果统计里的收益分解逐位相等。
    """
    spectrum = p_spectrum * math.fsum(bid.bandwidth for bid in bids)
    antennas = p_antenna * sum(bid.antennas for bid in bids)
    return spectrum + antennas


def _make_allocation(instance: WdpInstance, chosen: Sequence[int], optimal: bool,
                     nodes: int = 0) -> Allocation:
    bids = sorted((instance.bids[i] for i in chosen), key=lambda b: b.bidder_id)
    return Allocation(
        winning_bids=tuple(bids),
        spectrum_used=math.fsum(b.bandwidth for b in bids),
        revenue=allocation_revenue(bids, instance.p_spectrum, instance.p_antenna),
        optimal=optimal,
        nodes_explored=nodes,
    )


def allocate_all(record: RoundRecord) -> Allocation:
    """本轮所有出价全部中标；时钟阶段没有供过于求时使用"""
    bids = sorted(record.bids, key=lambda b: b.bidder_id)
    return Allocation(
        winning_bids=tuple(bids),
        spectrum_used=math.fsum(b.bandwidth for b in bids),
        revenue=allocation_revenue(bids, record.p_spectrum, record.p_antenna),
        optimal=True,
    )


@dataclass(frozen=True, order=False)
class _Key:
    revenue: float
    count: int
    ids: Tuple[str, ...]  # sorted

    def better_than(self, other: "_Key") -> bool:
        tol = REVENUE_RTOL * max(1.0, abs(other.revenue))
        if self.revenue > other.revenue + tol:
            return True
        if self.revenue < other.revenue - tol:
            return False
        if self.count != other.count:
            return self.count > other.count
        return self.ids < other.ids


def _key_of(instance: WdpInstance, chosen: Sequence[int]) -> _Key:
    return _Key(
        revenue=allocation_revenue([instance.bids[i] for i in chosen], instance.p_spectrum,
                                   instance.p_antenna),
        count=len(chosen),
        ids=tuple(sorted(instance.bids[i].bidder_id for i in chosen)),
    )


def brute_force_wdp(instance: WdpInstance) -> Allocation:
    """枚举所有出价子集得到精确最优解，作为 solve_wdp 的对照

    Raises:
        InstanceTooLargeError: 出价数超过 MAX_BRUTE_FORCE_BIDS
    """
    n = len(instance.bids)
    if n > MAX_BRUTE_FORCE_BIDS:
        raise InstanceTooLargeError(
            f"穷举最多支持 {MAX_BRUTE_FORCE_BIDS} 个出价，收到 {n}"
        )
    if n == 0:
        return _make_allocation(instance, [], optimal=True)

    revenue = np.array([instance.bid_revenue(b) for b in instance.bids])
    bandwidth = np.array([b.bandwidth for b in instance.bids])
    subsets = np.arange(2 ** n, dtype=np.int32)[:, None]
    masks = ((subsets >> np.arange(n, dtype=np.int32)) & 1).astype(bool)

    feasible = masks @ bandwidth <= instance.total_spectrum + SPECTRUM_EPS
    totals = masks @ revenue
    best = totals[feasible].max()
    # 宽松的预筛选，精确比较在下面的 _Key 上进行
    slack = 4 * REVENUE_RTOL * max(1.0, abs(best)) + 1e-9 * n * max(1.0, abs(best))
    candidates = np.flatnonzero(feasible & (totals >= best - slack))

    incumbent: Optional[_Key] = None
    incumbent_set: Tuple[int, ...] = ()
    for row in candidates:
        chosen = tuple(np.flatnonzero(masks[row]).tolist())
        key = _key_of(instance, chosen)
        if incumbent is None or key.better_than(incumbent):
            incumbent, incumbent_set = key, chosen
    return _make_allocation(instance, incumbent_set, optimal=True, nodes=len(masks))


class _BranchOnBids:
    """选/不选两分支的深度优先搜索，使用显式栈"""

    def __init__(self, instance: WdpInstance, deadline: Optional[float],
                 on_incumbent: Optional[Callable[[float], None]]):
        self.instance = instance
        self.deadline = deadline
        self.on_incumbent = on_incumbent
        bids = instance.bids
        self.revenue = [instance.bid_revenue(b) for b in bids]
        self.bandwidth = [b.bandwidth for b in bids]
        self.ids = [b.bidder_id for b in bids]

        def density(i: int) -> float:
            bw = self.bandwidth[i]
            return math.inf if bw <= 0 else self.revenue[i] / bw

        # 按每 kHz 收益降序，上界更早收紧
        self.order = sorted(range(len(bids)), key=lambda i: (-density(i), self.ids[i], i))
        self.nodes = 0
        self.cut_off = False
        self.best_key = _Key(0.0, 0, ())
        self.best_set: Tuple[int, ...] = ()

    def _fits(self, i: int, remaining: float) -> bool:
        return self.bandwidth[i] <= remaining + SPECTRUM_EPS

    def _offer(self, chosen: Tuple[int, ...]) -> None:
        key = _key_of(self.instance, chosen)
        if key.better_than(self.best_key):
            self.best_key, self.best_set = key, chosen
            if self.on_incumbent is not None:
                self.on_incumbent(key.revenue)

    def _seed_greedy(self) -> None:
        remaining = self.instance.total_spectrum
        chosen = []
        for i in self.order:
            if self._fits(i, remaining):
                chosen.append(i)
                remaining -= self.bandwidth[i]
        self._offer(tuple(chosen))

    def _prunable(self, depth: int, remaining: float, committed_rev: float,
                  chosen: Tuple[int, ...]) -> bool:
        fitting = [i for i in self.order[depth:] if self._fits(i, remaining)]

        # 还能加入的最多出价数：从带宽最小的开始装
        max_more = 0
        room = remaining
        for bw in sorted(self.bandwidth[i] for i in fitting):
            if bw > room + SPECTRUM_EPS:
                break
            room -= bw
            max_more += 1

        simple = committed_rev + math.fsum(self.revenue[i] for i in fitting)
        top_k = committed_rev + math.fsum(heapq.nlargest(max_more, (self.revenue[i] for i in fitting)))
        fractional = committed_rev
        room = remaining
        for i in fitting:  # 已按密度排序
            bw = self.bandwidth[i]
            if bw <= room + SPECTRUM_EPS:
                fractional += self.revenue[i]
                room -= bw
            else:
                fractional += self.revenue[i] * (max(room, 0.0) / bw)
                break
        bound = min(simple, top_k, fractional)

        best = self.best_key
        tol = REVENUE_RTOL * max(1.0, abs(best.revenue))
        if bound < best.revenue - tol:
            return True
        if bound > best.revenue + tol:
            return False

        # 收益至多持平：只有赢家更多或 id 更小才可能胜出
        count_bound = len(chosen) + max_more
        if count_bound != best.count:
            return count_bound < best.count
        need = best.count - len(chosen)
        smallest = sorted(self.ids[i] for i in fitting)[:need]
        lex_bound = tuple(sorted([self.ids[i] for i in chosen] + smallest))
        return lex_bound >= best.ids

    def _expired(self) -> bool:
        if self.deadline is None:
            return False
        if time.perf_counter() >= self.deadline:
            self.cut_off = True
        return self.cut_off

    def run(self) -> None:
        self._seed_greedy()
        n = len(self.order)
        # (深度, 剩余频谱, 已选收益, 已选下标)
        stack: List[Tuple[int, float, float, Tuple[int, ...]]] = [
            (0, self.instance.total_spectrum, 0.0, ())
        ]
        while stack:
            if self._expired():
                return
            depth, remaining, rev, chosen = stack.pop()
            self.nodes += 1
            self._offer(chosen)
            # 装不下的出价直接排除，不分支
            while depth < n and not self._fits(self.order[depth], remaining):
                depth += 1
            if depth >= n or self._prunable(depth, remaining, rev, chosen):
                continue
            i = self.order[depth]
            stack.append((depth + 1, remaining, rev, chosen))
            stack.append((depth + 1, remaining - self.bandwidth[i], rev + self.revenue[i],
                          chosen + (i,)))


def solve_wdp(
    instance: WdpInstance,
    time_budget: Optional[float] = None,
    on_incumbent: Optional[Callable[[float], None]] = None,
) -> Allocation:
    """
    频谱约束下收益最大的出价子集

    Args:
        instance: WDP 实例
        time_budget: 墙钟时间预算（秒）；搜索被截止时返回当前最好解，optimal=False
        on_incumbent: 每次找到更好的解时以其收益调用

    Returns:
        Allocation
    """
    if time_budget is not None and time_budget < 0:
        raise InvalidArgumentError(f"time_budget 必须 >= 0，收到 {time_budget}")
    if not instance.bids:
        return _make_allocation(instance, [], optimal=True)

    deadline = None if time_budget is None else time.perf_counter() + time_budget
    search = _BranchOnBids(instance, deadline, on_incumbent)
    search.run()
    if search.cut_off:
        logger.info(
            f"WDP 搜索在 {time_budget:.3g}s 后截止: {search.nodes} 个节点, "
            f"当前收益 {search.best_key.revenue:.6g}"
        )
    else:
        logger.debug(f"WDP 求解完成: {len(instance.bids)} 个出价, {search.nodes} 个节点")
    return _make_allocation(instance, search.best_set, optimal=not search.cut_off,
                            nodes=search.nodes)


def _row_to_bid(path: Path, row, p_spectrum: float, p_antenna: float) -> PackageBid:
    if pd.isna(row.bidder_id) or pd.isna(row.antennas) or pd.isna(row.bandwidth):
        raise InvalidArgumentError(f"{path}: 出价 {row.bidder_id} 有空字段")
    try:
        antennas_raw, bandwidth = float(row.antennas), float(row.bandwidth)
    except (TypeError, ValueError) as e:
        raise InvalidArgumentError(f"{path}: 出价 {row.bidder_id} 的数值无法解析: {e}") from e
    if not antennas_raw.is_integer() or antennas_raw < 1:
        raise InvalidArgumentError(f"{path}: 出价 {row.bidder_id} 的天线数 {row.antennas} 不是正整数")
    if not math.isfinite(bandwidth) or bandwidth < 0:
        raise InvalidArgumentError(f"{path}: 出价 {row.bidder_id} 的带宽 {row.bandwidth} 不合法")
    antennas = int(antennas_raw)
    return PackageBid(
        bidder_id=str(row.bidder_id),
        package=Package(antennas=antennas, bandwidth=bandwidth,
                        cost=p_spectrum * bandwidth + p_antenna * antennas),
        round_index=0,
    )


def load_instance_csv(path: Path, total_spectrum: float, p_spectrum: float,
                      p_antenna: float) -> WdpInstance:
    """
    从 CSV 读取 WDP 实例，列为 bidder_id, antennas, bandwidth

    Raises:
        InvalidArgumentError: 文件无法读取、为空、缺列、有空值或重复 id，
            或数值不合法；消息中带文件路径
    """
    path = Path(path)
    if total_spectrum <= 0 or p_spectrum < 0 or p_antenna < 0:
        raise InvalidArgumentError("total_spectrum 必须 > 0，价格不能为负")
    try:
        frame = pd.read_csv(path, dtype={"bidder_id": str})
    except pd.errors.EmptyDataError as e:
        raise InvalidArgumentError(f"WDP 实例文件为空 {path}") from e
    except (OSError, pd.errors.ParserError) as e:
        raise InvalidArgumentError(f"读取 WDP 实例失败 {path}: {e}") from e
    missing = {"bidder_id", "antennas", "bandwidth"} - set(frame.columns)
    if missing:
        raise InvalidArgumentError(f"{path} 缺少列: {sorted(missing)}")
    duplicated = frame["bidder_id"][frame["bidder_id"].duplicated()].dropna()
    if not duplicated.empty:
        raise InvalidArgumentError(f"{path}: bidder_id 重复 {sorted(set(duplicated))}")

    bids = [_row_to_bid(path, row, p_spectrum, p_antenna)
            for row in frame.itertuples(index=False)]
    logger.debug(f"读取 WDP 实例 {path}: {len(bids)} 个出价")
    return WdpInstance(bids=tuple(bids), total_spectrum=total_spectrum,
                       p_spectrum=p_spectrum, p_antenna=p_antenna)
