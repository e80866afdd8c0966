"""
VNO 竞拍者 - 估值、最小成本组合优化、出价/弃权决策
"""
from dataclasses import dataclass
from typing import List, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from app.errors import InvalidArgumentError
from app.services.market_model import MarketConfig


class BidderProfile(BaseModel):
    """单个 VNO 的需求与估值

    budget = value_per_kbps · r_min；min_antennas / min_bandwidth 是部分可替代性的下限。
    """
    model_config = ConfigDict(frozen=True)

    id: str
    r_min: float = Field(gt=0)  # Kbps
    value_per_kbps: float = Field(ge=0)
    min_antennas: int = Field(1, ge=1)
    min_bandwidth: float = Field(0.0, ge=0)  # kHz

    @property
    def budget(self) -> float:
        return self.value_per_kbps * self.r_min

    @property
    def demand_key(self) -> tuple:
        """决定最优组合的参数（与 id、估值无关）"""
        return (self.r_min, self.min_antennas, self.min_bandwidth)


@dataclass(frozen=True, slots=True)
class Package:
    """一组 (天线数, 带宽) 及其在当前价格下的成本"""
    antennas: int
    bandwidth: float  # kHz
    cost: float


@dataclass(frozen=True, slots=True)
class PackageBid:
    """提交给拍卖方的组合出价"""
    bidder_id: str
    package: Package
    round_index: int

    @property
    def antennas(self) -> int:
        return self.package.antennas

    @property
    def bandwidth(self) -> float:
        return self.package.bandwidth

    @property
    def cost(self) -> float:
        return self.package.cost


def _check_prices(p_spectrum: float, p_antenna: float) -> None:
    if p_spectrum < 0 or p_antenna < 0:
        raise InvalidArgumentError(
            f"价格不能为负: p_spectrum={p_spectrum}, p_antenna={p_antenna}"
        )


def _antenna_range(profile: BidderProfile, market: MarketConfig) -> np.ndarray:
    if profile.min_antennas > market.total_antennas:
        raise InvalidArgumentError(
            f"{profile.id}: min_antennas={profile.min_antennas} 超过天线池 {market.total_antennas}"
        )
    return np.arange(profile.min_antennas, market.total_antennas + 1)


def optimal_package(
    profile: BidderProfile,
    p_spectrum: float,
    p_antenna: float,
    market: MarketConfig,
) -> Package:
    """
    当前价格下满足速率要求的最小成本组合

    速率约束总是取等号，问题退化为对天线数 m 的一维最小化，
    一次线性扫描 [min_antennas, total_antennas]；成本相同时取较小的 m。

    Args:
        profile: 竞拍者参数
        p_spectrum: 频谱单价（每 kHz）
        p_antenna: 天线单价（每根）
        market: 市场参数

    Returns:
        最优 Package
    """
    _check_prices(p_spectrum, p_antenna)
    antennas = _antenna_range(profile, market)
    model = market.rate_model

    se = model.efficiency_table(market.total_antennas)[profile.min_antennas - 1:]
    bandwidth = model.bandwidths_from_table(profile.r_min, se)
    floor = model.ceil_to_unit(profile.min_bandwidth)
    if floor > 0:
        bandwidth = np.maximum(bandwidth, floor)

    cost = p_spectrum * bandwidth + p_antenna * antennas
    best = int(np.argmin(cost))  # argmin 返回第一个最小值，即最小的 m
    return Package(
        antennas=int(antennas[best]),
        bandwidth=float(bandwidth[best]),
        cost=float(cost[best]),
    )


def brute_force_package(
    profile: BidderProfile,
    p_spectrum: float,
    p_antenna: float,
    market: MarketConfig,
) -> Package:
    """逐个 m 计算成本的穷举版本，作为 optimal_package 的对照"""
    _check_prices(p_spectrum, p_antenna)
    _antenna_range(profile, market)
    model = market.rate_model
    floor = model.ceil_to_unit(profile.min_bandwidth)

    best: Optional[Package] = None
    for m in range(profile.min_antennas, market.total_antennas + 1):
        bandwidth = max(model.required_bandwidth(profile.r_min, m), floor)
        cost = p_spectrum * bandwidth + p_antenna * m
        if best is None or cost < best.cost:
            best = Package(antennas=m, bandwidth=bandwidth, cost=cost)
    return best


def decide_bid(
    profile: BidderProfile, pkg: Package, round_index: int = 0
) -> Optional[PackageBid]:
    """成本不超过预算（含等号）时出价，否则本轮弃权"""
    if pkg.cost <= profile.budget:
        return PackageBid(bidder_id=profile.id, package=pkg, round_index=round_index)
    return None


def build_roster(
    template: BidderProfile,
    market: MarketConfig,
    r_min: Optional[float] = None,
    heterogeneity: float = 0.0,
) -> List[BidderProfile]:
    """
    按模板生成 market.num_bidders 个竞拍者

    Args:
        template: 竞拍者模板（id 被忽略）
        market: 市场参数，rng_seed 决定异质性抽样
        r_min: 覆盖模板的最低速率
        heterogeneity: h ∈ [0, 1)，每个竞拍者的 value_per_kbps 乘以 U[1-h, 1+h]

    Returns:
        竞拍者列表，id 为 vno-01, vno-02, ...
    """
    if not 0 <= heterogeneity < 1:
        raise InvalidArgumentError(f"heterogeneity 必须在 [0, 1) 内，收到 {heterogeneity}")

    n = market.num_bidders
    width = max(2, len(str(n)))
    if heterogeneity > 0:
        rng = np.random.default_rng(market.rng_seed)
        factors = rng.uniform(1 - heterogeneity, 1 + heterogeneity, size=n)
    else:
        factors = np.ones(n)

    fields = template.model_dump()
    if r_min is not None:
        fields["r_min"] = r_min
    return [
        BidderProfile.model_validate({
            **fields,
            "id": f"vno-{i + 1:0{width}d}",
            "value_per_kbps": float(template.value_per_kbps * factors[i]),
        })
        for i in range(n)
    ]
