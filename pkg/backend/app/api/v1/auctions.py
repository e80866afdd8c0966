"""Auction API endpoints."""
import logging
import time
from typing import List, Optional

from fastapi import APIRouter, HTTPException
from fastapi.concurrency import run_in_threadpool
from pydantic import BaseModel, Field

from app.errors import MarketError
from app.services.auction_service import run_auction
from app.services.bidder import BidderProfile, Package, PackageBid, build_roster
from app.services.market_model import MarketConfig
from app.services.metrics_collector import MetricsCollector
from app.services.winner_determination import WdpInstance, solve_wdp

logger = logging.getLogger(__name__)

router = APIRouter(prefix="/auctions", tags=["拍卖"])


class RunRequest(BaseModel):
    market: MarketConfig = Field(default_factory=MarketConfig)
    bidder: BidderProfile
    alpha: float = Field(ge=0)
    heterogeneity: float = Field(0.0, ge=0, lt=1)
    time_budget_ms: Optional[int] = Field(None, ge=0)


class WinnerResponse(BaseModel):
    bidder_id: str
    antennas: int
    bandwidth: float
    cost: float


class RunResponse(BaseModel):
    winners: List[WinnerResponse]
    clearing_spectrum_price: float
    p_antenna: float
    combined_revenue: float
    antenna_revenue: float
    spectrum_revenue: float
    num_winners: int
    mean_antennas: float
    mean_bandwidth: float
    spectrum_utilization: float
    rounds: int
    oversupply: bool
    optimal: bool


class BidRequest(BaseModel):
    bidder_id: str
    antennas: int = Field(ge=1)
    bandwidth: float = Field(ge=0)


class WdpRequest(BaseModel):
    bids: List[BidRequest]
    total_spectrum: float = Field(gt=0)
    p_spectrum: float = Field(ge=0)
    p_antenna: float = Field(ge=0)
    time_budget_ms: Optional[int] = Field(None, ge=0)


class WdpResponse(BaseModel):
    winners: List[str]
    revenue: float
    spectrum_used: float
    optimal: bool
    nodes_explored: int


def _budget_seconds(ms: Optional[int]) -> Optional[float]:
    return None if ms is None else ms / 1000.0


@router.post("/run", response_model=RunResponse)
async def run(body: RunRequest):
    """运行一次完整拍卖（同质或带异质估值的竞拍者）"""
    try:
        roster = build_roster(body.bidder, body.market, heterogeneity=body.heterogeneity)
        result = await run_in_threadpool(
            run_auction, body.market, roster, body.alpha * body.bidder.value_per_kbps,
            _budget_seconds(body.time_budget_ms),
        )
    except MarketError as e:
        logger.warning(f"拍卖请求失败: {e}")
        raise HTTPException(status_code=400, detail=str(e))

    o = result.outcome
    return RunResponse(
        winners=[
            WinnerResponse(bidder_id=b.bidder_id, antennas=b.antennas,
                           bandwidth=b.bandwidth, cost=b.cost)
            for b in o.allocation.winning_bids
        ],
        clearing_spectrum_price=o.clearing_spectrum_price,
        p_antenna=o.p_antenna,
        combined_revenue=o.combined_revenue,
        antenna_revenue=o.antenna_revenue,
        spectrum_revenue=o.spectrum_revenue,
        num_winners=o.num_winners,
        mean_antennas=o.mean_antennas,
        mean_bandwidth=o.mean_bandwidth,
        spectrum_utilization=o.spectrum_utilization,
        rounds=o.rounds,
        oversupply=o.oversupply,
        optimal=o.optimal,
    )


@router.post("/wdp", response_model=WdpResponse)
async def wdp(body: WdpRequest):
    """求解单独给出的胜者决定实例"""
    ids = [b.bidder_id for b in body.bids]
    if len(set(ids)) != len(ids):
        raise HTTPException(status_code=400, detail="bidder_id 重复")

    bids = tuple(
        PackageBid(
            bidder_id=b.bidder_id,
            package=Package(antennas=b.antennas, bandwidth=b.bandwidth,
                            cost=body.p_spectrum * b.bandwidth + body.p_antenna * b.antennas),
            round_index=0,
        )
        for b in body.bids
    )
    instance = WdpInstance(bids=bids, total_spectrum=body.total_spectrum,
                           p_spectrum=body.p_spectrum, p_antenna=body.p_antenna)
    start = time.perf_counter()
    try:
        allocation = await run_in_threadpool(
            solve_wdp, instance, _budget_seconds(body.time_budget_ms)
        )
    except MarketError as e:
        logger.warning(f"WDP 请求失败: {e}")
        raise HTTPException(status_code=400, detail=str(e))
    MetricsCollector().record_wdp(
        num_bids=len(bids),
        nodes_explored=allocation.nodes_explored,
        optimal=allocation.optimal,
        duration_ms=(time.perf_counter() - start) * 1000,
    )
    return WdpResponse(
        winners=list(allocation.winner_ids),
        revenue=allocation.revenue,
        spectrum_used=allocation.spectrum_used,
        optimal=allocation.optimal,
        nodes_explored=allocation.nodes_explored,
    )


@router.get("/stats")
async def stats(last_seconds: int = 86400):
    collector = MetricsCollector()
    return {
        "uptime_seconds": round(collector.get_uptime(), 1),
        "api": collector.get_api_stats(last_seconds),
        "auctions": collector.get_auction_stats(last_seconds),
        "wdp": collector.get_wdp_stats(last_seconds),
    }
