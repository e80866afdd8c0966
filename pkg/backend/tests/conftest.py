"""
Pytest 配置和共享 fixtures
"""
import pytest
from typing import AsyncGenerator
from httpx import AsyncClient

from app.main import app
from app.services.bidder import BidderProfile, Package, PackageBid, build_roster
from app.services.market_model import MarketConfig
from app.services.metrics_collector import MetricsCollector


# ==================== HTTP Fixtures ====================

@pytest.fixture
async def client() -> AsyncGenerator[AsyncClient, None]:
    """测试 HTTP 客户端"""
    from httpx import ASGITransport

    transport = ASGITransport(app=app)
    async with AsyncClient(transport=transport, base_url="http://test") as client:
        yield client


@pytest.fixture
def collector() -> MetricsCollector:
    """清空后的统计收集器"""
    c = MetricsCollector()
    c.reset()
    return c


# ==================== 市场 Fixtures ====================

@pytest.fixture
def market() -> MarketConfig:
    """默认市场：64 天线、50 MHz、20 个 VNO"""
    return MarketConfig()


@pytest.fixture
def tiny_market() -> MarketConfig:
    """可以手算的小市场

    snr = 1 时 log2(1 + m) 在 m = 1, 3 处为整数；
    r_min = 100 时所需带宽为 m=1: 100, m=2: 64, m=3: 50, m=4: 44 (kHz)。
    """
    return MarketConfig(
        total_antennas=4,
        total_spectrum=100.0,
        snr_linear=1.0,
        num_bidders=3,
        spectrum_unit=1.0,
        reserve_spectrum_price=1.0,
        price_increment=1.0,
    )


@pytest.fixture
def tiny_bidder() -> BidderProfile:
    """预算 300，配合 tiny_market 与 p_antenna = 10 使用"""
    return BidderProfile(id="template", r_min=100.0, value_per_kbps=3.0)


@pytest.fixture
def tiny_roster(tiny_bidder, tiny_market):
    return build_roster(tiny_bidder, tiny_market)


@pytest.fixture
def fast_market() -> MarketConfig:
    """默认市场，但价格步长放大 10 倍以缩短时钟阶段"""
    return MarketConfig(price_increment=0.1)


@pytest.fixture
def template_bidder() -> BidderProfile:
    return BidderProfile(id="template", r_min=100_000.0, value_per_kbps=1.0)


# ==================== WDP Fixtures ====================

@pytest.fixture
def make_bid():
    """构造出价；p_spectrum = 1、p_antenna = 0 时收益等于带宽"""
    def _make(bidder_id: str, bandwidth: float, antennas: int = 1,
              p_spectrum: float = 1.0, p_antenna: float = 0.0) -> PackageBid:
        cost = p_spectrum * bandwidth + p_antenna * antennas
        return PackageBid(bidder_id=bidder_id,
                          package=Package(antennas=antennas, bandwidth=bandwidth, cost=cost),
                          round_index=0)

    return _make


@pytest.fixture
def faker_seed():
    """固定 faker 种子，随机实例可复现"""
    return 20240601
