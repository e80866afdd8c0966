"""
运行配置 - 从 TOML 文件读取 [market] / [bidder] / [sweep]
"""
from pathlib import Path
from typing import List, Optional, Tuple
import logging
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from pydantic import BaseModel, ConfigDict, Field, ValidationError

from app.config import settings
from app.errors import ConfigurationError
from app.services.bidder import BidderProfile, build_roster
from app.services.market_model import MarketConfig
from app.services.sweep import SweepSpec

logger = logging.getLogger(__name__)


class SweepSection(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    rate_axis: Tuple[float, ...]
    antenna_cost_axis: Tuple[float, ...]
    heterogeneity: float = 0.0


class RunConfig(BaseModel):
    """一个 TOML 文件的完整内容"""
    model_config = ConfigDict(frozen=True, extra="forbid")

    alpha: float = Field(1.0, ge=0)
    market: MarketConfig = Field(default_factory=MarketConfig)
    bidder: BidderProfile
    sweep: Optional[SweepSection] = None

    @property
    def p_antenna(self) -> float:
        return self.alpha * self.bidder.value_per_kbps

    def roster(self) -> List[BidderProfile]:
        """单次 run 的竞拍者"""
        heterogeneity = self.sweep.heterogeneity if self.sweep else 0.0
        return build_roster(self.bidder, self.market, heterogeneity=heterogeneity)

    def sweep_spec(self) -> SweepSpec:
        if self.sweep is None:
            raise ConfigurationError("配置中没有 [sweep] 段")
        try:
            return SweepSpec(
                rate_axis=self.sweep.rate_axis,
                antenna_cost_axis=self.sweep.antenna_cost_axis,
                base_market=self.market,
                base_bidder=self.bidder,
                heterogeneity=self.sweep.heterogeneity,
            )
        except ValidationError as e:
            raise ConfigurationError(f"[sweep] 段不合法: {e}") from e


def load_run_config(path: Optional[Path] = None, seed: Optional[int] = None) -> RunConfig:
    """
    读取并校验运行配置

    Args:
        path: TOML 文件，默认 settings.DEFAULT_CONFIG_PATH
        seed: 覆盖 market.rng_seed

    Returns:
        RunConfig

    Raises:
        ConfigurationError: 文件不存在、TOML 语法错误或字段不合法，消息中包含文件路径
    """
    path = Path(path or settings.DEFAULT_CONFIG_PATH)
    try:
        with path.open("rb") as f:
            raw = tomllib.load(f)
    except FileNotFoundError as e:
        raise ConfigurationError(f"配置文件不存在: {path}") from e
    except (OSError, tomllib.TOMLDecodeError) as e:
        raise ConfigurationError(f"无法解析配置文件 {path}: {e}") from e

    if seed is not None:
        raw.setdefault("market", {})["rng_seed"] = seed
    bidder = raw.setdefault("bidder", {})
    bidder.setdefault("id", "template")

    try:
        config = RunConfig.model_validate(raw)
    except ValidationError as e:
        raise ConfigurationError(f"配置文件 {path} 不合法: {e}") from e
    logger.info(f"已加载配置: {path}")
    return config
