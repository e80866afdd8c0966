"""
配置管理模块
"""
from pathlib import Path
from typing import Optional

from pydantic import field_validator
from pydantic_settings import BaseSettings

BACKEND_DIR = Path(__file__).resolve().parent.parent


class Settings(BaseSettings):
    """应用配置"""

    # App
    APP_NAME: str = "cranmarket"
    APP_VERSION: str = "0.3.0"
    DEBUG: bool = False
    LOG_LEVEL: str = "INFO"

    # 运行配置文件（[market] / [bidder] / [sweep]）
    DEFAULT_CONFIG_PATH: Path = BACKEND_DIR / "config" / "default_market.toml"
    OUT_DIR: Path = Path("results")

    # 时钟阶段
    MAX_CLOCK_ROUNDS: int = 1_000_000  # 安全上限，正常配置远达不到

    # 胜者决定：None 表示精确求解，否则为 anytime 模式的毫秒预算
    WDP_TIME_BUDGET_MS: Optional[int] = None

    # 参数扫描
    SWEEP_WORKERS: int = 1
    CHECK_INSTANCES: int = 1000

    @field_validator("LOG_LEVEL", mode="before")
    @classmethod
    def normalize_log_level(cls, v):
        if isinstance(v, str):
            return v.strip().upper()
        return v

    @field_validator("SWEEP_WORKERS", "MAX_CLOCK_ROUNDS")
    @classmethod
    def positive(cls, v):
        if v < 1:
            raise ValueError("must be >= 1")
        return v

    class Config:
        env_file = ".env"
        case_sensitive = True


# 全局配置实例
settings = Settings()
