"""
CRAN 速率模型 - 带宽、天线数与可达速率之间的关系

rate(B, m) = B · log2(1 + snr · m)，带宽单位 kHz，速率单位 Kbps。
天线与频谱在此模型下可以互相替代：天线越多，满足同一速率所需的带宽越少。
"""
from dataclasses import dataclass
from functools import lru_cache
import math

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from app.errors import InvalidArgumentError

# 判断 spectrum_unit 是否整除 total_spectrum 时的相对容差
_DIVISIBILITY_RTOL = 1e-9


class MarketConfig(BaseModel):
    """全局市场参数

    默认值对应 64 天线、50 MHz、20 个 VNO 的场景。
    """
    model_config = ConfigDict(frozen=True)

    total_antennas: int = Field(64, ge=1)
    total_spectrum: float = Field(50_000.0, gt=0)  # kHz
    snr_linear: float = Field(10.0, gt=0)  # 10 dB
    num_bidders: int = Field(20, ge=1)
    spectrum_unit: float = Field(1.0, gt=0)  # kHz，时钟按此单位定价
    reserve_spectrum_price: float = Field(0.01, ge=0)  # 每 kHz
    price_increment: float = Field(0.01, gt=0)  # 每 kHz 每轮
    rng_seed: int = 0

    @model_validator(mode="after")
    def check_unit_divides_spectrum(self):
        units = self.total_spectrum / self.spectrum_unit
        if abs(units - round(units)) > _DIVISIBILITY_RTOL * max(1.0, units):
            raise ValueError(
                f"spectrum_unit={self.spectrum_unit} 不能整除 total_spectrum={self.total_spectrum}"
            )
        return self

    @property
    def rate_model(self) -> "RateModel":
        return RateModel(snr_linear=self.snr_linear, spectrum_unit=self.spectrum_unit)


@lru_cache(maxsize=64)
def _efficiency_table(snr_linear: float, max_antennas: int) -> np.ndarray:
    """m = 1..max_antennas 的频谱效率表（只读）"""
    table = spectral_efficiency(np.arange(1, max_antennas + 1), snr_linear)
    table.setflags(write=False)
    return table


def spectral_efficiency(antennas, snr_linear: float) -> np.ndarray:
    """log2(1 + snr · m)，单位 bit/s/Hz

    标量和数组统一走 numpy，保证两条路径的结果逐位一致。
    """
    m = np.asarray(antennas, dtype=float)
    return np.log2(1.0 + snr_linear * m)


def _check_antennas(antennas) -> None:
    m = np.asarray(antennas)
    if m.size == 0:
        return
    if np.any(m < 1):
        raise InvalidArgumentError(f"天线数必须 >= 1，收到 {antennas}")
    if np.any(np.asarray(m, dtype=float) != np.floor(np.asarray(m, dtype=float))):
        raise InvalidArgumentError(f"天线数必须为整数，收到 {antennas}")


@dataclass(frozen=True)
class RateModel:
    """速率模型

    Attributes:
        snr_linear: 线性信噪比（全市场统一，恒定功率分配）
        spectrum_unit: 带宽取整粒度 (kHz)
    """
    snr_linear: float = 10.0
    spectrum_unit: float = 1.0

    def __post_init__(self):
        if not self.snr_linear > 0:
            raise InvalidArgumentError(f"snr_linear 必须 > 0，收到 {self.snr_linear}")
        if not self.spectrum_unit > 0:
            raise InvalidArgumentError(f"spectrum_unit 必须 > 0，收到 {self.spectrum_unit}")

    def spectral_efficiency(self, antennas) -> np.ndarray:
        _check_antennas(antennas)
        return spectral_efficiency(antennas, self.snr_linear)

    def efficiency_table(self, max_antennas: int) -> np.ndarray:
        """频谱效率表，下标 i 对应 m = i + 1"""
        return _efficiency_table(self.snr_linear, int(max_antennas))

    def rate(self, bandwidth: float, antennas: int) -> float:
        """
        可达速率

        Args:
            bandwidth: 带宽 (kHz)，>= 0
            antennas: 天线数，>= 1 的整数

        Returns:
            速率 (Kbps)
        """
        if bandwidth < 0:
            raise InvalidArgumentError(f"带宽不能为负，收到 {bandwidth}")
        _check_antennas(antennas)
        return float(bandwidth * spectral_efficiency(antennas, self.snr_linear))

    def required_bandwidths(self, r_min: float, antennas) -> np.ndarray:
        """
        对一组天线数批量计算满足 r_min 所需的最小带宽（向上取整到 spectrum_unit）

        Args:
            r_min: 最低速率 (Kbps)，> 0
            antennas: 天线数数组

        Returns:
            带宽数组 (kHz)，与 antennas 同形状
        """
        if not r_min > 0:
            raise InvalidArgumentError(f"r_min 必须 > 0，收到 {r_min}")
        _check_antennas(antennas)
        se = spectral_efficiency(antennas, self.snr_linear)
        return self._round_up(r_min, se)

    def bandwidths_from_table(self, r_min: float, se: np.ndarray) -> np.ndarray:
        """与 required_bandwidths 相同，但直接使用预先算好的效率表"""
        if not r_min > 0:
            raise InvalidArgumentError(f"r_min 必须 > 0，收到 {r_min}")
        return self._round_up(r_min, se)

    def _round_up(self, r_min: float, se: np.ndarray) -> np.ndarray:
        unit = self.spectrum_unit
        units = np.ceil(r_min / se / unit)
        # 浮点误差可能让 ceil 多取或少取一格，按 rate() 的算法校正
        bandwidth = units * unit
        units = np.where((bandwidth - unit) * se >= r_min, units - 1, units)
        bandwidth = units * unit
        units = np.where(bandwidth * se < r_min, units + 1, units)
        return units * unit

    def required_bandwidth(self, r_min: float, antennas: int) -> float:
        """满足 r_min 所需的最小带宽 (kHz)，向上取整到 spectrum_unit"""
        return float(self.required_bandwidths(r_min, np.array([antennas]))[0])

    def substitution_ratio(self, antennas_from: int, antennas_to: int) -> float:
        """
        未取整的带宽替代比例 B(antennas_to) / B(antennas_from)

        snr = 10 时，从 1 根天线换到 10 根，带宽约减半 (≈ 0.5196)。
        """
        _check_antennas([antennas_from, antennas_to])
        se = spectral_efficiency([antennas_from, antennas_to], self.snr_linear)
        return float(se[0] / se[1])

    def ceil_to_unit(self, bandwidth: float) -> float:
        """把带宽下限向上取整到 spectrum_unit"""
        if bandwidth < 0:
            raise InvalidArgumentError(f"带宽不能为负，收到 {bandwidth}")
        if bandwidth == 0:
            return 0.0
        return math.ceil(bandwidth / self.spectrum_unit - 1e-12) * self.spectrum_unit


def rate(bandwidth: float, antennas: int, snr_linear: float = 10.0) -> float:
    """rate(B, m) 的便捷函数"""
    return RateModel(snr_linear=snr_linear).rate(bandwidth, antennas)


def required_bandwidth(
    r_min: float, antennas: int, snr_linear: float = 10.0, spectrum_unit: float = 1.0
) -> float:
    """required_bandwidth(r, m) 的便捷函数"""
    return RateModel(snr_linear=snr_linear, spectrum_unit=spectrum_unit).required_bandwidth(
        r_min, antennas
    )
