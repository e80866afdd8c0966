"""
参数扫描 - (最低速率 × 天线价格) 网格上的批量拍卖

每个单元格：用该行的 r_min 生成竞拍者，p_antenna = α · value_per_kbps，
跑一次完整拍卖。结果按行优先顺序保存，与并行度无关。
"""
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import partial
from pathlib import Path
from typing import Dict, List, Optional, Tuple
import logging

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, field_validator

from app.errors import InvalidArgumentError, MarketError, OutputError, SweepCellError
from app.services.auction_service import RunStats, record_stats, run_auction
from app.services.bidder import BidderProfile, build_roster
from app.services.market_model import MarketConfig
from app.services.metrics import OUTCOME_COLUMNS, AuctionOutcome, outcome_row

logger = logging.getLogger(__name__)

MATRIX_METRICS = (
    "combined_revenue",
    "num_winners",
    "antenna_revenue",
    "mean_antennas",
    "mean_bandwidth",
    "clearing_spectrum_price",
)
LONG_FORM_FILE = "outcomes.csv"

_FLOAT_TOL = 1e-9


class SweepSpec(BaseModel):
    """扫描网格定义

    rate_axis 单位 Kbps；antenna_cost_axis 是 α，天线单价 = α · value_per_kbps。
    """
    model_config = ConfigDict(frozen=True)

    rate_axis: Tuple[float, ...]
    antenna_cost_axis: Tuple[float, ...]
    base_market: MarketConfig = Field(default_factory=MarketConfig)
    base_bidder: BidderProfile
    heterogeneity: float = Field(0.0, ge=0, lt=1)

    @field_validator("rate_axis", "antenna_cost_axis")
    @classmethod
    def check_axis(cls, v):
        if not v:
            raise ValueError("坐标轴不能为空")
        if any(x < 0 for x in v):
            raise ValueError("坐标轴的值不能为负")
        if any(b <= a for a, b in zip(v, v[1:])):
            raise ValueError("坐标轴必须严格递增")
        return v

    @field_validator("rate_axis")
    @classmethod
    def check_rates_positive(cls, v):
        if v[0] <= 0:
            raise ValueError("r_min 必须 > 0")
        return v

    @property
    def shape(self) -> Tuple[int, int]:
        return len(self.rate_axis), len(self.antenna_cost_axis)


@dataclass(frozen=True)
class CellResult:
    r_min: float
    alpha: float
    outcome: AuctionOutcome
    stats: Optional[RunStats] = field(default=None, compare=False)


@dataclass(frozen=True)
class SweepGrid:
    """完整网格，cells 按行优先排列（行 = r_min，列 = α）"""
    rate_axis: Tuple[float, ...]
    antenna_cost_axis: Tuple[float, ...]
    cells: Tuple[CellResult, ...]

    def __post_init__(self):
        expected = len(self.rate_axis) * len(self.antenna_cost_axis)
        if len(self.cells) != expected:
            raise InvalidArgumentError(f"网格不完整: {len(self.cells)} / {expected} 个单元格")

    def cell(self, row: int, col: int) -> CellResult:
        return self.cells[row * len(self.antenna_cost_axis) + col]

    def to_frame(self) -> pd.DataFrame:
        """长表：每个单元格一行，列顺序为 OUTCOME_COLUMNS"""
        rows = [outcome_row(c.outcome, c.r_min, c.alpha) for c in self.cells]
        return pd.DataFrame(rows, columns=list(OUTCOME_COLUMNS))

    def matrix(self, metric: str) -> pd.DataFrame:
        """某个指标的矩阵视图，行标签为 r_min，列标签为 α"""
        if metric not in OUTCOME_COLUMNS:
            raise InvalidArgumentError(f"未知指标: {metric}")
        frame = self.to_frame().pivot(index="r_min", columns="alpha", values=metric)
        return frame.reindex(index=list(self.rate_axis), columns=list(self.antenna_cost_axis))

    def values(self, metric: str) -> np.ndarray:
        return self.matrix(metric).to_numpy()


def run_cell(
    spec: SweepSpec,
    coords: Tuple[float, float],
    time_budget: Optional[float] = None,
    check_invariants: bool = True,
) -> CellResult:
    """运行单个单元格；失败时抛出带坐标的 SweepCellError"""
    r_min, alpha = coords
    try:
        market = spec.base_market
        roster = build_roster(spec.base_bidder, market, r_min=r_min,
                              heterogeneity=spec.heterogeneity)
        p_antenna = alpha * spec.base_bidder.value_per_kbps
        run = run_auction(market, roster, p_antenna, time_budget=time_budget,
                          check_invariants=check_invariants, record_metrics=False)
    except (MarketError, ValueError) as e:
        raise SweepCellError(f"单元格 (r_min={r_min}, alpha={alpha}) 失败: {e}") from e
    return CellResult(r_min=r_min, alpha=alpha, outcome=run.outcome, stats=run.stats)


def run_sweep(
    spec: SweepSpec,
    workers: int = 1,
    time_budget: Optional[float] = None,
    check_invariants: bool = True,
) -> SweepGrid:
    """
    在整个网格上运行拍卖

    Args:
        spec: 网格定义
        workers: 进程数，1 为串行
        time_budget: 每次 WDP 的时间预算（秒）
        check_invariants: 每个单元格都校验时钟历史

    Returns:
        SweepGrid
    """
    if workers < 1:
        raise InvalidArgumentError(f"workers 必须 >= 1，收到 {workers}")

    coords = [(r, a) for r in spec.rate_axis for a in spec.antenna_cost_axis]
    task = partial(run_cell, spec, time_budget=time_budget, check_invariants=check_invariants)
    n_rows, n_cols = spec.shape
    logger.info(f"开始参数扫描: {n_rows}×{n_cols} 网格, {workers} 个进程")

    cells: List[CellResult] = []
    if workers == 1:
        for i, c in enumerate(coords):
            cells.append(task(c))
            if (i + 1) % n_cols == 0:
                logger.info(f"扫描进度: {(i + 1) // n_cols}/{n_rows} 行 (r_min={c[0]})")
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            # map 按提交顺序返回
            cells = list(pool.map(task, coords, chunksize=max(1, n_cols // workers)))

    # 子进程里的 MetricsCollector 随进程退出，统一在父进程记录
    for cell in cells:
        record_stats(cell.stats)

    logger.info(f"参数扫描完成: {len(cells)} 个单元格")
    return SweepGrid(
        rate_axis=tuple(spec.rate_axis),
        antenna_cost_axis=tuple(spec.antenna_cost_axis),
        cells=tuple(cells),
    )


def emit_matrices(grid: SweepGrid, out_dir: Path) -> Dict[str, Path]:
    """
    写出六个矩阵 CSV 和长表 outcomes.csv

    Returns:
        指标名（长表为 "outcomes"）到文件路径的映射
    """
    out_dir = Path(out_dir)
    written: Dict[str, Path] = {}
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise OutputError(f"无法创建输出目录 {out_dir}: {e}") from e

    jobs = [("outcomes", out_dir / LONG_FORM_FILE, grid.to_frame(), False)]
    jobs += [(m, out_dir / f"{m}.csv", grid.matrix(m), True) for m in MATRIX_METRICS]
    for name, path, frame, with_index in jobs:
        try:
            frame.to_csv(path, index=with_index, index_label="r_min" if with_index else None)
        except OSError as e:
            raise OutputError(f"写入失败 {path}: {e}") from e
        written[name] = path
    logger.info(f"结果已写入 {out_dir}: {len(written)} 个文件")
    return written


# ==================== 趋势检查 ====================

@dataclass(frozen=True)
class TrendDeviation:
    """赢家数下降处天线收益随 α 下降的一对相邻单元格"""
    r_min: float
    alpha_from: float
    alpha_to: float
    winners_from: int
    winners_to: int
    revenue_from: float
    revenue_to: float

    def __str__(self) -> str:
        return (
            f"r_min={self.r_min}: α {self.alpha_from} → {self.alpha_to} 赢家 "
            f"{self.winners_from} → {self.winners_to}, 天线收益 "
            f"{self.revenue_from:.6g} → {self.revenue_to:.6g}"
        )


@dataclass
class TrendReport:
    """网格上的趋势检查结果

    violations 非空即失败；deviations 是天线收益“随 α 不减”在赢家数下降处的例外，
    单独报告，不算违例。
    """
    violations: List[str] = field(default_factory=list)
    deviations: List[TrendDeviation] = field(default_factory=list)
    drop_rows: List[float] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations


def _pairs(n: int):
    return zip(range(n), range(1, n))


def evaluate_trends(grid: SweepGrid, market: MarketConfig) -> TrendReport:
    """
    检查网格上的单调性与区域结构

    - 赢家数随 r_min、随 α 不增
    - 赢家数相同的相邻单元格之间，天线收益随 α 不减；
      赢家数下降处的下降记为 deviation
    - 人均天线在有赢家的单元格上随 α 不增，α = 0 列等于总天线数
    - 人均带宽在有赢家的单元格上随 α 不减，平台区（人均天线 = 总天线数）内为常数
    - 成交频谱价格随 α 不增
    - α = 0 时有赢家的每一行，赢家数至少下降一次
    - 赢家数下降的行上，相邻两个供过于求单元格的合并收益不增（容差一个价格步长）
    """
    report = TrendReport()
    winners = grid.values("num_winners")
    antennas = grid.values("mean_antennas")
    bandwidth = grid.values("mean_bandwidth")
    price = grid.values("clearing_spectrum_price")
    antenna_rev = grid.values("antenna_revenue")
    combined = grid.values("combined_revenue")
    oversupply = grid.values("oversupply").astype(bool)
    rates, alphas = grid.rate_axis, grid.antenna_cost_axis
    n_rows, n_cols = winners.shape
    full = float(market.total_antennas)

    def fail(msg: str):
        report.violations.append(msg)

    for j in range(n_cols):
        for i, k in _pairs(n_rows):
            if winners[k, j] > winners[i, j]:
                fail(f"赢家数随 r_min 上升: alpha={alphas[j]}, r_min {rates[i]} → {rates[k]}")

    for i in range(n_rows):
        r = rates[i]
        has_winners = winners[i] > 0
        plateau = has_winners & (antennas[i] == full)

        if alphas[0] == 0 and has_winners[0] and antennas[i, 0] != full:
            fail(f"r_min={r}: α = 0 处人均天线 {antennas[i, 0]} != {full}")

        for j, k in _pairs(n_cols):
            a, b = alphas[j], alphas[k]
            if winners[i, k] > winners[i, j]:
                fail(f"r_min={r}: 赢家数随 α 上升 ({a} → {b})")
            if price[i, k] > price[i, j] + _FLOAT_TOL:
                fail(f"r_min={r}: 频谱价格随 α 上升 ({a} → {b})")

            tol = _FLOAT_TOL * max(1.0, abs(antenna_rev[i, j]))
            if antenna_rev[i, k] < antenna_rev[i, j] - tol:
                if winners[i, k] == winners[i, j]:
                    fail(f"r_min={r}: 赢家数不变时天线收益随 α 下降 ({a} → {b})")
                else:
                    report.deviations.append(TrendDeviation(
                        r_min=r, alpha_from=a, alpha_to=b,
                        winners_from=int(winners[i, j]), winners_to=int(winners[i, k]),
                        revenue_from=float(antenna_rev[i, j]),
                        revenue_to=float(antenna_rev[i, k]),
                    ))

            if not (has_winners[j] and has_winners[k]):
                continue
            if antennas[i, k] > antennas[i, j]:
                fail(f"r_min={r}: 人均天线随 α 上升 ({a} → {b})")
            if bandwidth[i, k] < bandwidth[i, j] - _FLOAT_TOL:
                fail(f"r_min={r}: 人均带宽随 α 下降 ({a} → {b})")
            if plateau[j] and plateau[k] and abs(bandwidth[i, k] - bandwidth[i, j]) > _FLOAT_TOL:
                fail(f"r_min={r}: 平台区内人均带宽不是常数 ({a} → {b})")

        if not has_winners[0]:
            continue
        if not np.any(np.diff(winners[i]) <= -1):
            fail(f"r_min={r}: 赢家数在整行上没有下降")
            continue
        report.drop_rows.append(r)
        for j, k in _pairs(n_cols):
            if not (oversupply[i, j] and oversupply[i, k]):
                continue
            tick = winners[i, j] * market.price_increment * bandwidth[i, j]
            tol = tick + _FLOAT_TOL * max(1.0, abs(combined[i, j]))
            if combined[i, k] > combined[i, j] + tol:
                fail(f"r_min={r}: 合并收益随 α 上升 ({alphas[j]} → {alphas[k]})")

    if report.ok:
        logger.info(
            f"趋势检查通过: {len(report.drop_rows)} 行出现赢家数下降, "
            f"{len(report.deviations)} 处赢家数下降导致天线收益下降"
        )
    else:
        logger.warning(f"趋势检查发现 {len(report.violations)} 处违例")
    return report
