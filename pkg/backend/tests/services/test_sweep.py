"""
参数扫描测试
"""
import numpy as np
import pandas as pd
import pytest
from pydantic import ValidationError

from app.errors import OutputError, SweepCellError
from app.services.auction_service import run_auction
from app.services.bidder import BidderProfile, build_roster
from app.services.market_model import MarketConfig
from app.services.metrics import OUTCOME_COLUMNS
from app.services.run_config import load_run_config
from app.services.sweep import (
    LONG_FORM_FILE,
    MATRIX_METRICS,
    SweepSpec,
    emit_matrices,
    evaluate_trends,
    run_sweep,
)


@pytest.fixture
def small_spec(fast_market, template_bidder) -> SweepSpec:
    return SweepSpec(
        rate_axis=(50_000.0, 150_000.0),
        antenna_cost_axis=(0.0, 1.0, 800.0),
        base_market=fast_market,
        base_bidder=template_bidder,
    )


@pytest.mark.unit
class TestSweepSpec:
    """网格定义校验"""

    def test_axes_must_increase(self, template_bidder):
        with pytest.raises(ValidationError):
            SweepSpec(rate_axis=(2.0, 1.0), antenna_cost_axis=(0.0,), base_bidder=template_bidder)
        with pytest.raises(ValidationError):
            SweepSpec(rate_axis=(1.0, 1.0), antenna_cost_axis=(0.0,), base_bidder=template_bidder)

    def test_axes_non_empty_and_non_negative(self, template_bidder):
        with pytest.raises(ValidationError):
            SweepSpec(rate_axis=(), antenna_cost_axis=(0.0,), base_bidder=template_bidder)
        with pytest.raises(ValidationError):
            SweepSpec(rate_axis=(1.0,), antenna_cost_axis=(-1.0, 0.0), base_bidder=template_bidder)

    def test_shape(self, small_spec):
        assert small_spec.shape == (2, 3)


@pytest.mark.integration
class TestRunSweep:
    """网格运行"""

    def test_single_cell_matches_direct_run(self, fast_market, template_bidder):
        """1×1 网格与直接运行一次拍卖相同"""
        spec = SweepSpec(rate_axis=(120_000.0,), antenna_cost_axis=(2.0,),
                         base_market=fast_market, base_bidder=template_bidder)
        grid = run_sweep(spec)
        roster = build_roster(template_bidder, fast_market, r_min=120_000.0)
        direct = run_auction(fast_market, roster, 2.0 * template_bidder.value_per_kbps).outcome

        assert len(grid.cells) == 1
        cell = grid.cells[0]
        assert (cell.r_min, cell.alpha) == (120_000.0, 2.0)
        assert cell.outcome.combined_revenue == direct.combined_revenue
        assert cell.outcome.allocation.winner_ids == direct.allocation.winner_ids
        assert cell.outcome.clearing_spectrum_price == direct.clearing_spectrum_price

    def test_row_major_order(self, small_spec):
        grid = run_sweep(small_spec)
        coords = [(c.r_min, c.alpha) for c in grid.cells]
        assert coords == [(r, a) for r in small_spec.rate_axis for a in small_spec.antenna_cost_axis]
        assert grid.cell(1, 2).alpha == 800.0

    def test_free_antennas_column(self, small_spec, fast_market):
        """α = 0：每个赢家都分到全部天线"""
        grid = run_sweep(small_spec)
        for row in range(len(small_spec.rate_axis)):
            outcome = grid.cell(row, 0).outcome
            assert outcome.num_winners > 0
            assert {b.antennas for b in outcome.allocation.winning_bids} == {fast_market.total_antennas}

    def test_winner_count_drops_with_antenna_price(self, small_spec):
        grid = run_sweep(small_spec)
        winners = grid.values("num_winners")
        assert winners[0, 0] == 9
        assert winners[0, 2] < winners[0, 0]

    def test_failing_cell_reports_coordinates(self, fast_market):
        """r_min 使最小天线数超过天线池：单元格失败并带坐标"""
        bidder = BidderProfile(id="t", r_min=1000.0, value_per_kbps=1.0, min_antennas=80)
        spec = SweepSpec(rate_axis=(1000.0,), antenna_cost_axis=(0.5,),
                         base_market=fast_market, base_bidder=bidder)
        with pytest.raises(SweepCellError, match="r_min=1000.0, alpha=0.5"):
            run_sweep(spec)

    def test_parallel_matches_serial(self, small_spec):
        serial = run_sweep(small_spec, workers=1).to_frame()
        parallel = run_sweep(small_spec, workers=2).to_frame()
        pd.testing.assert_frame_equal(serial, parallel)

    def test_deterministic_csv(self, tmp_path, fast_market, template_bidder):
        """同一配置、同一种子，两次扫描的长表逐字节相同"""
        spec = SweepSpec(
            rate_axis=(50_000.0, 100_000.0, 150_000.0, 200_000.0, 250_000.0),
            antenna_cost_axis=(0.0, 0.5, 50.0, 200.0, 800.0),
            base_market=MarketConfig(price_increment=0.1, rng_seed=7),
            base_bidder=template_bidder,
            heterogeneity=0.2,
        )
        a = emit_matrices(run_sweep(spec), tmp_path / "a")
        b = emit_matrices(run_sweep(spec), tmp_path / "b")
        for name in a:
            assert a[name].read_bytes() == b[name].read_bytes(), name


@pytest.mark.integration
class TestEmitMatrices:
    """矩阵输出"""

    def test_files_and_shapes(self, tmp_path, small_spec):
        grid = run_sweep(small_spec)
        written = emit_matrices(grid, tmp_path)

        assert set(written) == {"outcomes", *MATRIX_METRICS}
        for metric in MATRIX_METRICS:
            matrix = pd.read_csv(written[metric], index_col="r_min")
            assert matrix.shape == (2, 3)
            assert list(matrix.index) == list(small_spec.rate_axis)
            assert [float(c) for c in matrix.columns] == list(small_spec.antenna_cost_axis)

        winners = pd.read_csv(written["num_winners"], index_col="r_min").to_numpy()
        assert np.issubdtype(winners.dtype, np.integer)
        assert winners.min() >= 0 and winners.max() <= small_spec.base_market.num_bidders

        long_form = pd.read_csv(tmp_path / LONG_FORM_FILE)
        assert tuple(long_form.columns) == OUTCOME_COLUMNS
        assert len(long_form) == 6

    def test_combined_equals_antenna_plus_spectrum(self, tmp_path, small_spec):
        written = emit_matrices(run_sweep(small_spec), tmp_path)
        combined = pd.read_csv(written["combined_revenue"], index_col="r_min").to_numpy()
        antenna = pd.read_csv(written["antenna_revenue"], index_col="r_min").to_numpy()
        long_form = pd.read_csv(written["outcomes"])
        spectrum = long_form.pivot(index="r_min", columns="alpha",
                                   values="spectrum_revenue").to_numpy()
        np.testing.assert_allclose(combined, antenna + spectrum, rtol=1e-12)

    def test_output_error_names_path(self, tmp_path, small_spec):
        grid = run_sweep(small_spec)
        blocker = tmp_path / "blocked"
        blocker.write_text("not a directory")
        with pytest.raises(OutputError, match="blocked"):
            emit_matrices(grid, blocker)


@pytest.mark.integration
class TestEvaluateTrends:

    @staticmethod
    def _tamper(mocker, grid, metric, edit):
        original = grid.values
        tampered = original(metric).copy()
        edit(tampered)

        def fake_values(self, name):
            return tampered if name == metric else original(name)

        mocker.patch.object(type(grid), "values", fake_values)

    def test_small_grid(self, small_spec, fast_market):
        report = evaluate_trends(run_sweep(small_spec), fast_market)
        assert report.ok, report.violations
        assert report.deviations == []

    def test_detects_violation(self, small_spec, fast_market, mocker):
        grid = run_sweep(small_spec)

        def more_winners(w):
            w[0, 2] = w[0, 0] + 1

        self._tamper(mocker, grid, "num_winners", more_winners)
        report = evaluate_trends(grid, fast_market)
        assert not report.ok

    def test_antenna_revenue_drop_with_same_winners_fails(self, small_spec, fast_market, mocker):
        """赢家数不变时天线收益下降是违例"""
        grid = run_sweep(small_spec)
        winners = grid.values("num_winners")
        assert winners[0, 0] == winners[0, 1]

        def drop(rev):
            rev[0, 0] = rev[0, 1] + 100.0

        self._tamper(mocker, grid, "antenna_revenue", drop)
        report = evaluate_trends(grid, fast_market)
        assert not report.ok
        assert any("天线收益" in v for v in report.violations)

    def test_antenna_revenue_drop_at_winner_drop_is_deviation(self, small_spec, fast_market, mocker):
        """赢家数下降处的天线收益下降只记为偏差"""
        grid = run_sweep(small_spec)
        winners = grid.values("num_winners")
        assert winners[0, 2] < winners[0, 1]

        def drop(rev):
            rev[0, 2] = rev[0, 1] - 1.0

        self._tamper(mocker, grid, "antenna_revenue", drop)
        report = evaluate_trends(grid, fast_market)
        assert report.ok, report.violations
        assert len(report.deviations) == 1
        d = report.deviations[0]
        assert (d.r_min, d.alpha_from, d.alpha_to) == (50_000.0, 1.0, 800.0)
        assert d.winners_to < d.winners_from
        assert "50000.0" in str(d)


@pytest.mark.integration
class TestSweepMetrics:
    """扫描的运行统计在父进程记录"""

    def test_serial(self, small_spec, collector):
        grid = run_sweep(small_spec, workers=1)
        assert collector.get_auction_stats()["total_runs"] == len(grid.cells)

    def test_parallel(self, small_spec, collector):
        grid = run_sweep(small_spec, workers=2)
        assert collector.get_auction_stats()["total_runs"] == len(grid.cells)
        solved = sum(1 for c in grid.cells if c.outcome.oversupply)
        assert collector.get_wdp_stats()["total_solves"] == solved
        assert all(c.stats is not None for c in grid.cells)


@pytest.mark.slow
class TestDefaultGrid:
    """默认配置的完整网格：终止性、单调性、区域结构"""

    @pytest.fixture(scope="class")
    def default_grid(self):
        config = load_run_config()
        spec = config.sweep_spec()
        return spec, run_sweep(spec, check_invariants=True)

    def test_grid_size(self, default_grid):
        spec, grid = default_grid
        assert len(spec.rate_axis) >= 10 and len(spec.antenna_cost_axis) >= 10
        assert spec.base_market.num_bidders == 20
        assert spec.base_market.total_antennas == 64
        assert spec.base_market.total_spectrum == 50_000.0
        assert len(grid.cells) == len(spec.rate_axis) * len(spec.antenna_cost_axis)

    def test_trends_hold(self, default_grid):
        spec, grid = default_grid
        report = evaluate_trends(grid, spec.base_market)
        assert report.ok, report.violations

    def test_every_row_with_winners_drops(self, default_grid):
        spec, grid = default_grid
        winners = grid.values("num_winners")
        rows_with_winners = [r for r, w in zip(spec.rate_axis, winners[:, 0]) if w > 0]
        assert rows_with_winners
        report = evaluate_trends(grid, spec.base_market)
        assert report.drop_rows == rows_with_winners

    def test_free_antenna_column_uses_whole_pool(self, default_grid):
        spec, grid = default_grid
        assert spec.antenna_cost_axis[0] == 0.0
        antennas = grid.values("mean_antennas")
        winners = grid.values("num_winners")
        assert np.all(antennas[winners[:, 0] > 0, 0] == 64)

    def test_antenna_revenue_between_same_winner_counts(self, default_grid):
        """赢家数相同的相邻单元格：天线收益随 α 不减"""
        spec, grid = default_grid
        antenna = grid.values("antenna_revenue")
        winners = grid.values("num_winners")
        pairs = 0
        for i in range(len(spec.rate_axis)):
            for j in range(len(spec.antenna_cost_axis) - 1):
                if winners[i, j] == winners[i, j + 1]:
                    pairs += 1
                    assert antenna[i, j + 1] >= antenna[i, j] - 1e-9, (i, j)
        assert pairs > 0

    def test_antenna_revenue_deviations_follow_winner_drops(self, default_grid):
        """天线收益的每一处下降都伴随赢家数下降"""
        spec, grid = default_grid
        report = evaluate_trends(grid, spec.base_market)
        assert report.deviations
        assert all(d.winners_to < d.winners_from for d in report.deviations)
        # 50 Mbps：α 200 → 400 时 (36 根, 8 个赢家) → (20 根, 7 个赢家)，57600 → 56000
        spots = {(d.r_min, d.alpha_from, d.alpha_to): d for d in report.deviations}
        d = spots[(50_000.0, 200.0, 400.0)]
        assert (d.winners_from, d.winners_to) == (8, 7)
        assert d.revenue_from == pytest.approx(57_600.0)
        assert d.revenue_to == pytest.approx(56_000.0)

    def test_opposing_trends(self, default_grid):
        """赢家数下降的行：合并收益整体走低，天线收益在赢家数不变的区段内上升"""
        spec, grid = default_grid
        combined = grid.values("combined_revenue")
        antenna = grid.values("antenna_revenue")
        winners = grid.values("num_winners")
        for i in range(len(spec.rate_axis)):
            if winners[i, 0] == 0:
                continue
            assert combined[i, -1] < combined[i, 0]
            assert antenna[i, 1] > antenna[i, 0]
            assert antenna[i, :].max() > antenna[i, 1]
