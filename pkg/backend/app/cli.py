"""
cranmarket 命令行工具

    python -m app.cli run    [--config F] [--seed N] [--alpha A] [--trace F] [--time-budget-ms T]
    python -m app.cli sweep  [--config F] [--seed N] [--out-dir D] [--workers W] [--time-budget-ms T]
    python -m app.cli wdp    BIDS.csv --total-spectrum W --p-spectrum P --p-antenna Q [--time-budget-ms T]
    python -m app.cli check  [--instances N] [--seed N]

退出码：0 成功；1 自检不一致或扫描趋势违例；2 参数、配置或输入文件错误；
3 扫描没有违例，但赢家数下降处天线收益随 α 下降（偏差已逐条打印）。
"""
import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional

import numpy as np

from app.config import settings
from app.errors import InvalidArgumentError, MarketError
from app.services.auction_service import run_auction
from app.services.bidder import (
    BidderProfile,
    Package,
    PackageBid,
    brute_force_package,
    optimal_package,
)
from app.services.clock_engine import write_trace
from app.services.market_model import MarketConfig
from app.services.run_config import load_run_config
from app.services.sweep import emit_matrices, evaluate_trends, run_sweep
from app.services.winner_determination import (
    WdpInstance,
    brute_force_wdp,
    load_instance_csv,
    solve_wdp,
)

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_MISMATCH = 1
EXIT_ERROR = 2
EXIT_DEVIATION = 3


# ANSI 颜色代码
class Colors:
    HEADER = '\033[95m'
    BLUE = '\033[94m'
    CYAN = '\033[96m'
    GREEN = '\033[92m'
    YELLOW = '\033[93m'
    RED = '\033[91m'
    ENDC = '\033[0m'
    BOLD = '\033[1m'


def print_header(title: str):
    print(f"\n{Colors.CYAN}{Colors.BOLD}{'=' * 60}")
    print(f"  {title}")
    print(f"{'=' * 60}{Colors.ENDC}\n")


def _budget_seconds(ms: Optional[int]) -> Optional[float]:
    if ms is None:
        ms = settings.WDP_TIME_BUDGET_MS
    return None if ms is None else ms / 1000.0


# ==================== run ====================

def cmd_run(args) -> int:
    config = load_run_config(args.config, seed=args.seed)
    alpha = config.alpha if args.alpha is None else args.alpha
    if alpha < 0:
        raise InvalidArgumentError(f"alpha 不能为负，收到 {alpha}")
    p_antenna = alpha * config.bidder.value_per_kbps

    result = run_auction(config.market, config.roster(), p_antenna,
                         time_budget=_budget_seconds(args.time_budget_ms),
                         check_invariants=True, keep_packages=args.trace is not None)
    o = result.outcome

    print_header(f"单次拍卖  r_min={config.bidder.r_min:g} Kbps  alpha={alpha:g}")
    print(f"{Colors.BOLD}轮数:{Colors.ENDC} {o.rounds}    "
          f"{Colors.BOLD}供过于求:{Colors.ENDC} {o.oversupply}    "
          f"{Colors.BOLD}最优:{Colors.ENDC} {o.optimal}")
    print(f"{Colors.BOLD}成交频谱价格:{Colors.ENDC} {o.clearing_spectrum_price:.6g} / kHz    "
          f"{Colors.BOLD}天线单价:{Colors.ENDC} {o.p_antenna:.6g}")
    print(f"{Colors.BOLD}合并收益:{Colors.ENDC} {o.combined_revenue:.6g}  "
          f"(天线 {o.antenna_revenue:.6g} + 频谱 {o.spectrum_revenue:.6g})")
    print(f"{Colors.BOLD}赢家:{Colors.ENDC} {o.num_winners}    "
          f"人均天线 {o.mean_antennas:.4g}    人均带宽 {o.mean_bandwidth:.6g} kHz    "
          f"频谱利用率 {o.spectrum_utilization:.2%}")
    for bid in o.allocation.winning_bids:
        print(f"  {Colors.GREEN}{bid.bidder_id}{Colors.ENDC}  "
              f"天线 {bid.antennas:>3}  带宽 {bid.bandwidth:>10.6g} kHz  成本 {bid.cost:.6g}")

    if args.trace:
        path = write_trace(result.clock, Path(args.trace))
        print(f"\n{Colors.CYAN}轮次明细: {path}{Colors.ENDC}")
    return EXIT_OK


# ==================== sweep ====================

def cmd_sweep(args) -> int:
    config = load_run_config(args.config, seed=args.seed)
    spec = config.sweep_spec()
    workers = args.workers or settings.SWEEP_WORKERS
    out_dir = Path(args.out_dir or settings.OUT_DIR)

    grid = run_sweep(spec, workers=workers, time_budget=_budget_seconds(args.time_budget_ms),
                     check_invariants=True)
    written = emit_matrices(grid, out_dir)
    report = evaluate_trends(grid, spec.base_market)

    print_header(f"参数扫描  {len(spec.rate_axis)}×{len(spec.antenna_cost_axis)}")
    for name, path in written.items():
        print(f"  {name:<24} {path}")
    if report.ok:
        print(f"\n{Colors.GREEN}✅ 趋势检查通过 ({len(report.drop_rows)} 行出现赢家数下降){Colors.ENDC}")
    else:
        print(f"\n{Colors.YELLOW}⚠️  趋势检查: {len(report.violations)} 处违例{Colors.ENDC}")
        for v in report.violations:
            print(f"  {Colors.YELLOW}{v}{Colors.ENDC}")
    if report.deviations:
        print(f"\n{Colors.YELLOW}⚠️  天线收益随 α 不减的偏差: {len(report.deviations)} 处"
              f"（均在赢家数下降处）{Colors.ENDC}")
        for d in report.deviations:
            print(f"  {Colors.YELLOW}{d}{Colors.ENDC}")
    if not report.ok:
        return EXIT_MISMATCH
    return EXIT_DEVIATION if report.deviations else EXIT_OK


# ==================== wdp ====================

def cmd_wdp(args) -> int:
    instance = load_instance_csv(Path(args.bids), args.total_spectrum,
                                 args.p_spectrum, args.p_antenna)
    allocation = solve_wdp(instance, time_budget=_budget_seconds(args.time_budget_ms))

    print_header(f"胜者决定  {len(instance.bids)} 个出价")
    print(f"{Colors.BOLD}收益:{Colors.ENDC} {allocation.revenue:.6g}    "
          f"{Colors.BOLD}占用频谱:{Colors.ENDC} {allocation.spectrum_used:.6g} / "
          f"{instance.total_spectrum:.6g} kHz")
    print(f"{Colors.BOLD}最优:{Colors.ENDC} {allocation.optimal}    "
          f"{Colors.BOLD}搜索节点:{Colors.ENDC} {allocation.nodes_explored}")
    print(f"{Colors.BOLD}赢家:{Colors.ENDC} {', '.join(allocation.winner_ids) or '(无)'}")
    return EXIT_OK


# ==================== check ====================

def random_wdp_instance(rng: np.random.Generator, max_bids: int = 15) -> WdpInstance:
    """整数收益的随机实例，收益相等时比较是精确的"""
    n = int(rng.integers(1, max_bids + 1))
    total = float(rng.integers(1000, 50_001))
    p_spectrum = float(rng.integers(0, 6))
    p_antenna = float(rng.integers(0, 51))
    ids = [f"vno-{i:02d}" for i in rng.permutation(n) + 1]
    bids = []
    for bidder_id in ids:
        antennas = int(rng.integers(1, 65))
        bandwidth = float(rng.integers(1, int(total * 0.6) + 2))
        cost = p_spectrum * bandwidth + p_antenna * antennas
        bids.append(PackageBid(bidder_id, Package(antennas, bandwidth, cost), 0))
    return WdpInstance(bids=tuple(bids), total_spectrum=total,
                       p_spectrum=p_spectrum, p_antenna=p_antenna)


def check_wdp(instances: int, rng: np.random.Generator) -> List[str]:
    mismatches = []
    for k in range(instances):
        instance = random_wdp_instance(rng)
        fast, exact = solve_wdp(instance), brute_force_wdp(instance)
        if fast.revenue != exact.revenue or fast.winner_ids != exact.winner_ids:
            mismatches.append(
                f"WDP #{k}: {fast.winner_ids} ({fast.revenue}) != "
                f"{exact.winner_ids} ({exact.revenue})"
            )
    return mismatches


def check_optimizer(instances: int, rng: np.random.Generator) -> List[str]:
    market = MarketConfig()
    mismatches = []
    for k in range(instances):
        profile = BidderProfile(
            id=f"check-{k}",
            r_min=float(rng.uniform(1_000, 500_000)),
            value_per_kbps=1.0,
            min_antennas=int(rng.integers(1, market.total_antennas + 1)),
            min_bandwidth=float(rng.uniform(0, 60_000)) if rng.random() < 0.3 else 0.0,
        )
        p_spectrum = 0.0 if rng.random() < 0.05 else float(rng.uniform(0, 10))
        p_antenna = 0.0 if rng.random() < 0.05 else float(rng.uniform(0, 2_000))
        fast = optimal_package(profile, p_spectrum, p_antenna, market)
        exact = brute_force_package(profile, p_spectrum, p_antenna, market)
        if fast.cost != exact.cost or fast.antennas != exact.antennas:
            mismatches.append(f"optimizer #{k}: {fast} != {exact}")
    return mismatches


def cmd_check(args) -> int:
    instances = args.instances or settings.CHECK_INSTANCES
    rng = np.random.default_rng(args.seed if args.seed is not None else 0)

    print_header("自检")
    failed = False
    for name, checker, n in (
        ("组合优化 vs 穷举", check_optimizer, instances * 10),
        ("WDP vs 穷举", check_wdp, instances),
    ):
        mismatches = checker(n, rng)
        if mismatches:
            failed = True
            print(f"{Colors.RED}❌ {name}: {len(mismatches)}/{n} 不一致{Colors.ENDC}")
            for m in mismatches[:10]:
                print(f"  {Colors.RED}{m}{Colors.ENDC}")
        else:
            print(f"{Colors.GREEN}✅ {name}: {n} 个实例全部一致{Colors.ENDC}")
    return EXIT_MISMATCH if failed else EXIT_OK


# ==================== 入口 ====================

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cranmarket", description="CRAN 天线与频谱联合拍卖模拟器")
    parser.add_argument("--verbose", "-v", action="store_true", help="输出 DEBUG 日志")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config=True):
        if config:
            p.add_argument("--config", type=Path, default=None, help="TOML 运行配置")
        p.add_argument("--seed", type=int, default=None, help="随机种子")
        p.add_argument("--time-budget-ms", type=int, default=None,
                       help="WDP 时间预算（毫秒），不给则精确求解")

    p_run = sub.add_parser("run", help="单次拍卖")
    common(p_run)
    p_run.add_argument("--alpha", type=float, default=None, help="覆盖配置中的 alpha")
    p_run.add_argument("--trace", type=Path, default=None, help="轮次明细 CSV 输出路径")

    p_sweep = sub.add_parser("sweep", help="参数扫描并写出矩阵")
    common(p_sweep)
    p_sweep.add_argument("--out-dir", type=Path, default=None)
    p_sweep.add_argument("--workers", type=int, default=None)

    p_wdp = sub.add_parser("wdp", help="求解 CSV 给出的 WDP 实例")
    common(p_wdp, config=False)
    p_wdp.add_argument("bids", help="列为 bidder_id, antennas, bandwidth 的 CSV")
    p_wdp.add_argument("--total-spectrum", type=float, required=True)
    p_wdp.add_argument("--p-spectrum", type=float, required=True)
    p_wdp.add_argument("--p-antenna", type=float, required=True)

    p_check = sub.add_parser("check", help="与穷举算法对照的自检")
    p_check.add_argument("--seed", type=int, default=None)
    p_check.add_argument("--instances", type=int, default=None, help="WDP 实例数")
    return parser


COMMANDS = {"run": cmd_run, "sweep": cmd_sweep, "wdp": cmd_wdp, "check": cmd_check}


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose or settings.DEBUG else settings.LOG_LEVEL,
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
    )
    try:
        return COMMANDS[args.command](args)
    except MarketError as e:
        logger.error(f"{args.command} 失败: {e}")
        print(f"{Colors.RED}❌ {e}{Colors.ENDC}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
