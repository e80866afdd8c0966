"""In-memory statistics for API calls, auction runs and WDP solves.

Uses a ring buffer of data points. Resets on process restart.
"""
import time
import threading
from collections import defaultdict, deque
from dataclasses import dataclass, field


@dataclass
class ApiMetric:
    path: str
    method: str
    status_code: int
    duration_ms: float
    timestamp: float = field(default_factory=time.time)


@dataclass
class AuctionMetric:
    rounds: int
    num_winners: int
    oversupply: bool
    duration_ms: float
    timestamp: float = field(default_factory=time.time)


@dataclass
class WdpMetric:
    num_bids: int
    nodes_explored: int
    optimal: bool
    duration_ms: float
    timestamp: float = field(default_factory=time.time)


def _p95(values: list[float]) -> float:
    sorted_v = sorted(values)
    idx = int(len(sorted_v) * 0.95)
    return sorted_v[min(idx, len(sorted_v) - 1)]


class MetricsCollector:
    """Singleton in-memory metrics store."""

    _instance = None
    _lock = threading.Lock()
    MAX_POINTS = 100_000

    def __new__(cls):
        with cls._lock:
            if cls._instance is None:
                cls._instance = super().__new__(cls)
                cls._instance.reset()
            return cls._instance

    def reset(self):
        self._api_metrics = deque(maxlen=self.MAX_POINTS)
        self._auction_metrics = deque(maxlen=self.MAX_POINTS)
        self._wdp_metrics = deque(maxlen=self.MAX_POINTS)
        self._start_time = time.time()

    def record_api(self, path: str, method: str, status_code: int, duration_ms: float):
        self._api_metrics.append(ApiMetric(path, method, status_code, duration_ms))

    def record_auction(self, rounds: int, num_winners: int, oversupply: bool, duration_ms: float):
        self._auction_metrics.append(AuctionMetric(rounds, num_winners, oversupply, duration_ms))

    def record_wdp(self, num_bids: int, nodes_explored: int, optimal: bool, duration_ms: float):
        self._wdp_metrics.append(WdpMetric(num_bids, nodes_explored, optimal, duration_ms))

    def get_uptime(self) -> float:
        return time.time() - self._start_time

    def get_api_stats(self, last_seconds: int = 86400) -> dict:
        """Get API performance stats for the given time window."""
        cutoff = time.time() - last_seconds
        recent = [m for m in self._api_metrics if m.timestamp > cutoff]

        if not recent:
            return {"total_requests": 0, "error_count": 0, "endpoints": {}}

        by_endpoint: dict[str, list[float]] = defaultdict(list)
        for m in recent:
            by_endpoint[f"{m.method} {m.path}"].append(m.duration_ms)

        endpoints = {}
        for key, durations in sorted(by_endpoint.items(), key=lambda x: -len(x[1])):
            endpoints[key] = {
                "count": len(durations),
                "avg_ms": round(sum(durations) / len(durations), 1),
                "p95_ms": round(_p95(durations), 1),
            }

        return {
            "total_requests": len(recent),
            "error_count": sum(1 for m in recent if m.status_code >= 400),
            "endpoints": endpoints,
        }

    def get_auction_stats(self, last_seconds: int = 86400) -> dict:
        """Get auction run stats for the given time window."""
        cutoff = time.time() - last_seconds
        recent = [m for m in self._auction_metrics if m.timestamp > cutoff]

        if not recent:
            return {"total_runs": 0, "avg_rounds": 0, "avg_winners": 0,
                    "oversupply_rate": 0, "avg_duration_ms": 0}

        n = len(recent)
        return {
            "total_runs": n,
            "avg_rounds": round(sum(m.rounds for m in recent) / n, 1),
            "avg_winners": round(sum(m.num_winners for m in recent) / n, 2),
            "oversupply_rate": round(sum(1 for m in recent if m.oversupply) / n, 4),
            "avg_duration_ms": round(sum(m.duration_ms for m in recent) / n, 1),
        }

    def get_wdp_stats(self, last_seconds: int = 86400) -> dict:
        """Get winner-determination stats for the given time window."""
        cutoff = time.time() - last_seconds
        recent = [m for m in self._wdp_metrics if m.timestamp > cutoff]

        if not recent:
            return {"total_solves": 0, "avg_nodes": 0, "cutoff_rate": 0,
                    "avg_duration_ms": 0, "p95_duration_ms": 0}

        n = len(recent)
        durations = [m.duration_ms for m in recent]
        return {
            "total_solves": n,
            "avg_nodes": round(sum(m.nodes_explored for m in recent) / n, 1),
            "cutoff_rate": round(sum(1 for m in recent if not m.optimal) / n, 4),
            "avg_duration_ms": round(sum(durations) / n, 1),
            "p95_duration_ms": round(_p95(durations), 1),
        }
