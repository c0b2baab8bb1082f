from .bench import BenchResult, bench_latency, compute_share_report
from .nodes import (
    Classification,
    DuNode,
    RuNode,
    RuUnreachable,
    connect_with_retry,
    du_listen,
    du_serve,
    monolithic_posteriors,
    ru_serve,
    serve_connection,
)
from .protocol import FrameError, MsgType

__all__ = [
    "BenchResult", "Classification", "DuNode", "FrameError", "MsgType", "RuNode", "RuUnreachable",
    "bench_latency", "compute_share_report", "connect_with_retry", "du_listen", "du_serve",
    "monolithic_posteriors", "ru_serve", "serve_connection",
]
