"""Robustness benchmark harness."""
from .corpus import build_corpus, list_dataset
from .report import BenchReport, Row, render_report
from .runner import BenchConfig, Cell, bench_key, run_benchmark

__all__ = ["BenchConfig", "BenchReport", "Cell", "Row", "bench_key", "build_corpus",
           "list_dataset", "render_report", "run_benchmark"]
