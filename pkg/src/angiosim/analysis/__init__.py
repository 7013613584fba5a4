"""Metrics, dominating-process, martingale and convergence diagnostics."""
