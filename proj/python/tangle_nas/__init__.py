"""Entangled-supernet architecture search (C++ core with Python bindings)."""

from ._core import (
    BenchmarkTable,
    ConfigError,
    ConsistencyError,
    DimensionError,
    DivergenceError,
    EvaluationError,
    FormatError,
    PreconditionError,
    Supernet,
    TnasError,
    ValidationError,
    code_hash,
    evolutionary_search,
    linear_cka,
    random_search,
    read_results,
    run_search,
    sample,
    search_config,
)

__all__ = [name for name in dir() if not name.startswith("_")]
