"""Tensor contraction compiler: DSL frontend, TTGT planning and execution."""

from ._core import (
    TaccError,
    codesign,
    contract,
    emit,
    flops,
    order,
    plan,
    run,
    variants,
)

__all__ = [
    "TaccError",
    "codesign",
    "contract",
    "emit",
    "flops",
    "order",
    "plan",
    "run",
    "variants",
]
