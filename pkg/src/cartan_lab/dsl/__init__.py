"""Metric expression language: parsing, symbolic differentiation, evaluation."""
from .expr import DomainError, Expr
from .metric import (
    MetricExpression,
    PhasePoint,
    differentiate,
    euler_defect,
    evaluate,
    parse_metric,
    poisson_bracket,
)
from .parser import MetricSyntaxError, UnknownIdentifierError, VariableIndexError, parse_expression

__all__ = [
    "DomainError", "Expr", "MetricExpression", "MetricSyntaxError", "PhasePoint",
    "UnknownIdentifierError", "VariableIndexError", "differentiate", "euler_defect",
    "evaluate", "parse_expression", "parse_metric", "poisson_bracket",
]
