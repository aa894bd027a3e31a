"""Bug finding by porting confirmed bug cases to analogous APIs.

The pipeline matches API pairs whose implementations share call-stack
context, ports each confirmed bug case across those pairs, executes the
results through a line-delimited JSON runner protocol, and classifies
outcomes against status, value, and performance oracles.
"""

from .analyzer import FunctionGroup, SimilarityThresholds, cluster_functions
from .corpus import (
    ApiSignature,
    BugCase,
    CallStackTrace,
    Corpus,
    CorpusError,
    ExceptionSignature,
    HARD_CRASH,
    IssueRecord,
    MeasurementRecipe,
    ParamSpec,
    PerformanceOracle,
    ShapeTuple,
    SourceFunction,
    StatusOracle,
    StructuredCall,
    ValueOracle,
    jaccard,
    oracle_kind,
    validate_call,
)
from .evaluator import ExecutionResult, Verdict, evaluate, normalize_exception
from .generator import SynthesizedCase, SynthesisSkip, render, synthesize
from .matcher import CandidatePair, filter_arguments, match_pairs
from .records import load_corpus, save_corpus
from .report import Metrics, RunReport, build_report, compute_metrics
from .runner import RunnerRequest, open_session, request_for_case

__version__ = "0.1.0"

__all__ = [
    "ApiSignature",
    "BugCase",
    "CallStackTrace",
    "CandidatePair",
    "Corpus",
    "CorpusError",
    "ExceptionSignature",
    "ExecutionResult",
    "FunctionGroup",
    "HARD_CRASH",
    "IssueRecord",
    "MeasurementRecipe",
    "Metrics",
    "ParamSpec",
    "PerformanceOracle",
    "RunReport",
    "RunnerRequest",
    "ShapeTuple",
    "SimilarityThresholds",
    "SourceFunction",
    "StatusOracle",
    "StructuredCall",
    "SynthesizedCase",
    "SynthesisSkip",
    "ValueOracle",
    "Verdict",
    "build_report",
    "cluster_functions",
    "compute_metrics",
    "evaluate",
    "filter_arguments",
    "jaccard",
    "load_corpus",
    "match_pairs",
    "normalize_exception",
    "open_session",
    "oracle_kind",
    "render",
    "request_for_case",
    "save_corpus",
    "synthesize",
    "validate_call",
]
