"""Taint-guided slicing and LLM screening of Solidity contracts.

The pipeline: ingest a contract (source, AST document, or explorer
address), lower its AST into per-statement def/use records, assemble a
nested data-flow graph, propagate taint from msg.sender/msg.value to a
fixed point, slice out the taint-adjacent functions, render the tainted
subgraph as DOT, and drive a two-stage prompt protocol against a
chat-completion backend to get a Ponzi/not-Ponzi verdict. Batch evaluation
adds confusion metrics and cost/latency accounting on top.
"""

__version__ = "0.1.0"

from .detect import (
    Completion,
    DetectionReport,
    LlmConfig,
    PromptBundle,
    PromptParts,
    RunRecord,
    TemplateSet,
    build_analysis_prompt,
    build_detection_prompt,
    complete,
    default_ponzi_definition,
    detect_contract,
    estimate_tokens,
    parse_verdict,
    run_static_pipeline,
)
from .errors import (
    AuthError,
    BackendUnavailable,
    CompileError,
    CompilerNotFound,
    ContextOverflow,
    EmptyInput,
    JsonError,
    LabelMismatch,
    MalformedAst,
    NetworkError,
    NoSpan,
    NotVerified,
    PonzilensError,
    RateLimited,
    UnknownGraph,
    UnparseableVerdict,
    UnsupportedVersion,
)
from .evaluation import (
    DatasetManifest,
    ManifestEntry,
    MetricsSummary,
    OverheadStats,
    aggregate_overhead,
    balanced_accuracy,
    compute_metrics,
    load_manifest,
    run_batch,
)
from .hypergraph import (
    EXTERNAL_SINK,
    GraphId,
    HypernodeGraph,
    NodeId,
    build,
)
from .ingest import (
    FetchConfig,
    SourceUnit,
    compile_source,
    fetch_verified_source,
    load_ast,
    load_source_unit,
    resolve_version,
    serialize_ast,
)
from .model import (
    ContractModel,
    FunctionModel,
    Kind,
    Scope,
    Statement,
    VarRef,
    def_use_table,
    lower,
)
from .render import DotDocument, RenderOptions, to_dot
from .slicing import SliceBundle, SliceStats, combine_slices, select_functions
from .taint import TaintSubgraph, default_sources, tainted_state_vars, tpa

__all__ = [
    "__version__",
    "AuthError",
    "BackendUnavailable",
    "CompileError",
    "CompilerNotFound",
    "Completion",
    "ContextOverflow",
    "ContractModel",
    "DatasetManifest",
    "DetectionReport",
    "DotDocument",
    "EmptyInput",
    "EXTERNAL_SINK",
    "FetchConfig",
    "FunctionModel",
    "GraphId",
    "HypernodeGraph",
    "JsonError",
    "Kind",
    "LabelMismatch",
    "LlmConfig",
    "MalformedAst",
    "ManifestEntry",
    "MetricsSummary",
    "NetworkError",
    "NodeId",
    "NoSpan",
    "NotVerified",
    "OverheadStats",
    "PonzilensError",
    "PromptBundle",
    "PromptParts",
    "RateLimited",
    "RenderOptions",
    "RunRecord",
    "Scope",
    "SliceBundle",
    "SliceStats",
    "SourceUnit",
    "Statement",
    "TaintSubgraph",
    "TemplateSet",
    "UnknownGraph",
    "UnparseableVerdict",
    "UnsupportedVersion",
    "VarRef",
    "aggregate_overhead",
    "balanced_accuracy",
    "build",
    "build_analysis_prompt",
    "build_detection_prompt",
    "combine_slices",
    "compile_source",
    "complete",
    "compute_metrics",
    "def_use_table",
    "default_ponzi_definition",
    "default_sources",
    "detect_contract",
    "estimate_tokens",
    "fetch_verified_source",
    "load_ast",
    "load_manifest",
    "load_source_unit",
    "lower",
    "parse_verdict",
    "resolve_version",
    "run_batch",
    "run_static_pipeline",
    "select_functions",
    "serialize_ast",
    "tainted_state_vars",
    "to_dot",
    "tpa",
]
