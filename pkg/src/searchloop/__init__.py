"""Event-sourced generative search with stage-level feedback.

A session runs a three-stage pipeline (decompose, retrieve, generate),
logs every user correction as an event, re-executes only what the
correction invalidates, and replays byte-identically from the log.
Around that core: a shadow-user agent that proposes corrections from a
learned profile, an offline compiler that turns logs into training
batches, and a store that packages debug walks into paid, replayable
templates.
"""

from __future__ import annotations

from .actions import (
    AddSubQuery,
    AdjustStyle,
    AnnotateRelevance,
    CorrectFact,
    EditSection,
    FeedbackAction,
    FeedbackEvent,
    Rate,
    RefineConstraint,
    RemoveSubQuery,
    ReorderSubQueries,
    RerankEvidence,
    SetFilter,
)
from .agent import (
    Proposal,
    ProposalStatus,
    confirm_proposal,
    render_prompt,
    suggest_feedback,
    update_profile,
)
from .compiler import Window, compile_batch, export_batch, read_session_logs
from .errors import (
    AllStepsUnresolvable,
    ConfigError,
    CorruptLog,
    DecompositionFailed,
    DuplicateChunkId,
    EmptyCorpus,
    ExpiredProposal,
    FeedbackRejected,
    ForeignLog,
    GenerationFailed,
    InsufficientCredits,
    SearchloopError,
    StageExecutionError,
    UnknownChunk,
    UnknownTemplate,
    Unpublishable,
    UnresolvableReference,
    VersionMismatch,
)
from .index import Index, build_index, load_index, read_corpus, save_index, search
from .model import (
    Actor,
    Answer,
    AnswerSection,
    DocumentChunk,
    EvidenceSet,
    QueryPlan,
    RankedList,
    RateValue,
    Preference,
    RankedEntry,
    RelevanceLabel,
    RetrievalFilter,
    Stage,
    StageStatus,
    Style,
    SubQuery,
    ValidationState,
    Verbosity,
    Layout,
    Tone,
    UserProfile,
    UserQuery,
)
from .pipeline import PipelineConfig, PipelineDeps, load_config, run_pipeline
from .session import (
    EventLog,
    SessionState,
    fold_log,
    load_log,
    open_session,
    replay,
    restore_snapshot,
    save_snapshot,
    submit_feedback,
)
from .store import (
    DebugTemplate,
    FeedbackStore,
    LedgerEntry,
    UsageKind,
    apply_template,
    match_templates,
    package_template,
)
from .validation import validate_event

__version__ = "0.1.0"
