"""Incremental approximate propagation over dynamic graphs."""
from .graph import (
    DuplicateEdgeError,
    EventKind,
    EventLog,
    FormatError,
    Graph,
    GraphError,
    GraphEvent,
    MissingEdgeError,
    SelfLoopEventError,
    graph_from_edges,
    load_edge_list,
    load_events,
    new_graph,
)
from .instant_update import (
    ReplayError,
    UpdateReport,
    apply_event,
    apply_events,
    batch_update,
    update_attributes,
)
from .propagation import (
    PropagationConfig,
    PropagationError,
    PropagationState,
    PushStats,
    basic_propagate,
    embedding,
    new_state,
    propagate_from_scratch,
    push_backend,
    residual_threshold,
    set_push_backend,
)

__version__ = "0.1.0"
