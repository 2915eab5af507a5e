from .types import (
    BLOCK_SIZE,
    CoherenceMessage,
    DirEntry,
    DirState,
    L1Line,
    L1State,
    MessageKind,
    Mshr,
    Node,
    NodeKind,
    Op,
    Pending,
    ProtocolError,
    block_align,
    l1,
    l2,
    mem,
)
from .l1_controller import L1Result, l1_evict, l1_handle_core_request, l1_handle_message
from .directory import DirContext, DirResult, can_evict, dir_evict, dir_handle_message
from .memory import mem_handle_message

__all__ = [
    "BLOCK_SIZE",
    "CoherenceMessage",
    "DirContext",
    "DirEntry",
    "DirResult",
    "DirState",
    "L1Line",
    "L1Result",
    "L1State",
    "MessageKind",
    "Mshr",
    "Node",
    "NodeKind",
    "Op",
    "Pending",
    "ProtocolError",
    "block_align",
    "can_evict",
    "dir_evict",
    "dir_handle_message",
    "l1",
    "l1_evict",
    "l1_handle_core_request",
    "l1_handle_message",
    "l2",
    "mem",
    "mem_handle_message",
]
