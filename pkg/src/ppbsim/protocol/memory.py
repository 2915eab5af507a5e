from __future__ import annotations

from typing import Optional, Tuple

from .types import CoherenceMessage, MessageKind as K, Node, ProtocolError


def mem_handle_message(
    value: int, msg: CoherenceMessage, ctrl: Node
) -> Tuple[int, Optional[CoherenceMessage]]:
    """Serve one memory request against the stored block value.

    Returns the (possibly updated) stored value and the reply. Timing is the
    caller's business; memory itself always succeeds.
    """
    if msg.kind is K.MemRead:
        reply = CoherenceMessage(K.MemData, msg.addr, ctrl, msg.src, requestor=msg.requestor,
                                 payload=value, tag=msg.tag)
    elif msg.kind is K.MemWriteBack:
        value = msg.payload
        reply = CoherenceMessage(K.WBAck, msg.addr, ctrl, msg.src, tag=msg.tag)
    else:
        raise ProtocolError(f"{ctrl}: memory cannot handle {msg.describe()}")
    reply.parent = msg
    return value, reply
