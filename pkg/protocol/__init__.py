"""Application layer: security rules, messages and the product/sink state machines."""
from .rules import (
    CommunityRuleConfig,
    CompatibilityMatrix,
    DynamicRuleConfig,
    DynamicRuleState,
    SecurityLevel,
    StaticRuleConfig,
    combine_global,
    eval_community,
    eval_static,
    update_dynamic,
)
from .messages import BROADCAST, SINK_ID, Message, MessageKind

__all__ = [
    "CommunityRuleConfig",
    "CompatibilityMatrix",
    "DynamicRuleConfig",
    "DynamicRuleState",
    "SecurityLevel",
    "StaticRuleConfig",
    "combine_global",
    "eval_community",
    "eval_static",
    "update_dynamic",
    "BROADCAST",
    "SINK_ID",
    "Message",
    "MessageKind",
]
