"""
Checkpointer configuration for experiment threads.

IMPORTANT NOTES:
1. main.py compiles the experiment workflow WITH this checkpointer.
2. graphs/experiment_system.py compiles WITHOUT one (Studio brings its own).
3. The thread ID goes in the invocation config, NOT in the state.
"""
import uuid

from langgraph.checkpoint.memory import MemorySaver


def get_memory_saver() -> MemorySaver:
    """
    In-memory checkpointer. One instance shared across invocations keeps the
    message history of every thread.
    """
    return MemorySaver()


def thread_config(thread_id: str | None = None) -> dict:
    """Invocation config for one experiment thread (a fresh one by default)."""
    return {"configurable": {"thread_id": thread_id or str(uuid.uuid4())}}
