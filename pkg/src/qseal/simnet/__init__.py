"""Session orchestration: in-process runs, wire framing and networked roles."""

from .network import merge_views, run_loopback, run_networked
from .session import SessionTranscript, run_session

__all__ = ["SessionTranscript", "run_session", "run_networked", "run_loopback", "merge_views"]
