from .client import (
    API_KEY_ENV,
    LlmClient,
    LlmEndpoint,
    LlmError,
    ProtocolError,
    TransportError,
    complete,
    dispatch,
)
from .mock import MOCK_KINDS, MockLlm, mock_complete
from .parse import ParsedRanking, ParseFailure, normalize, parse_ranked_response
from .prompt import (
    HISTORY_CAP,
    TEMPLATE_VERSION,
    Instruction,
    NothingToRank,
    build_instruction,
    render_prompt,
)

__all__ = [
    "API_KEY_ENV",
    "HISTORY_CAP",
    "MOCK_KINDS",
    "TEMPLATE_VERSION",
    "Instruction",
    "LlmClient",
    "LlmEndpoint",
    "LlmError",
    "MockLlm",
    "NothingToRank",
    "ParseFailure",
    "ParsedRanking",
    "ProtocolError",
    "TransportError",
    "build_instruction",
    "complete",
    "dispatch",
    "mock_complete",
    "normalize",
    "parse_ranked_response",
    "render_prompt",
]
