from .client import ChatExchange, ChatRequest, Gateway, HttpBackend
from .mock import MockBackend, MockBehavior
from .registry import DecodingDefaults, ModelRegistry

__all__ = [
    "ChatExchange",
    "ChatRequest",
    "DecodingDefaults",
    "Gateway",
    "HttpBackend",
    "MockBackend",
    "MockBehavior",
    "ModelRegistry",
]
