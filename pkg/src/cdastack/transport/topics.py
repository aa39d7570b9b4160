"""Topic name validation and '+'/'#' wildcard pattern matching.

Topics are '/'-joined non-empty tokens. In patterns, '+' matches exactly
one segment and a trailing '#' matches any remaining suffix (including an
empty one), so the pattern "#" matches every topic.
"""

from __future__ import annotations

__all__ = ["TopicError", "validate_topic", "validate_pattern", "topic_matches"]

_WILDCARDS = {"+", "#"}


class TopicError(ValueError):
    """Malformed topic or pattern."""


def validate_topic(topic: str) -> str:
    if not topic:
        raise TopicError("topic is empty")
    for token in topic.split("/"):
        if not token:
            raise TopicError(f"empty segment in topic {topic!r}")
        if "+" in token or "#" in token:
            raise TopicError(f"wildcard character in topic {topic!r}")
    return topic


def validate_pattern(pattern: str) -> str:
    if not pattern:
        raise TopicError("pattern is empty")
    tokens = pattern.split("/")
    for i, token in enumerate(tokens):
        if not token:
            raise TopicError(f"empty segment in pattern {pattern!r}")
        if token == "#" and i != len(tokens) - 1:
            raise TopicError(f"'#' must be the final segment in {pattern!r}")
        if token not in _WILDCARDS and ("+" in token or "#" in token):
            raise TopicError(f"wildcard inside token in {pattern!r}")
    return pattern


def topic_matches(pattern: str, topic: str) -> bool:
    """True iff the pattern accepts the topic under '+'/'#' semantics."""
    p_tokens = pattern.split("/")
    t_tokens = topic.split("/")
    for i, p in enumerate(p_tokens):
        if p == "#":
            return True
        if i >= len(t_tokens):
            return False
        if p == "+":
            continue
        if p != t_tokens[i]:
            return False
    return len(p_tokens) == len(t_tokens)
