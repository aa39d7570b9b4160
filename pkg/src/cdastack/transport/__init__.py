"""Topic-based publish/subscribe transport and a low-latency datagram channel."""

from .topics import topic_matches, validate_topic, validate_pattern, TopicError
from .protocol import Envelope, QOS_BEST_EFFORT, QOS_AT_LEAST_ONCE, ProtocolError
from .broker import Broker
from .client import BrokerClient, DeliveryError
from .datagram import DatagramChannel, FrameTooLargeError

__all__ = [
    "topic_matches",
    "validate_topic",
    "validate_pattern",
    "TopicError",
    "Envelope",
    "QOS_BEST_EFFORT",
    "QOS_AT_LEAST_ONCE",
    "ProtocolError",
    "Broker",
    "BrokerClient",
    "DeliveryError",
    "DatagramChannel",
    "FrameTooLargeError",
]
