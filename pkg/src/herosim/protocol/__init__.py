"""Wire framing, message layouts, the pub/sub broker and bandwidth accounting."""
from .broker import Broker, BrokerServer, LoopbackLink, Subscription, TcpClient, UnknownTopicError
from .budget import (
    REFERENCE_TOPICS,
    BandwidthBudget,
    TopicSpec,
    fleet_capacity,
    per_robot_total,
    topic_bandwidth,
)
from .framing import FRAME_OVERHEAD, FrameDecoder, FrameTooLargeError, decode_frame, encode_frame

__all__ = [
    "Broker",
    "BrokerServer",
    "LoopbackLink",
    "Subscription",
    "TcpClient",
    "UnknownTopicError",
    "REFERENCE_TOPICS",
    "BandwidthBudget",
    "TopicSpec",
    "fleet_capacity",
    "per_robot_total",
    "topic_bandwidth",
    "FRAME_OVERHEAD",
    "FrameDecoder",
    "FrameTooLargeError",
    "decode_frame",
    "encode_frame",
]
