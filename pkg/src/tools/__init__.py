"""
Tools for HomeSentinel: frame I/O and notification transports
"""

from .frame_io import FrameSource, decode_pnm, encode_pnm, open_source
from .voice_alert_tool import CommandVoiceSink
from .webhook_tool import WebhookTransport, send_test_message

__all__ = [
    "FrameSource",
    "decode_pnm",
    "encode_pnm",
    "open_source",
    "CommandVoiceSink",
    "WebhookTransport",
    "send_test_message",
]
