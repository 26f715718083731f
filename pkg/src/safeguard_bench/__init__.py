"""Simulated benchmark harness for home-network IoT safeguards."""

from .packets import (
    CapturePoint,
    DestinationRecord,
    IpProtocol,
    PacketRecord,
    Party,
    TcpFlags,
    Trace,
    TraceMetadata,
)
from .pcapio import MalformedFileError, UnsupportedLinktypeError, read_trace, write_trace

__all__ = [
    "CapturePoint",
    "DestinationRecord",
    "IpProtocol",
    "PacketRecord",
    "Party",
    "TcpFlags",
    "Trace",
    "TraceMetadata",
    "MalformedFileError",
    "UnsupportedLinktypeError",
    "read_trace",
    "write_trace",
]
