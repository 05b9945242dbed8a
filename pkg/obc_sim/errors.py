"""
Contains custom exceptions for OBCSim
"""
from __future__ import annotations

from typing import Optional


class OBCSimError(Exception):
    message = 'An unspecified simulator error occurred!'

    def __init__(self, detail: Optional[str] = None, *args):
        self.detail = detail
        text = self.message if detail is None else f'{self.message} {detail}'
        super().__init__(text, *args)


class SchedulingError(OBCSimError):
    message = 'Event scheduled in the simulated past!'


class ConfigurationError(OBCSimError):
    message = 'Invalid configuration!'


class ScenarioError(ConfigurationError):
    """
    Raised when a scenario file fails to parse or validate.

    Parameters:
        detail (str): What is wrong with the offending key.
        key (str, optional): The offending ``section.key``.
        line (int, optional): 1-based line number in the scenario text.
    """
    message = 'Invalid scenario:'

    def __init__(self, detail: str, key: Optional[str] = None, line: Optional[int] = None):
        self.key = key
        self.line = line

        where = []
        if line is not None:
            where.append(f'line {line}')
        if key is not None:
            where.append(key)

        super().__init__(f'{", ".join(where)}: {detail}' if where else detail)


class BusError(OBCSimError):
    message = 'I2C bus error:'

    def __init__(self, address: int, detail: str = 'no acknowledge'):
        self.address = address
        super().__init__(f'device 0x{address:02x} {detail}')


class TelemetrySizeError(OBCSimError):
    message = 'Telemetry record does not fit one slot!'


class CompressionError(OBCSimError):
    message = 'Compression failed!'


class StreamError(CompressionError):
    message = 'Malformed encoded stream:'

    def __init__(self, detail: str, offset: int):
        self.offset = offset
        super().__init__(f'{detail} (byte offset {offset})')


class FormatVersionError(StreamError):
    message = 'Encoded stream format version mismatch:'


class DumpError(OBCSimError):
    message = 'Invalid memory bank dump:'
