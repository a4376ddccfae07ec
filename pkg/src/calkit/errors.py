"""Common base for every error raised by calkit."""


class CalkitError(Exception):
    """Base exception for invalid input and failed computations."""
