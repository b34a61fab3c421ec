"""Python bindings for the fcgs scene codec."""

from ._fcgs import (
    Error,
    Weights,
    decode,
    encode,
    estimate,
    gen_test_weights,
    inspect,
    load_weights,
    read_ply,
    write_ply,
)

__all__ = [
    "Error",
    "Weights",
    "decode",
    "encode",
    "estimate",
    "gen_test_weights",
    "inspect",
    "load_weights",
    "read_ply",
    "write_ply",
]
