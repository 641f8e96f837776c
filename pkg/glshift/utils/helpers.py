from __future__ import annotations

import hashlib
import json
import logging
from typing import Any

import numpy as np

# spawn keys of the named random streams; never renumber, outputs depend on them
RNG_STREAMS = {
    "directions": 0,
    "labels": 1,
    "features": 2,
    "subsample": 3,
    "init": 4,
    "batches": 5,
    "bandwidth": 6,
    "monte_carlo": 7,
    "suite": 8,
}


def setup_default_logger(level: int = logging.INFO) -> None:
    """
    Call this function in your main function to initialize a basic logger.

    To have more control on the format or level, call `logging.basicConfig()` directly instead.

    If you don't initialize any logger, log entries from the glshift package will not appear anywhere.
    """
    logging.basicConfig(format="%(levelname)s : %(message)s", level=level)


def rng_stream(seed: int, purpose: str, *key: int) -> np.random.Generator:
    """
    Independent random generator for one purpose of one seeded run.

    Streams are children of ``SeedSequence(seed)`` with the spawn key
    ``(RNG_STREAMS[purpose], *key)``, so they do not depend on call order.

    Args:
        seed: run seed (non-negative, up to 64 bits)
        purpose: one of the names in RNG_STREAMS
        key: further integers to split the stream, e.g. a domain index

    Returns:
        a PCG64 generator
    """
    if purpose not in RNG_STREAMS:
        raise KeyError(f"unknown random stream {purpose!r}")
    sequence = np.random.SeedSequence(int(seed), spawn_key=(RNG_STREAMS[purpose], *key))
    return np.random.Generator(np.random.PCG64(sequence))


def stable_digest(payload: Any) -> str:
    """SHA-256 of the canonical JSON form of ``payload`` (numpy values converted)."""
    text = json.dumps(payload, sort_keys=True, default=to_jsonable, separators=(",", ":"))
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def to_jsonable(value: Any) -> Any:
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.generic):
        return value.item()
    if hasattr(value, "to_dict"):
        return value.to_dict()
    raise TypeError(f"cannot serialize {type(value).__name__}")
