"""Named, independent random streams derived from one run seed."""

from dataclasses import dataclass

import numpy as np

STREAMS = ("init", "data", "gate", "probe")


@dataclass
class RngStreams:
    """``init`` builds weights, ``data`` samples and crops batches, ``gate``
    draws noise, shuffles and random masks, ``probe`` drives probes."""

    init: np.random.Generator
    data: np.random.Generator
    gate: np.random.Generator
    probe: np.random.Generator

    @classmethod
    def from_seed(cls, seed: int) -> "RngStreams":
        children = np.random.SeedSequence(seed).spawn(len(STREAMS))
        return cls(**{name: np.random.default_rng(child) for name, child in zip(STREAMS, children)})
