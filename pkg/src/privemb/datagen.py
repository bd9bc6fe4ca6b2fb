"""Synthetic attributed graphs with planted private-attribute leakage.

Edges follow a stochastic block model over the private label, so topology
leaks the private attribute even when the attribute column is removed from
the features. The utility label correlates with the private one at rate
``rho`` and a third feature-only attribute is a noisy copy of the utility
label.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graphcore import AttributeSchema, Graph
from .numkit import Rng, derive_seed


@dataclass(frozen=True)
class SynthParams:
    n: int = 500
    private_classes: int = 2
    utility_classes: int = 4
    p_in: float = 0.08
    p_out: float = 0.01
    rho: float = 0.3
    flip_rate: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.private_classes < 2 or self.utility_classes < 2:
            raise ValueError("class counts must be at least 2")
        if self.n < self.private_classes * self.utility_classes:
            raise ValueError("n is too small for the class counts")
        if not 0.0 <= self.p_out <= self.p_in <= 1.0:
            raise ValueError("need 0 <= p_out <= p_in <= 1")
        if not 0.0 <= self.rho <= 1.0 or not 0.0 <= self.flip_rate <= 1.0:
            raise ValueError("rho and flip_rate must lie in [0, 1]")


def synth_schema(params: SynthParams) -> AttributeSchema:
    return AttributeSchema(
        names=("private", "utility", "feature"),
        classes={"private": params.private_classes,
                 "utility": params.utility_classes,
                 "feature": params.utility_classes},
        roles={"private": "private", "utility": "utility", "feature": "feature"},
    )


def synth_graph(params: SynthParams):
    """Generate (graph, schema) deterministically from ``params.seed``.

    Private labels are balanced round-robin assignments, shuffled. Each
    node pair draws an edge with probability p_in (same private label) or
    p_out (different). The utility label copies a fixed map of the private
    label with probability rho and is uniform otherwise; the feature
    attribute copies the utility label and flips to a different uniform
    class at ``flip_rate``. All nodes are labeled.
    """
    n = params.n
    m_p = params.private_classes
    m_u = params.utility_classes

    rng_priv = Rng(derive_seed(params.seed, "synth/private"))
    private = np.array([(i % m_p) + 1 for i in range(n)], dtype=np.int64)
    private = private[rng_priv.permutation(n)]

    rng_edges = Rng(derive_seed(params.seed, "synth/edges"))
    iu, ju = np.triu_indices(n, k=1)
    prob = np.where(private[iu] == private[ju], params.p_in, params.p_out)
    keep = rng_edges.random(iu.size) < prob
    edges = np.column_stack([iu[keep], ju[keep]]).astype(np.int64)

    rng_util = Rng(derive_seed(params.seed, "synth/utility"))
    derived = ((private - 1) % m_u) + 1
    use_derived = rng_util.random(n) < params.rho
    uniform = rng_util.integers(1, m_u + 1, size=n)
    utility = np.where(use_derived, derived, uniform).astype(np.int64)

    rng_feat = Rng(derive_seed(params.seed, "synth/feature"))
    flips = rng_feat.random(n) < params.flip_rate
    offsets = rng_feat.integers(1, m_u, size=n)
    flipped = ((utility - 1 + offsets) % m_u) + 1
    feature = np.where(flips, flipped, utility).astype(np.int64)

    g = Graph(n=n, edges=edges,
              attributes={"private": private, "utility": utility, "feature": feature})
    return g, synth_schema(params)
