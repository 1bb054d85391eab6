"""Layered dialog-act graph: triplets, per-layer one-hots, switch vectors.

A dialog act is a (domain, action, slot) triplet; acts without a slot are
normalized with the dummy slot ``"none"``. The ontology lists the node
labels of each layer, and an act encodes as one set bit per layer inside
a flat binary switch vector whose segments follow the layer order. Sets
of acts combine by bitwise OR, which is lossy: decoding returns the full
cross product of active labels, a superset of what was encoded.

All values here are immutable after construction and safe to share.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product
from typing import Iterable, Sequence

import numpy as np


class ActGraphError(ValueError):
    """Raised for unknown labels, malformed ontologies, or segment mismatches."""


CANONICAL_DOMAINS = (
    "restaurant", "hotel", "attraction", "train", "taxi",
    "hospital", "police", "bus", "booking", "general",
)
CANONICAL_ACTIONS = ("inform", "request", "recommend", "book", "select", "sorry", "none")
CANONICAL_SLOTS = (
    "pricerange", "id", "address", "postcode", "type", "food", "phone",
    "name", "area", "choice", "price", "time", "reference", "none",
    "parking", "stars", "internet", "day", "arriveby", "departure",
    "destination", "leaveat", "duration", "trainid", "people",
    "department", "stay",
)

NO_SLOT = "none"


@dataclass(frozen=True)
class ActTriplet:
    """One dialog act as a root-to-leaf path: domain, action, slot."""

    domain: str
    action: str
    slot: str = NO_SLOT

    @classmethod
    def parse(cls, text: str) -> "ActTriplet":
        """Parse ``"domain-action-slot"``; a missing slot normalizes to "none"."""
        parts = text.strip().split("-")
        if len(parts) == 2:
            parts.append(NO_SLOT)
        if len(parts) != 3 or not all(parts):
            raise ActGraphError(f"malformed act string {text!r}; expected domain-action-slot")
        return cls(*parts)

    def __str__(self):
        return f"{self.domain}-{self.action}-{self.slot}"


class Ontology:
    """Ordered node labels per layer; index = position in the layer list."""

    def __init__(self, layers: Sequence[Sequence[str]]):
        if len(layers) < 1:
            raise ActGraphError("ontology needs at least one layer")
        self.layers: tuple[tuple[str, ...], ...] = tuple(tuple(layer) for layer in layers)
        for li, layer in enumerate(self.layers):
            if not layer:
                raise ActGraphError(f"layer {li} is empty")
            if len(set(layer)) != len(layer):
                raise ActGraphError(f"layer {li} has duplicate labels")
        self._index = [
            {label: i for i, label in enumerate(layer)} for layer in self.layers
        ]

    @property
    def num_layers(self) -> int:
        return len(self.layers)

    @property
    def layer_sizes(self) -> tuple[int, ...]:
        return tuple(len(layer) for layer in self.layers)

    @property
    def total_nodes(self) -> int:
        return sum(self.layer_sizes)

    def label_index(self, layer: int, label: str) -> int:
        try:
            return self._index[layer][label]
        except KeyError:
            raise ActGraphError(
                f"unknown label {label!r} in layer {layer} "
                f"(layer has {len(self.layers[layer])} labels)"
            )

    def save(self, path) -> None:
        """Write the ontology file: one layer per line, comma-separated labels."""
        with open(path, "w", encoding="utf-8") as fh:
            for layer in self.layers:
                fh.write(",".join(layer) + "\n")

    @classmethod
    def load(cls, path) -> "Ontology":
        with open(path, "r", encoding="utf-8") as fh:
            layers = [line.strip().split(",") for line in fh if line.strip()]
        return cls(layers)

    def __eq__(self, other):
        return isinstance(other, Ontology) and self.layers == other.layers

    def __repr__(self):
        return f"Ontology(sizes={self.layer_sizes})"


def canonical_ontology() -> Ontology:
    """The 10-domain / 7-action / 27-slot ontology (44 nodes)."""
    return Ontology([CANONICAL_DOMAINS, CANONICAL_ACTIONS, CANONICAL_SLOTS])


class SwitchVector:
    """Flat binary node-activation vector, partitioned into layer segments."""

    __slots__ = ("bits", "segment_sizes")

    def __init__(self, bits, segment_sizes: Sequence[int]):
        bits = np.asarray(bits, dtype=np.int8)
        segment_sizes = tuple(int(s) for s in segment_sizes)
        if bits.ndim != 1 or bits.size != sum(segment_sizes):
            raise ActGraphError(
                f"switch length {bits.size} does not match segments {segment_sizes}"
            )
        if not np.all((bits == 0) | (bits == 1)):
            raise ActGraphError("switch bits must be 0 or 1")
        bits.setflags(write=False)
        self.bits = bits
        self.segment_sizes = segment_sizes

    @classmethod
    def zeros(cls, segment_sizes: Sequence[int]) -> "SwitchVector":
        return cls(np.zeros(sum(segment_sizes), dtype=np.int8), segment_sizes)

    @classmethod
    def from_segments(cls, segments: Sequence[Sequence[int]]) -> "SwitchVector":
        sizes = [len(s) for s in segments]
        return cls(np.concatenate([np.asarray(s, dtype=np.int8) for s in segments]), sizes)

    def segments(self) -> list[np.ndarray]:
        out = []
        start = 0
        for size in self.segment_sizes:
            out.append(self.bits[start:start + size])
            start += size
        return out

    def __len__(self):
        return self.bits.size

    def __eq__(self, other):
        return (
            isinstance(other, SwitchVector)
            and self.segment_sizes == other.segment_sizes
            and np.array_equal(self.bits, other.bits)
        )

    def __repr__(self):
        segs = ["".join(str(b) for b in seg) for seg in self.segments()]
        return f"SwitchVector({'|'.join(segs)})"


def encode_act(act: ActTriplet, ont: Ontology) -> SwitchVector:
    """Encode one act as a switch with exactly one set bit per layer."""
    if ont.num_layers != 3:
        raise ActGraphError(f"triplet encoding needs a 3-layer ontology, got {ont.num_layers}")
    bits = np.zeros(ont.total_nodes, dtype=np.int8)
    offset = 0
    for layer, label in enumerate((act.domain, act.action, act.slot)):
        bits[offset + ont.label_index(layer, label)] = 1
        offset += len(ont.layers[layer])
    return SwitchVector(bits, ont.layer_sizes)


def aggregate(switches: Iterable[SwitchVector], ont: Ontology | None = None) -> SwitchVector:
    """Bitwise OR of switch vectors; the empty set yields the zero vector.

    An empty input needs ``ont`` (or it has no length to produce).
    """
    switches = list(switches)
    if not switches:
        if ont is None:
            raise ActGraphError("aggregate of an empty list needs an ontology for sizing")
        return SwitchVector.zeros(ont.layer_sizes)
    first = switches[0]
    acc = first.bits.copy()
    for sw in switches[1:]:
        if sw.segment_sizes != first.segment_sizes:
            raise ActGraphError(
                f"aggregate: segment mismatch {sw.segment_sizes} vs {first.segment_sizes}"
            )
        acc |= sw.bits
    return SwitchVector(acc, first.segment_sizes)


def decode_switch(switch: SwitchVector, ont: Ontology) -> list[ActTriplet]:
    """All triplets in the cross product of active labels per layer.

    Aggregation is lossy, so this is a superset of whatever was encoded;
    an all-zero switch decodes to the empty list.
    """
    if ont.num_layers != 3:
        raise ActGraphError(f"triplet decoding needs a 3-layer ontology, got {ont.num_layers}")
    if switch.segment_sizes != ont.layer_sizes:
        raise ActGraphError(
            f"switch segments {switch.segment_sizes} do not match ontology {ont.layer_sizes}"
        )
    active = [
        [ont.layers[layer][i] for i in np.flatnonzero(seg)]
        for layer, seg in enumerate(switch.segments())
    ]
    if any(not labels for labels in active):
        return []
    return [ActTriplet(d, a, s) for d, a, s in product(*active)]


class ActInventory:
    """Fixed enumeration of observed full triplets plus one trailing UNK slot.

    This is the flat baseline encoding: one position per distinct triplet
    in observation order, so a triplet never seen at build time can only
    map to UNK. That failure mode is the point of the baseline.
    """

    def __init__(self, triplets: Sequence[ActTriplet]):
        seen: dict[ActTriplet, int] = {}
        for t in triplets:
            if t not in seen:
                seen[t] = len(seen)
        self._index = seen
        self.triplets: tuple[ActTriplet, ...] = tuple(seen)

    @property
    def size(self) -> int:
        """Vector length including the UNK position."""
        return len(self.triplets) + 1

    @property
    def unk_index(self) -> int:
        return len(self.triplets)

    def index_of(self, act: ActTriplet) -> int:
        return self._index.get(act, self.unk_index)

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for t in self.triplets:
                fh.write(str(t) + "\n")

    @classmethod
    def load(cls, path) -> "ActInventory":
        with open(path, "r", encoding="utf-8") as fh:
            return cls([ActTriplet.parse(line) for line in fh if line.strip()])


def flatten_tree_encoding(acts: Sequence[ActTriplet], inventory: ActInventory) -> np.ndarray:
    """Binary vector over the triplet inventory; unseen triplets set UNK."""
    vec = np.zeros(inventory.size, dtype=np.int8)
    for act in acts:
        vec[inventory.index_of(act)] = 1
    return vec
