"""Triple storage, id interning, dataset loading and neighborhood indexes.

Entities and relations are interned to dense integer ids in first-occurrence
order (train file first, then valid, then test), so reloading the same files
always yields the same assignment. The vocabulary covers all three splits:
test entities must be embeddable because ranking substitutes every entity.
"""

from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass, field

from .errors import DataError

log = logging.getLogger(__name__)

# A triple is a plain (head_id, relation_id, tail_id) tuple throughout the
# package; keeping it a tuple makes sets/dicts of triples cheap.
Triple = tuple[int, int, int]


class Vocab:
    """String <-> dense id bijection, ids assigned by first occurrence."""

    def __init__(self):
        self._to_id: dict[str, int] = {}
        self._names: list[str] = []

    def intern(self, name: str) -> int:
        i = self._to_id.get(name)
        if i is None:
            i = len(self._names)
            self._to_id[name] = i
            self._names.append(name)
        return i

    def id_of(self, name: str) -> int:
        return self._to_id[name]

    def name_of(self, i: int) -> str:
        return self._names[i]

    def __contains__(self, name: str) -> bool:
        return name in self._to_id

    def __len__(self) -> int:
        return len(self._names)

    def names(self) -> list[str]:
        return list(self._names)


@dataclass
class TripleStore:
    """Interned train/valid/test triples plus the union set for filtering."""

    entity_vocab: Vocab
    relation_vocab: Vocab
    train: list[Triple]
    valid: list[Triple]
    test: list[Triple]
    all_known: set[Triple] = field(default_factory=set)

    @property
    def n_entities(self) -> int:
        return len(self.entity_vocab)

    @property
    def n_relations(self) -> int:
        return len(self.relation_vocab)

    def split(self, name: str) -> list[Triple]:
        try:
            return {"train": self.train, "valid": self.valid, "test": self.test}[name]
        except KeyError:
            raise ValueError(f"unknown split {name!r}") from None

    def triple_exists(self, h: int, r: int, t: int) -> bool:
        """Membership in any split — the filtered-setting query."""
        return (h, r, t) in self.all_known

    def vocab_hash(self) -> str:
        """Digest of both vocabularies; checkpoints refuse to load on mismatch."""
        m = hashlib.sha256()
        for name in self.entity_vocab.names():
            m.update(name.encode("utf-8"))
            m.update(b"\x00")
        m.update(b"\x01")
        for name in self.relation_vocab.names():
            m.update(name.encode("utf-8"))
            m.update(b"\x00")
        return m.hexdigest()


def from_triples(
    train: list[tuple[str, str, str]],
    valid: list[tuple[str, str, str]] = (),
    test: list[tuple[str, str, str]] = (),
) -> TripleStore:
    """Build a store from in-memory (head, rel, tail) name triples."""
    ev, rv = Vocab(), Vocab()
    store = TripleStore(ev, rv, [], [], [])
    for split_name, rows in (("train", train), ("valid", valid), ("test", test)):
        out = store.split(split_name)
        seen_here: set[Triple] = set()
        dup_within = dup_cross = 0
        for h, r, t in rows:
            trip = (ev.intern(h), rv.intern(r), ev.intern(t))
            if trip in seen_here:
                dup_within += 1
                continue
            if trip in store.all_known:
                # keeps the splits pairwise disjoint; first split wins
                dup_cross += 1
                continue
            seen_here.add(trip)
            out.append(trip)
            store.all_known.add(trip)
        if dup_within:
            log.warning("%s: dropped %d duplicate triples within the split", split_name, dup_within)
        if dup_cross:
            log.warning("%s: dropped %d triples already present in an earlier split", split_name, dup_cross)
    return store


def _read_triple_file(path: str) -> list[tuple[str, str, str]]:
    """Parse a tab-separated triple file: head<TAB>relation<TAB>tail per line."""
    rows = []
    try:
        fh = open(path, encoding="utf-8")
    except OSError as e:
        raise DataError(f"cannot read {path}: {e}") from e
    with fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n").rstrip("\r")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise DataError(
                    f"{path}:{lineno}: expected 3 tab-separated fields, got {len(parts)}"
                )
            rows.append((parts[0], parts[1], parts[2]))
    return rows


def load_dataset(train_path: str, valid_path: str, test_path: str) -> TripleStore:
    """Load the canonical FB15k-237/WN18RR distribution format."""
    store = from_triples(
        _read_triple_file(train_path),
        _read_triple_file(valid_path),
        _read_triple_file(test_path),
    )
    log.info(
        "loaded %d entities, %d relations, %d/%d/%d train/valid/test triples",
        store.n_entities,
        store.n_relations,
        len(store.train),
        len(store.valid),
        len(store.test),
    )
    return store


class NeighborhoodIndex:
    """Adjacency over one split: outgoing/incoming lists and (head, tail) -> rels.

    out_nbrs[e] is exactly the neighborhood of e in the split: all (rel, tail)
    pairs of triples with head e. Immutable after construction.
    """

    def __init__(self, store: TripleStore, split: str = "train"):
        n = store.n_entities
        self.out_nbrs: list[list[tuple[int, int]]] = [[] for _ in range(n)]
        self.in_nbrs: list[list[tuple[int, int]]] = [[] for _ in range(n)]
        self.pair_rels: dict[tuple[int, int], set[int]] = {}
        self.triples = store.split(split)
        for h, r, t in self.triples:
            self.out_nbrs[h].append((r, t))
            self.in_nbrs[t].append((r, h))
            self.pair_rels.setdefault((h, t), set()).add(r)

    def rels_between(self, h: int, t: int) -> set[int]:
        return self.pair_rels.get((h, t), set())


def build_index(store: TripleStore, split: str = "train") -> NeighborhoodIndex:
    return NeighborhoodIndex(store, split)
