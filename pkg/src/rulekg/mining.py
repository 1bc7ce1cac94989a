"""Association-rule mining over a triple store.

Three rule kinds are mined from the training split:

  inference      (x, r_s, y)              =>  (x, r_t, y)
  antisymmetry   (x, r_a, y)             <=>  (y, r_b, x)   (undirected)
  transitivity2  (x, r_1, y) ^ (y, r_2, z) => (x, r_t, z)

Counting semantics (the brute-force oracle in the test suite mirrors these):

* self-loop triples (head == tail) are ignored by mining entirely;
* entities along a sample/chain are pairwise distinct;
* candidates whose head relation appears among the body relations are
  excluded (tautological, inflate frequency);
* n_e(f) counts entities bound to the rule's FIRST variable for which the
  formula f has a consistent instantiation in train; the joint count binds
  shared variables consistently across body and head.

support    = n_e(body ^ head) / N
confidence = n_e(body ^ head) / n_e(body)
promotion  = confidence / (n_e(head) / N)

Inference samples are unordered pairs, but each pair yields both directed
candidates: support and promotion are direction-symmetric while confidence
is not. Antisymmetry candidates are canonicalized so the lower relation id
comes first; the counted entity is the head of that relation's atom.
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field

from .errors import ConfigError, DataError
from .kg import NeighborhoodIndex, Triple, TripleStore

log = logging.getLogger(__name__)


class RuleKind(enum.Enum):
    INFERENCE = "inference"
    ANTI_SYMMETRY = "antisymmetry"
    TRANSITIVITY2 = "transitivity2"


_KIND_RANK = {RuleKind.INFERENCE: 0, RuleKind.ANTI_SYMMETRY: 1, RuleKind.TRANSITIVITY2: 2}


@dataclass
class RuleCandidate:
    """Relation-level rule with its frequency and entity-proportion scores.

    Exact integer counts are kept alongside the float scores so tests can
    compare against a rational oracle without rounding concerns.
    """

    kind: RuleKind
    body: tuple[int, ...]  # 1 relation (one-to-one kinds) or 2 (transitivity)
    head: int
    frequency: int = 0
    n_joint: int = 0
    n_body: int = 0
    n_head: int = 0
    n_total: int = 0
    support: float = 0.0
    confidence: float = 0.0
    promotion: float = 0.0
    reject_reason: str | None = None

    @property
    def key(self) -> tuple:
        return (self.kind, self.body, self.head)

    def sort_key(self) -> tuple:
        return (-self.frequency, _KIND_RANK[self.kind], self.body, self.head)


@dataclass
class RuleSet:
    """Candidates that passed the promotion-degree filter."""

    rules: list[RuleCandidate]
    threshold: float

    def __len__(self) -> int:
        return len(self.rules)

    def __iter__(self):
        return iter(self.rules)

    def counts_by_kind(self) -> dict[RuleKind, int]:
        out = {k: 0 for k in RuleKind}
        for r in self.rules:
            out[r.kind] += 1
        return out


@dataclass(frozen=True)
class GroundRule:
    """A rule instantiated with concrete entities.

    ``triples`` lists the body atoms first and the head atom last
    (2 atoms for one-to-one kinds, 3 for transitivity). Body atoms exist in
    the training split; the head atom may be absent — that is the training
    signal rules add beyond plain triples.
    """

    kind: RuleKind
    triples: tuple[Triple, ...]

    @property
    def body(self) -> tuple[Triple, ...]:
        return self.triples[:-1]

    @property
    def head(self) -> Triple:
        return self.triples[-1]


@dataclass
class Samples:
    """Per-kind rule samples extracted from the training triples."""

    inference: list[tuple[Triple, Triple]] = field(default_factory=list)
    anti_symmetry: list[tuple[Triple, Triple]] = field(default_factory=list)
    transitivity: list[tuple[Triple, Triple, Triple]] = field(default_factory=list)


class _MiningView:
    """Self-loop-free adjacency maps shared by extraction and scoring."""

    def __init__(self, store: TripleStore, index: NeighborhoodIndex):
        self.n_total = store.n_entities
        # x -> y -> set of rels on x->y edges
        self.out_map: dict[int, dict[int, set[int]]] = {}
        # t -> h -> set of rels on h->t edges
        self.in_map: dict[int, dict[int, set[int]]] = {}
        # r -> x -> set of tails of (x, r, .) edges
        self.out_by_rel: dict[int, dict[int, set[int]]] = {}
        # entity sets per relation
        self.heads_of: dict[int, set[int]] = {}
        self.tails_of: dict[int, set[int]] = {}
        for h, r, t in index.triples:
            if h == t:
                continue
            self.out_map.setdefault(h, {}).setdefault(t, set()).add(r)
            self.in_map.setdefault(t, {}).setdefault(h, set()).add(r)
            self.out_by_rel.setdefault(r, {}).setdefault(h, set()).add(t)
            self.heads_of.setdefault(r, set()).add(h)
            self.tails_of.setdefault(r, set()).add(t)

    def rels(self, x: int, y: int) -> set[int]:
        return self.out_map.get(x, {}).get(y, set())


def extract_samples(store: TripleStore, index: NeighborhoodIndex) -> Samples:
    """Enumerate every rule sample in the training split.

    Intended for small graphs and tests; the mining pipeline uses streaming
    counters with identical semantics (see :func:`mine`).
    """
    view = _MiningView(store, index)
    samples = Samples()
    for x, tails in sorted(view.out_map.items()):
        for y, rels_xy in sorted(tails.items()):
            rels_sorted = sorted(rels_xy)
            # inference: distinct-relation parallel edges, unordered pair
            for i, r1 in enumerate(rels_sorted):
                for r2 in rels_sorted[i + 1 :]:
                    samples.inference.append(((x, r1, y), (x, r2, y)))
            # antisymmetry: opposite edges, one unordered pair per (lo, hi)
            rels_yx = view.rels(y, x)
            for ra in rels_sorted:
                for rb in sorted(rels_yx):
                    if ra < rb:
                        samples.anti_symmetry.append(((x, ra, y), (y, rb, x)))
            # transitivity: witness (x, rt, z) plus chain x -> y' -> z
            for rt in rels_sorted:
                z = y
                for yy, rels_xyy in sorted(tails.items()):
                    if yy == z:
                        continue
                    rels_yyz = view.rels(yy, z)
                    for r1 in sorted(rels_xyy):
                        for r2 in sorted(rels_yyz):
                            if rt != r1 and rt != r2:
                                samples.transitivity.append(
                                    ((x, r1, yy), (yy, r2, z), (x, rt, z))
                                )
    return samples


def extract_candidates(samples: Samples) -> list[RuleCandidate]:
    """Project samples to relation-level candidates ranked by frequency."""
    freq: dict[tuple, int] = {}

    def bump(kind: RuleKind, body: tuple[int, ...], head: int):
        key = (kind, body, head)
        freq[key] = freq.get(key, 0) + 1

    for (x, r1, y), (_, r2, _) in samples.inference:
        bump(RuleKind.INFERENCE, (r1,), r2)
        bump(RuleKind.INFERENCE, (r2,), r1)
    for (x, ra, y), (_, rb, _) in samples.anti_symmetry:
        bump(RuleKind.ANTI_SYMMETRY, (ra,), rb)
    for (x, r1, y), (_, r2, z), (_, rt, _) in samples.transitivity:
        bump(RuleKind.TRANSITIVITY2, (r1, r2), rt)

    out = [
        RuleCandidate(kind=k, body=b, head=h, frequency=f)
        for (k, b, h), f in freq.items()
    ]
    out.sort(key=RuleCandidate.sort_key)
    return out


def _score_from_counts(cand: RuleCandidate) -> tuple[float, float, float] | None:
    if cand.n_body == 0 or cand.n_head == 0:
        cand.reject_reason = (
            f"undefined score: n_e(body)={cand.n_body}, n_e(head)={cand.n_head}"
        )
        log.info("rejected candidate %s: %s", cand.key, cand.reject_reason)
        return None
    cand.support = cand.n_joint / cand.n_total
    cand.confidence = cand.n_joint / cand.n_body
    cand.promotion = cand.confidence / (cand.n_head / cand.n_total)
    return cand.support, cand.confidence, cand.promotion


def _count_body_trans(view: _MiningView, r1: int, r2: int) -> int:
    """Entities x with a chain (x, r1, y), (y, r2, z), x/y/z pairwise distinct."""
    n = 0
    for x, tails in view.out_by_rel.get(r1, {}).items():
        found = False
        for y in tails:
            zs = view.out_by_rel.get(r2, {}).get(y)
            if zs and (len(zs) > 1 or x not in zs):
                found = True
                break
        if found:
            n += 1
    return n


def score_candidate(
    cand: RuleCandidate, store: TripleStore, index: NeighborhoodIndex
) -> tuple[float, float, float] | None:
    """Fill in n_e counts and scores for one candidate by direct scan.

    Returns (support, confidence, promotion), or None when the candidate is
    rejected because a constituent formula never occurs.
    """
    view = _MiningView(store, index)
    cand.n_total = view.n_total
    if cand.kind is RuleKind.INFERENCE:
        (rs,), rt = cand.body, cand.head
        cand.n_body = len(view.heads_of.get(rs, ()))
        cand.n_head = len(view.heads_of.get(rt, ()))
        cand.n_joint = sum(
            1
            for x in view.heads_of.get(rs, ())
            if any(rt in rels and rs in rels for rels in view.out_map[x].values())
        )
    elif cand.kind is RuleKind.ANTI_SYMMETRY:
        (lo,), hi = cand.body, cand.head
        cand.n_body = len(view.heads_of.get(lo, ()))
        cand.n_head = len(view.tails_of.get(hi, ()))
        cand.n_joint = sum(
            1
            for x in view.heads_of.get(lo, ())
            if any(lo in rels and hi in view.rels(y, x) for y, rels in view.out_map[x].items())
        )
    elif cand.kind is RuleKind.TRANSITIVITY2:
        (r1, r2), rt = cand.body, cand.head
        cand.n_body = _count_body_trans(view, r1, r2)
        cand.n_head = len(view.heads_of.get(rt, ()))
        joint = 0
        for x, tails in view.out_by_rel.get(rt, {}).items():
            ys = view.out_by_rel.get(r1, {}).get(x, ())
            ok = False
            for z in tails:
                for y in ys:
                    if y != z and r2 in view.rels(y, z):
                        ok = True
                        break
                if ok:
                    break
            if ok:
                joint += 1
        cand.n_joint = joint
    else:  # pragma: no cover
        raise ValueError(f"unknown kind {cand.kind}")
    return _score_from_counts(cand)


def filter_rules(candidates: list[RuleCandidate], threshold: float) -> RuleSet:
    """Keep scored candidates with promotion >= threshold."""
    if threshold <= 0:
        raise ConfigError(f"promotion threshold must be positive, got {threshold}")
    if threshold < 1:
        log.info(
            "promotion threshold %.3g < 1: rules with promotion below 1 indicate "
            "negative correlation and will still be accepted",
            threshold,
        )
    kept = [
        c for c in candidates if c.reject_reason is None and c.promotion >= threshold
    ]
    kept.sort(key=RuleCandidate.sort_key)
    return RuleSet(rules=kept, threshold=threshold)


def mine(store: TripleStore, index: NeighborhoodIndex, threshold: float) -> tuple[RuleSet, list[RuleCandidate]]:
    """Full mining pipeline: extract, count, score, filter.

    A single streaming pass computes candidate frequencies and distinct-entity
    joint counts without materializing sample lists, so FB15k-scale graphs
    stay tractable. Returns (accepted rule set, all scored candidates).
    """
    view = _MiningView(store, index)
    n_total = view.n_total
    freq: dict[tuple, int] = {}
    joint: dict[tuple, int] = {}

    for x, tails in view.out_map.items():
        local: dict[tuple, int] = {}
        for z, wit_rels in tails.items():
            rels_sorted = sorted(wit_rels)
            # inference instances at (x, z)
            for i, r1 in enumerate(rels_sorted):
                for r2 in rels_sorted[i + 1 :]:
                    for key in (
                        (RuleKind.INFERENCE, (r1,), r2),
                        (RuleKind.INFERENCE, (r2,), r1),
                    ):
                        local[key] = local.get(key, 0) + 1
            # antisymmetry instances bound at x: lower relation on the x->z side
            rels_zx = view.rels(z, x)
            if rels_zx:
                for ra in rels_sorted:
                    for rb in rels_zx:
                        if ra < rb:
                            key = (RuleKind.ANTI_SYMMETRY, (ra,), rb)
                            local[key] = local.get(key, 0) + 1
            # transitivity: chains x -> y -> z under witness (x, rt, z); walk
            # whichever of out(x)/in(z) is smaller so hubs stay cheap
            in_z = view.in_map.get(z, {})
            if len(tails) <= len(in_z):
                mids = ((y, rels_xy, view.rels(y, z)) for y, rels_xy in tails.items())
            else:
                mids = ((y, tails.get(y, ()), rels_yz) for y, rels_yz in in_z.items())
            for y, rels_xy, rels_yz in mids:
                if y == z or not rels_xy or not rels_yz:
                    continue
                for r1 in rels_xy:
                    for r2 in rels_yz:
                        for rt in wit_rels:
                            if rt != r1 and rt != r2:
                                key = (RuleKind.TRANSITIVITY2, (r1, r2), rt)
                                local[key] = local.get(key, 0) + 1
        for key, count in local.items():
            freq[key] = freq.get(key, 0) + count
            joint[key] = joint.get(key, 0) + 1

    body_trans: dict[tuple[int, int], int] = {}
    candidates: list[RuleCandidate] = []
    for (kind, body, head), f in freq.items():
        cand = RuleCandidate(kind=kind, body=body, head=head, frequency=f)
        cand.n_total = n_total
        cand.n_joint = joint[(kind, body, head)]
        if kind is RuleKind.INFERENCE:
            cand.n_body = len(view.heads_of.get(body[0], ()))
            cand.n_head = len(view.heads_of.get(head, ()))
        elif kind is RuleKind.ANTI_SYMMETRY:
            cand.n_body = len(view.heads_of.get(body[0], ()))
            cand.n_head = len(view.tails_of.get(head, ()))
        else:
            combo = (body[0], body[1])
            if combo not in body_trans:
                body_trans[combo] = _count_body_trans(view, *combo)
            cand.n_body = body_trans[combo]
            cand.n_head = len(view.heads_of.get(head, ()))
        _score_from_counts(cand)
        candidates.append(cand)

    candidates.sort(key=RuleCandidate.sort_key)
    return filter_rules(candidates, threshold), candidates


def ground_rules(
    ruleset: RuleSet, store: TripleStore, index: NeighborhoodIndex
) -> list[GroundRule]:
    """Instantiate accepted rules at every training occurrence of their body.

    For the undirected antisymmetry kind a ground rule is emitted for each
    direction whose body atom exists. Output is deduplicated and sorted.
    """
    view = _MiningView(store, index)
    out: set[GroundRule] = set()
    for rule in ruleset:
        if rule.kind is RuleKind.INFERENCE:
            (rs,), rt = rule.body, rule.head
            for x, tails in view.out_by_rel.get(rs, {}).items():
                for y in tails:
                    out.add(GroundRule(rule.kind, ((x, rs, y), (x, rt, y))))
        elif rule.kind is RuleKind.ANTI_SYMMETRY:
            (lo,), hi = rule.body, rule.head
            for x, tails in view.out_by_rel.get(lo, {}).items():
                for y in tails:
                    out.add(GroundRule(rule.kind, ((x, lo, y), (y, hi, x))))
            for y, tails in view.out_by_rel.get(hi, {}).items():
                for x in tails:
                    out.add(GroundRule(rule.kind, ((y, hi, x), (x, lo, y))))
        else:
            (r1, r2), rt = rule.body, rule.head
            for x, ys in view.out_by_rel.get(r1, {}).items():
                for y in ys:
                    for z in view.out_by_rel.get(r2, {}).get(y, ()):
                        if z != x:
                            out.add(
                                GroundRule(
                                    rule.kind, ((x, r1, y), (y, r2, z), (x, rt, z))
                                )
                            )
    return sorted(out, key=lambda g: (_KIND_RANK[g.kind], g.triples))


# --- persistence ----------------------------------------------------------

_KIND_BY_TOKEN = {k.value: k for k in RuleKind}


def save_rules(path: str, ruleset: RuleSet, store: TripleStore) -> None:
    """One rule per line: kind, body rels, head rel, support, confidence, promotion."""
    rv = store.relation_vocab
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# promotion_threshold\t{ruleset.threshold!r}\n")
        for r in ruleset:
            body = ",".join(rv.name_of(b) for b in r.body)
            fh.write(
                f"{r.kind.value}\t{body}\t{rv.name_of(r.head)}\t"
                f"{r.support!r}\t{r.confidence!r}\t{r.promotion!r}\n"
            )


def load_rules(path: str, store: TripleStore) -> RuleSet:
    rv = store.relation_vocab
    rules: list[RuleCandidate] = []
    threshold = None
    try:
        fh = open(path, encoding="utf-8")
    except OSError as e:
        raise DataError(f"cannot read rules file {path}: {e}") from e
    with fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            if line.startswith("#"):
                parts = line[1:].split("\t")
                if len(parts) == 2 and parts[0].strip() == "promotion_threshold":
                    threshold = float(parts[1])
                continue
            parts = line.split("\t")
            if len(parts) != 6:
                raise DataError(f"{path}:{lineno}: expected 6 fields, got {len(parts)}")
            kind_tok, body_s, head_s, sup, conf, promo = parts
            kind = _KIND_BY_TOKEN.get(kind_tok)
            if kind is None:
                raise DataError(f"{path}:{lineno}: unknown rule kind {kind_tok!r}")
            try:
                body = tuple(rv.id_of(b) for b in body_s.split(","))
                head = rv.id_of(head_s)
            except KeyError as e:
                raise DataError(f"{path}:{lineno}: unknown relation {e.args[0]!r}") from None
            rules.append(
                RuleCandidate(
                    kind=kind,
                    body=body,
                    head=head,
                    support=float(sup),
                    confidence=float(conf),
                    promotion=float(promo),
                )
            )
    if threshold is None:
        threshold = min((r.promotion for r in rules), default=1.0)
    return RuleSet(rules=rules, threshold=threshold)


def save_ground_rules(path: str, grounds: list[GroundRule], store: TripleStore) -> None:
    """One ground rule per line: kind then constituent triples, head last."""
    ev, rv = store.entity_vocab, store.relation_vocab
    with open(path, "w", encoding="utf-8") as fh:
        for g in grounds:
            cells = [g.kind.value]
            for h, r, t in g.triples:
                cells.append(f"{ev.name_of(h)},{rv.name_of(r)},{ev.name_of(t)}")
            fh.write("\t".join(cells) + "\n")


def load_ground_rules(path: str, store: TripleStore) -> list[GroundRule]:
    ev, rv = store.entity_vocab, store.relation_vocab
    arity = {RuleKind.INFERENCE: 2, RuleKind.ANTI_SYMMETRY: 2, RuleKind.TRANSITIVITY2: 3}
    out: list[GroundRule] = []
    try:
        fh = open(path, encoding="utf-8")
    except OSError as e:
        raise DataError(f"cannot read ground rules file {path}: {e}") from e
    with fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t")
            kind = _KIND_BY_TOKEN.get(parts[0])
            if kind is None:
                raise DataError(f"{path}:{lineno}: unknown rule kind {parts[0]!r}")
            if len(parts) != 1 + arity[kind]:
                raise DataError(
                    f"{path}:{lineno}: expected {arity[kind]} triples for {parts[0]}"
                )
            triples = []
            for cell in parts[1:]:
                fields = cell.split(",")
                if len(fields) != 3:
                    raise DataError(f"{path}:{lineno}: malformed triple {cell!r}")
                try:
                    triples.append(
                        (ev.id_of(fields[0]), rv.id_of(fields[1]), ev.id_of(fields[2]))
                    )
                except KeyError as e:
                    raise DataError(
                        f"{path}:{lineno}: unknown name {e.args[0]!r}"
                    ) from None
            out.append(GroundRule(kind, tuple(triples)))
    return out
