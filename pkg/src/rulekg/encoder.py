"""Rule-enhanced graph attention encoder.

Entities aggregate their in-flowing training triples (and, from depth 2 on,
synthetic auxiliary edges standing in for 2- and 3-hop in-paths, whose
relation vector is the sum of the path's relation embeddings). Each edge gets

  * a neural weight: softmax over the receiving entity's whole in-neighborhood
    of LeakyReLU(w2 . c), where c = W1 [h_head ; h_tail ; g_rel], and
  * a logic weight: product over accepted rules whose head instantiates to the
    edge's triple of max(0, ln(promotion) / ln(base)), 0 when no rule applies.

The two weights are summed without renormalization, messages are the weighted
feature vectors, and a LeakyReLU follows the aggregation. Relations are
updated once per layer by a shared linear map. The final entity matrix is
W_E H_input + H_last_layer; decoder-facing vectors are radially projected
onto the L2 unit ball so downstream truth values stay in [0, 1].

Everything is float64 torch on CPU; forward passes are deterministic given
fixed inputs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import torch

from .errors import ConfigError
from .kg import NeighborhoodIndex, Triple, TripleStore
from .mining import RuleKind, RuleSet

DTYPE = torch.float64


@dataclass
class EncoderParams:
    w1: torch.Tensor  # (d, 3d) feature transform of [head; tail; relation]
    w2: torch.Tensor  # (d,) attention scorer, feature -> scalar
    we: torch.Tensor  # (d, d) residual transform of the initial embeddings
    wr: torch.Tensor  # (d, d) per-layer relation update
    slope: float = 0.2  # LeakyReLU negative slope

    def tensors(self) -> dict[str, torch.Tensor]:
        return {"w1": self.w1, "w2": self.w2, "we": self.we, "wr": self.wr}


class LogicWeightTable:
    """Per-triple logic attention weights derived from rule promotion degrees."""

    def __init__(self, weights: dict[Triple, float], base: float):
        if base <= 1.0:
            raise ConfigError(f"logic attention base must exceed 1, got {base}")
        self.weights = weights
        self.base = base

    @classmethod
    def zero(cls, base: float = math.e) -> "LogicWeightTable":
        return cls({}, base)

    def weight(self, i: int, k: int, j: int) -> float:
        return self.weights.get((i, k, j), 0.0)


def logic_attention(table: LogicWeightTable, i: int, k: int, j: int) -> float:
    return table.weight(i, k, j)


def build_logic_table(
    ruleset: RuleSet | None,
    store: TripleStore,
    index: NeighborhoodIndex,
    base: float = math.e,
) -> LogicWeightTable:
    """Precompute the logic weight of every training triple.

    A rule supports triple (i, k, j) when its head relation is k and its body
    instantiates in the training split consistently with i and j. Each
    supporting rule contributes one factor max(0, ln(promotion)/ln(base));
    triples with no supporting rule are absent (weight 0).
    """
    if ruleset is None or len(ruleset) == 0:
        return LogicWeightTable.zero(base)

    train = set(index.triples)
    # out_by_rel[r][h] = tails, for the transitivity body check
    out_by_rel: dict[int, dict[int, list[int]]] = {}
    for h, r, t in index.triples:
        out_by_rel.setdefault(r, {}).setdefault(h, []).append(t)

    by_head: dict[int, list[tuple[RuleKind, tuple[int, ...], float]]] = {}
    for rule in ruleset:
        entries = [(rule.head, rule.kind, rule.body, rule.promotion)]
        if rule.kind is RuleKind.ANTI_SYMMETRY:
            # undirected rule: either relation can play the head role
            entries.append((rule.body[0], rule.kind, (rule.head,), rule.promotion))
        for head_rel, kind, body, promo in entries:
            by_head.setdefault(head_rel, []).append((kind, body, promo))

    log_base = math.log(base)
    weights: dict[Triple, float] = {}
    for i, k, j in index.triples:
        prod = None
        for kind, body, promo in by_head.get(k, ()):
            if kind is RuleKind.INFERENCE:
                applies = (i, body[0], j) in train
            elif kind is RuleKind.ANTI_SYMMETRY:
                applies = (j, body[0], i) in train
            else:
                r1, r2 = body
                applies = False
                for m in out_by_rel.get(r1, {}).get(i, ()):
                    if m != i and m != j and (m, r2, j) in train:
                        applies = True
                        break
            if applies:
                factor = max(0.0, math.log(promo) / log_base)
                prod = factor if prod is None else prod * factor
        if prod is not None:
            weights[(i, k, j)] = prod
    return LogicWeightTable(weights, base)


# --- graph tensors -----------------------------------------------------------


class _Hop:
    """Edges of one hop length, sorted by destination, with a CSR pointer."""

    def __init__(self, rows: list[tuple], n_entities: int, n_rels: int, logic: list[float]):
        # rows: (dst, src, r1[, r2[, r3]]) already sorted by dst
        self.n = len(rows)
        if rows:
            arr = np.asarray(rows, dtype=np.int64)
        else:
            arr = np.zeros((0, 3), dtype=np.int64)
        self.dst = torch.from_numpy(arr[:, 0].copy())
        self.src = torch.from_numpy(arr[:, 1].copy())
        self.rels = [torch.from_numpy(arr[:, c].copy()) for c in range(2, arr.shape[1])]
        self.logic = torch.tensor(logic, dtype=DTYPE) if logic else torch.zeros(self.n, dtype=DTYPE)
        ptr = np.zeros(n_entities + 1, dtype=np.int64)
        np.add.at(ptr[1:], arr[:, 0], 1)
        self.ptr = np.cumsum(ptr)

    def rel_vectors(self, G: torch.Tensor, sel: torch.Tensor | None = None) -> torch.Tensor:
        rels = self.rels if sel is None else [r[sel] for r in self.rels]
        out = G[rels[0]]
        for r in rels[1:]:
            out = out + G[r]
        return out

    def edge_indices_into(self, entities: np.ndarray) -> np.ndarray:
        spans = [np.arange(self.ptr[e], self.ptr[e + 1]) for e in entities]
        if not spans:
            return np.zeros(0, dtype=np.int64)
        return np.concatenate(spans)


class GraphTensors:
    """Static per-run encoding structures: 1-hop edges plus capped aux edges."""

    def __init__(
        self,
        store: TripleStore,
        index: NeighborhoodIndex,
        depth: int,
        neighbor_cap: int,
        logic_table: LogicWeightTable | None = None,
    ):
        if depth not in (1, 2, 3):
            raise ConfigError(f"depth must be 1, 2 or 3, got {depth}")
        self.n_entities = store.n_entities
        self.n_relations = store.n_relations
        self.depth = depth
        self.logic_table = logic_table or LogicWeightTable.zero()

        rel_freq = [0] * store.n_relations
        for _, r, _ in index.triples:
            rel_freq[r] += 1

        one_hop = sorted((t, h, r) for h, r, t in index.triples)
        logic = [self.logic_table.weight(h, r, t) for t, h, r in one_hop]
        self.hops: list[_Hop] = [
            _Hop(one_hop, self.n_entities, self.n_relations, logic)
        ]
        if depth >= 2:
            self.hops.append(
                _Hop(
                    self._aux_paths(index, 2, neighbor_cap, rel_freq),
                    self.n_entities,
                    self.n_relations,
                    [],
                )
            )
        if depth >= 3:
            self.hops.append(
                _Hop(
                    self._aux_paths(index, 3, neighbor_cap, rel_freq),
                    self.n_entities,
                    self.n_relations,
                    [],
                )
            )

    @staticmethod
    def _aux_paths(
        index: NeighborhoodIndex, length: int, cap: int, rel_freq: list[int]
    ) -> list[tuple]:
        """Distinct in-paths of the given length per entity, capped.

        Overflow keeps paths with the highest summed relation frequency, then
        the lexicographically smallest relation ids and source. Path nodes must
        be pairwise distinct; an auxiliary edge never duplicates (src, rels, dst).
        """
        rows = []
        n = len(index.in_nbrs)
        for z in range(n):
            found: set[tuple] = set()
            if length == 2:
                for r2, y in index.in_nbrs[z]:
                    if y == z:
                        continue
                    for r1, x in index.in_nbrs[y]:
                        if x == y or x == z:
                            continue
                        found.add((x, r1, r2))
            else:
                for r3, y2 in index.in_nbrs[z]:
                    if y2 == z:
                        continue
                    for r2, y1 in index.in_nbrs[y2]:
                        if y1 in (y2, z):
                            continue
                        for r1, x in index.in_nbrs[y1]:
                            if x in (y1, y2, z):
                                continue
                            found.add((x, r1, r2, r3))
            if not found:
                continue
            ranked = sorted(
                found,
                key=lambda p: (-sum(rel_freq[r] for r in p[1:]), p[1:], p[0]),
            )
            for p in ranked[:cap]:
                rows.append((z, p[0]) + tuple(p[1:]))
        rows.sort()
        return rows

    def hop_lists(self, layer: int) -> list[_Hop]:
        """Edge groups active at a given layer (1-hop plus aux of length <= layer)."""
        return self.hops[: min(layer, len(self.hops))]


# --- scalar operation contracts ----------------------------------------------


def triple_feature(params: EncoderParams, h_i, h_j, g_k) -> torch.Tensor:
    """c = W1 [h_head ; h_tail ; g_rel]."""
    if len(h_i) + len(h_j) + len(g_k) != params.w1.shape[1]:
        raise ValueError("feature dimension mismatch")
    return params.w1 @ torch.cat([h_i, h_j, g_k])


def neural_attention(params: EncoderParams, features: torch.Tensor) -> torch.Tensor:
    """Softmax over one neighborhood of LeakyReLU(w2 . c), rows = triples."""
    if features.shape[0] == 0:
        raise ValueError("neural attention over an empty neighborhood")
    b = torch.nn.functional.leaky_relu(features @ params.w2, params.slope)
    return torch.softmax(b, dim=0)


def aggregate_entity(weights: torch.Tensor, features: torch.Tensor) -> torch.Tensor:
    """Weighted sum of neighborhood features; combined weights, no renorm."""
    if weights.shape[0] == 0 or float(weights.abs().max()) == 0.0:
        raise ValueError("aggregation requires at least one nonzero weight")
    return (weights.unsqueeze(1) * features).sum(dim=0)


def residual_combine(params: EncoderParams, h_init: torch.Tensor, h_final: torch.Tensor) -> torch.Tensor:
    """H'' = W_E H_init + H_final_layer (row-major matrices)."""
    return h_init @ params.we.T + h_final


def row_project(m: torch.Tensor) -> torch.Tensor:
    """Radial projection of every row onto the L2 unit ball."""
    norms = m.norm(dim=1, keepdim=True)
    return m / torch.clamp(norms, min=1.0)


# --- propagation ---------------------------------------------------------------


def _needed_sets(graph: GraphTensors, targets: np.ndarray, depth: int) -> list[np.ndarray]:
    """needed[layer] = entities whose representation layer must produce."""
    needed = [None] * (depth + 1)
    needed[depth] = np.unique(targets)
    for layer in range(depth, 0, -1):
        ents = set(needed[layer].tolist())
        for hop in graph.hop_lists(layer):
            sel = hop.edge_indices_into(needed[layer])
            if len(sel):
                ents.update(hop.src.numpy()[sel].tolist())
        needed[layer - 1] = np.asarray(sorted(ents), dtype=np.int64)
    return needed


def propagate(
    params: EncoderParams,
    graph: GraphTensors,
    H: torch.Tensor,
    G: torch.Tensor,
    depth: int | None = None,
    targets=None,
    training: bool = False,
    dropout: float = 0.0,
    generator: torch.Generator | None = None,
    collect_stats: bool = False,
):
    """Run the attention layers; returns (H_last_layer, G_last, stats).

    With ``targets`` given, only the rows needed to make those entities exact
    are computed (the loss reads batch entities only); rows outside the needed
    sets are zero. Entities with an empty in-neighborhood always aggregate to
    the zero vector and are represented purely by the residual path.
    """
    depth = graph.depth if depth is None else depth
    n = graph.n_entities
    needed = _needed_sets(graph, np.asarray(targets, dtype=np.int64), depth) if targets is not None else None

    stats = {"attn_dev": 0.0, "edges_per_layer": []} if collect_stats else None
    h_cur, g_cur = H, G
    for layer in range(1, depth + 1):
        srcs, dsts, gvecs, logics = [], [], [], []
        for hop in graph.hop_lists(layer):
            if hop.n == 0:
                continue
            if needed is None:
                sel = None
                srcs.append(hop.src)
                dsts.append(hop.dst)
                logics.append(hop.logic)
            else:
                idx = hop.edge_indices_into(needed[layer])
                if len(idx) == 0:
                    continue
                sel = torch.from_numpy(idx)
                srcs.append(hop.src[sel])
                dsts.append(hop.dst[sel])
                logics.append(hop.logic[sel])
            gvecs.append(hop.rel_vectors(g_cur, sel))
        if not srcs:
            h_cur = torch.zeros_like(H)
            g_cur = g_cur @ params.wr.T
            if collect_stats:
                stats["edges_per_layer"].append(0)
            continue
        src = torch.cat(srcs)
        dst = torch.cat(dsts)
        gvec = torch.cat(gvecs)
        logic_w = torch.cat(logics)

        c = torch.cat([h_cur[src], h_cur[dst], gvec], dim=1) @ params.w1.T
        b = torch.nn.functional.leaky_relu(c @ params.w2, params.slope)
        shift = torch.full((n,), -math.inf, dtype=DTYPE).scatter_reduce(
            0, dst, b.detach(), reduce="amax", include_self=True
        )
        eb = torch.exp(b - shift[dst])
        denom = torch.zeros(n, dtype=DTYPE).index_add(0, dst, eb)
        alpha_n = eb / denom[dst]
        weights = alpha_n + logic_w
        if collect_stats:
            sums = torch.zeros(n, dtype=DTYPE).index_add(0, dst, alpha_n)
            occupied = torch.zeros(n, dtype=torch.bool)
            occupied[dst] = True
            if bool(occupied.any()):
                dev = float((sums[occupied] - 1.0).abs().max())
                stats["attn_dev"] = max(stats["attn_dev"], dev)
            stats["edges_per_layer"].append(int(len(dst)))
        if training and dropout > 0.0:
            keep = (
                torch.rand(len(weights), generator=generator, dtype=DTYPE) >= dropout
            ).to(DTYPE)
            weights = weights * keep / (1.0 - dropout)
        msg = torch.zeros(n, H.shape[1], dtype=DTYPE).index_add(
            0, dst, weights.unsqueeze(1) * c
        )
        h_cur = torch.nn.functional.leaky_relu(msg, params.slope)
        g_cur = g_cur @ params.wr.T
    return h_cur, g_cur, stats


def encode(
    params: EncoderParams,
    graph: GraphTensors,
    H: torch.Tensor,
    G: torch.Tensor,
    targets=None,
    training: bool = False,
    dropout: float = 0.0,
    generator: torch.Generator | None = None,
    collect_stats: bool = False,
):
    """Full encoder: propagate, residual-combine, project to the unit ball.

    Returns (entity_vectors, relation_vectors, stats); the returned vectors are
    what the decoder/truth functions consume.
    """
    h_last, g_last, stats = propagate(
        params,
        graph,
        H,
        G,
        targets=targets,
        training=training,
        dropout=dropout,
        generator=generator,
        collect_stats=collect_stats,
    )
    h_out = residual_combine(params, H, h_last)
    return row_project(h_out), row_project(g_last), stats
