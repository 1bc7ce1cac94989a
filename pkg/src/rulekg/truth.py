"""Soft truth values for triples and ground rules, product t-norm composition.

A triple (h, r, t) scores 1 - |h + r - t|_1 / (3 sqrt(d)); with every entity
and relation vector inside the L2 unit ball the L1 residual cannot exceed
3 sqrt(d), so truth values stay in [0, 1] without clipping. Rule truths
compose constituent triple truths with the product t-norm: a rule body ^ head
implication evaluates to I_b * I_h - I_b + 1, i.e. material implication under
product conjunction and probabilistic-sum disjunction.

All functions accept either numpy arrays or torch tensors (only +, -, abs and
sum are used); the closed-form gradients at the bottom are numpy-only and are
cross-checked against finite differences in the test suite.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .kg import Triple


class Embeddings:
    """Row lookup over an entity matrix H (N_e x d) and relation matrix G (N_r x d)."""

    def __init__(self, entities, relations):
        if entities.shape[1] != relations.shape[1]:
            raise ValueError(
                f"entity dim {entities.shape[1]} != relation dim {relations.shape[1]}"
            )
        self.entities = entities
        self.relations = relations
        self.dim = int(entities.shape[1])

    def entity(self, i: int):
        return self.entities[i]

    def relation(self, k: int):
        return self.relations[k]


# --- formulas ---------------------------------------------------------------


@dataclass(frozen=True)
class Atom:
    triple: Triple


@dataclass(frozen=True)
class InferenceFormula:
    body: Triple
    head: Triple


@dataclass(frozen=True)
class AntiSymmetryFormula:
    fwd: Triple  # the body side of the grounded equivalence
    bwd: Triple


@dataclass(frozen=True)
class TransitivityFormula:
    body1: Triple
    body2: Triple
    head: Triple


Formula = Atom | InferenceFormula | AntiSymmetryFormula | TransitivityFormula


def atoms_of(formula: Formula) -> tuple[Triple, ...]:
    if isinstance(formula, Atom):
        return (formula.triple,)
    if isinstance(formula, InferenceFormula):
        return (formula.body, formula.head)
    if isinstance(formula, AntiSymmetryFormula):
        return (formula.fwd, formula.bwd)
    if isinstance(formula, TransitivityFormula):
        return (formula.body1, formula.body2, formula.head)
    raise TypeError(f"not a formula: {formula!r}")


# --- t-norm connectives -----------------------------------------------------


def conj(a, b):
    return a * b


def disj(a, b):
    return a + b - a * b


def neg(a):
    return 1 - a


# --- truth values -----------------------------------------------------------


def residual(e_h, r, e_t):
    if len(e_h) != len(r) or len(e_h) != len(e_t):
        raise ValueError("embedding dimension mismatch")
    return e_h + r - e_t


def triple_truth_vectors(e_h, r, e_t):
    d = len(e_h)
    return 1.0 - abs(residual(e_h, r, e_t)).sum() / (3.0 * math.sqrt(d))


def triple_truth(emb: Embeddings, triple: Triple):
    h, r, t = triple
    return triple_truth_vectors(emb.entity(h), emb.relation(r), emb.entity(t))


def implication_truth(body, head):
    """I(body => head) = I_b * I_h - I_b + 1; vacuously 1 at I_b = 0."""
    return body * head - body + 1


def transitivity_truth(body1, body2, head):
    b = body1 * body2
    return b * head - b + 1


def rule_truth(emb: Embeddings, formula: Formula):
    if isinstance(formula, Atom):
        return triple_truth(emb, formula.triple)
    if isinstance(formula, InferenceFormula):
        return implication_truth(
            triple_truth(emb, formula.body), triple_truth(emb, formula.head)
        )
    if isinstance(formula, AntiSymmetryFormula):
        return implication_truth(
            triple_truth(emb, formula.fwd), triple_truth(emb, formula.bwd)
        )
    if isinstance(formula, TransitivityFormula):
        return transitivity_truth(
            triple_truth(emb, formula.body1),
            triple_truth(emb, formula.body2),
            triple_truth(emb, formula.head),
        )
    raise TypeError(f"not a formula: {formula!r}")


# alias: a formula's truth, atomic or complex
formula_truth = rule_truth


# --- closed-form gradients (numpy) ------------------------------------------

# Key for a gradient slot: ("e", entity_id) or ("r", relation_id).
GradientMap = dict[tuple[str, int], np.ndarray]


def _atom_grads(emb: Embeddings, triple: Triple, coeff: float, out: GradientMap):
    """Accumulate coeff * dI/dv for each vector v of one atom.

    dI/de_h = -s * sign(rho), dI/dr = -s * sign(rho), dI/de_t = +s * sign(rho)
    with rho = e_h + r - e_t, s = 1/(3 sqrt(d)) and sign(0) := 0.
    """
    h, r, t = triple
    rho = np.asarray(emb.entity(h) + emb.relation(r) - emb.entity(t), dtype=float)
    s = 1.0 / (3.0 * math.sqrt(emb.dim))
    g = -s * np.sign(rho)
    for key, val in ((("e", h), g), (("r", r), g), (("e", t), -g)):
        acc = out.get(key)
        if acc is None:
            out[key] = coeff * val.copy()
        else:
            acc += coeff * val
    return out


def truth_gradient(emb: Embeddings, formula: Formula) -> GradientMap:
    """Gradient of the formula's truth w.r.t. every constituent vector.

    Shared vectors (an entity or relation appearing in several atoms)
    accumulate. Product rule through the rule compositions:
      implication   dI/dI_b = I_h - 1,            dI/dI_h = I_b
      transitivity  dI/dI_1 = I_2 (I_3 - 1),      dI/dI_2 = I_1 (I_3 - 1),
                    dI/dI_3 = I_1 I_2
    """
    out: GradientMap = {}
    if isinstance(formula, Atom):
        return _atom_grads(emb, formula.triple, 1.0, out)
    if isinstance(formula, (InferenceFormula, AntiSymmetryFormula)):
        body, head = atoms_of(formula)
        i_b = float(triple_truth(emb, body))
        i_h = float(triple_truth(emb, head))
        _atom_grads(emb, body, i_h - 1.0, out)
        _atom_grads(emb, head, i_b, out)
        return out
    if isinstance(formula, TransitivityFormula):
        b1, b2, head = atoms_of(formula)
        i1 = float(triple_truth(emb, b1))
        i2 = float(triple_truth(emb, b2))
        i3 = float(triple_truth(emb, head))
        _atom_grads(emb, b1, i2 * (i3 - 1.0), out)
        _atom_grads(emb, b2, i1 * (i3 - 1.0), out)
        _atom_grads(emb, head, i1 * i2, out)
        return out
    raise TypeError(f"not a formula: {formula!r}")
