"""Renormalization schemes for diagram sums.

A correlator's diagram expansion contains closed cycles of plain delta
edges; on the circle such a cycle is a delta-squared object and has no
distributional meaning.  A scheme assigns every cycle of length k a real
scale mu_k and substitutes the cycle product by mu_k times the open chain
over the same insertions -- one delta fewer -- uniformly at all radii:

* drop-loops keeps only tree diagrams (every mu_k = 0);
* a mu-family keeps looped diagrams with their assigned scales;
* the unitary dotted scheme is a mu-family plus the side-balance filter
  on dotted edges: a dotted contraction survives only when the insertions
  solid-connected to an end of the dotted line carry as many plus as minus
  exponential charges.

The filter side is ambiguous in the underlying construction (only "one
side" is specified); both ends are required to balance by default, and
``dotted_rule="either-side"`` switches to the laxer reading.  The choice
is logged once per evaluation.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from fractions import Fraction
from typing import Dict, List, Optional, Sequence, Tuple

from .algebra import SectorConfig
from .diagrams import Diagram, diagram_weight, enumerate_diagrams, loop_components
from .distributions import Coeff, Expression, Term, canonicalize
from .errors import MissingMu, StructuralViolation

logger = logging.getLogger(__name__)

_POLICIES = ("drop-loops", "mu", "unitary-dotted")
_RULES = ("both-sides", "either-side")


def _frac(x) -> Fraction:
    if isinstance(x, float):
        return Fraction(str(x))
    return Fraction(x)


@dataclass(frozen=True)
class RenormScheme:
    """A loop-renormalization policy over a fixed sector."""

    policy: str
    sector: SectorConfig
    mu: Tuple[Tuple[int, Fraction], ...] = ()
    default: Optional[Fraction] = None
    dotted_rule: str = "both-sides"

    def __post_init__(self):
        if self.policy not in _POLICIES:
            raise ValueError(f"unknown policy {self.policy!r}")
        if self.dotted_rule not in _RULES:
            raise ValueError(f"unknown dotted rule {self.dotted_rule!r}")
        if self.policy == "unitary-dotted" and not self.sector.unitary:
            raise ValueError("the dotted scheme needs the unitary sector")
        for k, _v in self.mu:
            if k < 2:
                raise ValueError("loop scales start at length 2")

    @classmethod
    def drop_loops(cls, sector: SectorConfig) -> "RenormScheme":
        return cls("drop-loops", sector)

    @classmethod
    def mu_family(cls, sector: SectorConfig, entries: Optional[Dict[int, object]] = None,
                  default: Optional[object] = None) -> "RenormScheme":
        mu = tuple(sorted((int(k), _frac(v)) for k, v in (entries or {}).items()))
        return cls("mu", sector, mu,
                   None if default is None else _frac(default))

    @classmethod
    def unitary_dotted(cls, sector: SectorConfig,
                       entries: Optional[Dict[int, object]] = None,
                       default: Optional[object] = None,
                       dotted_rule: str = "both-sides") -> "RenormScheme":
        mu = tuple(sorted((int(k), _frac(v)) for k, v in (entries or {}).items()))
        return cls("unitary-dotted", sector, mu,
                   None if default is None else _frac(default), dotted_rule)

    def mu_value(self, k: int) -> Fraction:
        if self.policy == "drop-loops":
            return Fraction(0)
        for kk, v in self.mu:
            if kk == k:
                return v
        if self.default is not None:
            return self.default
        raise MissingMu(f"no scale assigned to loops of length {k}")


@dataclass(frozen=True)
class CurrentWord:
    """An ordered product of currents with one radius per insertion."""

    names: Tuple[str, ...]
    radii: Tuple[Fraction, ...]

    def __post_init__(self):
        if len(self.names) != len(self.radii):
            raise ValueError("one radius per insertion")
        for r in self.radii:
            if not (0 < r <= 1):
                raise ValueError("radii must lie in (0, 1]")

    @classmethod
    def from_names(cls, names: Sequence[str], radius=1) -> "CurrentWord":
        names = tuple(names)
        if isinstance(radius, (list, tuple)):
            radii = tuple(_frac(r) for r in radius)
        else:
            radii = (_frac(radius),) * len(names)
        return cls(names, radii)


# ---------------------------------------------------------------------------
# loop substitution
# ---------------------------------------------------------------------------


def renormalize_loop(vertices: Sequence[int], mu_k) -> Tuple[Coeff, Tuple]:
    """The replacement of a closed k-cycle over the given insertions: the
    scale mu_k together with the open delta chain (one factor fewer)."""
    verts = sorted(vertices)
    if len(verts) < 2:
        raise StructuralViolation("a loop has at least two insertions")
    chain = tuple((verts[n], verts[n + 1], 0) for n in range(len(verts) - 1))
    return Coeff.complex_rat(_frac(mu_k)), chain


def renormalize_diagram(diagram: Diagram, cfg: SectorConfig,
                        scheme: RenormScheme) -> List[Term]:
    """Weight terms of one diagram with every delta cycle substituted."""
    cycles = [c for c in loop_components(diagram) if c["betti"] >= 1]
    for c in cycles:
        if c["betti"] > 1:
            raise StructuralViolation(
                "a contraction component acquired two independent cycles")
    factor = Coeff.unit()
    removed: List[Tuple[int, int, int]] = []
    chain: List[Tuple[int, int, int]] = []
    for c in cycles:
        mu_c, chain_c = renormalize_loop(c["cycle_vertices"],
                                         scheme.mu_value(c["cycle"]))
        factor = factor * mu_c
        chain.extend(chain_c)
        removed.extend((i, j, 0) for (i, j) in c["cycle_pairs"])
    if factor.is_zero:
        return []
    out = []
    for t in diagram_weight(diagram, cfg):
        deltas = list(t.deltas)
        for tok in removed:
            deltas.remove(tok)
        out.append(replace(t, coeff=t.coeff * factor,
                           deltas=tuple(sorted(deltas + chain))))
    return out


# ---------------------------------------------------------------------------
# dotted filter
# ---------------------------------------------------------------------------


def dotted_filter(diagram: Diagram, rule: str = "both-sides") -> bool:
    """Keep or drop a diagram according to the charge balance around its
    dotted edges.  A side of a dotted edge is everything solid-connected
    to that end; it must carry equally many +1 and -1 exponential charges."""
    dotted = [e for e in diagram.edges if e.kind == "dot"]
    if not dotted:
        return True
    parent: Dict[int, int] = {}

    def find(v):
        parent.setdefault(v, v)
        while parent[v] != v:
            parent[v] = parent[parent[v]]
            v = parent[v]
        return v

    def union(v, w):
        parent[find(v)] = find(w)

    for ch in diagram.choices:
        find(ch.position)
    for e in diagram.edges:
        if e.kind != "dot":
            union(e.source, e.target)

    charge_of = {ch.position: (ch.charge or 0) for ch in diagram.choices}
    side_sum: Dict[int, int] = {}
    for pos, q in charge_of.items():
        root = find(pos)
        side_sum[root] = side_sum.get(root, 0) + q

    for e in dotted:
        bal_src = side_sum.get(find(e.source), 0) == 0
        bal_dst = side_sum.get(find(e.target), 0) == 0
        keep = (bal_src and bal_dst) if rule == "both-sides" else (bal_src or bal_dst)
        if not keep:
            return False
    return True


# ---------------------------------------------------------------------------
# the full pipeline
# ---------------------------------------------------------------------------


_CACHE: Dict[Tuple[CurrentWord, RenormScheme], Expression] = {}


def evaluate_correlator(word: CurrentWord, scheme: RenormScheme) -> Expression:
    """Renormalized correlator of a current word: enumerate contractions,
    filter dotted edges (dotted scheme), substitute loops, canonicalize.
    Results are cached per (word, scheme); treat them as immutable."""
    key = (word, scheme)
    if key in _CACHE:
        return _CACHE[key]
    cfg = scheme.sector
    radii = {i: r for i, r in enumerate(word.radii) if r != 1}
    if scheme.policy == "unitary-dotted":
        logger.info("dotted filter active, rule=%s", scheme.dotted_rule)
    terms: List[Term] = []
    if cfg.realization == "K" and sum(
            +1 if nm == "J+" else -1 if nm == "J-" else 0
            for nm in word.names) != 0:
        logger.debug("word %s vanishes by charge balance", word.names)
    else:
        for d in enumerate_diagrams(word.names, cfg):
            if scheme.policy == "unitary-dotted" and not dotted_filter(d, scheme.dotted_rule):
                continue
            terms.extend(renormalize_diagram(d, cfg, scheme))
    expr = canonicalize(Expression(terms, cfg.realization, radii))
    _CACHE[key] = expr
    return expr
