"""Contraction-diagram enumeration and weights for current correlators.

A word of composite currents is expanded vertex by vertex: every insertion
picks one summand of its current (a b-stub term, an a-stub term, a derivative
term, a Heisenberg term, or -- for the neutral currents -- a bare a/b stub or
the consuming quadratic terminal).  The a/b letters are then contracted:

* an a-stub must hit something strictly to its right, a b-stub strictly to
  its left (otherwise the letter reaches the vacuum and the diagram dies);
* hitting an exponential leaves it in place and emits a plain delta edge;
* hitting a terminal consumes it and emits a delta' edge (at most one hit);
* in the unitary sector an a-stub may annihilate a later b-stub, emitting a
  dotted edge (the inverse-sequence pairing D, plus the zero-mode constant
  1/(2 xi0) in the A realization).

Heisenberg insertions pair among themselves in word order or stay unpaired
(a factor of the momentum p); every pair is the wavy kernel plus a delta'
counterterm.  Unconsumed terminals pair by Isserlis' theorem through the
second kernel derivative, or radiate against one exponential charge through
the first.  Derivative terms are carried as pending d/du marks on the final
token product, expanded during canonicalization.

All edge coefficients are taken from :func:`loopcorr.algebra.primitive_commutator`
so the sign conventions live in exactly one place.
"""

from __future__ import annotations

import itertools
import logging
from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, Iterator, List, Optional, Sequence, Set, Tuple

from .algebra import SectorConfig, current_def, primitive_commutator
from .distributions import Coeff, Expression, Term
from .errors import RealizationMismatch, StructuralViolation

logger = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# vertex structure
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class VertexChoice:
    """One summand of a current at a fixed insertion slot."""

    position: int
    current: str
    coeff: Coeff
    charge: Optional[int] = None   # exponential charge; None = no exponential
    stub: Optional[str] = None     # "a" | "b" | None
    terminal: bool = False
    rho: bool = False
    deriv: bool = False            # exponential carries an angle derivative


@dataclass(frozen=True)
class Edge:
    kind: str     # "a" | "b" | "dot"
    source: int
    target: int
    into: str     # "exp" | "terminal" | "stub"


@dataclass(frozen=True)
class Diagram:
    word: Tuple[str, ...]
    choices: Tuple[VertexChoice, ...]
    edges: Tuple[Edge, ...]
    rho_pairs: Tuple[Tuple[int, int], ...] = ()
    rho_singles: Tuple[int, ...] = ()


_EXP_LETTERS = {"alpha+", "alpha-", "e+", "e-"}
_DERIV_LETTERS = {"dalpha+": "alpha+", "dalpha-": "alpha-",
                  "de+": "e+", "de-": "e-"}
_TERMINALS = {"alpha-dalpha+", "e-de+"}
_CHARGE = {"alpha+": 1, "alpha-": -1, "e+": 1, "e-": -1}


def vertex_choices(name: str, position: int, cfg: SectorConfig) -> Tuple[VertexChoice, ...]:
    """The summands of a current as structural vertex choices.  The h letter
    splits into its a and b halves here."""
    d = current_def(name)
    if d.realization != cfg.realization:
        raise RealizationMismatch(
            f"current {name} lives in realization {d.realization}, "
            f"but the configuration says {cfg.realization}")
    out: List[VertexChoice] = []
    for coeff, letters in d.terms:
        if letters == ("h",):
            half = coeff.scale(Fraction(1, 2))
            out.append(VertexChoice(position, name, half, stub="a"))
            out.append(VertexChoice(position, name, half, stub="b"))
        elif len(letters) == 1 and letters[0] in _TERMINALS:
            out.append(VertexChoice(position, name, coeff, terminal=True))
        elif len(letters) == 1 and letters[0] in _DERIV_LETTERS:
            base = _DERIV_LETTERS[letters[0]]
            out.append(VertexChoice(position, name, coeff,
                                    charge=_CHARGE[base], deriv=True))
        elif len(letters) == 2 and letters[0] == "b" and letters[1] in _EXP_LETTERS:
            out.append(VertexChoice(position, name, coeff,
                                    charge=_CHARGE[letters[1]], stub="b"))
        elif len(letters) == 2 and letters[1] == "a" and letters[0] in _EXP_LETTERS:
            out.append(VertexChoice(position, name, coeff,
                                    charge=_CHARGE[letters[0]], stub="a"))
        elif len(letters) == 2 and letters[0] == "rho" and letters[1] in _EXP_LETTERS:
            out.append(VertexChoice(position, name, coeff,
                                    charge=_CHARGE[letters[1]], rho=True))
        else:
            raise StructuralViolation(f"unclassifiable current term {letters}")
    return tuple(out)


# ---------------------------------------------------------------------------
# enumeration
# ---------------------------------------------------------------------------


def _resolve_stubs(choices: Sequence[VertexChoice], cfg: SectorConfig
                   ) -> Iterator[Tuple[Edge, ...]]:
    """All complete stub resolutions for a fixed choice of vertex terms."""
    n = len(choices)

    def rec(s: int, consumed: Set[int], hits: Set[int], edges: List[Edge]):
        if s == n:
            yield tuple(edges)
            return
        ch = choices[s]
        if ch.stub is None or s in consumed:
            yield from rec(s + 1, consumed, hits, edges)
            return
        if ch.stub == "a":
            targets = range(s + 1, n)
        else:
            targets = range(s - 1, -1, -1)
        for t in targets:
            tc = choices[t]
            if tc.charge is not None:
                edges.append(Edge(ch.stub, s, t, "exp"))
                yield from rec(s + 1, consumed, hits, edges)
                edges.pop()
            if tc.terminal and t not in hits:
                edges.append(Edge(ch.stub, s, t, "terminal"))
                hits.add(t)
                yield from rec(s + 1, consumed, hits, edges)
                hits.discard(t)
                edges.pop()
            if (ch.stub == "a" and cfg.unitary and tc.stub == "b"
                    and t not in consumed):
                edges.append(Edge("dot", s, t, "stub"))
                consumed.add(t)
                yield from rec(s + 1, consumed, hits, edges)
                consumed.discard(t)
                edges.pop()
        # a stub with no accepted target annihilates the diagram: no yield

    yield from rec(0, set(), set(), [])


def _rho_matchings(positions: Sequence[int]
                   ) -> Iterator[Tuple[Tuple[Tuple[int, int], ...], Tuple[int, ...]]]:
    if not positions:
        yield (), ()
        return
    first, rest = positions[0], list(positions[1:])
    for pairs, singles in _rho_matchings(rest):
        yield pairs, (first,) + singles
    for k in range(len(rest)):
        partner = rest[k]
        remaining = rest[:k] + rest[k + 1:]
        for pairs, singles in _rho_matchings(remaining):
            yield ((first, partner),) + pairs, singles


def enumerate_diagrams(word: Sequence[str], cfg: SectorConfig,
                       with_rho: bool = True) -> Iterator[Diagram]:
    """All contraction diagrams of a current word.  ``with_rho=False`` leaves
    Heisenberg insertions unmatched (used by the structural census, where
    wavy pairs play no role)."""
    word = tuple(word)
    per_vertex = [vertex_choices(nm, k, cfg) for k, nm in enumerate(word)]
    for combo in itertools.product(*per_vertex):
        rho_pos = [c.position for c in combo if c.rho]
        for edges in _resolve_stubs(combo, cfg):
            if not with_rho:
                yield Diagram(word, combo, edges)
                continue
            for pairs, singles in _rho_matchings(rho_pos):
                yield Diagram(word, combo, edges, pairs, singles)


# ---------------------------------------------------------------------------
# weights
# ---------------------------------------------------------------------------


def _edge_parts(edge: Edge, choices: Sequence[VertexChoice], cfg: SectorConfig
                ) -> List[Tuple[Coeff, Tuple, Tuple]]:
    """(coeff, delta tokens, dotted tokens) alternatives for one edge."""
    tc = choices[edge.target]
    if edge.into == "exp":
        letter = {("K", 1): "alpha+", ("K", -1): "alpha-",
                  ("A", 1): "e+", ("A", -1): "e-"}[(cfg.realization, tc.charge)]
    elif edge.into == "terminal":
        letter = "alpha-dalpha+" if cfg.realization == "K" else "e-de+"
    else:
        letter = "b"
    parts = primitive_commutator("a" if edge.kind == "dot" else edge.kind,
                                 letter, edge.source, edge.target, cfg)
    sign = -1 if edge.kind == "b" else 1
    out = []
    for part in parts:
        if part.letters and edge.into != "exp":
            raise StructuralViolation("unexpected surviving letters on an edge")
        out.append((part.coeff.scale(sign), part.deltas, part.dots))
    return out


def _norm_ker(tag: str, k: int, i: int, j: int) -> Tuple[Tuple[str, int, int, int], int]:
    if i <= j:
        return (tag, k, i, j), 1
    return (tag, k, j, i), (-1) ** k


def _terminal_branches(unhit: Sequence[int], charges: Sequence[Tuple[int, int]],
                       realization: str) -> List[Tuple[Coeff, Tuple]]:
    """Isserlis expansion of unconsumed terminals: (coeff, kernel tokens)."""
    tag = "NK" if realization == "K" else "NA"
    pair_sign = 1 if realization == "K" else -1
    if not unhit:
        return [(Coeff.unit(), ())]
    v, rest = unhit[0], list(unhit[1:])
    out: List[Tuple[Coeff, Tuple]] = []
    for k, w in enumerate(rest):
        for c2, toks in _terminal_branches(rest[:k] + rest[k + 1:], charges, realization):
            out.append((c2.scale(pair_sign), ((tag, 2, v, w),) + toks))
    for s, q in charges:
        if s == v:
            raise StructuralViolation("terminal and exponential at one vertex")
        tok, flip = _norm_ker(tag, 1, v, s)
        emit = (-q if realization == "K" else q) * flip
        for c2, toks in _terminal_branches(rest, charges, realization):
            out.append((c2.scale(emit), (tok,) + toks))
    # a terminal with no partner and no charge to radiate against kills the
    # term, which the empty list encodes
    return out


def diagram_weight(diagram: Diagram, cfg: SectorConfig) -> List[Term]:
    """The token terms of one diagram (branching over edge alternatives,
    wavy counterterms and terminal pairings)."""
    coeff = Coeff.unit()
    for ch in diagram.choices:
        coeff = coeff * ch.coeff

    variants: List[Tuple[Coeff, List, List, List]] = [(coeff, [], [], [])]

    for edge in diagram.edges:
        parts = _edge_parts(edge, diagram.choices, cfg)
        variants = [(c * pc, ds + list(pd), dt + list(pt), ws)
                    for (c, ds, dt, ws) in variants
                    for (pc, pd, pt) in parts]

    kappa_re = Coeff.unit(kappa=1)
    for (i, j) in diagram.rho_pairs:
        lo, hi = min(i, j), max(i, j)
        ctr_im = Fraction(-1 if cfg.realization == "K" else 1)
        new = []
        for (c, ds, dt, ws) in variants:
            new.append((c * kappa_re, ds, dt, ws + [(0, lo, hi)]))
            ctr = c * Coeff.unit(kappa=1, re=0, im=ctr_im)
            new.append((ctr, ds + [(lo, hi, 1)], dt, ws))
        variants = new
    if diagram.rho_singles:
        pfac = Coeff.unit(p=len(diagram.rho_singles))
        variants = [(c * pfac, ds, dt, ws) for (c, ds, dt, ws) in variants]

    hit = {e.target for e in diagram.edges if e.into == "terminal"}
    unhit = sorted(ch.position for ch in diagram.choices
                   if ch.terminal and ch.position not in hit)
    charges = [(ch.position, ch.charge) for ch in diagram.choices
               if ch.charge is not None]
    term_branches = _terminal_branches(unhit, charges, cfg.realization)

    dmarks = tuple(sorted(ch.position for ch in diagram.choices if ch.deriv))
    exps = tuple(sorted(charges))

    out: List[Term] = []
    for (c, ds, dt, ws) in variants:
        for tc, toks in term_branches:
            cc = c * tc
            if cc.is_zero:
                continue
            out.append(Term(coeff=cc,
                            deltas=tuple(sorted(ds)),
                            kers=tuple(sorted(toks)),
                            wavys=tuple(sorted(ws)),
                            dots=tuple(sorted(dt)),
                            exps=exps,
                            dmarks=dmarks))
    return out


def correlator_terms(word: Sequence[str], cfg: SectorConfig) -> List[Term]:
    """Raw (unrenormalized) token terms of a current correlator."""
    word = tuple(word)
    if cfg.realization == "K":
        charge = sum(+1 if nm == "J+" else -1 if nm == "J-" else 0 for nm in word)
        if charge != 0:
            logger.debug("word %s dropped by charge balance", word)
            return []
    out: List[Term] = []
    for d in enumerate_diagrams(word, cfg):
        out.extend(diagram_weight(d, cfg))
    return out


def correlator_expression(word: Sequence[str], cfg: SectorConfig,
                          radii: Optional[Dict[int, object]] = None) -> Expression:
    return Expression(correlator_terms(word, cfg), realization=cfg.realization,
                      radii=dict(radii or {}))


# ---------------------------------------------------------------------------
# loop structure
# ---------------------------------------------------------------------------


def loop_components(diagram: Diagram) -> List[Dict[str, object]]:
    """Connected components of the plain-delta edge graph with their first
    Betti number and, when there is a cycle, its length.

    Only plain (k = 0) solid edges count: terminal hits are delta' edges and
    dotted edges are not deltas at all.
    """
    solid = [e for e in diagram.edges if e.into == "exp"]
    adj: Dict[int, List[Tuple[int, int]]] = {}
    for idx, e in enumerate(solid):
        adj.setdefault(e.source, []).append((e.target, idx))
        adj.setdefault(e.target, []).append((e.source, idx))
    seen: Set[int] = set()
    comps = []
    for start in sorted(adj):
        if start in seen:
            continue
        stack = [start]
        verts: Set[int] = set()
        eidx: Set[int] = set()
        while stack:
            v = stack.pop()
            if v in verts:
                continue
            verts.add(v)
            seen.add(v)
            for w, ei in adj[v]:
                eidx.add(ei)
                if w not in verts:
                    stack.append(w)
        betti = len(eidx) - len(verts) + 1
        cycle_len = 0
        cycle_vertices: List[int] = []
        cycle_pairs: List[Tuple[int, int]] = []
        if betti == 1:
            # strip leaves; what remains is the unique cycle
            deg = Counter()
            for ei in eidx:
                deg[solid[ei].source] += 1
                deg[solid[ei].target] += 1
            live = dict(deg)
            edges_left = {ei for ei in eidx}
            changed = True
            while changed:
                changed = False
                for ei in list(edges_left):
                    e = solid[ei]
                    if live.get(e.source, 0) == 1 or live.get(e.target, 0) == 1:
                        edges_left.discard(ei)
                        live[e.source] -= 1
                        live[e.target] -= 1
                        changed = True
            cycle_len = len(edges_left)
            on_cycle: Set[int] = set()
            for ei in edges_left:
                e = solid[ei]
                on_cycle.update((e.source, e.target))
                cycle_pairs.append((min(e.source, e.target),
                                    max(e.source, e.target)))
            cycle_vertices = sorted(on_cycle)
        comps.append({"vertices": sorted(verts), "edges": len(eidx),
                      "betti": betti, "cycle": cycle_len,
                      "cycle_vertices": cycle_vertices,
                      "cycle_pairs": sorted(cycle_pairs)})
    return comps


@dataclass
class CensusReport:
    word: Tuple[str, ...]
    diagrams: int
    looped: int
    loops: Counter  # cycle length -> number of occurrences
    max_betti: int

    def lines(self) -> List[str]:
        out = [f"word {' '.join(self.word)}: {self.diagrams} diagrams, "
               f"{self.looped} with loops, max betti {self.max_betti}"]
        for k in sorted(self.loops):
            out.append(f"  {k}-loops: {self.loops[k]}")
        return out


def loop_census(word: Sequence[str], cfg: SectorConfig) -> CensusReport:
    """Stream over stub structures (term multiplicities and Heisenberg
    matchings do not change the delta-edge graph) and tally loop content."""
    word = tuple(word)
    per_vertex = []
    for k, nm in enumerate(word):
        classes: Dict[Tuple, VertexChoice] = {}
        for ch in vertex_choices(nm, k, cfg):
            key = (ch.stub, ch.terminal, ch.charge is not None)
            classes.setdefault(key, ch)
        per_vertex.append(list(classes.values()))
    total = looped = 0
    loops: Counter = Counter()
    max_betti = 0
    for combo in itertools.product(*per_vertex):
        for edges in _resolve_stubs(combo, cfg):
            total += 1
            d = Diagram(word, combo, edges)
            comps = loop_components(d)
            has = False
            for comp in comps:
                max_betti = max(max_betti, comp["betti"])
                if comp["betti"] >= 1 and comp["cycle"]:
                    loops[comp["cycle"]] += 1
                    has = True
            looped += int(has)
    return CensusReport(word, total, looped, loops, max_betti)


def to_dot(diagram: Diagram) -> str:
    """Graphviz rendering of one diagram."""
    lines = ["digraph contraction {", "  rankdir=LR;"]
    for ch in diagram.choices:
        bits = [ch.current]
        if ch.charge is not None:
            bits.append(f"q={ch.charge:+d}")
        if ch.terminal:
            bits.append("terminal")
        if ch.rho:
            bits.append("rho")
        if ch.deriv:
            bits.append("d/du")
        shape = "doublecircle" if ch.terminal else "circle"
        lines.append(f'  v{ch.position} [label="{ch.position}: {" ".join(bits)}" '
                     f'shape={shape}];')
    for e in diagram.edges:
        style = {"exp": "solid", "terminal": "bold", "stub": "dotted"}[e.into]
        lines.append(f'  v{e.source} -> v{e.target} [style={style} label="{e.kind}"];')
    for (i, j) in diagram.rho_pairs:
        lines.append(f'  v{i} -> v{j} [style=dashed dir=none label="wavy"];')
    for s in diagram.rho_singles:
        lines.append(f'  v{s} -> v{s} [style=dashed label="p"];')
    lines.append("}")
    return "\n".join(lines)
