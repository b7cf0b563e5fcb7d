"""Distribution-valued correlator expressions and their canonical form.

A correlator evaluates to a finite sum of terms.  Each term is a product of

* a scalar coefficient -- an exact complex polynomial in kappa, p, lambda,
  xi_0 and the loop constants mu_k (Fractions throughout, no floats);
* delta factors  d^k/du_i^k delta(u_i - u_j);
* kernel factors N_K / N_A and their angle derivatives, including the
  constants N^(k)(0) that appear when both endpoints coincide;
* wavy factors W (the |n|-weighted mode sum from rho-pairs) and dotted
  factors D (inverse-xi mode sums), again with derivatives;
* one exponential factor exp(+-[sum_{s<t} q_s q_t N(s,t) + 1/2 sum q_s^2
  N(s,s)]) carrying the surviving exponential charges (minus sign and a
  charge-balance constraint in the K realization, plus sign in A);
* pending derivative markers d/du_t to be expanded during canonicalization.

Indices are insertion points; each has a radius (1 = on the circle, where
delta factors are honest distributions; inside the disc every factor is an
analytic function given by its truncated mode sum).

``canonicalize`` rewrites an expression to a normal form where, on the
circle, every delta-connected component is a star anchored at its smallest
index with all smooth content moved onto the root.  Two expressions that are
equal as distributions canonicalize to the identical term list, so equality
checking and exact-zero verification reduce to syntactic comparison.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
import sympy as sp

from .errors import SingularProduct, StructuralViolation
from .kernels import XiSequence

logger = logging.getLogger(__name__)

# ---------------------------------------------------------------------------
# coefficients: exact complex polynomials in kappa, p, lambda, xi0, mu_k
# ---------------------------------------------------------------------------

# monomial: (kappa_pow, p_pow, lambda_pow, xi0_pow, ((k, pow), ...))
Mono = Tuple[int, int, int, int, Tuple[Tuple[int, int], ...]]
MONO_ONE: Mono = (0, 0, 0, 0, ())

_ZERO = Fraction(0)


def _mono_mul(m1: Mono, m2: Mono) -> Mono:
    mu: Dict[int, int] = dict(m1[4])
    for k, e in m2[4]:
        mu[k] = mu.get(k, 0) + e
    return (
        m1[0] + m2[0],
        m1[1] + m2[1],
        m1[2] + m2[2],
        m1[3] + m2[3],
        tuple(sorted((k, e) for k, e in mu.items() if e)),
    )


class Coeff:
    """Exact scalar: dict monomial -> (real, imag) Fractions."""

    __slots__ = ("d",)

    def __init__(self, d: Optional[Dict[Mono, Tuple[Fraction, Fraction]]] = None):
        self.d = d if d is not None else {}

    # -- constructors --------------------------------------------------

    @classmethod
    def zero(cls) -> "Coeff":
        return cls()

    @classmethod
    def complex_rat(cls, re=0, im=0) -> "Coeff":
        re, im = Fraction(re), Fraction(im)
        if re == 0 and im == 0:
            return cls()
        return cls({MONO_ONE: (re, im)})

    @classmethod
    def one(cls) -> "Coeff":
        return cls.complex_rat(1)

    @classmethod
    def unit(cls, kappa=0, p=0, lam=0, xi0=0, mu: Optional[Dict[int, int]] = None,
             re=1, im=0) -> "Coeff":
        mono = (kappa, p, lam, xi0, tuple(sorted((mu or {}).items())))
        re, im = Fraction(re), Fraction(im)
        if re == 0 and im == 0:
            return cls()
        return cls({mono: (re, im)})

    # -- arithmetic -----------------------------------------------------

    def __add__(self, other: "Coeff") -> "Coeff":
        d = dict(self.d)
        for m, (re, im) in other.d.items():
            r0, i0 = d.get(m, (_ZERO, _ZERO))
            r, i = r0 + re, i0 + im
            if r == 0 and i == 0:
                d.pop(m, None)
            else:
                d[m] = (r, i)
        return Coeff(d)

    def __neg__(self) -> "Coeff":
        return Coeff({m: (-re, -im) for m, (re, im) in self.d.items()})

    def __sub__(self, other: "Coeff") -> "Coeff":
        return self + (-other)

    def __mul__(self, other: "Coeff") -> "Coeff":
        out: Dict[Mono, Tuple[Fraction, Fraction]] = {}
        for m1, (a, b) in self.d.items():
            for m2, (c, e) in other.d.items():
                m = _mono_mul(m1, m2)
                re, im = a * c - b * e, a * e + b * c
                r0, i0 = out.get(m, (_ZERO, _ZERO))
                r, i = r0 + re, i0 + im
                if r == 0 and i == 0:
                    out.pop(m, None)
                else:
                    out[m] = (r, i)
        return Coeff(out)

    def scale(self, re=1, im=0) -> "Coeff":
        return self * Coeff.complex_rat(re, im)

    def conj(self) -> "Coeff":
        return Coeff({m: (re, -im) for m, (re, im) in self.d.items()})

    @property
    def is_zero(self) -> bool:
        return not self.d

    def __eq__(self, other) -> bool:
        return isinstance(other, Coeff) and self.d == other.d

    def __hash__(self):
        return hash(frozenset(self.d.items()))

    # -- rendering --------------------------------------------------------

    def to_sympy(self):
        kappa, p, lam, xi0 = sp.symbols("kappa p lambda_ xi0", positive=True)
        total = sp.Integer(0)
        for (ek, ep, el, ex, mus), (re, im) in self.d.items():
            c = sp.Rational(re.numerator, re.denominator) + sp.I * sp.Rational(im.numerator, im.denominator)
            c *= kappa**ek * p**ep * lam**el * xi0**ex
            for k, e in mus:
                c *= sp.Symbol(f"mu{k}", real=True) ** e
            total += c
        return total

    def subs_numeric(self, kappa=1.0, p=0.0, lam=1.0, xi0=1.0,
                     mu: Optional[Dict[int, float]] = None) -> complex:
        total = 0j
        for (ek, ep, el, ex, mus), (re, im) in self.d.items():
            v = complex(re) + 1j * complex(im)
            v *= complex(kappa) ** ek * complex(p) ** ep * complex(lam) ** el * complex(xi0) ** ex
            for k, e in mus:
                v *= complex((mu or {}).get(k, 0.0)) ** e
            total += v
        return total

    def __repr__(self):
        return f"Coeff({sp.sstr(self.to_sympy())})"


# ---------------------------------------------------------------------------
# factor views (stable public shapes for single factors)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DeltaFactor:
    """d^k/du_i^k of delta(u_i - u_j), stored with i < j."""

    i: int
    j: int
    k: int = 0


@dataclass(frozen=True)
class KernelFactor:
    """A non-delta factor: which kernel-type object, its derivative order
    and its index arguments.  ``form`` is one of ``kernel-value`` (N_K/N_A),
    ``heisenberg-propagator`` (the wavy mode sum W), ``D-value``,
    ``exp-of-kernel-combination``, ``scalar-p``, ``scalar-kappa``,
    ``scalar-mu``."""

    form: str
    tag: str = ""
    k: int = 0
    args: Tuple[int, ...] = ()
    charges: Tuple[int, ...] = ()


# ---------------------------------------------------------------------------
# terms and expressions
# ---------------------------------------------------------------------------


def _norm_delta(i: int, j: int, k: int) -> Tuple[Tuple[int, int, int], int]:
    if i == j:
        raise StructuralViolation("delta factor with equal endpoints")
    if i < j:
        return (i, j, k), 1
    return (j, i, k), (-1) ** k


def _norm_pair(k: int, i: int, j: int) -> Tuple[Tuple[int, int, int], int]:
    if i <= j:
        return (k, i, j), 1
    return (k, j, i), (-1) ** k


@dataclass(frozen=True)
class Term:
    """One product term.  Token tuples are kept sorted; ``coeff`` is the
    only non-structural field."""

    coeff: Coeff
    deltas: Tuple[Tuple[int, int, int], ...] = ()      # (i, j, k), i < j
    kers: Tuple[Tuple[str, int, int, int], ...] = ()   # (tag, k, i, j), i <= j
    wavys: Tuple[Tuple[int, int, int], ...] = ()       # (k, i, j), i <= j
    dots: Tuple[Tuple[int, int, int], ...] = ()        # (k, i, j), i <= j
    exps: Tuple[Tuple[int, int], ...] = ()             # (pos, charge)
    dmarks: Tuple[int, ...] = ()                       # pending d/du_t
    singular: bool = False

    def key(self):
        return (self.deltas, self.kers, self.wavys, self.dots, self.exps,
                self.dmarks, self.singular)

    def sorted(self) -> "Term":
        return replace(
            self,
            deltas=tuple(sorted(self.deltas)),
            kers=tuple(sorted(self.kers)),
            wavys=tuple(sorted(self.wavys)),
            dots=tuple(sorted(self.dots)),
            exps=tuple(sorted(self.exps)),
            dmarks=tuple(sorted(self.dmarks)),
        )

    def indices(self) -> set:
        out = set()
        for (i, j, _k) in self.deltas:
            out.update((i, j))
        for (_t, _k, i, j) in self.kers:
            out.update((i, j))
        for (_k, i, j) in self.wavys:
            out.update((i, j))
        for (_k, i, j) in self.dots:
            out.update((i, j))
        for (pos, _c) in self.exps:
            out.add(pos)
        out.update(self.dmarks)
        return out

    def relabel(self, mapping: Dict[int, int]) -> "Term":
        """Rename indices; token orientations are re-normalized (this is a
        pure renaming, validity of any identification is the caller's
        business)."""
        coeff = self.coeff
        deltas = []
        for (i, j, k) in self.deltas:
            tok, s = _norm_delta(mapping.get(i, i), mapping.get(j, j), k)
            deltas.append(tok)
            if s != 1:
                coeff = coeff.scale(s)
        kers = []
        for (tag, k, i, j) in self.kers:
            (k2, a, b), s = _norm_pair(k, mapping.get(i, i), mapping.get(j, j))
            kers.append((tag, k2, a, b))
            if s != 1:
                coeff = coeff.scale(s)
        wavys = []
        for (k, i, j) in self.wavys:
            tok, s = _norm_pair(k, mapping.get(i, i), mapping.get(j, j))
            wavys.append(tok)
            if s != 1:
                coeff = coeff.scale(s)
        dots = []
        for (k, i, j) in self.dots:
            tok, s = _norm_pair(k, mapping.get(i, i), mapping.get(j, j))
            dots.append(tok)
            if s != 1:
                coeff = coeff.scale(s)
        exps = tuple(sorted((mapping.get(p, p), c) for (p, c) in self.exps))
        dmarks = tuple(sorted(mapping.get(t, t) for t in self.dmarks))
        return Term(coeff, tuple(sorted(deltas)), tuple(sorted(kers)),
                    tuple(sorted(wavys)), tuple(sorted(dots)), exps, dmarks,
                    self.singular)

    # -- factor views ---------------------------------------------------

    def delta_factors(self) -> List[DeltaFactor]:
        return [DeltaFactor(i, j, k) for (i, j, k) in self.deltas]

    def kernel_factors(self) -> List[KernelFactor]:
        out = [KernelFactor("kernel-value", tag=t, k=k, args=(i, j)) for (t, k, i, j) in self.kers]
        out += [KernelFactor("heisenberg-propagator", k=k, args=(i, j)) for (k, i, j) in self.wavys]
        out += [KernelFactor("D-value", k=k, args=(i, j)) for (k, i, j) in self.dots]
        if self.exps:
            out.append(KernelFactor("exp-of-kernel-combination",
                                    args=tuple(p for p, _ in self.exps),
                                    charges=tuple(c for _, c in self.exps)))
        for (ek, ep, _el, _ex, mus), _v in self.coeff.d.items():
            if ep:
                out.append(KernelFactor("scalar-p", k=ep))
            if ek:
                out.append(KernelFactor("scalar-kappa", k=ek))
            for mk, me in mus:
                out.append(KernelFactor("scalar-mu", k=me, args=(mk,)))
            break
        return out


@dataclass
class Expression:
    """A sum of terms over a fixed index set with per-index radii.

    ``realization`` fixes the sign conventions of the exponential factor
    ("K" or "A"); it may be None for expressions without exponentials.
    ``radii`` maps index -> radius; absent indices are on the circle.
    """

    terms: List[Term] = field(default_factory=list)
    realization: Optional[str] = None
    radii: Dict[int, object] = field(default_factory=dict)

    def radius(self, idx: int):
        return self.radii.get(idx, 1)

    def on_circle(self, idx: int) -> bool:
        return self.radius(idx) == 1

    # -- algebra ----------------------------------------------------------

    def __add__(self, other: "Expression") -> "Expression":
        if self.realization and other.realization and self.realization != other.realization:
            raise ValueError("cannot add expressions from different realizations")
        radii = dict(self.radii)
        for k, v in other.radii.items():
            if k in radii and radii[k] != v:
                raise ValueError(f"inconsistent radius for index {k}")
            radii[k] = v
        return Expression(self.terms + other.terms,
                          self.realization or other.realization, radii)

    def __sub__(self, other: "Expression") -> "Expression":
        return self + other.scale(-1)

    def scale(self, re=1, im=0) -> "Expression":
        return Expression([replace(t, coeff=t.coeff.scale(re, im)) for t in self.terms],
                          self.realization, dict(self.radii))

    def times_coeff(self, c: Coeff) -> "Expression":
        return Expression([replace(t, coeff=t.coeff * c) for t in self.terms],
                          self.realization, dict(self.radii))

    def is_zero_syntactic(self) -> bool:
        return all(t.coeff.is_zero for t in self.terms)

    # -- serialization ------------------------------------------------------

    def to_json(self) -> str:
        def rat(x: Fraction) -> str:
            return f"{x.numerator}/{x.denominator}" if x.denominator != 1 else str(x.numerator)

        terms = []
        for t in self.terms:
            coeff = [[list(m[:4]), [list(x) for x in m[4]], rat(re), rat(im)]
                     for m, (re, im) in sorted(t.coeff.d.items())]
            terms.append({
                "coeff": coeff,
                "deltas": [list(x) for x in t.deltas],
                "kers": [list(x) for x in t.kers],
                "wavys": [list(x) for x in t.wavys],
                "dots": [list(x) for x in t.dots],
                "exps": [list(x) for x in t.exps],
                "dmarks": list(t.dmarks),
                "singular": t.singular,
            })
        radii = {str(k): (rat(Fraction(v)) if not isinstance(v, float) else v)
                 for k, v in self.radii.items()}
        return json.dumps({"realization": self.realization, "radii": radii,
                           "terms": terms}, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "Expression":
        data = json.loads(text)
        terms = []
        for t in data["terms"]:
            d = {}
            for base, mus, re, im in t["coeff"]:
                mono = (base[0], base[1], base[2], base[3],
                        tuple((int(k), int(e)) for k, e in mus))
                d[mono] = (Fraction(re), Fraction(im))
            terms.append(Term(
                Coeff(d),
                tuple(tuple(x) for x in t["deltas"]),
                tuple((str(a), b, c, e) for a, b, c, e in t["kers"]),
                tuple(tuple(x) for x in t["wavys"]),
                tuple(tuple(x) for x in t["dots"]),
                tuple(tuple(x) for x in t["exps"]),
                tuple(t["dmarks"]),
                t["singular"],
            ))
        radii = {int(k): (Fraction(v) if isinstance(v, str) else v)
                 for k, v in data["radii"].items()}
        return cls(terms, data["realization"], radii)

    def __repr__(self):
        return f"Expression({len(self.terms)} terms, realization={self.realization})"


def conjugate(expr: Expression) -> Expression:
    """Complex conjugation.  All structural factors are real-valued, so only
    the coefficients conjugate; index roles are untouched (word reversal is
    a separate relabeling done by the caller)."""
    return Expression([replace(t, coeff=t.coeff.conj()) for t in expr.terms],
                      expr.realization, dict(expr.radii))


# ---------------------------------------------------------------------------
# derivatives
# ---------------------------------------------------------------------------


def d_du(term: Term, idx: int, realization: Optional[str]) -> List[Term]:
    """d/du_idx of a term, as a list of terms (product rule).

    Exponential factors differentiate into kernel-derivative emissions
    against every other charge; the constant self-energies do not
    contribute.  Pending derivative markers are inert (derivatives
    commute)."""
    out: List[Term] = []

    for n, (i, j, k) in enumerate(term.deltas):
        if idx == i or idx == j:
            s = 1 if idx == i else -1
            deltas = term.deltas[:n] + ((i, j, k + 1),) + term.deltas[n + 1:]
            out.append(replace(term, coeff=term.coeff.scale(s), deltas=tuple(sorted(deltas))))

    for n, (tag, k, i, j) in enumerate(term.kers):
        if i == j:
            continue  # angle-independent constant
        if idx == i or idx == j:
            s = 1 if idx == i else -1
            kers = term.kers[:n] + ((tag, k + 1, i, j),) + term.kers[n + 1:]
            out.append(replace(term, coeff=term.coeff.scale(s), kers=tuple(sorted(kers))))

    for n, (k, i, j) in enumerate(term.wavys):
        if i == j:
            continue
        if idx == i or idx == j:
            s = 1 if idx == i else -1
            wavys = term.wavys[:n] + ((k + 1, i, j),) + term.wavys[n + 1:]
            out.append(replace(term, coeff=term.coeff.scale(s), wavys=tuple(sorted(wavys))))

    for n, (k, i, j) in enumerate(term.dots):
        if i == j:
            continue
        if idx == i or idx == j:
            s = 1 if idx == i else -1
            dots = term.dots[:n] + ((k + 1, i, j),) + term.dots[n + 1:]
            out.append(replace(term, coeff=term.coeff.scale(s), dots=tuple(sorted(dots))))

    if any(p == idx for p, _ in term.exps):
        if realization not in ("K", "A"):
            raise ValueError("exponential factors need a realization to differentiate")
        tag = "NK" if realization == "K" else "NA"
        outer = 1 if realization == "A" else -1
        for (pe, ce) in term.exps:
            if pe != idx:
                continue
            for (ps, cs) in term.exps:
                if ps == idx:
                    continue  # same-point cross term is angle-independent
                (k2, a, b), flip = _norm_pair(1, idx, ps)
                coeff = term.coeff.scale(outer * ce * cs * flip)
                kers = tuple(sorted(term.kers + ((tag, k2, a, b),)))
                out.append(replace(term, coeff=coeff, kers=kers))

    return out


# ---------------------------------------------------------------------------
# canonicalization
# ---------------------------------------------------------------------------


class _UF:
    def __init__(self):
        self.p: Dict[int, int] = {}

    def find(self, x: int) -> int:
        self.p.setdefault(x, x)
        while self.p[x] != x:
            self.p[x] = self.p[self.p[x]]
            x = self.p[x]
        return x

    def union(self, a: int, b: int) -> bool:
        """Returns False if a and b were already connected."""
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return False
        if ra > rb:
            ra, rb = rb, ra
        self.p[rb] = ra
        return True


def detect_singular(expr: Expression) -> List[dict]:
    """List singular patterns: on-circle delta factors that repeat a pair or
    close a cycle (delta^2-type divergences).  Empty list means every term
    is a well-defined distribution."""
    reports = []
    for n, t in enumerate(expr.terms):
        uf = _UF()
        seen_pairs = set()
        for (i, j, k) in t.deltas:
            if not (expr.on_circle(i) and expr.on_circle(j)):
                continue
            if (i, j) in seen_pairs:
                reports.append({"term": n, "kind": "repeated-pair", "pair": (i, j)})
                continue
            seen_pairs.add((i, j))
            if not uf.union(i, j):
                reports.append({"term": n, "kind": "cycle", "pair": (i, j)})
        if t.singular:
            reports.append({"term": n, "kind": "flagged", "pair": None})
    return reports


def _term_fingerprint(terms: List[Term]) -> tuple:
    return tuple(sorted((t.key(), tuple(sorted(t.coeff.d.items()))) for t in terms))


def canonicalize(expr: Expression, allow_singular: bool = False,
                 max_passes: int = 60) -> Expression:
    """Rewrite to canonical form.  Raises :class:`SingularProduct` on
    delta-square patterns unless ``allow_singular`` (then such terms are
    carried with their ``singular`` flag and skipped by the rewrites)."""
    on_circle = expr.on_circle
    realization = expr.realization

    terms = list(expr.terms)
    for _pass in range(max_passes):
        before = _term_fingerprint(terms)
        terms = _pass_once(terms, on_circle, realization, allow_singular)
        if _term_fingerprint(terms) == before:
            break
    else:  # pragma: no cover - safety net
        raise AssertionError("canonicalization did not stabilize")
    return Expression(terms, expr.realization, dict(expr.radii))


def _pass_once(terms: List[Term], on_circle, realization, allow_singular) -> List[Term]:
    out: List[Term] = []
    work = list(terms)
    while work:
        t = work.pop()
        if t.coeff.is_zero:
            continue
        # expand pending derivative markers
        if t.dmarks:
            idx = t.dmarks[0]
            base = replace(t, dmarks=t.dmarks[1:])
            work.extend(d_du(base, idx, realization))
            continue
        # K-realization charge balance: unbalanced exponentials vanish
        if realization == "K" and t.exps and sum(c for _, c in t.exps) != 0:
            continue
        if t.singular:
            out.append(t.sorted())
            continue
        # singular scan over the on-circle delta multigraph
        uf = _UF()
        singular = False
        for (i, j, _k) in t.deltas:
            if on_circle(i) and on_circle(j):
                if not uf.union(i, j):
                    singular = True
        if singular:
            if not allow_singular:
                raise SingularProduct(
                    "delta-square pattern outside a loop-renormalization context: "
                    f"{t.deltas}")
            out.append(replace(t, singular=True).sorted())
            continue
        t2 = _collapse_plain(t, on_circle)
        if t2 is not None:
            work.append(t2)
            continue
        t = _merge_exps(t)
        if t is None:
            continue
        t = _orient_charges(t)
        if _has_odd_self(t):
            continue
        moved = _star_moves(t, on_circle, realization)
        if moved is not None:
            work.extend(moved)
            continue
        out.append(t.sorted())
    # merge identical structures
    acc: Dict[tuple, Coeff] = {}
    order: List[tuple] = []
    keep: Dict[tuple, Term] = {}
    for t in out:
        k = t.key()
        if k in acc:
            acc[k] = acc[k] + t.coeff
        else:
            acc[k] = t.coeff
            keep[k] = t
            order.append(k)
    merged = [replace(keep[k], coeff=acc[k]) for k in sorted(order) if not acc[k].is_zero]
    return merged


def _collapse_plain(t: Term, on_circle) -> Optional[Term]:
    """Star-form the plain on-circle deltas: union classes, star every class
    at its smallest index, and move all other content off the members by
    support relabeling (f(u_x) delta(u_r - u_x) = f(u_r) delta(u_r - u_x)).
    Returns None if the term is already collapsed."""
    plain = [tok for tok in t.deltas if tok[2] == 0 and on_circle(tok[0]) and on_circle(tok[1])]
    if not plain:
        return None
    uf = _UF()
    for (i, j, _k) in plain:
        uf.union(i, j)
    mapping = {x: uf.find(x) for x in list(uf.p) if uf.find(x) != x}
    want = set()
    for (i, j, _k) in plain:
        r = uf.find(i)
        for x in (i, j):
            if x != r:
                want.add((r, x, 0))
    plain_set = set(plain)
    rest = tuple(tok for tok in t.deltas if tok not in plain_set)
    base = replace(t, deltas=rest)
    if plain_set == want and not (set(mapping) & base.indices()):
        return None
    relabeled = base.relabel(mapping)
    for (k, i, j) in relabeled.wavys + relabeled.dots:
        if i == j and on_circle(i):
            raise StructuralViolation(
                "wavy/dotted factor closed onto a single point by delta support")
    deltas = tuple(sorted(set(relabeled.deltas) | want))
    return replace(relabeled, deltas=deltas)


def _merge_exps(t: Term) -> Optional[Term]:
    """Merge exponential charges at equal positions; drop zero charges.
    Exact: exponentials of the same field at the same point multiply by
    adding charges.  Returns None if the term should be dropped (cannot
    happen here; kept for symmetry)."""
    if not t.exps:
        return t
    acc: Dict[int, int] = {}
    for pos, c in t.exps:
        acc[pos] = acc.get(pos, 0) + c
    exps = tuple(sorted((pos, c) for pos, c in acc.items() if c != 0))
    if exps == t.exps:
        return t
    return replace(t, exps=exps)


def _orient_charges(t: Term) -> Term:
    """Fix the overall sign convention of the exponential charges.  The
    Gaussian weight is quadratic in the charge vector, so negating every
    charge at once leaves the value untouched in both realizations; we pick
    the representative whose lowest occupied position carries a positive
    charge, which lets conjugate-reversed terms merge."""
    if t.exps and t.exps[0][1] < 0:
        return replace(t, exps=tuple(sorted((pos, -c) for pos, c in t.exps)))
    return t


def _has_odd_self(t: Term) -> bool:
    for (_tag, k, i, j) in t.kers:
        if i == j and k % 2 == 1:
            return True
    for (k, i, j) in t.wavys + t.dots:
        if i == j and k % 2 == 1:
            return True
    return False


def _delta_adjacency(t: Term, on_circle) -> Dict[int, List[Tuple[int, Tuple[int, int, int]]]]:
    adj: Dict[int, List[Tuple[int, Tuple[int, int, int]]]] = {}
    for tok in t.deltas:
        (i, j, _k) = tok
        if on_circle(i) and on_circle(j):
            adj.setdefault(i, []).append((j, tok))
            adj.setdefault(j, []).append((i, tok))
    return adj


def _nondelta_at(t: Term, x: int) -> bool:
    for (_tag, k, i, j) in t.kers:
        if x in (i, j):
            return True
    for (k, i, j) in t.wavys + t.dots:
        if x in (i, j):
            return True
    return any(p == x for p, _ in t.exps)


def _tokens_at(t: Term, x: int, skip_delta: Optional[Tuple[int, int, int]] = None) -> bool:
    """Whether any factor other than ``skip_delta`` references index x."""
    for tok in t.deltas:
        if tok != skip_delta and x in (tok[0], tok[1]):
            return True
    return _nondelta_at(t, x)


def _star_moves(t: Term, on_circle, realization) -> Optional[List[Term]]:
    """Move all smooth content of each on-circle delta tree onto its root
    (smallest index) by support relabeling (plain deltas) and the Leibniz
    exchange  G(v) d^k delta(u-v) = sum_l C(k,l) G^(l)(u) d^(k-l) delta(u-v)
    (with an extra (-1)^l when G sits at the derivative endpoint u).
    Returns None when the term is already in star form."""
    adj = _delta_adjacency(t, on_circle)
    if not adj:
        return None

    # components, BFS trees from the minimal node, deepest-first node order
    seen = set()
    proc: List[Tuple[int, int]] = []  # (node, parent)
    needed = False
    for start in sorted(adj):
        if start in seen:
            continue
        comp = [start]
        seen.add(start)
        stack = [start]
        while stack:
            v = stack.pop()
            for (w, _tok) in adj[v]:
                if w not in seen:
                    seen.add(w)
                    comp.append(w)
                    stack.append(w)
        root = min(comp)
        parent: Dict[int, Optional[int]] = {root: None}
        depth = {root: 0}
        frontier = [root]
        while frontier:
            nxt = []
            for v in frontier:
                for (w, _tok) in adj[v]:
                    if w not in parent:
                        parent[w] = v
                        depth[w] = depth[v] + 1
                        nxt.append(w)
            frontier = nxt
        nodes = [v for v in comp if v != root]
        nodes.sort(key=lambda v: (-depth[v], -v))
        for x in nodes:
            p = parent[x]
            proc.append((x, p))
            edge = _find_edge(t, x, p)
            if _tokens_at(t, x, skip_delta=edge):
                needed = True
    if not needed:
        return None

    results = [t]
    for (x, p) in proc:
        nxt: List[Term] = []
        for term in results:
            nxt.extend(_move_leaf(term, x, p, realization))
        results = nxt
    return results


def _find_edge(t: Term, x: int, p: int) -> Tuple[int, int, int]:
    a, b = min(x, p), max(x, p)
    for tok in t.deltas:
        if (tok[0], tok[1]) == (a, b):
            return tok
    raise AssertionError(f"no delta edge between {x} and {p}")


def _move_leaf(term: Term, x: int, p: int, realization) -> List[Term]:
    edge = _find_edge(term, x, p)
    rest = tuple(tok for tok in term.deltas if tok != edge)
    base = replace(term, deltas=rest)
    if not _tokens_at(base, x) and not any(q == x for q, _ in base.exps):
        return [term]
    k = edge[2]
    mapping = {x: p}
    if k == 0:
        moved = base.relabel(mapping)
        return [replace(moved, deltas=tuple(sorted(moved.deltas + (edge,))))]
    deriv_end = x == edge[0]
    out: List[Term] = []
    layer: List[Term] = [base]
    for l in range(0, k + 1):
        c = math.comb(k, l) * ((-1) ** l if deriv_end else 1)
        for tt in layer:
            moved = replace(tt, coeff=tt.coeff.scale(c)).relabel(mapping)
            residual = (edge[0], edge[1], k - l)
            out.append(replace(moved, deltas=tuple(sorted(moved.deltas + (residual,)))))
        if l < k:
            layer = [t2 for tt in layer for t2 in d_du(tt, x, realization)]
            if not layer:
                break
    return out


# ---------------------------------------------------------------------------
# numeric evaluation and smearing
# ---------------------------------------------------------------------------


def _pair_series_grid(c_fn: Callable[[int], float], k: int, w: np.ndarray,
                      trunc: int) -> np.ndarray:
    """sum_{n=1}^{trunc} c(n) [ (i n)^k w^n + (-i n)^k conj(w)^n ] on a grid."""
    total = np.zeros_like(w, dtype=complex)
    wn = np.ones_like(w, dtype=complex)
    for n in range(1, trunc + 1):
        wn = wn * w
        total += c_fn(n) * ((1j * n) ** k * wn + (-1j * n) ** k * np.conj(wn))
    return total


def _self_const(c_fn: Callable[[int], float], k: int, r2: float, trunc: int,
                extra0: float = 0.0) -> float:
    """Value of a pair series at coincident points (angle-independent)."""
    if k % 2 == 1:
        return 0.0
    total = extra0
    for n in range(1, trunc + 1):
        total += c_fn(n) * 2.0 * ((1j * n) ** k).real * r2**n
    return total


def _token_c_fn(kind: str, tag: str, seq: XiSequence):
    if kind == "ker":
        return lambda n: float(seq.xi_value(n))
    if kind == "wavy":
        return lambda n: float(n)
    if kind == "dot":
        return lambda n: float(seq.xi_inv_value(n))
    if kind == "deltareg":
        return lambda n: 1.0
    raise AssertionError(kind)


def _modes_conv(a: Dict[int, complex], b: Dict[int, complex]) -> Dict[int, complex]:
    out: Dict[int, complex] = {}
    for m1, c1 in a.items():
        for m2, c2 in b.items():
            m = m1 + m2
            out[m] = out.get(m, 0) + c1 * c2
    return {m: c for m, c in out.items() if c != 0}


def _modes_deriv(f: Dict[int, complex], k: int) -> Dict[int, complex]:
    if k == 0:
        return dict(f)
    return {m: c * (1j * m) ** k for m, c in f.items() if m != 0 or k == 0}


def smear(expr: Expression, tests: Dict[int, Dict[int, complex]], seq: XiSequence,
          *, kappa=1.0, p=0.0, lam=1.0, mu: Optional[Dict[int, float]] = None,
          trunc: int = 32, grid: int = 48) -> complex:
    """Pair the expression against a tensor product of Fourier-polynomial
    test functions (one mode dict per index, normalized pairing
    integral du/(2 pi) per variable).

    The expression is canonicalized first (singular terms raise).  On-circle
    delta stars turn into derivative products of the member tests attached
    to the root; whatever analytic structure remains is integrated on a
    periodic trapezoid grid (spectrally accurate), with kernels evaluated by
    their truncated mode sums.  Scalar parameters substitute numerically.
    """
    e = canonicalize(expr)
    missing = set()
    for t in e.terms:
        missing |= t.indices() - set(tests)
    if missing:
        raise ValueError(f"no test function for indices {sorted(missing)}")

    total = 0.0 + 0.0j
    for t in e.terms:
        if t.dmarks:
            raise AssertionError("derivative markers must be expanded by canonicalize")
        scalar = t.coeff.subs_numeric(kappa=kappa, p=p, lam=lam,
                                      xi0=float(seq.xi0), mu=mu)
        if scalar == 0:
            continue
        # split deltas into on-circle stars and analytic (inside-disc) ones
        members: Dict[int, Tuple[int, int]] = {}
        analytic_deltas = []
        for (i, j, k) in t.deltas:
            if e.on_circle(i) and e.on_circle(j):
                if j in members:
                    raise AssertionError("canonical form should be a star")
                members[j] = (i, k)
            else:
                analytic_deltas.append((i, j, k))
        # combined test at each remaining variable
        g: Dict[int, Dict[int, complex]] = {}
        for idx, f in tests.items():
            if idx in members:
                continue
            g[idx] = {m: complex(c) for m, c in f.items()}
        for x, (root, k) in members.items():
            g[root] = _modes_conv(g[root], _modes_deriv(tests[x], k))

        # collect analytic factors over the remaining variables
        factors = []  # (kind, tag, k, i, j)
        const = 1.0 + 0.0j
        for (i, j, k) in analytic_deltas:
            factors.append(("deltareg", "", k, i, j))
        for (tag, k, i, j) in t.kers:
            if i == j:
                r2 = float(e.radius(i)) ** 2
                const *= _self_const(_token_c_fn("ker", tag, seq), k, r2, trunc,
                                     extra0=(2.0 * float(seq.xi0) if tag == "NA" and k == 0 else 0.0))
            else:
                factors.append(("ker", tag, k, i, j))
        for (k, i, j) in t.wavys:
            if i == j:
                const *= _self_const(_token_c_fn("wavy", "", seq), k,
                                     float(e.radius(i)) ** 2, trunc)
            else:
                factors.append(("wavy", "", k, i, j))
        for (k, i, j) in t.dots:
            if i == j:
                const *= _self_const(_token_c_fn("dot", "", seq), k,
                                     float(e.radius(i)) ** 2, trunc)
            else:
                factors.append(("dot", "", k, i, j))
        if const == 0:
            continue

        variables = sorted(g)
        if not factors and not t.exps:
            # pure delta/constant term: exact mode-0 extraction per variable
            val = const
            for v in variables:
                val *= g[v].get(0, 0)
            total += scalar * val
            continue

        total += scalar * const * _grid_integral(e, t, g, factors, variables,
                                                 seq, trunc, grid)
    return total


def _grid_integral(e: Expression, t: Term, g, factors, variables,
                   seq: XiSequence, trunc: int, grid: int) -> complex:
    m = len(variables)
    axis = {v: a for a, v in enumerate(variables)}
    theta = 2.0 * np.pi * np.arange(grid) / grid

    def var_grid(v: int) -> np.ndarray:
        shape = [1] * m
        shape[axis[v]] = grid
        return theta.reshape(shape)

    integrand = np.ones((1,) * m, dtype=complex)
    for v in variables:
        th = var_grid(v)
        fv = np.zeros_like(th, dtype=complex)
        for mode, c in g[v].items():
            fv = fv + c * np.exp(1j * mode * th)
        integrand = integrand * fv

    def pair_w(i: int, j: int) -> np.ndarray:
        rr = float(e.radius(i)) * float(e.radius(j))
        return rr * np.exp(1j * (var_grid(i) - var_grid(j)))

    for (kind, tag, k, i, j) in factors:
        w = pair_w(i, j)
        val = _pair_series_grid(_token_c_fn(kind, tag, seq), k, w, trunc)
        if kind == "deltareg":
            # delta_reg has the extra n = 0 term (z1 conj(z2))^0 = 1
            val = val + (1.0 if k == 0 else 0.0)
        if kind == "ker" and tag == "NA" and k == 0:
            val = val + 2.0 * float(seq.xi0)
        integrand = integrand * val

    if t.exps:
        tag = "NK" if e.realization == "K" else "NA"
        sign = -1.0 if e.realization == "K" else 1.0
        if e.realization == "K" and sum(c for _, c in t.exps) != 0:
            return 0.0 + 0.0j
        c_fn = _token_c_fn("ker", tag, seq)
        expo = np.zeros((1,) * m, dtype=complex)
        entries = list(t.exps)
        for a in range(len(entries)):
            pa, qa = entries[a]
            r2 = float(e.radius(pa)) ** 2
            expo = expo + 0.5 * qa * qa * _self_const(
                c_fn, 0, r2, trunc, extra0=(2.0 * float(seq.xi0) if tag == "NA" else 0.0))
            for b in range(a + 1, len(entries)):
                pb, qb = entries[b]
                w = pair_w(pa, pb)
                nval = _pair_series_grid(c_fn, 0, w, trunc)
                if tag == "NA":
                    nval = nval + 2.0 * float(seq.xi0)
                expo = expo + qa * qb * nval
        integrand = integrand * np.exp(sign * expo)

    return complex(integrand.mean())
