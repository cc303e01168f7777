"""Shared algebra: variable identities, affine expressions, bounds, constraints.

Every modeling layer (local graphs, remote graphs, build programs, the
solver) passes around the small value types defined here. All of them are
immutable and hashable, so they can be copied freely between threads and
serialized to workers without defensive copying.
"""

from __future__ import annotations

import math
import operator
from dataclasses import dataclass
from types import MappingProxyType
from typing import Iterable, Mapping, Sequence, Tuple, Union

__all__ = [
    "LE",
    "EQ",
    "GE",
    "SENSES",
    "CONTINUOUS",
    "INTEGER",
    "ModelError",
    "canonical_name",
    "split_canonical_name",
    "VariableId",
    "AffineExpr",
    "Constraint",
    "VariableBounds",
    "as_expr",
]

LE = "<="
EQ = "=="
GE = ">="
SENSES = (LE, EQ, GE)

CONTINUOUS = "continuous"
INTEGER = "integer"


class ModelError(ValueError):
    """A modeling rule was violated (names, ownership, bounds, structure)."""


def _check_name_part(text: str, what: str) -> str:
    if not isinstance(text, str) or not text:
        raise ModelError(f"{what} must be a nonempty string, got {text!r}")
    if "[" in text or "]" in text:
        raise ModelError(f"{what} {text!r} may not contain '[' or ']'")
    return text


def canonical_name(node_label: str, var_name: str, subscripts: Sequence[int] = ()) -> str:
    """Build the canonical name for a variable on a node.

    The scheme is ``<node_label>[:<var_name>]`` with an optional
    ``[s1,s2,...]`` suffix for subscripted variables, e.g.
    ``planning_node[:vCAP][3]``. Subscripts are comma-joined inside a single
    bracket pair so distinct subscript tuples always produce distinct names
    ("[1,2]" vs "[12]").

    Args:
        node_label: label of the owning node; must not contain brackets.
        var_name: base variable name; must not contain brackets.
        subscripts: integer subscripts, possibly empty.

    Returns:
        The canonical name string.
    """
    _check_name_part(node_label, "node label")
    _check_name_part(var_name, "variable name")
    subs = tuple(operator.index(s) for s in subscripts)
    base = f"{node_label}[:{var_name}]"
    if subs:
        return base + "[" + ",".join(str(s) for s in subs) + "]"
    return base


def split_canonical_name(name: str) -> Tuple[str, str]:
    """Split a canonical name into (node_label, suffix).

    The suffix is the ``[:<var_name>]`` part plus any subscript bracket;
    it is the node-independent key used for linking-variable matching.
    """
    cut = name.find("[:")
    if cut < 0 or not name.endswith("]"):
        raise ModelError(f"not a canonical variable name: {name!r}")
    return name[:cut], name[cut:]


def _term_expr(key, coef: float) -> "AffineExpr":
    return AffineExpr(((key, coef),))


@dataclass(frozen=True)
class VariableId:
    """Identity of one variable: owning node id, dense per-node index, name.

    Instances are plain values; arithmetic on them builds
    :class:`AffineExpr` objects, so `2 * x + y - 1 <= 0` reads naturally in
    model-building code.
    """

    node: str
    index: int
    name: str

    def __mul__(self, k):
        return _term_expr(self, k)

    __rmul__ = __mul__

    def __add__(self, other):
        return _term_expr(self, 1.0) + other

    __radd__ = __add__

    def __sub__(self, other):
        return _term_expr(self, 1.0) - other

    def __rsub__(self, other):
        return -_term_expr(self, 1.0) + other

    def __neg__(self):
        return _term_expr(self, -1.0)

    def __le__(self, other):
        return _make_constraint(self, LE, other)

    def __ge__(self, other):
        return _make_constraint(self, GE, other)

    def eq(self, other) -> "Constraint":
        """Return the equality constraint `self == other`."""
        return _make_constraint(self, EQ, other)


Number = Union[int, float]
ExprLike = Union["AffineExpr", VariableId, Number]


def as_expr(value: ExprLike) -> "AffineExpr":
    """Coerce a number, variable, or expression to an AffineExpr."""
    if isinstance(value, AffineExpr):
        return value
    if isinstance(value, VariableId):
        return _term_expr(value, 1.0)
    if isinstance(value, bool):
        raise ModelError("booleans are not valid expression values")
    if isinstance(value, (int, float)):
        return AffineExpr((), value)
    # remote refs expose .vid; accept anything that does
    vid = getattr(value, "vid", None)
    if isinstance(vid, VariableId):
        return _term_expr(vid, 1.0)
    raise ModelError(f"cannot interpret {value!r} as an affine expression")


class AffineExpr:
    """Affine expression ``sum(coef * var) + constant``.

    Immutable. Term keys are usually :class:`VariableId` but any hashable
    key works (build programs use symbolic placeholders). Exact-zero
    coefficients are dropped on every construction, so structurally equal
    expressions compare equal regardless of how they were assembled.
    """

    __slots__ = ("_terms", "_constant")

    def __init__(self, terms: Union[Mapping, Iterable[Tuple[object, Number]], None] = None,
                 constant: Number = 0.0):
        acc: dict = {}
        if terms is not None:
            items = terms.items() if isinstance(terms, Mapping) else terms
            for key, coef in items:
                c = float(coef)
                if not math.isfinite(c):
                    raise ModelError(f"non-finite coefficient {coef!r} for {key!r}")
                if key in acc:
                    acc[key] += c
                else:
                    acc[key] = c
        const = float(constant)
        if not math.isfinite(const):
            raise ModelError(f"non-finite constant {constant!r}")
        self._terms = {k: v for k, v in acc.items() if v != 0.0}
        self._constant = const

    @property
    def terms(self) -> Mapping:
        return MappingProxyType(self._terms)

    @property
    def constant(self) -> float:
        return self._constant

    def evaluate(self, assignment: Mapping, default: float = None) -> float:
        """Evaluate at a point given as {term key: value}.

        Args:
            assignment: values per term key.
            default: value used for keys missing from `assignment`; if None,
                a missing key raises KeyError.
        """
        total = self._constant
        for key, coef in self._terms.items():
            if default is not None and key not in assignment:
                total += coef * default
            else:
                total += coef * assignment[key]
        return total

    def __add__(self, other):
        o = as_expr(other)
        merged = dict(self._terms)
        for key, coef in o._terms.items():
            c = merged.get(key, 0.0) + coef
            if c == 0.0:
                merged.pop(key, None)
            else:
                merged[key] = c
        return AffineExpr(merged, self._constant + o._constant)

    __radd__ = __add__

    def __sub__(self, other):
        return self + (as_expr(other) * -1.0)

    def __rsub__(self, other):
        return as_expr(other) + (self * -1.0)

    def __neg__(self):
        return self * -1.0

    def __mul__(self, k: Number):
        kk = float(k)
        if not math.isfinite(kk):
            raise ModelError(f"non-finite scale factor {k!r}")
        if kk == 0.0:
            return AffineExpr()
        return AffineExpr({key: coef * kk for key, coef in self._terms.items()},
                          self._constant * kk)

    __rmul__ = __mul__

    def __truediv__(self, k: Number):
        return self * (1.0 / float(k))

    def __eq__(self, other):
        if not isinstance(other, AffineExpr):
            return NotImplemented
        return self._terms == other._terms and self._constant == other._constant

    def __hash__(self):
        return hash((frozenset(self._terms.items()), self._constant))

    def __le__(self, other):
        return _make_constraint(self, LE, other)

    def __ge__(self, other):
        return _make_constraint(self, GE, other)

    def eq(self, other) -> "Constraint":
        """Return the equality constraint `self == other`.

        `==` keeps its structural-equality meaning on expressions, so
        equality constraints are spelled `expr.eq(rhs)`.
        """
        return _make_constraint(self, EQ, other)

    def __repr__(self):
        parts = [f"{coef!r}*{key}" for key, coef in
                 sorted(self._terms.items(), key=lambda kv: str(kv[0]))]
        if self._constant != 0.0 or not parts:
            parts.append(repr(self._constant))
        return "AffineExpr(" + " + ".join(parts) + ")"


def _make_constraint(lhs: ExprLike, sense: str, rhs: ExprLike) -> "Constraint":
    diff = as_expr(lhs) - as_expr(rhs)
    return Constraint(AffineExpr(diff.terms), sense, -diff.constant)


@dataclass(frozen=True)
class Constraint:
    """One affine constraint `body <sense> rhs`.

    The body may carry a constant; solvers fold it into the rhs. A
    constraint with zero terms is legal (it becomes a consistency check at
    solve time).
    """

    body: AffineExpr
    sense: str
    rhs: float

    def __post_init__(self):
        if not isinstance(self.body, AffineExpr):
            object.__setattr__(self, "body", as_expr(self.body))
        if self.sense not in SENSES:
            raise ModelError(f"sense must be one of {SENSES}, got {self.sense!r}")
        r = float(self.rhs)
        if not math.isfinite(r):
            raise ModelError(f"constraint rhs must be finite, got {self.rhs!r}")
        object.__setattr__(self, "rhs", r)

    def variables(self):
        return self.body.terms.keys()

    def violation(self, assignment: Mapping) -> float:
        """Nonnegative amount by which the assignment breaks this row."""
        lhs = self.body.evaluate(assignment)
        if self.sense == LE:
            return max(0.0, lhs - self.rhs)
        if self.sense == GE:
            return max(0.0, self.rhs - lhs)
        return abs(lhs - self.rhs)

    def __repr__(self):
        return f"Constraint({self.body!r} {self.sense} {self.rhs!r})"


@dataclass(frozen=True)
class VariableBounds:
    """Box bounds plus integrality for one variable.

    lower may be -inf and upper may be +inf; integer variables handed to the
    MIP solver must have finite bounds, checked there rather than here.
    """

    lower: float
    upper: float
    integrality: str = CONTINUOUS

    def __post_init__(self):
        lo = float(self.lower)
        hi = float(self.upper)
        if math.isnan(lo) or math.isnan(hi):
            raise ModelError("bounds may not be NaN")
        if lo > hi:
            raise ModelError(f"lower bound {lo} exceeds upper bound {hi}")
        if self.integrality not in (CONTINUOUS, INTEGER):
            raise ModelError(f"integrality must be {CONTINUOUS!r} or {INTEGER!r}, "
                             f"got {self.integrality!r}")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def is_fixed(self) -> bool:
        return self.lower == self.upper

    @property
    def is_integer(self) -> bool:
        return self.integrality == INTEGER
