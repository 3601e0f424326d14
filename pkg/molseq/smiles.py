"""
SMILES parsing, writing, canonical ranking and random enumeration.

The molecular graph (`Molecule`) is the ground truth behind every string form.
Parsing covers the organic subset plus bracket atoms with isotope, chirality,
hydrogen count and charge. Aromatic flags are taken exactly as written.
"""
from __future__ import annotations

import logging
import random
import re
from collections import Counter, defaultdict
from dataclasses import dataclass, replace
from enum import Enum
from functools import cached_property
from typing import Dict, List, Mapping, Optional, Sequence, Tuple, Union

import networkx as nx
from networkx.algorithms import isomorphism

logger = logging.getLogger(__name__)

ELEMENTS = frozenset({"B", "C", "N", "O", "P", "S", "F", "Cl", "Br", "I", "H"})
AROMATIC_ELEMENTS = frozenset({"B", "C", "N", "O", "P", "S"})
ORGANIC_SUBSET = frozenset({"B", "C", "N", "O", "P", "S", "F", "Cl", "Br", "I"})
DIGITS = frozenset("0123456789")
VALENCES: Dict[str, Tuple[int, ...]] = {
    "B": (3,), "C": (4,), "N": (3,), "O": (2,), "P": (3, 5), "S": (2, 4, 6),
    "F": (1,), "Cl": (1,), "Br": (1,), "I": (1,), "H": (1,),
}

_BRACKET_RE = re.compile(
    r"^\[(?P<isotope>\d+)?"
    r"(?P<element>[A-Z][a-z]?|[a-z][a-z]?)"
    r"(?P<chirality>@@|@)?"
    r"(?P<hcount>H\d*)?"
    r"(?P<charge>\+\+|--|[+-]\d*)?\]$",
    re.ASCII,
)
_BOND_SYMBOLS = "-=#$:/\\"


class SmilesError(ValueError):
    """Malformed or chemically impossible SMILES input."""

    def __init__(self, message: str, offset: Optional[int] = None):
        self.message = message
        self.offset = offset
        text = message if offset is None else f"{message} at offset {offset}"
        super().__init__(text)


class KekulizeError(SmilesError):
    """Aromatic system without a valid alternating single/double assignment."""


class Chirality(str, Enum):
    NONE = "none"
    CCW = "ccw"
    CW = "cw"


class BondOrder(str, Enum):
    SINGLE = "single"
    DOUBLE = "double"
    TRIPLE = "triple"
    QUADRUPLE = "quadruple"
    AROMATIC = "aromatic"

    @property
    def valence(self) -> int:
        """Valence consumed on each endpoint (aromatic counts as one)."""
        return _BOND_VALENCE[self]

    @property
    def code(self) -> int:
        return _BOND_CODE[self]


_BOND_VALENCE = {
    BondOrder.SINGLE: 1, BondOrder.DOUBLE: 2, BondOrder.TRIPLE: 3,
    BondOrder.QUADRUPLE: 4, BondOrder.AROMATIC: 1,
}
_BOND_CODE = {
    BondOrder.SINGLE: 1, BondOrder.DOUBLE: 2, BondOrder.TRIPLE: 3,
    BondOrder.QUADRUPLE: 4, BondOrder.AROMATIC: 5,
}


class BondStereo(str, Enum):
    NONE = "none"
    UP = "up"
    DOWN = "down"


@dataclass(frozen=True)
class Atom:
    element: str
    aromatic: bool = False
    formal_charge: int = 0
    explicit_h: Optional[int] = None
    isotope: Optional[int] = None
    chirality: Chirality = Chirality.NONE
    bracketed: bool = False

    def __post_init__(self):
        if self.element not in ELEMENTS:
            raise ValueError(f"unknown element '{self.element}'")
        if self.aromatic and self.element not in AROMATIC_ELEMENTS:
            raise ValueError(f"element '{self.element}' cannot be aromatic")
        if self.explicit_h is not None and self.explicit_h < 0:
            raise ValueError("explicit hydrogen count must be non-negative")
        if self.isotope is not None and self.isotope <= 0:
            raise ValueError("isotope must be positive")
        if not self.bracketed and (
            self.formal_charge != 0
            or self.explicit_h is not None
            or self.isotope is not None
            or self.chirality is not Chirality.NONE
        ):
            raise ValueError("charge, hydrogen count, isotope and chirality require a bracket atom")

    @property
    def symbol(self) -> str:
        return self.element.lower() if self.aromatic else self.element


@dataclass(frozen=True)
class Bond:
    """Bond between two atoms; stereo is read in the begin -> end direction."""

    begin: int
    end: int
    order: BondOrder = BondOrder.SINGLE
    stereo: BondStereo = BondStereo.NONE

    def __post_init__(self):
        if self.begin == self.end:
            raise ValueError("bond endpoints must be distinct")
        if self.stereo is not BondStereo.NONE and self.order is not BondOrder.SINGLE:
            raise ValueError("bond stereo is only allowed on single bonds")

    @property
    def key(self) -> Tuple[int, int]:
        return (min(self.begin, self.end), max(self.begin, self.end))

    def other(self, atom: int) -> int:
        return self.end if atom == self.begin else self.begin


@dataclass(frozen=True)
class Molecule:
    atoms: Tuple[Atom, ...] = ()
    bonds: Tuple[Bond, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "atoms", tuple(self.atoms))
        object.__setattr__(self, "bonds", tuple(self.bonds))
        n = len(self.atoms)
        seen = set()
        for bond in self.bonds:
            if not (0 <= bond.begin < n and 0 <= bond.end < n):
                raise ValueError(f"bond {bond.begin}-{bond.end} references a missing atom")
            if bond.key in seen:
                raise ValueError(f"duplicate bond between atoms {bond.key}")
            seen.add(bond.key)

    @property
    def n_atoms(self) -> int:
        return len(self.atoms)

    @property
    def n_bonds(self) -> int:
        return len(self.bonds)

    @cached_property
    def _adjacency(self) -> Tuple[Tuple[int, ...], ...]:
        adjacency: List[List[int]] = [[] for _ in self.atoms]
        for bond in self.bonds:
            adjacency[bond.begin].append(bond.end)
            adjacency[bond.end].append(bond.begin)
        return tuple(tuple(a) for a in adjacency)

    @cached_property
    def _bond_lookup(self) -> Dict[Tuple[int, int], int]:
        return {bond.key: k for k, bond in enumerate(self.bonds)}

    def neighbors(self, atom: int) -> Tuple[int, ...]:
        return self._adjacency[atom]

    def degree(self, atom: int) -> int:
        return len(self._adjacency[atom])

    def bond_index(self, a: int, b: int) -> int:
        return self._bond_lookup[(min(a, b), max(a, b))]

    def bond_between(self, a: int, b: int) -> Optional[Bond]:
        k = self._bond_lookup.get((min(a, b), max(a, b)))
        return None if k is None else self.bonds[k]

    def bond_valence(self, atom: int) -> int:
        return sum(self.bond_between(atom, j).order.valence for j in self._adjacency[atom])

    def implicit_h(self, atom: int) -> int:
        """Implicit hydrogens on an organic-subset atom (0 for bracket atoms)."""
        a = self.atoms[atom]
        if a.bracketed:
            return 0
        h = implicit_hydrogens(a, self.bond_valence(atom))
        if h is None:
            raise SmilesError(f"valence violation on atom {atom} ({a.symbol})")
        return h

    def total_h(self, atom: int) -> int:
        a = self.atoms[atom]
        if a.bracketed:
            return a.explicit_h or 0
        return self.implicit_h(atom)

    def components(self) -> List[List[int]]:
        """Connected fragments as sorted atom lists, ordered by first atom."""
        seen = set()
        out = []
        for root in range(self.n_atoms):
            if root in seen:
                continue
            stack, comp = [root], []
            seen.add(root)
            while stack:
                u = stack.pop()
                comp.append(u)
                for v in self._adjacency[u]:
                    if v not in seen:
                        seen.add(v)
                        stack.append(v)
            out.append(sorted(comp))
        return out


def implicit_hydrogens(atom: Atom, used: int) -> Optional[int]:
    """Hydrogens completing the smallest standard valence, None if exceeded."""
    for target in VALENCES[atom.element]:
        if target >= used:
            h = target - used
            if atom.aromatic and h >= 1:
                h -= 1  # one valence goes to the aromatic pi system
            return h
    return None


def charged_valence(element: str, charge: int, highest: bool = False) -> int:
    """Bonding capacity of a charged atom (isoelectronic shift of the default valence).

    With `highest` the shift starts from the largest standard valence, so
    hypervalent S and P keep room for all of their bonds.
    """
    base = max(VALENCES[element]) if highest else VALENCES[element][0]
    if element in ("N", "P", "O", "S"):
        value = base + charge
    elif element == "B":
        value = base - charge
    else:
        value = base - abs(charge)
    return max(value, 0)


def valence_violations(mol: Molecule) -> List[str]:
    """Human-readable list of atoms whose implicit hydrogen count would be negative."""
    problems = []
    for i, atom in enumerate(mol.atoms):
        if atom.bracketed:
            continue
        if implicit_hydrogens(atom, mol.bond_valence(i)) is None:
            problems.append(f"atom {i} ({atom.symbol}) uses {mol.bond_valence(i)} bonds")
    return problems


# Parsing ======================================================================


def _parse_bracket(token: str, offset: int) -> Atom:
    match = _BRACKET_RE.match(token)
    if match is None:
        raise SmilesError(f"malformed bracket atom '{token}'", offset)
    raw = match.group("element")
    aromatic = raw.islower()
    element = raw.capitalize() if len(raw) == 2 else raw.upper()
    if element not in ELEMENTS:
        raise SmilesError(f"unknown element '{raw}'", offset)
    if aromatic and element not in AROMATIC_ELEMENTS:
        raise SmilesError(f"element '{raw}' cannot be aromatic", offset)

    hcount = match.group("hcount")
    explicit_h = 0
    if hcount:
        explicit_h = int(hcount[1:]) if len(hcount) > 1 else 1
    if element == "H" and explicit_h:
        raise SmilesError("a hydrogen atom cannot carry hydrogens", offset)

    charge_text = match.group("charge")
    charge = 0
    if charge_text:
        sign = 1 if charge_text[0] == "+" else -1
        if charge_text in ("++", "--"):
            charge = 2 * sign
        elif len(charge_text) > 1:
            charge = sign * int(charge_text[1:])
        else:
            charge = sign

    isotope = match.group("isotope")
    chirality = {None: Chirality.NONE, "@": Chirality.CCW, "@@": Chirality.CW}[match.group("chirality")]
    return Atom(
        element=element,
        aromatic=aromatic,
        formal_charge=charge,
        explicit_h=explicit_h,
        isotope=int(isotope) if isotope else None,
        chirality=chirality,
        bracketed=True,
    )


def _bond_from_symbol(symbol: Optional[str], begin: int, end: int, atoms: Sequence[Atom]) -> Bond:
    if not symbol:
        both_aromatic = atoms[begin].aromatic and atoms[end].aromatic
        return Bond(begin, end, BondOrder.AROMATIC if both_aromatic else BondOrder.SINGLE)
    if symbol == "/":
        return Bond(begin, end, BondOrder.SINGLE, BondStereo.UP)
    if symbol == "\\":
        return Bond(begin, end, BondOrder.SINGLE, BondStereo.DOWN)
    order = {
        "-": BondOrder.SINGLE, "=": BondOrder.DOUBLE, "#": BondOrder.TRIPLE,
        "$": BondOrder.QUADRUPLE, ":": BondOrder.AROMATIC,
    }[symbol]
    return Bond(begin, end, order)


def parse_smiles(text: str) -> Molecule:
    """Parse a SMILES string into a `Molecule`.

    Raises:
        SmilesError: with the character offset of the offending symbol.
    """
    if not text:
        raise SmilesError("empty SMILES string", 0)

    atoms: List[Atom] = []
    offsets: List[int] = []
    bonds: List[Bond] = []
    pairs = set()
    prev: Optional[int] = None
    branches: List[Tuple[int, int, int]] = []  # (atom, offset, atom count at open)
    rings: Dict[int, Tuple[int, Optional[str], int]] = {}
    pending: Optional[Tuple[str, int]] = None

    def add_bond(bond: Bond, offset: int):
        if bond.key in pairs:
            raise SmilesError("duplicate bond between the same atoms", offset)
        pairs.add(bond.key)
        bonds.append(bond)

    def add_atom(atom: Atom, offset: int):
        nonlocal prev, pending
        atoms.append(atom)
        offsets.append(offset)
        idx = len(atoms) - 1
        if prev is not None:
            symbol = pending[0] if pending else None
            add_bond(_bond_from_symbol(symbol, prev, idx, atoms), offset)
        pending = None
        prev = idx

    i, n = 0, len(text)
    while i < n:
        ch = text[i]
        if ch == "[":
            close = text.find("]", i)
            if close < 0:
                raise SmilesError("unterminated bracket atom", i)
            add_atom(_parse_bracket(text[i:close + 1], i), i)
            i = close + 1
        elif ch.isalpha():
            two = text[i:i + 2]
            if two in ("Cl", "Br"):
                add_atom(Atom(two), i)
                i += 2
            elif ch in ORGANIC_SUBSET:
                add_atom(Atom(ch), i)
                i += 1
            elif ch in "bcnops":
                add_atom(Atom(ch.upper(), aromatic=True), i)
                i += 1
            else:
                raise SmilesError(f"unknown element '{ch}'", i)
        elif ch in _BOND_SYMBOLS:
            if prev is None:
                raise SmilesError(f"bond symbol '{ch}' without a preceding atom", i)
            if pending is not None:
                raise SmilesError("consecutive bond symbols", i)
            pending = (ch, i)
            i += 1
        elif ch == "(":
            if prev is None:
                raise SmilesError("branch opened without a preceding atom", i)
            if pending is not None:
                raise SmilesError("bond symbol before branch", pending[1])
            branches.append((prev, i, len(atoms)))
            i += 1
        elif ch == ")":
            if not branches:
                raise SmilesError("unbalanced parentheses", i)
            if pending is not None:
                raise SmilesError("dangling bond symbol", pending[1])
            anchor, _, count = branches.pop()
            if count == len(atoms):
                raise SmilesError("empty branch", i)
            prev = anchor
            i += 1
        elif ch in DIGITS or ch == "%":
            if ch == "%":
                digits = text[i + 1:i + 3]
                if len(digits) != 2 or not all(d in DIGITS for d in digits):
                    raise SmilesError("malformed ring number", i)
                number, width = int(digits), 3
            else:
                number, width = int(ch), 1
            if prev is None:
                raise SmilesError("ring closure without a preceding atom", i)
            symbol = pending[0] if pending else None
            if number in rings:
                opener, open_symbol, _ = rings.pop(number)
                if opener == prev:
                    raise SmilesError("ring closure bonds an atom to itself", i)
                if symbol and open_symbol and symbol != open_symbol:
                    raise SmilesError(f"conflicting bond symbols for ring {number}", i)
                if open_symbol or not symbol:
                    bond = _bond_from_symbol(open_symbol, opener, prev, atoms)
                else:
                    bond = _bond_from_symbol(symbol, prev, opener, atoms)
                add_bond(bond, i)
            else:
                rings[number] = (prev, symbol, i)
            pending = None
            i += width
        elif ch == ".":
            if prev is None or pending is not None:
                raise SmilesError("misplaced component separator", i)
            if branches:
                raise SmilesError("component separator inside a branch", i)
            prev = None
            i += 1
        else:
            raise SmilesError(f"unexpected character '{ch}'", i)

    if pending is not None:
        raise SmilesError("dangling bond symbol", pending[1])
    if branches:
        raise SmilesError("unbalanced parentheses", branches[-1][1])
    if rings:
        first = min(off for _, _, off in rings.values())
        raise SmilesError("unpaired ring closure", first)
    if prev is None:
        raise SmilesError("trailing component separator", n - 1)

    mol = Molecule(tuple(atoms), tuple(bonds))
    for k, atom in enumerate(atoms):
        if not atom.bracketed and implicit_hydrogens(atom, mol.bond_valence(k)) is None:
            raise SmilesError(f"valence violation on '{atom.symbol}'", offsets[k])
    return mol


# Writing ======================================================================


def _atom_text(atom: Atom) -> str:
    if not atom.bracketed and atom.element in ORGANIC_SUBSET:
        return atom.symbol
    parts = ["["]
    if atom.isotope:
        parts.append(str(atom.isotope))
    parts.append(atom.symbol)
    if atom.chirality is Chirality.CCW:
        parts.append("@")
    elif atom.chirality is Chirality.CW:
        parts.append("@@")
    h = atom.explicit_h or 0
    if h == 1:
        parts.append("H")
    elif h > 1:
        parts.append(f"H{h}")
    if atom.formal_charge == 1:
        parts.append("+")
    elif atom.formal_charge == -1:
        parts.append("-")
    elif atom.formal_charge:
        parts.append(f"{atom.formal_charge:+d}")
    parts.append("]")
    return "".join(parts)


def _bond_text(mol: Molecule, bond: Bond, source: int) -> str:
    a, b = mol.atoms[bond.begin], mol.atoms[bond.end]
    if bond.order is BondOrder.SINGLE:
        if bond.stereo is not BondStereo.NONE:
            up = bond.stereo is BondStereo.UP
            if source != bond.begin:
                up = not up
            return "/" if up else "\\"
        return "-" if a.aromatic and b.aromatic else ""
    if bond.order is BondOrder.AROMATIC:
        return "" if a.aromatic and b.aromatic else ":"
    return {BondOrder.DOUBLE: "=", BondOrder.TRIPLE: "#", BondOrder.QUADRUPLE: "$"}[bond.order]


def _ring_label(number: int) -> str:
    if number < 10:
        return str(number)
    if number > 99:
        raise SmilesError("more than 99 simultaneously open rings")
    return f"%{number}"


def dfs_tree(mol: Molecule, start: int, order: Mapping[int, Sequence[int]]):
    """Depth-first spanning tree honoring `order`; returns children and ring bonds."""
    visited = {start}
    children: Dict[int, List[int]] = {start: []}
    opens: Dict[int, List[int]] = defaultdict(list)
    closes: Dict[int, List[int]] = defaultdict(list)
    preorder = [start]
    used = set()
    stack = [(start, iter(order[start]))]
    while stack:
        u, it = stack[-1]
        for v in it:
            k = mol.bond_index(u, v)
            if k in used:
                continue
            used.add(k)
            if v in visited:
                opens[v].append(k)
                closes[u].append(k)
            else:
                visited.add(v)
                children[u].append(v)
                children[v] = []
                preorder.append(v)
                stack.append((v, iter(order[v])))
                break
        else:
            stack.pop()
    return children, opens, closes, preorder


def _write_component(mol: Molecule, start: int, order: Mapping[int, Sequence[int]]) -> str:
    children, opens, closes, _ = dfs_tree(mol, start, order)
    out: List[str] = []
    labels: Dict[int, int] = {}
    in_use = set()
    stack: List[Tuple[str, int, Optional[int]]] = [("atom", start, None)]
    while stack:
        kind, u, source = stack.pop()
        if kind == "text":
            out.append("(" if u == 0 else ")")
            continue
        if source is not None:
            out.append(_bond_text(mol, mol.bonds[mol.bond_index(source, u)], source))
        out.append(_atom_text(mol.atoms[u]))
        for k in closes[u]:
            number = labels.pop(k)
            in_use.discard(number)
            out.append(_ring_label(number))
        for k in opens[u]:
            number = 1
            while number in in_use:
                number += 1
            in_use.add(number)
            labels[k] = number
            out.append(_bond_text(mol, mol.bonds[k], u) + _ring_label(number))
        kids = children[u]
        if kids:
            stack.append(("atom", kids[-1], u))
        for child in reversed(kids[:-1]):
            stack.append(("text", 1, None))
            stack.append(("atom", child, u))
            stack.append(("text", 0, None))
    return "".join(out)


def _check_order(mol: Molecule, neighbor_order) -> Dict[int, Sequence[int]]:
    if neighbor_order is None:
        return {i: mol.neighbors(i) for i in range(mol.n_atoms)}
    order = {i: tuple(neighbor_order[i]) for i in range(mol.n_atoms)}
    for i, nbrs in order.items():
        if sorted(nbrs) != sorted(mol.neighbors(i)):
            raise ValueError(f"neighbor order for atom {i} is not a permutation of its neighbors")
    return order


def write_smiles(
    mol: Molecule,
    start_atom: Union[int, Sequence[int]] = 0,
    neighbor_order: Optional[Mapping[int, Sequence[int]]] = None,
) -> str:
    """Serialize `mol` by depth-first traversal.

    `start_atom` is either one atom (its fragment is written first, the other
    fragments follow from their lowest-index atom) or one start atom per
    fragment, in output order. `neighbor_order` maps each atom to a
    permutation of its neighbors.
    """
    if mol.n_atoms == 0:
        return ""
    order = _check_order(mol, neighbor_order)
    components = mol.components()
    owner = {atom: c for c, comp in enumerate(components) for atom in comp}
    if isinstance(start_atom, int):
        if not 0 <= start_atom < mol.n_atoms:
            raise ValueError(f"start atom {start_atom} out of range")
        starts = [start_atom] + [comp[0] for comp in components if owner[start_atom] != owner[comp[0]]]
    else:
        starts = list(start_atom)
        if sorted(owner[s] for s in starts) != list(range(len(components))):
            raise ValueError("start atoms must name exactly one atom per fragment")
    return ".".join(_write_component(mol, s, order) for s in starts)


# Canonical form ===============================================================


def _dense_rank(keys: Sequence) -> List[int]:
    lookup = {key: r for r, key in enumerate(sorted(set(keys)))}
    return [lookup[key] for key in keys]


def _refine(mol: Molecule, ranks: List[int]) -> List[int]:
    ranks = _dense_rank(ranks)
    while True:
        keys = []
        for i in range(mol.n_atoms):
            around = sorted(
                (ranks[j], mol.bond_between(i, j).order.code) for j in mol.neighbors(i)
            )
            keys.append((ranks[i], tuple(around)))
        refined = _dense_rank(keys)
        if len(set(refined)) == len(set(ranks)):
            return refined
        ranks = refined


def canonical_ranks(mol: Molecule) -> List[int]:
    """Permutation-invariant total order of atoms (0 = first)."""
    invariants = [
        (
            atom.element, atom.aromatic, mol.degree(i), atom.formal_charge,
            mol.total_h(i), atom.isotope or 0, atom.bracketed,
        )
        for i, atom in enumerate(mol.atoms)
    ]
    ranks = _refine(mol, _dense_rank(invariants))
    while len(set(ranks)) < mol.n_atoms:
        counts = Counter(ranks)
        tied = min(r for r, c in counts.items() if c > 1)
        chosen = min(i for i, r in enumerate(ranks) if r == tied)
        ranks = [2 * r for r in ranks]
        ranks[chosen] -= 1
        ranks = _refine(mol, ranks)
    return ranks


def canonical_smiles(mol: Molecule) -> str:
    if mol.n_atoms == 0:
        return ""
    ranks = canonical_ranks(mol)
    order = {i: tuple(sorted(mol.neighbors(i), key=ranks.__getitem__)) for i in range(mol.n_atoms)}
    parts = []
    for comp in mol.components():
        start = min(comp, key=ranks.__getitem__)
        parts.append(_write_component(mol, start, order))
    return ".".join(sorted(parts))


def canonicalize(text: str) -> str:
    """Internal canonical SMILES; equal for every enumeration of one molecule."""
    return canonical_smiles(parse_smiles(text))


# Enumeration and augmentation =================================================


def random_smiles(mol: Molecule, seed: int) -> str:
    rng = random.Random(seed)
    components = mol.components()
    rng.shuffle(components)
    starts = [rng.choice(comp) for comp in components]
    order = {}
    for i in range(mol.n_atoms):
        nbrs = list(mol.neighbors(i))
        rng.shuffle(nbrs)
        order[i] = nbrs
    return write_smiles(mol, starts, order)


def enumerate_random(text: str, seed: int) -> str:
    """One randomized SMILES for the molecule in `text`; deterministic per seed."""
    return random_smiles(parse_smiles(text), seed)


def augment(text: str, n_generate: int = 20, n_keep: int = 5, seed: int = 0) -> List[str]:
    """Generate `n_generate` enumerations, deduplicate and keep the `n_keep` shortest."""
    if n_keep > n_generate:
        raise ValueError("n_keep must not exceed n_generate")
    mol = parse_smiles(text)
    rng = random.Random(seed)
    variants = {random_smiles(mol, rng.getrandbits(32)) for _ in range(n_generate)}
    return sorted(variants, key=lambda s: (len(s), s))[:n_keep]


# Graph utilities ==============================================================


def renumber(mol: Molecule, order: Sequence[int]) -> Molecule:
    """Relabel atoms so that new atom k is old atom order[k]."""
    if sorted(order) != list(range(mol.n_atoms)):
        raise ValueError("order must be a permutation of the atom indices")
    new_index = {old: new for new, old in enumerate(order)}
    atoms = tuple(mol.atoms[old] for old in order)
    bonds = tuple(
        replace(bond, begin=new_index[bond.begin], end=new_index[bond.end])
        for bond in sorted(mol.bonds, key=lambda b: sorted((new_index[b.begin], new_index[b.end])))
    )
    return Molecule(atoms, bonds)


def canonical_order(mol: Molecule) -> List[int]:
    """Atom indices sorted by canonical rank."""
    ranks = canonical_ranks(mol)
    return sorted(range(mol.n_atoms), key=ranks.__getitem__)


def _needs_pi_bond(mol: Molecule, atom: int) -> bool:
    a = mol.atoms[atom]
    used = mol.bond_valence(atom)
    if a.bracketed:
        free = charged_valence(a.element, a.formal_charge) - used - (a.explicit_h or 0)
    else:
        target = next((v for v in VALENCES[a.element] if v >= used), used)
        free = target - used
    return free >= 1


def kekulize(mol: Molecule) -> Molecule:
    """Replace aromatic bonds by an explicit alternating single/double assignment."""
    if not any(atom.aromatic for atom in mol.atoms) and not any(
        bond.order is BondOrder.AROMATIC for bond in mol.bonds
    ):
        return mol
    needy = [i for i, atom in enumerate(mol.atoms) if atom.aromatic and _needs_pi_bond(mol, i)]
    graph = nx.Graph()
    graph.add_nodes_from(needy)
    members = set(needy)
    for bond in mol.bonds:
        if bond.order is BondOrder.AROMATIC and bond.begin in members and bond.end in members:
            graph.add_edge(bond.begin, bond.end)
    matching = nx.max_weight_matching(graph, maxcardinality=True)
    if 2 * len(matching) != len(needy):
        raise KekulizeError("aromatic system cannot be kekulized")
    doubles = {frozenset(edge) for edge in matching}

    bonds = []
    for bond in mol.bonds:
        if bond.order is BondOrder.AROMATIC:
            order = BondOrder.DOUBLE if frozenset((bond.begin, bond.end)) in doubles else BondOrder.SINGLE
            bond = replace(bond, order=order)
        bonds.append(bond)
    atoms = [replace(atom, aromatic=False) for atom in mol.atoms]
    return Molecule(tuple(atoms), tuple(bonds))


def to_graph(mol: Molecule) -> nx.Graph:
    graph = nx.Graph()
    for i, atom in enumerate(mol.atoms):
        graph.add_node(
            i,
            element=atom.element,
            aromatic=atom.aromatic,
            charge=atom.formal_charge,
            hydrogens=mol.total_h(i),
            isotope=atom.isotope or 0,
        )
    for bond in mol.bonds:
        graph.add_edge(bond.begin, bond.end, order=bond.order.value)
    return graph


def is_isomorphic(a: Molecule, b: Molecule) -> bool:
    """Graph isomorphism on element, aromaticity, charge, hydrogens, isotope and bond order."""
    if a.n_atoms != b.n_atoms or a.n_bonds != b.n_bonds:
        return False
    node_match = isomorphism.categorical_node_match(
        ["element", "aromatic", "charge", "hydrogens", "isotope"], [None] * 5
    )
    edge_match = isomorphism.categorical_edge_match("order", None)
    return nx.is_isomorphic(to_graph(a), to_graph(b), node_match=node_match, edge_match=edge_match)


def molecule_formula(mol: Molecule) -> str:
    """Hill-order formula including hydrogens, e.g. "C2H6O" for ethanol."""
    counts: Counter = Counter()
    for i, atom in enumerate(mol.atoms):
        counts[atom.element] += 1
        counts["H"] += mol.total_h(i)
    if not counts.get("H"):
        counts.pop("H", None)
    if "C" in counts:
        head = ["C"] + (["H"] if "H" in counts else [])
    else:
        head = []
    order = head + sorted(e for e in counts if e not in head)
    return "".join(e if counts[e] == 1 else f"{e}{counts[e]}" for e in order)
