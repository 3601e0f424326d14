"""
SELFIES encoding and decoding.

Decoding is a derivation over bond capacities: requested bond orders are
clipped to what both atoms can still take, branch and ring lengths are read
from the base-16 index alphabet, and tokens that cannot be honored are
skipped. Any sequence of known tokens therefore decodes to a valid molecule.
"""
from __future__ import annotations

import logging
import re
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from itertools import product
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

from molseq.smiles import (
    VALENCES,
    Atom,
    Bond,
    BondOrder,
    Molecule,
    canonical_order,
    canonical_smiles,
    charged_valence,
    dfs_tree,
    kekulize,
    parse_smiles,
    renumber,
)
from molseq.tokenize import SPECIALS, tokenize_selfies

logger = logging.getLogger(__name__)

SEPARATOR = "[.]"
INDEX_ALPHABET: Tuple[str, ...] = (
    "[C]", "[Ring1]", "[Ring2]", "[Branch1]", "[=Branch1]", "[#Branch1]",
    "[Branch2]", "[=Branch2]", "[#Branch2]", "[O]", "[N]", "[=N]", "[=C]",
    "[#C]", "[S]", "[P]",
)
_INDEX_VALUE = {symbol: n for n, symbol in enumerate(INDEX_ALPHABET)}
MAX_ARITY = 3

_ORDER_PREFIX = {1: "", 2: "=", 3: "#"}
_PREFIX_ORDER = {"": 1, "=": 2, "#": 3}
_ORDER_BOND = {1: BondOrder.SINGLE, 2: BondOrder.DOUBLE, 3: BondOrder.TRIPLE}
_BOND_ORDER = {BondOrder.SINGLE: 1, BondOrder.DOUBLE: 2, BondOrder.TRIPLE: 3}

_STRUCTURE_RE = re.compile(r"^\[(?P<prefix>[=#]?)(?P<kind>Branch|Ring)(?P<arity>[123])\]$", re.ASCII)
_ATOM_RE = re.compile(
    r"^\[(?P<prefix>[=#]?)(?P<isotope>\d+)?(?P<element>[A-Z][a-z]?)"
    r"(?:H(?P<hcount>\d+))?(?P<charge>[+-]\d+)?\]$",
    re.ASCII,
)


class SelfiesError(ValueError):
    """Molecule that cannot be written as SELFIES, or an unknown token."""


class TokenKind(str, Enum):
    ATOM = "atom"
    BRANCH = "branch"
    RING = "ring"
    SEPARATOR = "separator"


@dataclass(frozen=True)
class SelfiesToken:
    text: str
    kind: TokenKind
    order: int = 1
    arity: int = 0
    atom: Optional[Atom] = None

    @property
    def index_value(self) -> int:
        """Value of this token when read as an index symbol (0 if not in the index alphabet)."""
        return _INDEX_VALUE.get(self.text, 0)


@lru_cache(maxsize=4096)
def parse_token(text: str) -> SelfiesToken:
    if text == SEPARATOR:
        return SelfiesToken(text, TokenKind.SEPARATOR)
    match = _STRUCTURE_RE.match(text)
    if match:
        kind = TokenKind.BRANCH if match.group("kind") == "Branch" else TokenKind.RING
        return SelfiesToken(text, kind, _PREFIX_ORDER[match.group("prefix")], int(match.group("arity")))
    match = _ATOM_RE.match(text)
    if match is None:
        raise SelfiesError(f"unknown SELFIES token '{text}'")
    element = match.group("element")
    if element not in VALENCES:
        raise SelfiesError(f"unsupported element in token '{text}'")
    isotope, hcount, charge = match.group("isotope"), match.group("hcount"), match.group("charge")
    if isotope or hcount is not None or charge or element == "H":
        atom = Atom(
            element,
            formal_charge=int(charge) if charge else 0,
            explicit_h=int(hcount) if hcount is not None else 0,
            isotope=int(isotope) if isotope else None,
            bracketed=True,
        )
    else:
        atom = Atom(element)
    return SelfiesToken(text, TokenKind.ATOM, _PREFIX_ORDER[match.group("prefix")], atom=atom)


def bond_capacity(atom: Atom) -> int:
    """Maximum total bond order an atom may carry during derivation."""
    if atom.bracketed:
        return max(charged_valence(atom.element, atom.formal_charge, highest=True) - (atom.explicit_h or 0), 0)
    return max(VALENCES[atom.element])


def atom_token(atom: Atom, order: int = 1) -> str:
    body = atom.element
    if atom.bracketed:
        h = atom.explicit_h or 0
        body = f"{atom.isotope or ''}{atom.element}"
        if h > 0 or atom.formal_charge == 0:
            body += f"H{h}"
        if atom.formal_charge:
            body += f"{atom.formal_charge:+d}"
    return f"[{_ORDER_PREFIX[order]}{body}]"


def index_to_symbols(n: int, arity: int) -> List[str]:
    """Big-endian base-16 digits of `n` as index symbols."""
    if not 0 <= n < 16 ** arity:
        raise SelfiesError(f"index {n} does not fit in {arity} symbols")
    digits = []
    for _ in range(arity):
        digits.append(INDEX_ALPHABET[n % 16])
        n //= 16
    return digits[::-1]


def symbols_to_index(symbols: Sequence[str]) -> int:
    value = 0
    for symbol in symbols:
        value = 16 * value + _INDEX_VALUE.get(symbol, 0)
    return value


def _arity_for(n: int) -> int:
    for arity in range(1, MAX_ARITY + 1):
        if n < 16 ** arity:
            return arity
    raise SelfiesError(f"span {n} exceeds the largest branch/ring length")


def split_fragments(tokens: Sequence[str]) -> List[List[str]]:
    fragments: List[List[str]] = [[]]
    for token in tokens:
        if token == SEPARATOR:
            fragments.append([])
        else:
            fragments[-1].append(token)
    return [f for f in fragments if f]


def semantic_alphabet() -> List[str]:
    """Every token the decoder understands without bracket decorations, plus common ions."""
    tokens = set(INDEX_ALPHABET)
    for element, (prefix, order) in product(sorted(VALENCES), _PREFIX_ORDER.items()):
        if order <= max(VALENCES[element]):
            tokens.add(f"[{prefix}{element}]")
    for prefix, kind, arity in product(_PREFIX_ORDER, ("Branch", "Ring"), range(1, MAX_ARITY + 1)):
        tokens.add(f"[{prefix}{kind}{arity}]")
    tokens.update(["[NH1+1]", "[O-1]", "[N+1]", "[NH0]", "[CH0]", "[S-1]", "[NH3+1]", SEPARATOR])
    return sorted(tokens)


# Encoding =====================================================================


def _encode_fragment(mol: Molecule, start: int, order: Dict[int, Sequence[int]]) -> List[str]:
    children, _, closes, preorder = dfs_tree(mol, start, order)
    position = {atom: p for p, atom in enumerate(preorder)}

    def bond_order(a: int, b: int) -> int:
        return _BOND_ORDER[mol.bond_between(a, b).order]

    def chain(u: int, incoming: int) -> List[str]:
        out: List[str] = []
        current, current_order = u, incoming
        while True:
            out.append(atom_token(mol.atoms[current], current_order))
            for k in closes[current]:
                opener = mol.bonds[k].other(current)
                span = position[current] - position[opener] - 1
                arity = _arity_for(span)
                ring_order = bond_order(current, opener)
                out.append(f"[{_ORDER_PREFIX[ring_order]}Ring{arity}]")
                out.extend(index_to_symbols(span, arity))
            kids = children[current]
            for child in kids[:-1]:
                child_order = bond_order(current, child)
                body = chain(child, child_order)
                arity = _arity_for(len(body) - 1)
                out.append(f"[{_ORDER_PREFIX[child_order]}Branch{arity}]")
                out.extend(index_to_symbols(len(body) - 1, arity))
                out.extend(body)
            if not kids:
                return out
            current, current_order = kids[-1], bond_order(current, kids[-1])

    return chain(start, 1)


def encode_tokens(mol: Molecule, canonical: bool = True) -> List[str]:
    """SELFIES tokens for `mol`.

    With `canonical` the traversal follows canonical atom ranks; otherwise it
    keeps the atom order of `mol` (so enumerated SMILES give distinct SELFIES).
    """
    for bond in mol.bonds:
        if bond.order is BondOrder.QUADRUPLE:
            raise SelfiesError("quadruple bonds cannot be written as SELFIES")
    canon = kekulize(renumber(mol, canonical_order(mol)) if canonical else mol)
    order = {i: tuple(sorted(canon.neighbors(i))) for i in range(canon.n_atoms)}
    tokens: List[str] = []
    for comp in canon.components():
        if tokens:
            tokens.append(SEPARATOR)
        tokens.extend(_encode_fragment(canon, comp[0], order))
    return tokens


def encode_selfies(mol: Molecule, canonical: bool = True) -> str:
    """SELFIES string for `mol` after kekulization."""
    return "".join(encode_tokens(mol, canonical))


# Decoding =====================================================================


class _Derivation:
    """Working state of one decode: atoms, remaining capacities and deferred rings."""

    def __init__(self):
        self.atoms: List[Atom] = []
        self.capacity: List[int] = []
        self.bonds: Dict[Tuple[int, int], int] = {}
        self.rings: List[Tuple[int, int, int]] = []
        self.fragment_start = 0

    def add_atom(self, atom: Atom) -> int:
        self.atoms.append(atom)
        self.capacity.append(bond_capacity(atom))
        return len(self.atoms) - 1

    def add_bond(self, a: int, b: int, order: int):
        self.bonds[(min(a, b), max(a, b))] = order
        self.capacity[a] -= order
        self.capacity[b] -= order

    def derive(self, tokens: Sequence[str], prev: Optional[int] = None, limit: int = MAX_ARITY):
        i = 0
        while i < len(tokens):
            token = parse_token(tokens[i])
            i += 1
            if token.kind is TokenKind.SEPARATOR:
                continue
            if token.kind is TokenKind.ATOM:
                if prev is None:
                    prev = self.add_atom(token.atom)
                    continue
                if self.capacity[prev] == 0:
                    return
                order = min(token.order, self.capacity[prev], bond_capacity(token.atom), limit)
                if order == 0:
                    continue
                new = self.add_atom(token.atom)
                self.add_bond(prev, new, order)
                prev, limit = new, MAX_ARITY
                continue

            if prev is None:
                continue
            if token.kind is TokenKind.BRANCH:
                if self.capacity[prev] < 2:
                    continue
                index_tokens = tokens[i:i + token.arity]
                i += len(index_tokens)
                length = symbols_to_index(index_tokens) + 1
                body = tokens[i:i + length]
                i += len(body)
                self.derive(body, prev, min(self.capacity[prev] - 1, token.order))
            else:
                if self.capacity[prev] == 0:
                    continue
                index_tokens = tokens[i:i + token.arity]
                i += len(index_tokens)
                target = max(self.fragment_start, prev - (symbols_to_index(index_tokens) + 1))
                if target == prev:
                    continue
                order = min(token.order, self.capacity[prev])
                self.capacity[prev] -= order
                self.rings.append((target, prev, order))

    def form_rings(self):
        for target, source, requested in self.rings:
            order = min(requested, self.capacity[target])
            self.capacity[source] += requested - order
            if order == 0:
                continue
            key = (min(target, source), max(target, source))
            existing = self.bonds.get(key, 0)
            total = min(existing + order, MAX_ARITY)
            added = total - existing
            self.capacity[source] += order - added
            self.capacity[target] -= added
            if added:
                self.bonds[key] = total

    def molecule(self) -> Molecule:
        bonds = tuple(Bond(a, b, _ORDER_BOND[o]) for (a, b), o in sorted(self.bonds.items()))
        return Molecule(tuple(self.atoms), bonds)


def decode_tokens(tokens: Sequence[str]) -> Molecule:
    derivation = _Derivation()
    for fragment in split_fragments(tokens):
        derivation.fragment_start = len(derivation.atoms)
        derivation.derive(fragment)
    derivation.form_rings()
    return derivation.molecule()


def decode_selfies(text: Union[str, Sequence[str]]) -> Molecule:
    """Decode a SELFIES string or token list into a molecule. Never fails on known tokens."""
    tokens = tokenize_selfies(text) if isinstance(text, str) else list(text)
    return decode_tokens(tokens)


def selfies_alphabet(corpus: Iterable[str]) -> List[str]:
    """Reserved specials followed by the sorted distinct tokens of `corpus`."""
    tokens = set()
    for entry in corpus:
        tokens.update(tokenize_selfies(entry) if isinstance(entry, str) else entry)
    return list(SPECIALS) + sorted(tokens)


def smiles_to_selfies(text: str, canonical: bool = True) -> str:
    return encode_selfies(parse_smiles(text), canonical)


def selfies_to_smiles(text: str) -> str:
    return canonical_smiles(decode_selfies(text))
