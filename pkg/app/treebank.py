"""Linearized, lexicalized constituency trees.

A tree such as ``ROOT(S(NP(Jane) VP(had NP(a cat)) .))`` is written as the
token sequence::

    (ROOT (S (NP Jane )NP (VP had (NP a cat )NP )VP . )S )ROOT

Opening and closing brackets both carry their label. Terminals are the words
(or sub-words) themselves; part-of-speech tags are removed by ``lexicalize``.
"""
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, List, Optional, Sequence, Tuple, Union
import re

from app.exceptions import InvalidTree, MalformedPreterminal, TreeSyntaxError, ValidationError
from app.subword import DEFAULT_MARKER, BpeModel, revert_bpe

ESCAPE = "\\"
ROOT_LABEL = "ROOT"


@dataclass(frozen=True)
class Open:
    label: str

    def __post_init__(self):
        _check_label(self.label)

    def __str__(self) -> str:
        return f"({self.label}"


@dataclass(frozen=True)
class Close:
    label: str

    def __post_init__(self):
        _check_label(self.label)

    def __str__(self) -> str:
        return f"){self.label}"


@dataclass(frozen=True)
class Terminal:
    text: str

    def __post_init__(self):
        _check_text(self.text, "terminal")

    def __str__(self) -> str:
        if self.text[0] in "()" + ESCAPE:
            return ESCAPE + self.text
        return self.text


TreeToken = Union[Open, Close, Terminal]
LinearTree = List[TreeToken]


def _check_label(label: str) -> None:
    if not label or any(ch.isspace() for ch in label):
        raise ValidationError(f"Invalid nonterminal label: {label!r}")


def _check_text(text: str, kind: str) -> None:
    if not text or any(ch.isspace() for ch in text):
        raise ValidationError(f"Invalid {kind} text: {text!r}")


@dataclass(frozen=True)
class Leaf:
    text: str

    def __post_init__(self):
        _check_text(self.text, "leaf")


@dataclass(frozen=True)
class Internal:
    label: str
    children: Tuple["ConstituencyTree", ...]

    def __post_init__(self):
        _check_label(self.label)
        object.__setattr__(self, "children", tuple(self.children))
        if not self.children:
            raise ValidationError(f"Internal node {self.label} has no children")


ConstituencyTree = Union[Internal, Leaf]


class ErrorKind(Enum):
    UNMATCHED_CLOSE = "UnmatchedClose"
    LABEL_MISMATCH = "LabelMismatch"
    UNCLOSED_OPEN = "UnclosedOpen"
    EMPTY_CONSTITUENT = "EmptyConstituent"
    MULTIPLE_ROOTS = "MultipleRoots"


@dataclass(frozen=True)
class TreeViolation:
    position: int
    kind: ErrorKind


@dataclass(frozen=True)
class ValidityReport:
    valid: bool
    first_error: Optional[TreeViolation] = None

    def __post_init__(self):
        if self.valid != (self.first_error is None):
            raise ValidationError("A report is valid exactly when it has no error")


# -- token codec --------------------------------------------------------------

def tokenize_linear(line: str) -> LinearTree:
    tokens: LinearTree = []
    for position, item in enumerate(line.split()):
        if item == ESCAPE:
            raise TreeSyntaxError("Dangling escape", position)
        if item.startswith(ESCAPE):
            tokens.append(Terminal(item[1:]))
        elif item[0] in "()":
            if len(item) == 1:
                raise TreeSyntaxError(f"Unlabeled bracket {item!r}", position)
            tokens.append(Open(item[1:]) if item[0] == "(" else Close(item[1:]))
        else:
            tokens.append(Terminal(item))
    return tokens


def serialize_linear(tokens: Iterable[TreeToken]) -> str:
    return " ".join(str(token) for token in tokens)


# -- structure ----------------------------------------------------------------

def tree_yield(tree: ConstituencyTree) -> List[str]:
    if isinstance(tree, Leaf):
        return [tree.text]
    return [text for child in tree.children for text in tree_yield(child)]


def count_nodes(tree: ConstituencyTree) -> Tuple[int, int]:
    """Returns (leaves, internal nodes)."""
    if isinstance(tree, Leaf):
        return 1, 0
    leaves, internal = 0, 1
    for child in tree.children:
        child_leaves, child_internal = count_nodes(child)
        leaves += child_leaves
        internal += child_internal
    return leaves, internal


def add_root(tree: ConstituencyTree, label: str = ROOT_LABEL) -> ConstituencyTree:
    if isinstance(tree, Internal) and tree.label == label:
        return tree
    return Internal(label, (tree,))


def linearize(tree: ConstituencyTree) -> LinearTree:
    tokens: LinearTree = []
    _emit(tree, tokens)
    return tokens


def _emit(tree: ConstituencyTree, tokens: LinearTree) -> None:
    if isinstance(tree, Leaf):
        tokens.append(Terminal(tree.text))
        return
    tokens.append(Open(tree.label))
    for child in tree.children:
        _emit(child, tokens)
    tokens.append(Close(tree.label))


def _scan(tokens: Sequence[TreeToken]) -> Tuple[ValidityReport, Optional[ConstituencyTree]]:
    # each frame: (label, children collected so far)
    stack: List[Tuple[str, List[ConstituencyTree]]] = []
    root: Optional[ConstituencyTree] = None
    roots = 0
    for position, token in enumerate(tokens):
        if isinstance(token, Open):
            if not stack:
                if roots:
                    return _failure(position, ErrorKind.MULTIPLE_ROOTS), None
                roots += 1
            stack.append((token.label, []))
        elif isinstance(token, Close):
            if not stack:
                return _failure(position, ErrorKind.UNMATCHED_CLOSE), None
            label, children = stack[-1]
            if label != token.label:
                return _failure(position, ErrorKind.LABEL_MISMATCH), None
            if not children:
                return _failure(position, ErrorKind.EMPTY_CONSTITUENT), None
            stack.pop()
            node = Internal(label, tuple(children))
            if stack:
                stack[-1][1].append(node)
            else:
                root = node
        else:
            if not stack:
                return _failure(position, ErrorKind.MULTIPLE_ROOTS), None
            stack[-1][1].append(Leaf(token.text))
    if stack:
        return _failure(len(tokens), ErrorKind.UNCLOSED_OPEN), None
    if root is None:
        return _failure(0, ErrorKind.MULTIPLE_ROOTS), None
    return ValidityReport(True), root


def _failure(position: int, kind: ErrorKind) -> ValidityReport:
    return ValidityReport(False, TreeViolation(position, kind))


def validate(tokens: Sequence[TreeToken]) -> ValidityReport:
    report, _ = _scan(tokens)
    return report


def parse_linear(tokens: Sequence[TreeToken]) -> ConstituencyTree:
    report, tree = _scan(tokens)
    if not report.valid:
        raise InvalidTree(report)
    return tree


def validity_rate(lines: Iterable[str]) -> Tuple[int, int]:
    """Counts (valid, total) over linearized-tree lines; untokenizable lines count as invalid."""
    valid = total = 0
    for line in lines:
        total += 1
        try:
            tokens = tokenize_linear(line)
        except TreeSyntaxError:
            continue
        valid += validate(tokens).valid
    return valid, total


def terminal_positions(tokens: Sequence[TreeToken]) -> List[int]:
    return [i for i, token in enumerate(tokens) if isinstance(token, Terminal)]


def surface(tokens: Sequence[TreeToken], continuation_marker: str = DEFAULT_MARKER) -> List[str]:
    """Drops brackets and merges sub-words; defined for any token sequence."""
    texts = [token.text for token in tokens if isinstance(token, Terminal)]
    return revert_bpe(texts, continuation_marker)


def apply_bpe_to_tree(model: BpeModel, tokens: Sequence[TreeToken]) -> LinearTree:
    segmented: LinearTree = []
    for token in tokens:
        if isinstance(token, Terminal):
            segmented.extend(Terminal(piece) for piece in model.segment_word(token.text))
        else:
            segmented.append(token)
    return segmented


# -- Penn treebank brackets ---------------------------------------------------

def lexicalize(ptb_tree: ConstituencyTree, strict: bool = True) -> ConstituencyTree:
    """Replaces every preterminal by the word it dominates.

    With ``strict`` a node that mixes words and phrases is rejected; otherwise
    such words are kept where they are.
    """
    if isinstance(ptb_tree, Leaf):
        return ptb_tree
    children = ptb_tree.children
    if len(children) == 1 and isinstance(children[0], Leaf):
        return children[0]
    has_leaf = any(isinstance(child, Leaf) for child in children)
    has_phrase = any(isinstance(child, Internal) for child in children)
    if strict and has_leaf and has_phrase:
        raise MalformedPreterminal(f"Node {ptb_tree.label} mixes words and phrases")
    return Internal(ptb_tree.label, tuple(lexicalize(child, strict) for child in children))


_PTB_TOKEN = re.compile(r"\(|\)|[^()\s]+")


def parse_ptb(text: str) -> ConstituencyTree:
    tokens = [(m.group(), m.start()) for m in _PTB_TOKEN.finditer(text)]
    if not tokens:
        raise TreeSyntaxError("Empty bracketed expression", 0)
    tree, position = _parse_bracket(tokens, 0, len(text), outermost=True)
    if position != len(tokens):
        raise TreeSyntaxError("Trailing material after tree", tokens[position][1])
    return tree


def _parse_bracket(tokens: List[Tuple[str, int]], i: int, end: int,
                   outermost: bool = False) -> Tuple[ConstituencyTree, int]:
    if i >= len(tokens):
        raise TreeSyntaxError("Unexpected end of input", end)
    item, offset = tokens[i]
    if item != "(":
        raise TreeSyntaxError(f"Expected '(' but found {item!r}", offset)
    i += 1
    label = None
    if i < len(tokens) and tokens[i][0] not in "()":
        label = tokens[i][0]
        i += 1
    children: List[ConstituencyTree] = []
    while True:
        if i >= len(tokens):
            raise TreeSyntaxError("Unbalanced brackets", end)
        item = tokens[i][0]
        if item == ")":
            i += 1
            break
        if item == "(":
            child, i = _parse_bracket(tokens, i, end)
            children.append(child)
        else:
            children.append(Leaf(item))
            i += 1
    if not children:
        raise TreeSyntaxError("Empty constituent", offset)
    if label is None:
        if outermost and len(children) == 1 and isinstance(children[0], Internal):
            return children[0], i
        raise TreeSyntaxError("Constituent without label", offset)
    return Internal(label, tuple(children)), i


def print_ptb(tree: ConstituencyTree) -> str:
    if isinstance(tree, Leaf):
        return tree.text
    return f"({tree.label} " + " ".join(print_ptb(child) for child in tree.children) + ")"


def is_bracket(text: str) -> bool:
    """True for the serialized form of an Open or Close token."""
    return len(text) > 1 and text[0] in "()"
