"""
String-to-Tree Translation Toolkit
==================================

A desk-scale toolkit for translating token sequences into linearized,
lexicalized constituency trees and for analyzing what the attention of such
models learns about reordering.

Key Features:
------------
1. Treebank: linearized trees with labeled brackets, validation, PTB input
2. Sub-words: byte-pair encoding learn/apply/revert
3. Model: GRU encoder-decoder with additive attention, trained with Adadelta
4. Decoding: beam search, checkpoint ensembles, optional tree constraint
5. Analysis: distortion, GHKM rules, relative pronouns, first-bracket attention
6. Toy data: a synthetic verb-final to verb-medial reordering corpus

Run ``python main.py --help`` for the list of subcommands.
"""
import sys

from app.cli import main


if __name__ == "__main__":
    sys.exit(main())
