#!/usr/bin/env python3
"""Standalone byte-level BPE token counter used to freeze regression constants.

Independent of the C++ tokenizer: uses the real GPT-2 split regex (via the
`regex` package) and a straightforward rank-driven merge loop.

usage: bpe_count.py MERGES_FILE TEXT_FILE
"""
import sys

import regex

PATTERN = regex.compile(r"""'s|'t|'re|'ve|'m|'ll|'d| ?\p{L}+| ?\p{N}+| ?[^\s\p{L}\p{N}]+|\s+(?!\S)|\s+""")


def bytes_to_unicode():
    bs = list(range(ord("!"), ord("~") + 1)) + list(range(ord("¡"), ord("¬") + 1)) + list(range(ord("®"), ord("ÿ") + 1))
    cs = bs[:]
    n = 0
    for b in range(256):
        if b not in bs:
            bs.append(b)
            cs.append(256 + n)
            n += 1
    return dict(zip(bs, map(chr, cs)))


def load_ranks(path):
    ranks = {}
    with open(path, encoding="utf-8") as f:
        for line in f:
            line = line.rstrip("\n")
            if not line or line.startswith("#"):
                continue
            a, b = line.split(" ")
            ranks[(a, b)] = len(ranks)
    return ranks


def bpe(word, ranks):
    syms = list(word)
    while len(syms) > 1:
        pairs = [(ranks.get((syms[i], syms[i + 1]), float("inf")), i) for i in range(len(syms) - 1)]
        best_rank, _ = min(pairs)
        if best_rank == float("inf"):
            break
        i = min(i for r, i in pairs if r == best_rank)
        left, right = syms[i], syms[i + 1]
        out, j = [], 0
        while j < len(syms):
            if j + 1 < len(syms) and syms[j] == left and syms[j + 1] == right:
                out.append(left + right)
                j += 2
            else:
                out.append(syms[j])
                j += 1
        syms = out
    return syms


def count(text, ranks):
    b2u = bytes_to_unicode()
    total = 0
    for piece in PATTERN.findall(text):
        total += len(bpe("".join(b2u[b] for b in piece.encode("utf-8")), ranks))
    return total


if __name__ == "__main__":
    ranks = load_ranks(sys.argv[1])
    with open(sys.argv[2], encoding="utf-8") as f:
        print(count(f.read(), ranks))
