#!/usr/bin/env python3
"""Train the bundled byte-level BPE merge table (data/tokenizer/merges.txt).

The training text is the docstrings of a fixed list of Python standard-library
modules, so the table can be regenerated anywhere without downloads. Output uses
the GPT-2 merges.txt layout: a '#version' header, then one 'left right' pair per
line in merge-priority order, with bytes mapped through the GPT-2 byte-to-unicode
table.
"""
import argparse
import collections
import importlib
import inspect

import regex

PATTERN = regex.compile(r"""'s|'t|'re|'ve|'m|'ll|'d| ?\p{L}+| ?\p{N}+| ?[^\s\p{L}\p{N}]+|\s+(?!\S)|\s+""")

MODULES = [
    "os", "re", "json", "collections", "itertools", "functools", "argparse", "logging",
    "typing", "pathlib", "subprocess", "threading", "email", "http.client", "urllib.request",
    "unittest", "decimal", "fractions", "datetime", "textwrap", "string", "random",
    "statistics", "inspect", "asyncio", "socket", "csv", "sqlite3", "zipfile", "tarfile",
    "shutil", "tempfile", "heapq", "bisect", "enum", "dataclasses", "contextlib", "abc",
    "io", "pickle", "copy", "pprint", "difflib", "calendar", "locale", "gettext", "queue",
    "sched", "selectors", "ssl", "hashlib", "hmac", "secrets", "base64", "binascii",
    "struct", "codecs", "unicodedata", "operator", "numbers", "math", "cmath", "array",
    "weakref", "types", "glob", "fnmatch", "linecache", "traceback", "warnings", "doctest",
    "pdb", "timeit", "trace", "gzip", "bz2", "lzma", "zlib", "configparser", "netrc",
    "plistlib", "mailbox", "mimetypes", "html", "html.parser", "xml.dom.minidom",
    "xml.etree.ElementTree", "webbrowser", "wsgiref", "uuid", "socketserver", "http.server",
    "http.cookies", "ftplib", "poplib", "imaplib", "smtplib", "ipaddress", "optparse",
    "getopt", "getpass", "curses", "platform", "errno", "ctypes", "concurrent.futures",
    "multiprocessing", "signal", "mmap", "codeop", "ast", "symtable", "token", "keyword",
    "tokenize", "dis", "pickletools", "sysconfig", "site", "importlib", "zipimport",
    "pkgutil", "modulefinder", "runpy",
]


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


def corpus_text():
    parts = []
    for name in MODULES:
        try:
            mod = importlib.import_module(name)
        except Exception:
            continue
        for _, obj in sorted(vars(mod).items()):
            doc = inspect.getdoc(obj) if callable(obj) or inspect.ismodule(obj) else None
            if doc:
                parts.append(doc)
        if mod.__doc__:
            parts.append(mod.__doc__)
    return "\n\n".join(parts)


def train(text, num_merges):
    b2u = bytes_to_unicode()
    words = collections.Counter(PATTERN.findall(text))
    vocab = {tuple(b2u[b] for b in w.encode("utf-8")): c for w, c in words.items()}
    merges = []
    for _ in range(num_merges):
        pairs = collections.Counter()
        for sym, c in vocab.items():
            for a, b in zip(sym, sym[1:]):
                pairs[(a, b)] += c
        if not pairs:
            break
        best = max(pairs.items(), key=lambda kv: (kv[1], kv[0]))[0]
        merges.append(best)
        merged = {}
        for sym, c in vocab.items():
            out, i = [], 0
            while i < len(sym):
                if i + 1 < len(sym) and (sym[i], sym[i + 1]) == best:
                    out.append(sym[i] + sym[i + 1])
                    i += 2
                else:
                    out.append(sym[i])
                    i += 1
            merged[tuple(out)] = merged.get(tuple(out), 0) + c
        vocab = merged
    return merges


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--merges", type=int, default=3000)
    ap.add_argument("--out", required=True)
    args = ap.parse_args()
    merges = train(corpus_text(), args.merges)
    with open(args.out, "w", encoding="utf-8") as f:
        f.write("#version: longctx-bpe 1\n")
        for a, b in merges:
            f.write(f"{a} {b}\n")


if __name__ == "__main__":
    main()
