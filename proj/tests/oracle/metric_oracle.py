#!/usr/bin/env python3
"""Independent reference implementation of the similarity metrics.

Used offline to freeze expected values into the C++ tests. Deliberately
written without sharing any code path with the library.
"""
import math
import sys
from collections import Counter

STRIP = '.,;:!?()"'


def tokenize(text):
    out = []
    for raw in text.lower().split():
        tok = raw.replace("{", "").replace("}", "").strip(STRIP)
        if tok:
            out.append(tok)
    return out


def body(formalized):
    """Drop header line and comment lines of a formalized text."""
    keep = []
    header_seen = False
    for line in formalized.split("\n"):
        s = line.strip()
        if not s or s.startswith("#"):
            continue
        if not header_seen and (s.startswith("AssuranceCase:") or s.startswith("Pattern:")):
            header_seen = True
            continue
        # strip trailing comments outside quotes
        in_q = False
        esc = False
        cut = len(line)
        for i, ch in enumerate(line):
            if esc:
                esc = False
                continue
            if ch == "\\":
                esc = True
            elif ch == '"':
                in_q = not in_q
            elif ch == "#" and not in_q:
                cut = i
                break
        keep.append(line[:cut])
    return "\n".join(keep)


def bleu(cand, ref):
    c = tokenize(cand)
    r = tokenize(ref)
    if not c or not r:
        raise ValueError("empty")
    order = min(4, len(c))
    logsum = 0.0
    for n in range(1, order + 1):
        cg = Counter(tuple(c[i:i + n]) for i in range(len(c) - n + 1))
        rg = Counter(tuple(r[i:i + n]) for i in range(len(r) - n + 1))
        match = sum(min(v, rg[k]) for k, v in cg.items())
        total = len(c) - n + 1
        p = match / total if match else 1.0 / (2 * len(c))
        logsum += math.log(p)
    bp = 1.0 if len(c) >= len(r) else math.exp(1 - len(r) / len(c))
    return bp * math.exp(logsum / order)


def cosine(a, b):
    ta = Counter(tokenize(a))
    tb = Counter(tokenize(b))
    if not ta or not tb:
        raise ValueError("empty")
    vocab = sorted(set(ta) | set(tb))
    dot = sum(ta[w] * tb[w] for w in vocab)
    na = math.sqrt(sum(ta[w] ** 2 for w in vocab))
    nb = math.sqrt(sum(tb[w] ** 2 for w in vocab))
    return dot / (na * nb)


if __name__ == "__main__":
    cand, ref = sys.argv[1], sys.argv[2]
    print("%.17g %.17g" % (bleu(cand, ref), cosine(cand, ref)))
