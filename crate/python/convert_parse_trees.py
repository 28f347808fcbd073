#!/usr/bin/env python3
"""Convert bracketed parse trees to the jitbatch corpus format.

Converter stub for real datasets: parsers commonly emit one s-expression per
line, e.g.

    (ROOT (S (NP (DT a) (NN dog)) (VP (VBZ barks))))

This script maps each tree to a corpus record:

  * every node becomes one tree node in preorder; `parents[i]` is node i's
    parent index, -1 for the root;
  * leaves (terminals) carry vocabulary token ids, assigned first-come and
    written next to the corpus as `<out>.vocab.tsv`;
  * internal nodes get token -1 (their labels are dropped: the child-sum
    model is unlabeled);
  * an optional score file (one float per PAIR of consecutive trees) fills
    the `label` field of each pair's first record, which is what train-mode
    benchmarking reads.

Usage:
    convert_parse_trees.py trees.txt corpus.jsonl [--scores scores.txt]
    jitbatch bench --corpus corpus.jsonl ...
"""

import argparse
import json
import sys


def tokenize(line):
    return line.replace("(", " ( ").replace(")", " ) ").split()


def parse_sexpr(tokens, pos=0):
    """Returns (children-or-leaf-word, next_pos)."""
    if tokens[pos] != "(":
        return tokens[pos], pos + 1
    pos += 1  # "("
    if pos < len(tokens) and tokens[pos] not in "()":
        pos += 1  # constituent label, dropped
    children = []
    while pos < len(tokens) and tokens[pos] != ")":
        child, pos = parse_sexpr(tokens, pos)
        children.append(child)
    if pos >= len(tokens):
        raise ValueError("unbalanced parentheses")
    return children, pos + 1  # ")"


def flatten(node, vocab, tokens, parents, parent):
    index = len(tokens)
    if isinstance(node, str):
        tokens.append(vocab.setdefault(node, len(vocab)))
        parents.append(parent)
        return
    # Unary collapse: (NP dog) parses to a single-child list around a leaf.
    if len(node) == 1 and isinstance(node[0], str):
        flatten(node[0], vocab, tokens, parents, parent)
        return
    tokens.append(-1)
    parents.append(parent)
    for child in node:
        flatten(child, vocab, tokens, parents, index)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("trees", help="one bracketed parse tree per line")
    ap.add_argument("out", help="JSONL corpus to write")
    ap.add_argument(
        "--scores",
        help="one score per pair of consecutive trees; scaled to [0, 1] "
        "with --score-range",
    )
    ap.add_argument(
        "--score-range",
        nargs=2,
        type=float,
        default=(1.0, 5.0),
        metavar=("LO", "HI"),
        help="input score range mapped linearly onto [0, 1] (default 1 5)",
    )
    args = ap.parse_args()

    scores = None
    if args.scores:
        with open(args.scores) as fh:
            lo, hi = args.score_range
            scores = [(float(s) - lo) / (hi - lo) for s in fh.read().split()]

    vocab = {}
    records = []
    with open(args.trees) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                tree, pos = parse_sexpr(tokenize(line))
                if pos != len(tokenize(line)):
                    raise ValueError("trailing tokens")
            except (ValueError, IndexError) as exc:
                sys.exit(f"line {lineno}: {exc}")
            tokens, parents = [], []
            flatten(tree, vocab, tokens, parents, -1)
            records.append({"tokens": tokens, "parents": parents})

    if scores is not None:
        if len(scores) * 2 != len(records):
            sys.exit(
                f"{len(scores)} scores for {len(records)} trees; "
                "expected one score per pair"
            )
        for pair, score in enumerate(scores):
            records[2 * pair]["label"] = round(score, 6)

    with open(args.out, "w") as fh:
        for rec in records:
            fh.write(json.dumps(rec, separators=(",", ":")) + "\n")
    with open(args.out + ".vocab.tsv", "w") as fh:
        for word, idx in sorted(vocab.items(), key=lambda kv: kv[1]):
            fh.write(f"{idx}\t{word}\n")
    print(
        f"wrote {len(records)} trees, vocabulary of {len(vocab)} to {args.out}",
        file=sys.stderr,
    )


if __name__ == "__main__":
    main()
