#!/usr/bin/env python3
"""Builds the 20-topic agreement fixture and its exact reference values.

System rankings mimic a study layout (four model answers plus one document
per topic); expert rankings are seeded perturbations of them. Per-topic RBO
(p = 1, average overlap) and Kendall's tau are computed with exact rational
arithmetic by depth-wise prefix intersection and pair enumeration.

Writes tests/fixtures/agreement_{system,expert}.jsonl and
tests/fixtures/agreement_expected.json. Run from the repository root.
"""

import itertools
import json
import random
from fractions import Fraction
from pathlib import Path

ROOT = Path(__file__).resolve().parents[2]
FIXTURES = ROOT / "tests" / "fixtures"
MODELS = ["chatgpt", "llama2-13b", "gpt2-xl", "gpt2"]


def average_overlap(a, b):
    n = min(len(a), len(b))
    total = Fraction(0)
    for d in range(1, n + 1):
        total += Fraction(len(set(a[:d]) & set(b[:d])), d)
    return total / n


def kendall_tau(a, b):
    pos_b = {item: i for i, item in enumerate(b)}
    concordant = discordant = 0
    for i, j in itertools.combinations(range(len(a)), 2):
        if pos_b[a[i]] < pos_b[a[j]]:
            concordant += 1
        else:
            discordant += 1
    pairs = len(a) * (len(a) - 1) // 2
    return Fraction(concordant - discordant, pairs)


def main():
    rng = random.Random(20240614)
    system, expert, rows = [], [], []
    for t in range(20):
        qid = f"q{t + 1:03d}"
        items = [f"ANSWER::{m}::{qid}::{rng.randrange(10)}" for m in MODELS] + [f"doc-{qid}-{rng.randrange(1000)}"]
        sys_rank = items[:]
        rng.shuffle(sys_rank)
        exp_rank = sys_rank[:]
        for _ in range(rng.randrange(4)):
            i = rng.randrange(4)
            exp_rank[i], exp_rank[i + 1] = exp_rank[i + 1], exp_rank[i]
        system.append({"query_id": qid, "ranking": sys_rank})
        expert.append({"query_id": qid, "ranking": exp_rank})
        rbo = average_overlap(sys_rank, exp_rank)
        tau = kendall_tau(sys_rank, exp_rank)
        rows.append({"query_id": qid, "rbo": float(rbo), "kendall_tau": float(tau),
                     "rbo_exact": str(rbo), "tau_exact": str(tau)})

    mean_rbo = sum(Fraction(r["rbo_exact"]) for r in rows) / len(rows)
    mean_tau = sum(Fraction(r["tau_exact"]) for r in rows) / len(rows)

    def dump_jsonl(path, objs):
        path.write_text("".join(json.dumps(o) + "\n" for o in objs))

    dump_jsonl(FIXTURES / "agreement_system.jsonl", system)
    dump_jsonl(FIXTURES / "agreement_expert.jsonl", expert)
    (FIXTURES / "agreement_expected.json").write_text(json.dumps({
        "mean_rbo": float(mean_rbo), "mean_kendall_tau": float(mean_tau),
        "mean_rbo_exact": str(mean_rbo), "mean_tau_exact": str(mean_tau), "topics": rows}, indent=1) + "\n")


if __name__ == "__main__":
    main()
