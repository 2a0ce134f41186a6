"""Freeze reference BERTScore values for tests/data/bertscore_oracle.json.

Token vectors are random non-negative lookups; scores come from the
bert_score package's greedy_cos_idf with uniform weights."""
import json
import sys

import numpy as np
import torch
from bert_score.utils import greedy_cos_idf

rng = np.random.default_rng(20240611)
words = [f"w{i}" for i in range(40)]
dim = 16
table = {w: np.abs(rng.standard_normal(dim)).round(6).tolist() for w in words}


def sentence():
    return " ".join(rng.choice(words, size=rng.integers(3, 10)))


pairs = [(sentence(), sentence()) for _ in range(20)]


def embed(text):
    return torch.tensor([table[w] for w in text.split()], dtype=torch.float64)


out = []
for cand, ref in pairs:
    h, r = embed(cand), embed(ref)
    P, R, F = greedy_cos_idf(
        r.unsqueeze(0).clone(), torch.ones(1, r.shape[0]), torch.ones(1, r.shape[0]),
        h.unsqueeze(0).clone(), torch.ones(1, h.shape[0]), torch.ones(1, h.shape[0]))
    out.append({"candidate": cand, "reference": ref,
                "precision": P.item(), "recall": R.item(), "f1": F.item()})

json.dump({"table": table, "pairs": out}, sys.stdout, indent=1)
