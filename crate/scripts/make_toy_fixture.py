"""Generate the synthetic two-class fixture under fixtures/toy/.

Outputs a 400-document corpus, two 50-dimension word2vec text embeddings
built from word clusters, a labelled word-pair file for calibration and a
bias sentence pool. Re-running with the same seed reproduces the files.
"""

import argparse
import json
from pathlib import Path

import numpy as np

CLUSTERS = {
    "sport": [
        "sport", "game", "match", "team", "goal", "player", "coach", "league",
        "score", "ball", "race", "champion", "stadium", "season", "referee",
        "tournament",
    ],
    "food": [
        "food", "meal", "bread", "soup", "cheese", "dinner", "cook", "fruit",
        "rice", "salad", "kitchen", "recipe", "butter", "sauce", "bakery",
        "flavour",
    ],
    "nature": [
        "river", "mountain", "forest", "tree", "lake", "cloud", "rain", "stone",
        "valley", "meadow", "glacier", "moss", "canyon", "willow", "breeze",
        "pebble",
    ],
}

FILLER = [
    "the", "a", "was", "today", "people", "city", "week", "new", "said",
    "after", "before", "many", "some", "local", "during", "again", "report",
    "morning", "evening", "news", "friday", "monday", "year", "time", "told",
    "around", "several", "group", "visit", "plan", "near", "small", "large",
    "street", "family", "friends", "later", "early", "story", "announced",
]

BIAS_SENTENCES = [
    "river valley glacier breeze canyon",
    "forest moss willow meadow pebble",
    "mountain lake cloud rain stone",
    "valley stone tree willow cloud",
]


def unit(v):
    return v / np.linalg.norm(v)


def embedding(rng, dim, spread):
    vectors = {}
    for words in CLUSTERS.values():
        centre = unit(rng.standard_normal(dim))
        for w in words:
            vectors[w] = unit(centre + spread * unit(rng.standard_normal(dim)))
    for w in FILLER:
        vectors[w] = unit(rng.standard_normal(dim))
    return vectors


def write_vectors(path, vectors, dim):
    with open(path, "w") as f:
        f.write(f"{len(vectors)} {dim}\n")
        for w, v in vectors.items():
            f.write(w + " " + " ".join(f"{x:.6f}" for x in v) + "\n")


def corpus(rng, n_docs):
    docs = []
    for i in range(n_docs):
        label = ["sport", "food"][i % 2]
        words = list(rng.choice(CLUSTERS[label], size=4, replace=False))
        words += list(rng.choice(FILLER, size=6, replace=False))
        rng.shuffle(words)
        docs.append({"id": f"doc{i:04d}", "text": " ".join(words), "label": label})
    return docs


def pairs(rng):
    names = list(CLUSTERS)
    related, unrelated = [], []
    for words in CLUSTERS.values():
        for i, a in enumerate(words):
            for b in words[i + 1:]:
                related.append((a, b))
    for i, ca in enumerate(names):
        for cb in names[i + 1:]:
            for a in CLUSTERS[ca]:
                for b in CLUSTERS[cb]:
                    unrelated.append((a, b))
    for a in FILLER:
        for c in names:
            unrelated.append((a, c))
    rng.shuffle(unrelated)
    return related, unrelated[: 2 * len(related)]


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", type=Path, default=Path("fixtures/toy"))
    parser.add_argument("--seed", type=int, default=7)
    parser.add_argument("--docs", type=int, default=400)
    args = parser.parse_args()
    args.out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(args.seed)
    dim = 50

    write_vectors(args.out / "vectors_a.vec", embedding(rng, dim, 0.6), dim)
    write_vectors(args.out / "vectors_b.vec", embedding(rng, dim, 0.9), dim)

    with open(args.out / "corpus.jsonl", "w") as f:
        for d in corpus(rng, args.docs):
            f.write(json.dumps(d) + "\n")

    related, unrelated = pairs(rng)
    with open(args.out / "pairs.csv", "w") as f:
        f.write("w1,w2,related\n")
        for a, b in related:
            f.write(f"{a},{b},1\n")
        for a, b in unrelated:
            f.write(f"{a},{b},0\n")

    (args.out / "bias_pool.txt").write_text("\n".join(BIAS_SENTENCES) + "\n")


if __name__ == "__main__":
    main()
