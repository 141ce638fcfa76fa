"""Skip-gram pretraining over an entity-replaced stream.

Generates two topical token cliques, trains embeddings for a few epochs, and
shows that tokens from the same clique end up closer in cosine similarity.
Words and ENTITY/ tokens live in one space, so the vectors can later seed the
document model's word and entity tables.
"""

import numpy as np

from textent import SgnsConfig, VectorStore, cosine, save_vectors, train_skipgram

rng = np.random.default_rng(0)

space_tokens = ["orbit", "launch", "rocket", "ENTITY/Apollo 11", "module"]
money_tokens = ["bond", "yield", "market", "ENTITY/Federal Reserve", "rate"]

sentences = []
for i in range(300):
    pool = space_tokens if i % 2 == 0 else money_tokens
    sentences.append([pool[rng.integers(len(pool))] for _ in range(10)])

config = SgnsConfig(dim=24, window=3, negatives=5, min_count=1, epochs=5,
                    subsample_threshold=0.0, initial_lr=0.05, seed=1)
vectors = train_skipgram(sentences, config)
print(f"trained {len(vectors)} token vectors of dimension {config.dim}\n")

pairs = [
    ("orbit", "rocket"),
    ("orbit", "ENTITY/Apollo 11"),
    ("bond", "market"),
    ("orbit", "bond"),
    ("ENTITY/Apollo 11", "ENTITY/Federal Reserve"),
]
print("cosine similarities after 5 epochs:")
for a, b in pairs:
    print(f"  {a:<26} vs {b:<26} {cosine(vectors[a], vectors[b]):+.3f}")

save_vectors(VectorStore(vectors), "/tmp/demo_pretrained.vec")
print("\nsaved to /tmp/demo_pretrained.vec (text format, exact round trip)")
