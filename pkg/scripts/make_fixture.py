"""Regenerate the bundled toy fixture in src/posinduce/data/.

20 sentences over three universal tags (five fine tags), 5-dimensional
embeddings in word2vec text and binary form, a tag map, token-aligned
cluster labels.  Vectors are rounded to float32 before writing and the text
copy carries 9 decimals, so both files hold the same float32 values.
"""

import os
import sys

import numpy as np

from posinduce.datasets import make_gaussian_hmm_corpus
from posinduce.embeddings import EmbeddingTable, write_word2vec_binary, write_word2vec_text

OUT = sys.argv[1] if len(sys.argv) > 1 else os.path.join(
    os.path.dirname(__file__), "..", "src", "posinduce", "data")

FINE = {0: ("NN", "NNS"), 1: ("VB", "VBD"), 2: ("DT",)}
UNIVERSAL = {"NN": "NOUN", "NNS": "NOUN", "VB": "VERB", "VBD": "VERB", "DT": "DET"}


def main():
    os.makedirs(OUT, exist_ok=True)
    c = make_gaussian_hmm_corpus(n_tags=3, dim=5, words_per_tag=8, min_length=4, max_length=12,
                                 tag_names=["noun", "verb", "det"], n_sentences=20,
                                 random_state=2015)
    fine_of = {}
    for t, words in enumerate(np.array(c.table.words).reshape(3, -1)):
        for j, w in enumerate(words):
            fine_of[w] = FINE[t][j % len(FINE[t])]
    with open(os.path.join(OUT, "toy.conll"), "w") as fh:
        fh.write("# synthetic fixture: id, form, fine tag\n")
        for sent in c.sentences:
            for i, w in enumerate(sent, start=1):
                fh.write(f"{i}\t{w}\t{fine_of[w]}\n")
            fh.write("\n")
    with open(os.path.join(OUT, "toy.txt"), "w") as fh:
        for sent in c.sentences:
            fh.write(" ".join(sent) + "\n")
    with open(os.path.join(OUT, "toy_tagmap.txt"), "w") as fh:
        for fine, uni in UNIVERSAL.items():
            fh.write(f"{fine}\t{uni}\n")
    with open(os.path.join(OUT, "toy.clusters"), "w") as fh:
        for sent, tags in zip(c.sentences, c.tags):
            fh.write(" ".join(f"c{t}{int(w[-1]) % 2}" for w, t in zip(sent, tags)) + "\n")
    table = EmbeddingTable(c.table.words, c.table.matrix.astype(np.float32))
    with open(os.path.join(OUT, "toy.vec"), "w") as fh:
        write_word2vec_text(table, fh, precision=9)
    with open(os.path.join(OUT, "toy.bin"), "wb") as fh:
        write_word2vec_binary(table, fh)


if __name__ == "__main__":
    main()
