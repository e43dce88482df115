#!/usr/bin/env python3
"""Writes golden/stems.jsonl from labels.jsonl with an independent pipeline.

Uses NLTK's Porter stemmer in original-algorithm mode (pip install nltk).
Words of two letters or fewer are left unstemmed.
"""
import json
import pathlib
import re

from nltk.stem.porter import PorterStemmer

HERE = pathlib.Path(__file__).parent
PORTER = PorterStemmer(mode=PorterStemmer.ORIGINAL_ALGORITHM)
WORD = re.compile(r"[^\W\d_]+(?:['’][^\W\d_]+)*")


def stem(w):
    return w if len(w) <= 2 else PORTER.stem(w)


def main():
    stoplist = HERE.parent / "src" / "stopwords.txt"
    stop = {l.strip() for l in stoplist.open() if l.strip() and not l.startswith("#")}
    stop_stems = {stem(w) for w in stop}
    with open(HERE / "golden" / "stems.jsonl", "w", encoding="utf-8") as out:
        for line in open(HERE / "labels.jsonl", encoding="utf-8"):
            r = json.loads(line)
            tokens = [t.lower().replace("’", "'") for t in WORD.findall(r["text"])]
            stems = [stem(t) for t in tokens if t not in stop]
            stems = [s for s in stems if len(s) >= 2 and s not in stop_stems]
            out.write(json.dumps({"doc_id": r["doc_id"], "sentence_index": r["index"], "stems": stems}) + "\n")


if __name__ == "__main__":
    main()
