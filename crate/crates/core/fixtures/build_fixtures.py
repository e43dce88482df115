#!/usr/bin/env python3
"""Regenerates corpus/*.txt, corpus/manifest.json and labels.jsonl from annotated/*.ann.

Annotated format: one sentence per line, prefixed "S " (sensitive) or
"N " (non_sensitive). Blank lines separate paragraphs. Lines
without a sentence terminator are headings and stand alone.
"""
import json
import pathlib

HERE = pathlib.Path(__file__).parent
MOBILE = {"fixture_photo_app", "fixture_ride_app", "fixture_weather_app"}
LABELS = {"S": "sensitive", "N": "non_sensitive"}


def parse(path):
    paragraphs, current = [], []
    for line in path.read_text(encoding="utf-8").splitlines():
        if not line.strip():
            if current:
                paragraphs.append(current)
                current = []
            continue
        tag, text = line.split(" ", 1)
        text = text.strip()
        if text[-1] not in ".?!;\"":
            # Headings carry no terminator, so they get a paragraph of their own.
            if current:
                paragraphs.append(current)
            paragraphs.append([(LABELS[tag], text)])
            current = []
            continue
        current.append((LABELS[tag], text))
    if current:
        paragraphs.append(current)
    return paragraphs


def main():
    corpus = HERE / "corpus"
    corpus.mkdir(exist_ok=True)
    manifest, records = {}, []
    for ann in sorted((HERE / "annotated").glob("*.ann")):
        doc_id = ann.stem
        paragraphs = parse(ann)
        text = "\n\n".join(" ".join(t for _, t in p) for p in paragraphs) + "\n"
        (corpus / f"{doc_id}.txt").write_text(text, encoding="utf-8")
        manifest[f"{doc_id}.txt"] = "mobile" if doc_id in MOBILE else "iot"
        index = 0
        for p in paragraphs:
            for label, sentence in p:
                records.append({"doc_id": doc_id, "index": index, "text": sentence, "label": label})
                index += 1
    (corpus / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    with open(HERE / "labels.jsonl", "w", encoding="utf-8") as f:
        for r in records:
            f.write(json.dumps(r, ensure_ascii=False) + "\n")


if __name__ == "__main__":
    main()
