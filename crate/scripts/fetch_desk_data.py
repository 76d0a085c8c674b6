#!/usr/bin/env python3
"""Assemble the desk-scale corpus and the WordSim353 benchmark.

Both come from packages on PyPI, fetched with `pip download`:

* gensim ships WordSim353 and the Lee background corpus in its test data;
* wn 0.0.23 ships the WordNet 3 database files and the Shakespeare text
  used for WordNet information content.

The corpus is one sentence per line: every WordNet synset becomes its lemmas
followed by its gloss and usage examples, then the Shakespeare and Lee lines.
"""

import argparse
import re
import subprocess
import sys
import tarfile
import tempfile
import zipfile
from pathlib import Path

GENSIM = "gensim==4.4.0"
WN = "wn==0.0.23"
WORDNET_FILES = ("data.noun", "data.verb", "data.adj", "data.adv")


def pip_download(spec, dest, binary):
    fmt = ["--only-binary", ":all:"] if binary else ["--no-binary", ":all:"]
    subprocess.run(
        [sys.executable, "-m", "pip", "download", "--no-deps", "-q", *fmt, "-d", str(dest), spec],
        check=True,
    )
    name = spec.split("==")[0]
    return next(p for p in Path(dest).iterdir() if p.name.lower().startswith(name))


def synset_sentences(text):
    for line in text.splitlines():
        if line.startswith("  ") or "|" not in line:
            continue
        head, gloss = line.split("|", 1)
        fields = head.split()
        lemma_count = int(fields[3], 16)
        lemmas = [fields[4 + 2 * i].replace("_", " ") for i in range(lemma_count)]
        lemmas = [re.sub(r"\(.*?\)$", "", w) for w in lemmas]
        gloss = gloss.replace('"', " ").replace(";", " ")
        yield " ".join(lemmas) + " " + " ".join(gloss.split())


def plain_lines(text):
    for line in text.splitlines():
        line = " ".join(line.split())
        if len(line.split()) >= 3:
            yield line


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out", default="data/desk", help="output directory")
    args = parser.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    with tempfile.TemporaryDirectory() as tmp:
        wheel = pip_download(GENSIM, tmp, binary=True)
        sdist = pip_download(WN, tmp, binary=False)

        with zipfile.ZipFile(wheel) as z:
            names = z.namelist()
            read = lambda suffix: z.read(next(n for n in names if n.endswith(suffix))).decode("utf-8", "replace")
            wordsim = read("test_data/wordsim353.tsv")
            lee = read("test_data/lee_background.cor")

        sentences = []
        with tarfile.open(sdist) as t:
            members = {m.name: m for m in t.getmembers()}
            read = lambda suffix: t.extractfile(next(m for n, m in members.items() if n.endswith(suffix))).read().decode("latin-1")
            for name in WORDNET_FILES:
                sentences.extend(synset_sentences(read("/" + name)))
            sentences.extend(plain_lines(read("wordnet_ic/shaks12.txt")))
        sentences.extend(plain_lines(lee))

    (out / "wordsim353.tsv").write_text(wordsim)
    with open(out / "corpus.txt", "w") as f:
        for s in sentences:
            f.write(s + "\n")
    size = (out / "corpus.txt").stat().st_size
    print(f"{len(sentences)} sentences, {size / 1e6:.1f} MB -> {out}")


if __name__ == "__main__":
    main()
