#!/usr/bin/env python3
"""Independent token counts for data/mini, printed for freezing into tests.

Parses the TREC files with regular expressions and tokenizes with
re.findall over lowercase ASCII alphanumerics, then removes the bundled
stopwords. Shares no code with the C++ ingest path.
"""

import re
import sys
from collections import Counter
from pathlib import Path

root = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(__file__).resolve().parents[2]
stops = set((root / "data" / "inquery_stopwords.txt").read_text().split())

docs = {}
for f in sorted((root / "data" / "mini" / "docs").rglob("*")):
    if not f.is_file():
        continue
    for body in re.findall(r"<DOC>(.*?)</DOC>", f.read_text(), flags=re.S):
        docno = re.search(r"<DOCNO>\s*(.*?)\s*</DOCNO>", body).group(1)
        text = " ".join(re.findall(r"<TEXT>(.*?)</TEXT>", body, flags=re.S))
        docs[docno] = [t for t in re.findall(r"[a-z0-9]+", text.lower()) if t not in stops]

cf = Counter(t for toks in docs.values() for t in toks)
df = Counter(t for toks in docs.values() for t in set(toks))
print("docs", len(docs))
print("vocabulary", len(cf))
print("tokens", sum(cf.values()))
for term in ["solar", "power", "photovoltaic", "crater", "chess", "humpback", "lava", "work"]:
    print("term", term, cf[term], df[term])
for docno in ["MINI-01", "MINI-07", "MINI-20"]:
    print("length", docno, len(docs[docno]))
print("tf MINI-01 power", docs["MINI-01"].count("power"))
