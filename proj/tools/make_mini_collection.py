#!/usr/bin/env python3
"""Writes the bundled mini-collection under data/mini.

Twenty short documents on six themes, TREC topics and qrels, and
12-dimensional word vectors in which words of one theme share a centre.
Rerunning the script reproduces the files byte for byte.
"""

import random
import re
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent
OUT = ROOT / "data" / "mini"
DIM = 12

TOPICS = {
    "301": ("solar power", "solar"),
    "302": ("coffee health", "coffee"),
    "303": ("volcano eruption", "volcano"),
    "304": ("chess computer", "chess"),
    "305": ("whale migration", "whale"),
    "306": ("bicycle commuting", "bicycle"),
}

# (docno, theme or None, relevant topic or None, text)
DOCS = [
    ("MINI-01", "solar", "301", "Solar power plants convert sunlight into electricity. Large solar farms in deserts "
     "now supply cheap power to growing cities, and rooftop panels let households sell surplus power."),
    ("MINI-02", "solar", "301", "Photovoltaic panels turn sunlight directly into electricity. Falling module prices "
     "made photovoltaic arrays the cheapest new generation in many sunny regions."),
    ("MINI-03", "solar", None, "Solar eclipses happen when the moon passes between the sun and the earth. Observers "
     "travel far to watch the corona during totality."),
    ("MINI-04", "coffee", "302", "Moderate coffee drinking is linked to lower risk of liver disease. Researchers "
     "followed thousands of drinkers and found health benefits from two cups a day."),
    ("MINI-05", "coffee", "302", "Caffeine in espresso raises alertness and may protect the liver. Doctors still "
     "warn that heavy caffeine intake disturbs sleep and raises heart rate."),
    ("MINI-06", "coffee", None, "Coffee prices rose after frost damaged plantations in Brazil. Traders expect "
     "the arabica harvest to recover next season."),
    ("MINI-07", "volcano", "303", "The volcano erupted overnight, sending ash twelve kilometres into the sky. "
     "Villages near the crater were evacuated as lava flowed down the slopes."),
    ("MINI-08", "volcano", "303", "Magma pressure built beneath the crater for weeks before the blast. Ash clouds "
     "grounded flights while lava destroyed roads near the summit."),
    ("MINI-09", "volcano", None, "The volcano museum opened a new wing on island geology. Visitors can walk "
     "through a model of a dormant crater."),
    ("MINI-10", "chess", "304", "A chess computer defeated the world champion in a six game match. Engineers "
     "tuned the search algorithm and evaluation of chess positions for years."),
    ("MINI-11", "chess", "304", "Modern engines search millions of positions per second. Neural network "
     "evaluation now lets software beat grandmasters at every time control."),
    ("MINI-12", "chess", None, "The local chess club meets on Tuesdays in the library. Beginners learn openings "
     "and endgames from volunteer coaches."),
    ("MINI-13", "whale", "305", "Humpback whale migration covers thousands of kilometres each year. Whales feed "
     "in polar waters and travel to tropical breeding grounds."),
    ("MINI-14", "whale", "305", "Tagged humpbacks swam from Antarctic feeding grounds to breeding lagoons near "
     "the equator. Satellite tracking revealed the routes of the pods."),
    ("MINI-15", "whale", None, "Whale watching tours leave the harbour twice daily in summer. Guides explain "
     "how to spot a spout from far away."),
    ("MINI-16", "bicycle", "306", "Bicycle commuting grew after the city built protected lanes. Riders cut travel "
     "time and avoided traffic on the way to work."),
    ("MINI-17", "bicycle", "306", "Cyclists who ride to work each day report better fitness. Employers added "
     "showers and secure racks to encourage cycling commuters."),
    ("MINI-18", "bicycle", None, "The bicycle race crossed three mountain passes. The winner attacked on the "
     "final climb and finished alone."),
    ("MINI-19", None, None, "The council approved a budget for new parks and schools. Residents asked for "
     "longer library hours and cleaner streets."),
    ("MINI-20", None, None, "Heavy rain caused flooding along the river valley. Emergency crews repaired "
     "bridges and cleared roads over the weekend."),
]


def stopwords():
    return set((ROOT / "data" / "inquery_stopwords.txt").read_text().split())


def tokens(text, stops):
    return [t for t in re.findall(r"[a-z0-9]+", text.lower()) if t not in stops]


def main():
    rng = random.Random(7)
    OUT.mkdir(parents=True, exist_ok=True)
    (OUT / "docs").mkdir(exist_ok=True)

    for part, chunk in (("part1.trec", DOCS[:10]), ("part2.trec", DOCS[10:])):
        lines = []
        for docno, _, _, text in chunk:
            lines += ["<DOC>", f"<DOCNO> {docno} </DOCNO>", "<TEXT>", text, "</TEXT>", "</DOC>"]
        (OUT / "docs" / part).write_text("\n".join(lines) + "\n")

    topic_lines = []
    for num, (title, _) in TOPICS.items():
        topic_lines += ["<top>", f"<num> Number: {num}", f"<title> {title}", "", "<desc> Description:",
                        f"Documents about {title}.", "</top>", ""]
    (OUT / "topics.txt").write_text("\n".join(topic_lines))

    qrel_lines = []
    for num in TOPICS:
        for docno, _, rel, _ in DOCS:
            if rel == num:
                qrel_lines.append(f"{num} 0 {docno} 1")
            elif DOCS[[d[0] for d in DOCS].index(docno)][1] == TOPICS[num][1]:
                qrel_lines.append(f"{num} 0 {docno} 0")
    (OUT / "qrels.txt").write_text("\n".join(qrel_lines) + "\n")

    stops = stopwords()
    themes = sorted({t for _, t, _, _ in DOCS if t})
    centres = {t: [rng.gauss(0.0, 1.0) for _ in range(DIM)] for t in themes}
    theme_counts = {}
    for _, theme, _, text in DOCS:
        for tok in tokens(text, stops):
            theme_counts.setdefault(tok, {}).setdefault(theme, 0)
            theme_counts[tok][theme] += 1
    for num, (title, theme) in TOPICS.items():
        for tok in tokens(title, stops):
            theme_counts.setdefault(tok, {}).setdefault(theme, 0)
            theme_counts[tok][theme] += 1

    vec_lines = []
    for word in sorted(theme_counts):
        counts = theme_counts[word]
        theme = max(sorted(counts, key=str), key=lambda t: counts[t])
        if theme is None:
            v = [rng.gauss(0.0, 1.0) for _ in range(DIM)]
        else:
            v = [c + rng.gauss(0.0, 0.45) for c in centres[theme]]
        vec_lines.append(word + " " + " ".join(f"{x:.6f}" for x in v))
    (OUT / "vectors.txt").write_text("\n".join(vec_lines) + "\n")


if __name__ == "__main__":
    main()
