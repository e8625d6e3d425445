#!/usr/bin/env python3
"""Writes the 50-sentence toy corpus (data/toy/toy.conllu).

Function words carry no annotation; their meaning shows up as features on
the content word they modify (prepositions -> Case, articles -> Definite,
auxiliaries/negation -> verb features). Output is deterministic.
"""

import argparse
import random
from pathlib import Path

NOUNS = [
    ("dog", "dogs"), ("cat", "cats"), ("city", "cities"), ("river", "rivers"),
    ("story", "stories"), ("market", "markets"), ("teacher", "teachers"),
    ("child", "children"), ("letter", "letters"), ("garden", "gardens"),
    ("house", "houses"), ("boat", "boats"),
]
NAMES = ["AP", "Anna", "Paris", "Omar", "Lisbon"]
VERBS = [  # (3sg present, plural present, past, participle)
    ("sees", "see", "saw", "seen"), ("finds", "find", "found", "found"),
    ("writes", "write", "wrote", "written"), ("brings", "bring", "brought", "brought"),
    ("likes", "like", "liked", "liked"), ("takes", "take", "took", "taken"),
]
INTRANS = [("comes", "come", "came"), ("sleeps", "sleep", "slept"), ("waits", "wait", "waited")]
ADJS = ["old", "small", "green", "quiet", "famous"]
PREPS = {"from": "Abl", "in": "Ine", "into": "Ill", "to": "Dat", "with": "Com", "near": "Ade"}


class Builder:
    def __init__(self):
        self.toks = []  # [form, feats dict or None, head ref, deprel]

    def func(self, form):
        self.toks.append([form, None, None, None])
        return len(self.toks) - 1

    def content(self, form, feats):
        self.toks.append([form, dict(feats), None, None])
        return len(self.toks) - 1

    def attach(self, dep, head, rel):
        self.toks[dep][2] = head
        self.toks[dep][3] = rel

    def lines(self, sid):
        forms = [t[0] for t in self.toks]
        text = ""
        for i, f in enumerate(forms):
            glue = f in {".", ":", ","}
            text += ("" if i == 0 or glue else " ") + f
        out = [f"# sent_id = toy-{sid:02d}", f"# text = {text}"]
        for i, (form, feats, head, rel) in enumerate(self.toks):
            nxt = forms[i + 1] if i + 1 < len(forms) else None
            misc = "SpaceAfter=No" if nxt in {".", ":", ","} else "_"
            if feats is None:
                out.append(f"{i+1}\t{form}\t_\t_\t_\t_\t_\t_\t_\t{misc}")
            else:
                fs = "|".join(f"{k}={v}" for k, v in sorted(feats.items())) or "|"
                h = 0 if head == -1 else head + 1
                out.append(f"{i+1}\t{form}\t_\t_\t_\t{fs}\t{h}\t{rel}\t_\t{misc}")
        return out


def noun_phrase(b, rng, prep=None, allow_adj=True, allow_name=True):
    """Adds [prep] [article] [adj] noun; returns (noun index, adj index or None)."""
    feats = {}
    if prep:
        b.func(prep)
        feats["Case"] = PREPS[prep]
    if allow_name and rng.random() < 0.2:
        name = rng.choice(NAMES)
        if name == "AP":
            b.func("the")
            feats["Definite"] = "Def"
        feats["Number"] = "Sing"
        return b.content(name, feats), None
    art = rng.choice(["the", "a", None])
    plural = rng.random() < 0.4 and art != "a"
    if art:
        b.func(art)
        feats["Definite"] = "Def" if art == "the" else "Ind"
    adj = None
    if allow_adj and rng.random() < 0.35:
        adj = b.content(rng.choice(ADJS), {"Degree": "Pos"})
    sg, pl = rng.choice(NOUNS)
    feats["Number"] = "Plur" if plural else "Sing"
    n = b.content(pl if plural else sg, feats)
    if adj is not None:
        b.attach(adj, n, "amod")
    return n, adj


def number_of(b, idx):
    return b.toks[idx][1].get("Number", "Sing")


def transitive(b, rng):
    subj, _ = noun_phrase(b, rng)
    v3, vp, past, part = rng.choice(VERBS)
    plural = number_of(b, subj) == "Plur"
    mode = rng.choice(["pres", "past", "fut", "perf", "neg"])
    feats = {"Mood": "Ind", "VerbForm": "Fin", "Polarity": "Pos"}
    if mode == "pres":
        form = vp if plural else v3
        feats["Tense"] = "Pres"
    elif mode == "past":
        form = past
        feats["Tense"] = "Past"
    elif mode == "fut":
        b.func("will")
        form = vp
        feats["Tense"] = "Fut"
    elif mode == "perf":
        b.func("have" if plural else "has")
        form = part
        feats["Tense"] = "Pres"
        feats["Aspect"] = "Perf"
    else:
        b.func("do" if plural else "does")
        b.func("not")
        form = vp
        feats["Tense"] = "Pres"
        feats["Polarity"] = "Neg"
    v = b.content(form, feats)
    b.attach(subj, v, "nsubj")
    obj, _ = noun_phrase(b, rng)
    b.attach(obj, v, "obj")
    if rng.random() < 0.5:
        obl, _ = noun_phrase(b, rng, prep=rng.choice(list(PREPS)))
        b.attach(obl, v, "obl")
    b.attach(v, -1, "root")


def fronted(b, rng):
    # "From the AP comes this story:" pattern
    obl, _ = noun_phrase(b, rng, prep=rng.choice(list(PREPS)), allow_adj=False)
    v3, vp, past = rng.choice(INTRANS)
    v = b.content(v3, {"Mood": "Ind", "Polarity": "Pos", "Tense": "Pres", "VerbForm": "Fin", "Voice": "Act"})
    b.attach(obl, v, "obl")
    det = b.content(rng.choice(["this", "that"]), {"Number": "Sing", "PronType": "Dem"})
    sg, _ = rng.choice(NOUNS)
    n = b.content(sg, {"Number": "Sing"})
    b.attach(det, n, "det")
    b.attach(n, v, "nsubj")
    b.attach(v, -1, "root")


def intransitive(b, rng):
    subj, _ = noun_phrase(b, rng)
    v3, vp, past = rng.choice(INTRANS)
    plural = number_of(b, subj) == "Plur"
    past_tense = rng.random() < 0.5
    form = past if past_tense else (vp if plural else v3)
    v = b.content(form, {"Mood": "Ind", "Tense": "Past" if past_tense else "Pres", "VerbForm": "Fin"})
    b.attach(subj, v, "nsubj")
    obl, _ = noun_phrase(b, rng, prep=rng.choice(list(PREPS)))
    b.attach(obl, v, "obl")
    if rng.random() < 0.4:
        nmod, _ = noun_phrase(b, rng, prep="near", allow_adj=False, allow_name=False)
        b.attach(nmod, obl, "nmod")
    b.attach(v, -1, "root")


def build(seed, count):
    rng = random.Random(seed)
    sents = []
    for sid in range(1, count + 1):
        b = Builder()
        rng.choice([transitive, transitive, intransitive, fronted])(b, rng)
        b.func(":" if rng.random() < 0.15 else ".")
        b.toks[0][0] = b.toks[0][0][0].upper() + b.toks[0][0][1:]
        sents.append("\n".join(b.lines(sid)) + "\n")
    return sents


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--seed", type=int, default=2024)
    ap.add_argument("--count", type=int, default=50)
    ap.add_argument("--out", default=str(Path(__file__).resolve().parent.parent / "data" / "toy" / "toy.conllu"))
    args = ap.parse_args()
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text("\n".join(build(args.seed, args.count)) + "\n")


if __name__ == "__main__":
    main()
