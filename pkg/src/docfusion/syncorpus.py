"""Deterministic toy English->German-like corpus with cross-sentence pronoun
dependencies and known ground truth.

Documents open with a noun-introducing sentence ("there sleeps a dog" ->
"da schläft ein Hund"); later sentences either introduce a new noun or
refer to the most recent one ("it sleeps" -> "er schläft").  The source
pronoun is always "it", so a sentence-level system cannot do better than
guessing the majority gender.

The article "ein" is uninflected, so the noun alone carries gender.  A
word-by-word lexicon never has to commit to a gender before it has produced
the noun, and the noun ends the sentence, where a short-history document LM
can see it across the boundary.  Adverb and adjective lexica are available
to custom templates but unused by the default ones.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from .core import write_corpus
from .evaluation import ContrastiveExample, KeywordExample, format_report, write_challenge_set, write_keywords

GENDERS = ("masc", "fem", "neut")
PRONOUNS = {"masc": "er", "fem": "sie", "neut": "es"}
SOURCE_PRONOUN = "it"
SLOTS = ("ADV", "VERB", "ADJ", "NOUN", "PRON")

# (source, target, gender, profession)
DEFAULT_NOUNS = (
    ("dog", "Hund", "masc", False), ("table", "Tisch", "masc", False), ("tree", "Baum", "masc", False),
    ("car", "Wagen", "masc", False), ("chair", "Stuhl", "masc", False), ("garden", "Garten", "masc", False),
    ("moon", "Mond", "masc", False), ("key", "Schlüssel", "masc", False), ("teacher", "Lehrer", "masc", True),
    ("doctor", "Arzt", "masc", True),
    ("cat", "Katze", "fem", False), ("lamp", "Lampe", "fem", False), ("door", "Tür", "fem", False),
    ("flower", "Blume", "fem", False), ("street", "Straße", "fem", False), ("city", "Stadt", "fem", False),
    ("bottle", "Flasche", "fem", False), ("clock", "Uhr", "fem", False), ("nurse", "Pflegerin", "fem", True),
    ("singer", "Sängerin", "fem", True),
    ("house", "Haus", "neut", False), ("book", "Buch", "neut", False), ("child", "Kind", "neut", False),
    ("window", "Fenster", "neut", False), ("bed", "Bett", "neut", False), ("picture", "Bild", "neut", False),
    ("boat", "Boot", "neut", False), ("glass", "Glas", "neut", False), ("horse", "Pferd", "neut", False),
    ("egg", "Ei", "neut", False),
)
DEFAULT_VERBS = (
    ("sleeps", "schläft"), ("runs", "läuft"), ("waits", "wartet"), ("falls", "fällt"), ("stays", "bleibt"),
    ("shines", "glänzt"), ("shakes", "wackelt"), ("works", "arbeitet"), ("stands", "steht"), ("lies", "liegt"),
)
DEFAULT_ADVERBS = (("today", "heute"), ("here", "hier"), ("there", "dort"), ("often", "oft"), ("now", "jetzt"))
DEFAULT_ADJECTIVES = (("big", "groß"), ("small", "klein"), ("old", "alt"), ("new", "neu"), ("red", "rot"),
                      ("green", "grün"), ("loud", "laut"), ("quiet", "still"))


@dataclass(frozen=True)
class Noun:
    source: str
    target: str
    gender: str
    profession: bool = False


@dataclass(frozen=True)
class GrammarSpec:
    nouns: tuple[Noun, ...] = tuple(Noun(*n) for n in DEFAULT_NOUNS)
    verbs: tuple[tuple[str, str], ...] = DEFAULT_VERBS
    adverbs: tuple[tuple[str, str], ...] = DEFAULT_ADVERBS
    adjectives: tuple[tuple[str, str], ...] = DEFAULT_ADJECTIVES
    # sentence templates: slot names ADV VERB ADJ NOUN PRON, anything else is a literal token
    intro_source: str = "there VERB a NOUN"
    intro_target: str = "da VERB ein NOUN"
    pronoun_source: str = "PRON VERB"
    pronoun_target: str = "PRON VERB"
    gender_weights: tuple[float, float, float] = (0.45, 0.35, 0.20)
    doc_len_range: tuple[int, int] = (3, 8)
    pronoun_rate: float = 0.6
    general_pronoun_rate: float = 0.1   # general-domain test split only
    domain: int = 0                     # 0: uniform word choice; otherwise a seeded Zipf skew
    seed: int = 1

    def validate(self) -> None:
        if not self.nouns or not self.verbs or not self.adverbs or not self.adjectives:
            raise ValueError("empty lexica")
        for g in GENDERS:
            if not any(n.gender == g for n in self.nouns):
                raise ValueError(f"no noun of gender {g}")
        if any(n.gender not in GENDERS for n in self.nouns):
            raise ValueError("unknown gender")
        pairs = self.verbs + self.adverbs + self.adjectives
        words = [n.target for n in self.nouns] + [t for _, t in pairs]
        src = [n.source for n in self.nouns] + [s for s, _ in pairs]
        if len(set(words)) != len(words) or len(set(src)) != len(src):
            raise ValueError("bilingual content-word mapping must be a bijection")
        for src_t, tgt_t in ((self.intro_source, self.intro_target), (self.pronoun_source, self.pronoun_target)):
            if sorted(t for t in src_t.split() if t in SLOTS) != sorted(t for t in tgt_t.split() if t in SLOTS):
                raise ValueError(f"templates {src_t!r} / {tgt_t!r} use different slots")
        if "NOUN" not in self.intro_target.split() or "PRON" not in self.pronoun_target.split():
            raise ValueError("intro must contain NOUN and pronoun sentences PRON")
        lo, hi = self.doc_len_range
        if not 1 <= lo <= hi:
            raise ValueError("bad doc_len_range")
        if abs(sum(self.gender_weights) - 1.0) > 1e-9 or min(self.gender_weights) < 0:
            raise ValueError("gender weights must be a distribution")

    def lexicon(self) -> dict[str, str]:
        """Source -> target map over content words."""
        out = {n.source: n.target for n in self.nouns}
        out.update(dict(self.verbs))
        out.update(dict(self.adverbs))
        out.update(dict(self.adjectives))
        return out

    def all_words(self) -> list[str]:
        words = [SOURCE_PRONOUN] + list(PRONOUNS.values())
        for t in (self.intro_source, self.intro_target, self.pronoun_source, self.pronoun_target):
            words += [w for w in t.split() if w not in SLOTS]
        for n in self.nouns:
            words += [n.source, n.target]
        for s, t in self.verbs + self.adverbs + self.adjectives:
            words += [s, t]
        return words

    def majority_rate(self) -> float:
        return max(self.gender_weights)


def _zipf_weights(n: int, rng: random.Random) -> list[float]:
    w = [1.0 / (r + 1) for r in range(n)]
    rng.shuffle(w)
    return w


class _Sampler:
    def __init__(self, spec: GrammarSpec, rng: random.Random):
        self.spec = spec
        self.rng = rng
        self.by_gender = {g: [n for n in spec.nouns if n.gender == g] for g in GENDERS}
        if spec.domain:
            drng = random.Random(spec.domain * 7919)
            self.noun_w = {g: _zipf_weights(len(ns), drng) for g, ns in self.by_gender.items()}
            self.verb_w = _zipf_weights(len(spec.verbs), drng)
            self.adv_w = _zipf_weights(len(spec.adverbs), drng)
            self.adj_w = _zipf_weights(len(spec.adjectives), drng)
        else:
            self.noun_w = {g: [1.0] * len(ns) for g, ns in self.by_gender.items()}
            self.verb_w = [1.0] * len(spec.verbs)
            self.adv_w = [1.0] * len(spec.adverbs)
            self.adj_w = [1.0] * len(spec.adjectives)

    def noun(self, gender: str | None = None) -> Noun:
        if gender is None:
            gender = self.rng.choices(GENDERS, weights=self.spec.gender_weights)[0]
        return self.rng.choices(self.by_gender[gender], weights=self.noun_w[gender])[0]

    def verb(self):
        return self.rng.choices(self.spec.verbs, weights=self.verb_w)[0]

    def adverb(self):
        return self.rng.choices(self.spec.adverbs, weights=self.adv_w)[0]

    def adjective(self):
        return self.rng.choices(self.spec.adjectives, weights=self.adj_w)[0]

    def _fill(self, src_template: str, tgt_template: str, noun: Noun, pronoun: bool):
        words = {"NOUN": (noun.source, noun.target), "PRON": (SOURCE_PRONOUN, PRONOUNS[noun.gender])}
        slots = set(src_template.split()) | set(tgt_template.split())
        # fixed sampling order keeps corpora stable when templates are reordered
        for slot, draw in (("VERB", self.verb), ("ADV", self.adverb), ("ADJ", self.adjective)):
            if slot in slots:
                words[slot] = draw()
        src = [words[t][0] if t in SLOTS else t for t in src_template.split()]
        tgt = [words[t][1] if t in SLOTS else t for t in tgt_template.split()]
        return src, tgt

    def intro(self, noun: Noun):
        return self._fill(self.spec.intro_source, self.spec.intro_target, noun, False)

    def pronoun(self, noun: Noun):
        return self._fill(self.spec.pronoun_source, self.spec.pronoun_target, noun, True)

    def document(self, pronoun_rate: float):
        """Returns (source sentences, target sentences, antecedent per sentence or None)."""
        n = self.rng.randint(*self.spec.doc_len_range)
        src, tgt, ante = [], [], []
        current = None
        for i in range(n):
            if i > 0 and self.rng.random() < pronoun_rate:
                s, t = self.pronoun(current)
                ante.append(current)
            else:
                current = self.noun()
                s, t = self.intro(current)
                ante.append(None)
            src.append(s)
            tgt.append(t)
        return src, tgt, ante


@dataclass
class SynCorpus:
    spec: GrammarSpec
    parallel: list[tuple[list[list[str]], list[list[str]]]]
    mono: list[list[list[str]]]
    valid: list[tuple[list[list[str]], list[list[str]]]]
    test: list[tuple[list[list[str]], list[list[str]]]]
    challenge: list[ContrastiveExample]
    keywords: list[KeywordExample]
    lexicon: dict[str, str]
    manifest: dict[str, float | str] = field(default_factory=dict)

    def write(self, directory: str | Path) -> None:
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        for name, docs in (("train", self.parallel), ("valid", self.valid), ("test", self.test)):
            write_corpus(d / f"{name}.src", [s for s, _ in docs])
            write_corpus(d / f"{name}.tgt", [t for _, t in docs])
        write_corpus(d / "mono.tgt", self.mono)
        write_challenge_set(d / "challenge.txt", self.challenge)
        write_keywords(d / "keywords.tsv", self.keywords)
        (d / "lexicon.oracle").write_text("".join(f"{s}\t{t}\n" for s, t in self.lexicon.items()), encoding="utf-8")
        (d / "manifest.txt").write_text(format_report(self.manifest), encoding="utf-8")


def _quotas(n: int, weights: Sequence[float]) -> list[int]:
    raw = [n * w for w in weights]
    q = [int(x) for x in raw]
    for i in sorted(range(len(raw)), key=lambda i: (-(raw[i] - q[i]), i))[: n - sum(q)]:
        q[i] += 1
    return q


def generate(spec: GrammarSpec = GrammarSpec(), n_parallel_docs: int = 400, n_mono_docs: int = 1500,
             n_challenge: int = 300, n_valid_docs: int = 30, n_test_docs: int = 100, k: int = 2) -> SynCorpus:
    """Generate every split from one seeded RNG.

    Two registers are produced.  The general test split uses the sparse
    ``general_pronoun_rate``; every other split uses ``pronoun_rate``.

    The challenge set has exact per-gender quotas, so the best constant
    pronoun guess scores exactly ``manifest['sentence_level_bound']``.
    """
    spec.validate()
    if min(n_parallel_docs, n_mono_docs, n_challenge, n_valid_docs, n_test_docs) < 0:
        raise ValueError("counts must be >= 0")
    rng = random.Random(spec.seed)
    sampler = _Sampler(spec, rng)

    def docs(n, rate):
        out = []
        for _ in range(n):
            s, t, _ = sampler.document(rate)
            out.append((s, t))
        return out

    parallel = docs(n_parallel_docs, spec.pronoun_rate)
    mono = [t for _, t in docs(n_mono_docs, spec.pronoun_rate)]
    valid = docs(n_valid_docs, spec.pronoun_rate)
    test = docs(n_test_docs, spec.general_pronoun_rate)

    quotas = _quotas(n_challenge, spec.gender_weights)
    wanted = [g for g, q in zip(GENDERS, quotas) for _ in range(q)]
    rng.shuffle(wanted)
    challenge, keywords = [], []
    for gender in wanted:
        while True:
            src, tgt, ante = sampler.document(spec.pronoun_rate)
            hits = [i for i, a in enumerate(ante) if a is not None and a.gender == gender]
            if hits:
                break
        i = rng.choice(hits)
        ref = tuple(tgt[i])
        alts = tuple((p,) + ref[1:] for g, p in PRONOUNS.items() if g != gender)
        challenge.append(ContrastiveExample(tuple(src[i]), tuple(tuple(c) for c in tgt[max(0, i - k):i]), ref, alts))
        keywords.append(KeywordExample(f"c{len(keywords)}", frozenset({PRONOUNS[gender]}),
                                       frozenset(p for g, p in PRONOUNS.items() if g != gender)))

    manifest = {
        "seed": str(spec.seed),
        "n_parallel_docs": str(n_parallel_docs),
        "n_mono_docs": str(n_mono_docs),
        "n_challenge": str(n_challenge),
        "gold_context_upper_bound": 1.0,
        "sentence_level_bound": max(quotas) / n_challenge if n_challenge else 0.0,
        "majority_gender_rate": spec.majority_rate(),
    }
    return SynCorpus(spec, parallel, mono, valid, test, challenge, keywords, spec.lexicon(), manifest)


def pronoun_of(gender: str) -> str:
    return PRONOUNS[gender]


def gender_of_target(spec: GrammarSpec) -> dict[str, str]:
    """Target noun / pronoun -> gender."""
    out = {n.target: n.gender for n in spec.nouns}
    out.update({p: g for g, p in PRONOUNS.items()})
    return out
