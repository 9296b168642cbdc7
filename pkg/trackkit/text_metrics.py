"""Text metrics for referring expression generation.

:func:`cider_scores` is CIDEr-D: tf-idf weighted n-gram vectors (n = 1..4) with
document frequencies computed over the references of the corpus, clipped
cosine similarity with a Gaussian length penalty, averaged over n and scaled
by 10.

:func:`meteor_lite` is METEOR without synonym and paraphrase matching: words
are aligned by exact match and then by Porter stem, and the harmonic mean of
precision and recall is reduced by a fragmentation penalty.

Text is lower cased, punctuation is removed and words are split on whitespace.

"""

from collections import defaultdict
import math
import re

import numpy as np
from nltk.stem.porter import PorterStemmer

from .errors import EmptyCorpus, TrackkitError


_punct_regexp = re.compile(r"[^\w\s]")
_stemmer = PorterStemmer()
CIDER_N = 4
CIDER_SIGMA = 6.0
METEOR_ALPHA = 0.9
METEOR_BETA = 3.0
METEOR_GAMMA = 0.5


def tokenize(text: str) -> list[str]:
    return _punct_regexp.sub(" ", text.lower()).split()


def stem(word: str) -> str:
    return _stemmer.stem(word)


def ngram_counts(words: list[str], n: int = CIDER_N) -> dict[tuple[str, ...], int]:
    counts: dict[tuple[str, ...], int] = defaultdict(int)
    for k in range(1, n + 1):
        for i in range(len(words) - k + 1):
            counts[tuple(words[i:i + k])] += 1
    return counts


class CiderScorer:
    """CIDEr-D over a corpus of candidates, each with one or more references.

    Args:
        candidates: One text per item
        references: A non empty list of reference texts per item
        n: Longest n-gram
        sigma: Width of the length penalty

    """

    def __init__(self, candidates: list[str], references: list[list[str]],
                 n: int = CIDER_N, sigma: float = CIDER_SIGMA):
        if not candidates:
            raise EmptyCorpus("No candidates to score")
        if len(candidates) != len(references):
            raise TrackkitError(f"{len(candidates)} candidates for {len(references)} references")
        if any(not refs for refs in references):
            raise TrackkitError("Every candidate needs at least one reference")
        self.n = n
        self.sigma = sigma
        self.ctest = [self._cook(c) for c in candidates]
        self.crefs = [[self._cook(r) for r in refs] for refs in references]
        self.document_frequency: dict[tuple[str, ...], float] = defaultdict(float)
        for refs in self.crefs:
            for ngram in {ngram for counts, _ in refs for ngram in counts}:
                self.document_frequency[ngram] += 1
        self.ref_len = np.log(float(len(self.crefs)))

    def _cook(self, text: str) -> tuple[dict, int]:
        words = tokenize(text)
        return ngram_counts(words, self.n), len(words)

    def _vec(self, counts: dict) -> tuple[list[dict], list[float]]:
        vec: list[dict] = [defaultdict(float) for _ in range(self.n)]
        norm = [0.0] * self.n
        for ngram, term_freq in counts.items():
            df = np.log(max(1.0, self.document_frequency[ngram]))
            k = len(ngram) - 1
            vec[k][ngram] = float(term_freq) * (self.ref_len - df)
            norm[k] += vec[k][ngram] ** 2
        return vec, [math.sqrt(x) for x in norm]

    def _sim(self, vec_hyp, vec_ref, norm_hyp, norm_ref, length_hyp, length_ref) -> np.ndarray:
        delta = float(length_hyp - length_ref)
        val = np.zeros(self.n)
        for k in range(self.n):
            for ngram, weight in vec_hyp[k].items():
                val[k] += min(weight, vec_ref[k].get(ngram, 0.0)) * vec_ref[k].get(ngram, 0.0)
            if norm_hyp[k] != 0 and norm_ref[k] != 0:
                val[k] /= norm_hyp[k] * norm_ref[k]
            val[k] *= math.exp(-(delta ** 2) / (2 * self.sigma ** 2))
        return val

    def compute_scores(self) -> list[float]:
        scores = []
        for (test, test_len), refs in zip(self.ctest, self.crefs):
            vec, norm = self._vec(test)
            score = np.zeros(self.n)
            for ref, ref_len in refs:
                vec_ref, norm_ref = self._vec(ref)
                score += self._sim(vec, vec_ref, norm, norm_ref, test_len, ref_len)
            scores.append(float(np.mean(score) / len(refs) * 10.0))
        return scores


def cider_scores(candidates: list[str], references: list[list[str]]) -> list[float]:
    return CiderScorer(candidates, references).compute_scores()


def cider(candidates: list[str], references: list[list[str]]) -> float:
    """Corpus CIDEr-D, the mean of per item scores"""
    return float(np.mean(cider_scores(candidates, references)))


def align(candidate: list[str], reference: list[str]) -> list[tuple[int, int]]:
    """One to one word alignment, exact matches first and then stem matches.

    Each stage matches candidate words left to right to the first unused
    reference word.

    Returns:
        :code:`(candidate_position, reference_position)` pairs sorted by candidate position

    """
    used_c: set[int] = set()
    used_r: set[int] = set()
    pairs = []
    for key in (lambda w: w, stem):
        ref_keys = [key(w) for w in reference]
        for i, word in enumerate(candidate):
            if i in used_c:
                continue
            k = key(word)
            for j, rk in enumerate(ref_keys):
                if j not in used_r and rk == k:
                    pairs.append((i, j))
                    used_c.add(i)
                    used_r.add(j)
                    break
    return sorted(pairs)


def count_chunks(pairs: list[tuple[int, int]]) -> int:
    """Number of runs of adjacent matches, contiguous in both candidate and reference"""
    chunks = 0
    prev = None
    for i, j in pairs:
        if prev is None or i != prev[0] + 1 or j != prev[1] + 1:
            chunks += 1
        prev = (i, j)
    return chunks


def _meteor_single(candidate: list[str], reference: list[str]) -> float:
    pairs = align(candidate, reference)
    matches = len(pairs)
    if matches == 0:
        return 0.0
    precision = matches / len(candidate)
    recall = matches / len(reference)
    fmean = precision * recall / (METEOR_ALPHA * precision + (1 - METEOR_ALPHA) * recall)
    penalty = METEOR_GAMMA * (count_chunks(pairs) / matches) ** METEOR_BETA
    return fmean * (1 - penalty)


def meteor_lite(candidate: str, references: list[str]) -> float:
    """Best score of :code:`candidate` over :code:`references`.

    An empty candidate scores 0.

    """
    if not references:
        raise TrackkitError("METEOR needs at least one reference")
    words = tokenize(candidate)
    if not words:
        return 0.0
    return max(_meteor_single(words, tokenize(r)) if tokenize(r) else 0.0 for r in references)
