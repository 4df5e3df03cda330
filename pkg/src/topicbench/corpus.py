"""Corpus ingestion and statistics.

Two text input formats are supported:

* bag-of-words: one document per line, ``doc_id token:count ...`` with
  whitespace between fields; ``:`` is reserved as the separator inside a
  field, so bag-of-words surfaces may not contain it.
* token sequences: one document per line, ``doc_id<TAB>lemma lemma ...``,
  preserving word order so run-length statistics can be computed.

Parsed corpora are stored in a packed layout (concatenated per-document
token id and count arrays plus offsets) that the training kernels consume
directly.  A versioned binary container is provided for round-tripping.
"""

from __future__ import annotations

import json
import logging
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np
import scipy.sparse as sp

from .errors import ConfigError, DataError

logger = logging.getLogger(__name__)

MAGIC = b"TBCORPUS"
FORMAT_VERSION = 1


class Vocabulary:
    """Dense token index: ids ``0..W-1``, unique surfaces, document frequencies."""

    __slots__ = ("surfaces", "df", "_ids")

    def __init__(self, surfaces: Sequence[str], df: np.ndarray):
        self.surfaces = tuple(surfaces)
        self.df = np.asarray(df, dtype=np.int64)
        if self.df.shape != (len(self.surfaces),):
            raise ValueError("df length does not match surface count")
        if len(set(self.surfaces)) != len(self.surfaces):
            raise DataError("vocabulary surfaces are not unique")
        if any(not s for s in self.surfaces):
            raise DataError("vocabulary contains an empty surface")
        if len(self.df) and self.df.min() < 1:
            raise DataError("vocabulary contains a token with document frequency < 1")
        self._ids = {s: i for i, s in enumerate(self.surfaces)}

    def __len__(self) -> int:
        return len(self.surfaces)

    def __contains__(self, surface: str) -> bool:
        return surface in self._ids

    def id_of(self, surface: str) -> int:
        return self._ids[surface]

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, Vocabulary)
            and self.surfaces == other.surfaces
            and np.array_equal(self.df, other.df)
        )


@dataclass(frozen=True)
class Document:
    """Read-only view of one document inside a corpus."""

    doc_id: str
    token_ids: np.ndarray
    counts: np.ndarray
    sequence: np.ndarray | None

    @property
    def length(self) -> int:
        return int(self.counts.sum())


class Corpus:
    """Immutable tokenized collection over a dense vocabulary.

    Documents are stored as slices of flat arrays: ``token_ids[doc_ptr[d]:
    doc_ptr[d+1]]`` are the distinct tokens of document ``d`` and ``counts``
    their multiplicities.  When the source had word order, ``seq_tokens`` /
    ``seq_ptr`` hold the original token streams with the same slicing scheme.
    """

    def __init__(
        self,
        vocabulary: Vocabulary,
        doc_ids: Sequence[str],
        token_ids: np.ndarray,
        counts: np.ndarray,
        doc_ptr: np.ndarray,
        seq_tokens: np.ndarray | None = None,
        seq_ptr: np.ndarray | None = None,
        validate: bool = True,
    ):
        self.vocabulary = vocabulary
        self.doc_ids = tuple(doc_ids)
        self.token_ids = np.ascontiguousarray(token_ids, dtype=np.int32)
        self.counts = np.ascontiguousarray(counts, dtype=np.int64)
        self.doc_ptr = np.ascontiguousarray(doc_ptr, dtype=np.int64)
        self.seq_tokens = None if seq_tokens is None else np.ascontiguousarray(seq_tokens, dtype=np.int32)
        self.seq_ptr = None if seq_ptr is None else np.ascontiguousarray(seq_ptr, dtype=np.int64)
        self._counts_f64: np.ndarray | None = None
        if validate:
            self.validate()

    # -- basic shape --------------------------------------------------

    @property
    def num_documents(self) -> int:
        return len(self.doc_ids)

    @property
    def vocab_size(self) -> int:
        return len(self.vocabulary)

    @property
    def total_tokens(self) -> int:
        return int(self.counts.sum())

    @property
    def has_sequences(self) -> bool:
        return self.seq_tokens is not None

    @property
    def doc_lengths(self) -> np.ndarray:
        return np.add.reduceat(self.counts, self.doc_ptr[:-1]) if len(self.counts) else np.zeros(self.num_documents, dtype=np.int64)

    def counts_f64(self) -> np.ndarray:
        """Float view of the counts, cached for the training kernels."""
        if self._counts_f64 is None:
            self._counts_f64 = self.counts.astype(np.float64)
        return self._counts_f64

    def document(self, index: int) -> Document:
        lo, hi = self.doc_ptr[index], self.doc_ptr[index + 1]
        seq = None
        if self.has_sequences:
            slo, shi = self.seq_ptr[index], self.seq_ptr[index + 1]
            seq = self.seq_tokens[slo:shi]
        return Document(self.doc_ids[index], self.token_ids[lo:hi], self.counts[lo:hi], seq)

    def __len__(self) -> int:
        return self.num_documents

    def __iter__(self) -> Iterator[Document]:
        return (self.document(i) for i in range(self.num_documents))

    # -- invariants ----------------------------------------------------

    def validate(self) -> None:
        w = self.vocab_size
        d = self.num_documents
        if len(set(self.doc_ids)) != d:
            raise DataError("duplicate doc_id in corpus")
        if self.doc_ptr.shape != (d + 1,) or self.doc_ptr[0] != 0 or self.doc_ptr[-1] != len(self.token_ids):
            raise DataError("document offsets are inconsistent")
        if np.any(np.diff(self.doc_ptr) < 0):
            raise DataError("document offsets are not monotone")
        if len(self.token_ids) != len(self.counts):
            raise DataError("token id and count arrays differ in length")
        if len(self.token_ids) and (self.token_ids.min() < 0 or self.token_ids.max() >= w):
            raise DataError("token id out of vocabulary range")
        if len(self.counts) and self.counts.min() <= 0:
            raise DataError("non-positive token count")
        for i in range(d):
            lo, hi = self.doc_ptr[i], self.doc_ptr[i + 1]
            ids = self.token_ids[lo:hi]
            if len(np.unique(ids)) != len(ids):
                raise DataError(f"duplicate token id within document {self.doc_ids[i]!r}")
        if self.has_sequences:
            if self.seq_ptr is None or self.seq_ptr.shape != (d + 1,) or self.seq_ptr[0] != 0:
                raise DataError("sequence offsets are inconsistent")
            if self.seq_ptr[-1] != len(self.seq_tokens):
                raise DataError("sequence offsets are inconsistent")
            for i in range(d):
                doc = self.document(i)
                bag = np.bincount(doc.sequence, minlength=w)
                expect = np.zeros(w, dtype=np.int64)
                expect[doc.token_ids] = doc.counts
                if not np.array_equal(bag, expect):
                    raise DataError(f"sequence of document {self.doc_ids[i]!r} does not match its bag of words")

    # -- persistence ----------------------------------------------------

    def save(self, path: str | Path) -> None:
        """Write the corpus to the versioned binary container."""
        path = Path(path)
        header = {
            "num_documents": self.num_documents,
            "vocab_size": self.vocab_size,
            "has_sequences": self.has_sequences,
        }
        blob = json.dumps(header, sort_keys=True).encode("utf-8")
        with open(path, "wb") as fh:
            fh.write(MAGIC)
            fh.write(struct.pack("<I", FORMAT_VERSION))
            fh.write(struct.pack("<Q", len(blob)))
            fh.write(blob)
            np.save(fh, np.asarray(self.doc_ids), allow_pickle=False)
            np.save(fh, np.asarray(self.vocabulary.surfaces), allow_pickle=False)
            np.save(fh, self.vocabulary.df, allow_pickle=False)
            np.save(fh, self.token_ids, allow_pickle=False)
            np.save(fh, self.counts, allow_pickle=False)
            np.save(fh, self.doc_ptr, allow_pickle=False)
            if self.has_sequences:
                np.save(fh, self.seq_tokens, allow_pickle=False)
                np.save(fh, self.seq_ptr, allow_pickle=False)

    @classmethod
    def load(cls, path: str | Path) -> "Corpus":
        path = Path(path)
        if not path.exists():
            raise DataError(f"corpus file not found: {path}")
        with open(path, "rb") as fh:
            magic = fh.read(len(MAGIC))
            if magic != MAGIC:
                raise DataError(f"not a corpus file (bad magic bytes): {path}")
            (version,) = struct.unpack("<I", fh.read(4))
            if version != FORMAT_VERSION:
                raise DataError(f"unsupported corpus format version {version}")
            (hlen,) = struct.unpack("<Q", fh.read(8))
            header = json.loads(fh.read(hlen).decode("utf-8"))
            doc_ids = np.load(fh, allow_pickle=False)
            surfaces = np.load(fh, allow_pickle=False)
            df = np.load(fh, allow_pickle=False)
            token_ids = np.load(fh, allow_pickle=False)
            counts = np.load(fh, allow_pickle=False)
            doc_ptr = np.load(fh, allow_pickle=False)
            seq_tokens = seq_ptr = None
            if header["has_sequences"]:
                seq_tokens = np.load(fh, allow_pickle=False)
                seq_ptr = np.load(fh, allow_pickle=False)
        vocab = Vocabulary([str(s) for s in surfaces], df)
        return cls(vocab, [str(s) for s in doc_ids], token_ids, counts, doc_ptr, seq_tokens, seq_ptr)


# -- text parsers -------------------------------------------------------


def parse_bow(path: str | Path) -> Corpus:
    """Parse a bag-of-words file, one ``doc_id token:count ...`` line per document.

    Counts must be positive integers.  Repeated tokens on one line are
    summed.  Blank lines are skipped.  Vocabulary ids are assigned in order
    of first appearance.
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"input file not found: {path}")
    surfaces: list[str] = []
    ids: dict[str, int] = {}
    doc_ids: list[str] = []
    seen_docs: set[str] = set()
    flat_ids: list[np.ndarray] = []
    flat_counts: list[np.ndarray] = []
    doc_ptr = [0]
    df_acc: list[int] = []

    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            fields = line.split()
            if len(fields) < 2:
                raise DataError(f"{path}:{lineno}: expected 'doc_id token:count ...'")
            doc_id = fields[0]
            if doc_id in seen_docs:
                raise DataError(f"{path}:{lineno}: duplicate doc_id {doc_id!r}")
            seen_docs.add(doc_id)
            bag: dict[int, int] = {}
            for field in fields[1:]:
                surface, sep, count_str = field.rpartition(":")
                if not sep or not surface or ":" in surface:
                    raise DataError(f"{path}:{lineno}: malformed field {field!r}")
                try:
                    count = int(count_str)
                except ValueError:
                    raise DataError(f"{path}:{lineno}: malformed count in {field!r}") from None
                if count <= 0:
                    raise DataError(f"{path}:{lineno}: count must be positive in {field!r}")
                tid = ids.get(surface)
                if tid is None:
                    tid = len(surfaces)
                    ids[surface] = tid
                    surfaces.append(surface)
                    df_acc.append(0)
                bag[tid] = bag.get(tid, 0) + count
            doc_ids.append(doc_id)
            tids = np.fromiter(bag.keys(), dtype=np.int32, count=len(bag))
            order = np.argsort(tids, kind="stable")
            tids = tids[order]
            cnts = np.fromiter(bag.values(), dtype=np.int64, count=len(bag))[order]
            for t in tids:
                df_acc[t] += 1
            flat_ids.append(tids)
            flat_counts.append(cnts)
            doc_ptr.append(doc_ptr[-1] + len(tids))

    if not doc_ids:
        raise DataError(f"{path}: no documents")
    vocab = Vocabulary(surfaces, np.asarray(df_acc, dtype=np.int64))
    return Corpus(
        vocab,
        doc_ids,
        np.concatenate(flat_ids) if flat_ids else np.zeros(0, np.int32),
        np.concatenate(flat_counts) if flat_counts else np.zeros(0, np.int64),
        np.asarray(doc_ptr, dtype=np.int64),
    )


def parse_sequences(path: str | Path) -> Corpus:
    """Parse a word-order file, one ``doc_id<TAB>lemma lemma ...`` line per document.

    The bag of words of each document is derived from its token stream, so
    run-length statistics stay consistent with the counts.
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"input file not found: {path}")
    surfaces: list[str] = []
    ids: dict[str, int] = {}
    doc_ids: list[str] = []
    seen_docs: set[str] = set()
    flat_ids: list[np.ndarray] = []
    flat_counts: list[np.ndarray] = []
    flat_seq: list[np.ndarray] = []
    doc_ptr = [0]
    seq_ptr = [0]
    df_acc: list[int] = []

    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line.strip():
                continue
            doc_id, sep, rest = line.partition("\t")
            if not sep:
                raise DataError(f"{path}:{lineno}: missing tab between doc_id and tokens")
            doc_id = doc_id.strip()
            if not doc_id:
                raise DataError(f"{path}:{lineno}: empty doc_id")
            if doc_id in seen_docs:
                raise DataError(f"{path}:{lineno}: duplicate doc_id {doc_id!r}")
            tokens = rest.split()
            if not tokens:
                raise DataError(f"{path}:{lineno}: empty token list")
            seen_docs.add(doc_id)
            stream = np.empty(len(tokens), dtype=np.int32)
            for pos, surface in enumerate(tokens):
                tid = ids.get(surface)
                if tid is None:
                    tid = len(surfaces)
                    ids[surface] = tid
                    surfaces.append(surface)
                    df_acc.append(0)
                stream[pos] = tid
            tids, cnts = np.unique(stream, return_counts=True)
            for t in tids:
                df_acc[t] += 1
            doc_ids.append(doc_id)
            flat_ids.append(tids.astype(np.int32))
            flat_counts.append(cnts.astype(np.int64))
            flat_seq.append(stream)
            doc_ptr.append(doc_ptr[-1] + len(tids))
            seq_ptr.append(seq_ptr[-1] + len(stream))

    if not doc_ids:
        raise DataError(f"{path}: no documents")
    vocab = Vocabulary(surfaces, np.asarray(df_acc, dtype=np.int64))
    return Corpus(
        vocab,
        doc_ids,
        np.concatenate(flat_ids),
        np.concatenate(flat_counts),
        np.asarray(doc_ptr, dtype=np.int64),
        np.concatenate(flat_seq),
        np.asarray(seq_ptr, dtype=np.int64),
    )


# -- vocabulary filtering ------------------------------------------------


def filter_vocabulary(corpus: Corpus, df_min: int = 1, df_max: float = 1.0) -> Corpus:
    """Drop tokens outside the document-frequency band and re-densify ids.

    ``df_min`` is an absolute document count (keep tokens appearing in at
    least that many documents); ``df_max`` is a fraction of the collection
    (keep tokens appearing in at most that share of documents).  Documents
    emptied by the filter are dropped.  Because dropping documents shrinks
    the collection that ``df_max`` is relative to, the thresholds are
    re-applied until the corpus is a fixed point, which makes the operation
    idempotent.
    """
    if df_min < 1:
        raise ConfigError("df_min must be at least 1")
    if not (0.0 < df_max <= 1.0):
        raise ConfigError("df_max must be a fraction in (0, 1]")

    current = corpus
    while True:
        d = current.num_documents
        df = current.vocabulary.df
        keep_mask = (df >= df_min) & (df <= df_max * d)
        if keep_mask.all():
            return current
        if not keep_mask.any():
            raise DataError("empty vocabulary after filtering")

        old_to_new = np.full(len(keep_mask), -1, dtype=np.int32)
        old_to_new[keep_mask] = np.arange(int(keep_mask.sum()), dtype=np.int32)
        surfaces = [s for s, k in zip(current.vocabulary.surfaces, keep_mask) if k]

        doc_ids: list[str] = []
        flat_ids: list[np.ndarray] = []
        flat_counts: list[np.ndarray] = []
        flat_seq: list[np.ndarray] = []
        doc_ptr = [0]
        seq_ptr = [0]
        df_acc = np.zeros(len(surfaces), dtype=np.int64)
        dropped = 0
        for i in range(d):
            doc = current.document(i)
            mask = keep_mask[doc.token_ids]
            if not mask.any():
                dropped += 1
                continue
            tids = old_to_new[doc.token_ids[mask]]
            doc_ids.append(current.doc_ids[i])
            flat_ids.append(tids)
            flat_counts.append(doc.counts[mask])
            df_acc[tids] += 1
            doc_ptr.append(doc_ptr[-1] + len(tids))
            if current.has_sequences:
                seq_mask = keep_mask[doc.sequence]
                flat_seq.append(old_to_new[doc.sequence[seq_mask]])
                seq_ptr.append(seq_ptr[-1] + len(flat_seq[-1]))
        if dropped:
            logger.info("vocabulary filter dropped %d emptied document(s)", dropped)
        if not doc_ids:
            raise DataError("empty vocabulary after filtering")

        vocab = Vocabulary(surfaces, df_acc)
        current = Corpus(
            vocab,
            doc_ids,
            np.concatenate(flat_ids),
            np.concatenate(flat_counts),
            np.asarray(doc_ptr, dtype=np.int64),
            np.concatenate(flat_seq) if current.has_sequences else None,
            np.asarray(seq_ptr, dtype=np.int64) if current.has_sequences else None,
        )


# -- co-occurrence statistics ---------------------------------------------


class CooccurrenceStats:
    """Document-level co-occurrence counts for pointwise mutual information.

    ``df(w)`` is the number of documents containing ``w``; ``joint_df(i, j)``
    the number containing both.  Counts are built in one pass as a sparse
    incidence product, so memory scales with the number of distinct
    co-occurring pairs.
    """

    def __init__(self, doc_count: int, token_df: np.ndarray, pair_upper: sp.csr_matrix):
        self.doc_count = int(doc_count)
        self.token_df = np.asarray(token_df, dtype=np.int64)
        self.pair_upper = pair_upper

    def df(self, token_id: int) -> int:
        return int(self.token_df[token_id])

    def joint_df(self, i: int, j: int) -> int:
        if i == j:
            return self.df(i)
        if i > j:
            i, j = j, i
        return int(self.pair_upper[i, j])

    def pairs(self) -> Iterator[tuple[int, int, int]]:
        """Yield ``(i, j, count)`` for every co-occurring pair with ``i < j``."""
        coo = self.pair_upper.tocoo()
        for i, j, c in zip(coo.row, coo.col, coo.data):
            yield int(i), int(j), int(c)


def build_cooccurrence(corpus: Corpus) -> CooccurrenceStats:
    """Count, for every token pair, the documents where both occur."""
    w = corpus.vocab_size
    d = corpus.num_documents
    rows = np.repeat(np.arange(d, dtype=np.int64), np.diff(corpus.doc_ptr))
    incidence = sp.csr_matrix(
        (np.ones(len(corpus.token_ids), dtype=np.int64), (rows, corpus.token_ids.astype(np.int64))),
        shape=(d, w),
    )
    grid = (incidence.T @ incidence).tocsr()
    token_df = grid.diagonal().astype(np.int64)
    pair_upper = sp.triu(grid, k=1).tocsr()
    return CooccurrenceStats(d, token_df, pair_upper)


def unigram_distribution(corpus: Corpus) -> np.ndarray:
    """Corpus-wide token distribution ``p(w)`` weighted by counts."""
    probs = np.bincount(corpus.token_ids, weights=corpus.counts.astype(np.float64), minlength=corpus.vocab_size)
    total = probs.sum()
    if total <= 0:
        raise DataError("corpus has no tokens")
    return probs / total
