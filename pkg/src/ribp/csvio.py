"""Plain-text file formats.

* Feature matrices: one row per line, comma-separated 0/1 entries.
* Real matrices (observed data X): same layout with floats.
* Bernoulli profiles: a single comma-separated line of probabilities.
* Corpora: one document per line, ``label, space-separated token ids``.
* Images: plain PGM (P2).

Any file may start with ``#`` lines; a first line of the form
``# key=value key=value`` is returned as metadata by the readers that ask
for it.  Blank lines are ignored.
"""
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ribp.model import FeatureMatrix


class ParseError(ValueError):
    def __init__(self, path, lineno, message):
        super().__init__(f"{path}:{lineno}: {message}")
        self.path = path
        self.lineno = lineno


def format_metadata(meta):
    return "# " + " ".join(f"{k}={v}" for k, v in meta.items())


def _parse_metadata(line):
    meta = {}
    for token in line.lstrip("#").split():
        key, sep, value = token.partition("=")
        if sep:
            meta[key] = value
    return meta


def _read_rows(path, convert):
    path = Path(path)
    rows, meta = [], {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                if lineno == 1:
                    meta = _parse_metadata(line)
                continue
            try:
                rows.append([convert(tok) for tok in line.split(",")])
            except ValueError as err:
                raise ParseError(path, lineno, str(err)) from None
            if len(rows) > 1 and len(rows[-1]) != len(rows[0]):
                raise ParseError(path, lineno, f"expected {len(rows[0])} fields, got {len(rows[-1])}")
    return rows, meta


def _binary(tok):
    tok = tok.strip()
    if tok not in ("0", "1"):
        raise ValueError(f"expected 0 or 1, got {tok!r}")
    return int(tok)


def write_feature_matrix(path, Z, meta=None):
    z = Z.entries if isinstance(Z, FeatureMatrix) else np.asarray(Z)
    with open(path, "w") as fh:
        if meta:
            fh.write(format_metadata(meta) + "\n")
        for row in z:
            fh.write(",".join(str(int(v)) for v in row) + "\n")


def read_feature_matrix(path, with_meta=False):
    rows, meta = _read_rows(path, _binary)
    if not rows:
        raise ParseError(Path(path), 0, "no matrix rows")
    Z = FeatureMatrix(np.array(rows, dtype=np.int8))
    return (Z, meta) if with_meta else Z


def write_real_matrix(path, X, meta=None):
    with open(path, "w") as fh:
        if meta:
            fh.write(format_metadata(meta) + "\n")
        for row in np.atleast_2d(X):
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


def read_real_matrix(path):
    rows, _ = _read_rows(path, float)
    if not rows:
        raise ParseError(Path(path), 0, "no matrix rows")
    return np.array(rows, dtype=float)


def write_profile(path, pi, meta=None):
    write_real_matrix(path, np.asarray(pi, dtype=float)[None, :], meta)


def read_profile(path, with_meta=False):
    rows, meta = _read_rows(path, float)
    if len(rows) != 1:
        raise ParseError(Path(path), 0, f"expected one profile line, found {len(rows)}")
    pi = np.array(rows[0])
    if np.any(pi < 0) or np.any(pi > 1):
        raise ParseError(Path(path), 0, "probabilities must lie in [0, 1]")
    return (pi, meta) if with_meta else pi


def write_pgm(path, image, maxval=255):
    """Plain (P2) PGM of a 2-D array of integers in 0..maxval."""
    img = np.asarray(image)
    if img.ndim != 2 or np.any(img < 0) or np.any(img > maxval):
        raise ValueError(f"PGM needs a 2-D array with values in 0..{maxval}")
    with open(path, "w") as fh:
        fh.write(f"P2\n{img.shape[1]} {img.shape[0]}\n{maxval}\n")
        for row in img.astype(int):
            fh.write(" ".join(str(v) for v in row) + "\n")


def read_pgm(path):
    tokens = []
    with open(path) as fh:
        for line in fh:
            tokens.extend(line.split("#", 1)[0].split())
    if not tokens or tokens[0] != "P2":
        raise ParseError(Path(path), 1, "not a plain PGM file")
    width, height, maxval = (int(t) for t in tokens[1:4])
    values = np.array([int(t) for t in tokens[4:]])
    if values.size != width * height:
        raise ParseError(Path(path), 0, f"expected {width * height} pixels, found {values.size}")
    return values.reshape(height, width), maxval


def binary_image(Z):
    """Active cells black on white, for PGM output."""
    return np.where(np.asarray(Z) > 0, 0, 255)


def grey_image(values, lo=None, hi=None):
    """Linear map of real values onto 0..255 (lo black, hi white)."""
    v = np.asarray(values, dtype=float)
    lo = v.min() if lo is None else lo
    hi = v.max() if hi is None else hi
    if hi <= lo:
        return np.full(v.shape, 128, dtype=int)
    return np.rint(255 * np.clip((v - lo) / (hi - lo), 0, 1)).astype(int)


def tile_images(images, pad=1, fill=255):
    """Place equally sized 2-D images side by side with ``pad`` columns between."""
    images = [np.asarray(im) for im in images]
    h, w = images[0].shape
    out = np.full((h, len(images) * (w + pad) - pad), fill, dtype=int)
    for i, im in enumerate(images):
        out[:, i * (w + pad): i * (w + pad) + w] = im
    return out


@dataclass
class CorpusSummary:
    """Binary word-presence rows (documents x vocabulary) with group labels."""

    rows: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        self.rows = np.asarray(self.rows, dtype=np.int8)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.rows.ndim != 2 or self.labels.shape != (self.rows.shape[0],):
            raise ValueError("need a (documents, vocab) matrix and one label per document")
        if not np.all((self.rows == 0) | (self.rows == 1)):
            raise ValueError("presence rows must be binary")

    @property
    def vocab(self):
        return self.rows.shape[1]

    def group(self, g):
        return FeatureMatrix(self.rows[self.labels == g])


def write_corpus(path, corpus):
    """One document per line: ``label, token ids``; the first line records the vocabulary size."""
    with open(path, "w") as fh:
        fh.write(format_metadata({"vocab": corpus.vocab}) + "\n")
        for label, row in zip(corpus.labels, corpus.rows):
            fh.write(f"{int(label)}, " + " ".join(str(k) for k in np.flatnonzero(row)) + "\n")


def read_corpus(path, vocab=None):
    """Inverse of :func:`write_corpus`.

    The vocabulary size comes from ``vocab``, else from the metadata line,
    else from the largest token id.  Repeated tokens count once.
    """
    path = Path(path)
    labels, docs, meta = [], [], {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                if lineno == 1:
                    meta = _parse_metadata(line)
                continue
            label, sep, rest = line.partition(",")
            try:
                if not sep:
                    raise ValueError("expected 'label, token ids'")
                ids = [int(t) for t in rest.split()]
                if any(i < 0 for i in ids):
                    raise ValueError("token ids must be non-negative")
                labels.append(int(label))
            except ValueError as err:
                raise ParseError(path, lineno, str(err)) from None
            docs.append((lineno, ids))
    if vocab is None:
        vocab = int(meta["vocab"]) if "vocab" in meta else 1 + max((max(ids, default=-1) for _, ids in docs), default=-1)
    rows = np.zeros((len(docs), vocab), dtype=np.int8)
    for d, (lineno, ids) in enumerate(docs):
        if ids and max(ids) >= vocab:
            raise ParseError(path, lineno, f"token id {max(ids)} outside a vocabulary of {vocab}")
        rows[d, ids] = 1
    return CorpusSummary(rows, np.array(labels, dtype=np.int64))
