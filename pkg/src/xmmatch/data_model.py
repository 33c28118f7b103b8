"""Core data types: modalities, embedding sets, pseudo-labels, file I/O.

The toolkit operates directly on L2-normalized embedding vectors; nothing in
here knows about images or encoders. Embedding files are plain text:

    #dim <d>
    <modality:v|r> [id:<int>] <f_1> ... <f_d>

one record per line, fields separated by single spaces, floats in decimal.
The optional ``id:`` field carries a ground-truth identity; a file must use
it on every record or on none.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import DimMismatch, ParseError, XMMatchError, ZeroVector

# Rows whose norm is already within this tolerance of 1 are left untouched by
# normalize(). This makes normalization idempotent at the bit level, which in
# turn makes the save/load round trip bit-exact.
_UNIT_TOL = 1e-12


class Modality(enum.Enum):
    VISIBLE = "visible"
    INFRARED = "infrared"
    INTERMEDIATE = "intermediate"

    @property
    def tag(self) -> str:
        """File tag. The intermediate stream is visible-derived, so 'v'."""
        return "r" if self is Modality.INFRARED else "v"

    @property
    def is_infrared(self) -> bool:
        return self is Modality.INFRARED


def normalize(vectors: np.ndarray) -> np.ndarray:
    """Scale rows of ``vectors`` (or a single 1-D vector) to unit L2 norm.

    Rows already within 1e-12 of unit norm are returned unchanged so that
    normalize(normalize(X)) == normalize(X) exactly.

    Raises ZeroVector(row) for any row with norm below 1e-12.
    """
    arr = np.asarray(vectors, dtype=np.float64)
    single = arr.ndim == 1
    mat = arr[None, :] if single else arr
    if mat.ndim != 2:
        raise XMMatchError(f"expected 1-D or 2-D input, got shape {arr.shape}")
    norms = np.linalg.norm(mat, axis=1)
    bad = np.flatnonzero(norms < _UNIT_TOL)
    if bad.size:
        raise ZeroVector(int(bad[0]))
    out = mat.copy()
    off_unit = np.abs(norms - 1.0) > _UNIT_TOL
    if np.any(off_unit):
        out[off_unit] = mat[off_unit] / norms[off_unit, None]
    return out[0] if single else out


@dataclass(frozen=True)
class EmbeddingSet:
    """N unit-norm d-vectors of one modality, optionally with identities."""

    vectors: np.ndarray
    modality: Modality
    ids: np.ndarray | None = None

    def __post_init__(self):
        vec = np.array(self.vectors, dtype=np.float64)
        if vec.ndim != 2 or vec.shape[0] < 1 or vec.shape[1] < 1:
            raise XMMatchError(f"vectors must be (N>=1, d>=1), got {vec.shape}")
        norms = np.linalg.norm(vec, axis=1)
        if np.max(np.abs(norms - 1.0)) > 1e-6:
            raise XMMatchError("rows must be unit norm (call normalize first)")
        vec.flags.writeable = False
        object.__setattr__(self, "vectors", vec)
        if self.ids is not None:
            ids = np.array(self.ids, dtype=np.int64)
            if ids.shape != (vec.shape[0],):
                raise XMMatchError("ids must be one integer per row")
            ids.flags.writeable = False
            object.__setattr__(self, "ids", ids)

    @property
    def n(self) -> int:
        return self.vectors.shape[0]

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]


@dataclass(frozen=True)
class PseudoLabels:
    """Per-instance cluster labels in [0, K), with -1 marking noise."""

    labels: np.ndarray
    cluster_count: int

    def __post_init__(self):
        lab = np.array(self.labels, dtype=np.int64)
        k = int(self.cluster_count)
        if lab.ndim != 1:
            raise XMMatchError("labels must be a 1-D integer array")
        if k < 0 or np.any(lab < -1) or np.any(lab >= k):
            raise XMMatchError("labels must lie in [-1, cluster_count)")
        lab.flags.writeable = False
        object.__setattr__(self, "labels", lab)
        object.__setattr__(self, "cluster_count", k)

    @property
    def n(self) -> int:
        return self.labels.shape[0]

    def members(self, cluster: int) -> np.ndarray:
        return np.flatnonzero(self.labels == cluster)


def save_embeddings(es: EmbeddingSet, path: str) -> None:
    """Write ``es`` in the embedding file format (bit-exact round trip)."""
    with open(path, "w", encoding="ascii") as fh:
        fh.write(f"#dim {es.dim}\n")
        for i in range(es.n):
            fields = [es.modality.tag]
            if es.ids is not None:
                fields.append(f"id:{int(es.ids[i])}")
            # repr of a Python float is the shortest decimal that parses back
            # to the same binary64, which is what makes round trips exact.
            fields.extend(repr(float(x)) for x in es.vectors[i])
            fh.write(" ".join(fields) + "\n")


def load_embeddings(path: str, modality: Modality) -> EmbeddingSet:
    """Parse an embedding file into a normalized EmbeddingSet.

    The file's per-record tag must agree with ``modality`` ('v' records load
    as VISIBLE or INTERMEDIATE, 'r' records as INFRARED). Records must be
    tag-uniform, id-uniform and dimension-uniform; violations raise
    ParseError with the offending 1-based line number (DimMismatch for a
    record whose vector length disagrees with the header).
    """
    with open(path, "r", encoding="ascii") as fh:
        lines = fh.read().splitlines()
    if not lines or not lines[0].startswith("#dim "):
        raise ParseError(1, "first line must be '#dim <d>'")
    try:
        dim = int(lines[0][5:])
    except ValueError:
        raise ParseError(1, "first line must be '#dim <d>'") from None
    if dim < 1:
        raise ParseError(1, "dimension must be >= 1")

    rows: list[list[float]] = []
    ids: list[int] = []
    has_ids: bool | None = None
    for lineno, line in enumerate(lines[1:], start=2):
        if not line:
            continue
        fields = line.split(" ")
        tag = fields[0]
        if tag not in ("v", "r"):
            raise ParseError(lineno, f"unknown modality tag {tag!r}")
        if tag != modality.tag:
            raise ParseError(lineno, f"tag {tag!r} conflicts with requested {modality.name}")
        rest = fields[1:]
        row_has_id = bool(rest) and rest[0].startswith("id:")
        if has_ids is None:
            has_ids = row_has_id
        elif has_ids != row_has_id:
            raise ParseError(lineno, "either every record carries id: or none does")
        if row_has_id:
            try:
                ids.append(int(rest[0][3:]))
            except ValueError:
                raise ParseError(lineno, f"bad id field {rest[0]!r}") from None
            rest = rest[1:]
        if len(rest) != dim:
            raise DimMismatch(f"line {lineno}: expected {dim} values, got {len(rest)}")
        try:
            rows.append([float(x) for x in rest])
        except ValueError:
            raise ParseError(lineno, "fields must be decimal floats") from None
    if not rows:
        raise ParseError(len(lines) + 1, "file contains no records")

    vectors = normalize(np.asarray(rows, dtype=np.float64))
    return EmbeddingSet(
        vectors=vectors,
        modality=modality,
        ids=np.asarray(ids, dtype=np.int64) if has_ids else None,
    )


def make_intermediate(visible: EmbeddingSet, sigma: float, seed: int) -> EmbeddingSet:
    """Derive the intermediate stream: perturb visible embeddings and renormalize.

    Adds Gaussian noise(0, sigma^2 I) to every row, renormalizes, and returns
    an INTERMEDIATE set index-paired 1:1 with ``visible`` (ids inherited).
    sigma=0 returns the input vectors bit-exactly. Deterministic given seed.
    """
    if sigma < 0:
        raise XMMatchError("sigma must be nonnegative")
    rng = np.random.default_rng(seed)
    noise = rng.normal(0.0, sigma, size=visible.vectors.shape) if sigma > 0 else 0.0
    return EmbeddingSet(
        vectors=normalize(visible.vectors + noise),
        modality=Modality.INTERMEDIATE,
        ids=visible.ids,
    )
