"""Design artifacts: everything a simulator needs, in one versioned JSON file.

Arrays are stored as base64 of their little-endian bytes together with dtype
and shape, so floats (including the infinite outer quantizer boundaries)
survive a round trip bit for bit.  Every load re-validates the content and
names the first invariant that fails.
"""
from __future__ import annotations

import base64
import json
import os
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .decode import Decoder, FactorGraph
from .errors import ArtifactError, InvariantError, SchemaVersionError
from .factorize import Ccre
from .gauss_model import CovarianceModel
from .index_assign import IndexAssignment
from .quantizer import ScalarQuantizer

SCHEMA_VERSION = 1
PMF_TOL = 1e-9


@dataclass(eq=False)
class DesignArtifact:
    kind: str  # "field" or "ceo"
    config: dict
    covariance: np.ndarray
    quantizers: dict  # source -> ScalarQuantizer
    assignments: dict  # source -> IndexAssignment (encoders only)
    clusters: list  # tuples of source ids
    ccre: Ccre
    factor_tables: list  # per factor, axes in sorted scope order
    targets: tuple
    merges: list = field(default_factory=list)  # dendrogram history
    summary: dict = field(default_factory=dict)
    provenance: dict = field(default_factory=dict)
    schema_version: int = SCHEMA_VERSION

    @property
    def model(self) -> CovarianceModel:
        return CovarianceModel(self.covariance, kind=self.kind)

    @property
    def n_sources(self) -> int:
        return self.covariance.shape[0]

    @property
    def encoders(self) -> list:
        return sorted(self.assignments)

    def factor_graph(self) -> FactorGraph:
        alphabet = {s: q.L for s, q in self.quantizers.items()}
        return FactorGraph(alphabet, list(zip(self.ccre.scopes, self.factor_tables)))

    def decoder(self, chunk: int = 1024) -> Decoder:
        return Decoder(self.factor_graph(), dict(self.quantizers), dict(self.assignments), tuple(self.targets),
                       chunk=chunk)

    def encode(self, u: np.ndarray) -> dict:
        """Codewords ``{encoder: (B,)}`` for source samples ``u`` of shape ``(B, N)``."""
        return {n: self.assignments[n].map[self.quantizers[n].quantize(u[:, n])] for n in self.encoders}

    def validate(self) -> None:
        _validate(self)

    def __eq__(self, other):
        if not isinstance(other, DesignArtifact):
            return NotImplemented
        return _to_json(self) == _to_json(other)

    __hash__ = None


def _enc(a) -> dict:
    a = np.ascontiguousarray(a)
    dt = a.dtype.newbyteorder("<")
    return {"dtype": dt.str, "shape": list(a.shape), "data": base64.b64encode(a.astype(dt).tobytes()).decode()}


def _dec(d) -> np.ndarray:
    try:
        raw = base64.b64decode(d["data"], validate=True)
        return np.frombuffer(raw, dtype=np.dtype(d["dtype"])).reshape(d["shape"]).copy()
    except (KeyError, TypeError, ValueError) as exc:
        raise ArtifactError(f"malformed array record: {exc}") from None


def _to_dict(art: DesignArtifact) -> dict:
    return {
        "schema_version": art.schema_version,
        "kind": art.kind,
        "config": art.config,
        "covariance": _enc(art.covariance),
        "quantizers": {
            str(s): {"levels": _enc(q.levels), "boundaries": _enc(q.boundaries), "mean": q.mean,
                     "variance": q.variance}
            for s, q in sorted(art.quantizers.items())
        },
        "assignments": {str(s): _enc(a.map) for s, a in sorted(art.assignments.items())},
        "clusters": [list(c) for c in art.clusters],
        "factors": [
            {"A": list(a), "B": list(b), "table": _enc(t)}
            for (a, b), t in zip(art.ccre.factors, art.factor_tables)
        ],
        "targets": list(art.targets),
        "merges": [list(m) for m in art.merges],
        "summary": art.summary,
        "provenance": art.provenance,
    }


def _to_json(art: DesignArtifact) -> str:
    return json.dumps(_to_dict(art), sort_keys=True, indent=1, allow_nan=False) + "\n"


def _from_dict(d: dict) -> DesignArtifact:
    if not isinstance(d, dict):
        raise ArtifactError("artifact root must be an object")
    version = d.get("schema_version")
    if version != SCHEMA_VERSION:
        raise SchemaVersionError(f"schema_version {version!r} not supported (expected {SCHEMA_VERSION})")
    try:
        quantizers = {}
        for s, q in d["quantizers"].items():
            try:
                quantizers[int(s)] = ScalarQuantizer(_dec(q["levels"]), _dec(q["boundaries"]),
                                                     float(q["mean"]), float(q["variance"]))
            except ValueError as exc:
                raise InvariantError("quantizer-ordering", f"source {s}: {exc}") from None
        assignments = {int(s): IndexAssignment(_dec(m)) for s, m in d["assignments"].items()}
        factors = d["factors"]
        art = DesignArtifact(
            kind=d["kind"],
            config=d["config"],
            covariance=_dec(d["covariance"]),
            quantizers=quantizers,
            assignments=assignments,
            clusters=[tuple(int(s) for s in c) for c in d["clusters"]],
            ccre=Ccre([(f["A"], f["B"]) for f in factors]),
            factor_tables=[_dec(f["table"]) for f in factors],
            targets=tuple(int(t) for t in d["targets"]),
            merges=[tuple(m) for m in d.get("merges", [])],
            summary=d.get("summary", {}),
            provenance=d.get("provenance", {}),
            schema_version=version,
        )
    except (KeyError, TypeError) as exc:
        raise ArtifactError(f"missing or malformed field: {exc}") from None
    return art


def _validate(art: DesignArtifact) -> None:
    R = np.asarray(art.covariance)
    if R.ndim != 2 or R.shape[0] != R.shape[1] or not np.all(np.isfinite(R)):
        raise InvariantError("covariance-shape")
    if not np.array_equal(R, R.T):
        raise InvariantError("covariance-symmetric")
    N = R.shape[0]
    if sorted(art.quantizers) != list(range(N)):
        raise InvariantError("quantizer-coverage", "need one quantizer per source")
    for n, a in art.assignments.items():
        if n not in art.quantizers:
            raise InvariantError("assignment-source", f"source {n} has no quantizer")
        if a.L != art.quantizers[n].L:
            raise InvariantError("assignment-alphabet", f"source {n}: {a.L} vs {art.quantizers[n].L} levels")
        if not a.is_surjective():
            raise InvariantError("assignment-surjective", f"source {n}: {a.map.tolist()}")
        if a.max_preimage() > a.L - a.K + 1:
            raise InvariantError("assignment-preimage-bound", f"source {n}")
    seen = sorted(s for c in art.clusters for s in c)
    encoders = sorted(art.assignments)
    if seen != encoders:
        raise InvariantError("cluster-partition", "clusters must partition the encoders")
    bad = art.ccre.violations(N)
    if bad:
        raise InvariantError("ccre-conditions", bad[0])
    if len(art.factor_tables) != len(art.ccre):
        raise InvariantError("factor-count")
    for m, ((a, b), t) in enumerate(zip(art.ccre.factors, art.factor_tables)):
        scope = sorted(a + b)
        if t.shape != tuple(art.quantizers[s].L for s in scope):
            raise InvariantError("factor-shape", f"factor {m}")
        if not np.all(np.isfinite(t)) or np.any(t < 0):
            raise InvariantError("pmf-nonnegative", f"factor {m}")
        sums = t.sum(axis=tuple(k for k, s in enumerate(scope) if s in a))
        if np.max(np.abs(sums - 1.0)) > PMF_TOL:
            raise InvariantError("pmf-normalization", f"factor {m} sums to {float(np.min(sums))!r}")
    for t in art.targets:
        if t not in art.quantizers:
            raise InvariantError("target-source", f"target {t}")


def provenance(seed: int) -> dict:
    """Seed and tool version; a creation time only when SOURCE_DATE_EPOCH is set."""
    out = {"seed": int(seed), "tool_version": __version__}
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    if epoch is not None:
        out["created"] = int(epoch)
    return out


def save(artifact: DesignArtifact, path) -> None:
    artifact.validate()
    text = _to_json(artifact)
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(text)
    os.replace(tmp, path)


def loads(text: str) -> DesignArtifact:
    try:
        d = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ArtifactError(f"cannot parse artifact: {exc}") from None
    art = _from_dict(d)
    art.validate()
    return art


def load(path) -> DesignArtifact:
    with open(path, encoding="utf-8") as fh:
        return loads(fh.read())
