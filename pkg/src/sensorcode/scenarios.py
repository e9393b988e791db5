"""End-to-end experiments: randomly placed sensor fields and the Gaussian CEO setting.

A run designs one coding system per mode and measures its output SNR on
fresh samples.  ``Dec`` quantizes every source at ``2**R`` levels and relies
on the decoder alone; ``IR`` quantizes at a higher resolution ``L`` and
reuses indices down to ``K = 2**R`` codewords, keeping the best ``L``.

Random streams under the master seed: 1 places sensors, 2 drives the
design-time PMF estimates, 3 draws evaluation samples.
"""
from __future__ import annotations

import dataclasses
import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .artifact_store import DesignArtifact, provenance
from .cluster import build_dendrogram, prune
from .errors import ConfigError
from .factorize import Ccre, factorize
from .gauss_model import (
    CovarianceModel, build_ceo_model, build_field_model, make_rng, place_sensors, sample_batches,
)
from .index_assign import IndexAssignment, distortion_dq, optimize_index_reuse
from .pmf import (
    MAX_CELLS, conditional_table, estimate_joint_pmfs, estimate_pooled_pair_pmf, marginalize, star_joint,
)
from .quantizer import design_lloyd_max

log = logging.getLogger(__name__)

PLACEMENT_STREAM, DESIGN_STREAM, EVAL_STREAM = 1, 2, 3
MSE_FLOOR = 1e-12

# Reference SNR values (dB), rows indexed by R = 1..4.
TABLE1 = {
    0.5: {"dec": (4.44, 9.46, 14.61, 20.32), "ir": (11.07, 14.86, 18.29, None)},
    2.0: {"dec": (4.45, 9.32, 14.65, 20.27), "ir": (7.54, 11.72, 16.21, None)},
}
TABLE2 = {
    0.1: {"rd": (28.66, 29.70, 29.93, 29.99), "dec": (9.67, 19.37, 26.21, 28.48), "ir": (22.71, 26.70, 28.21, None)},
    0.5: {"rd": (21.72, 22.74, 22.96, 23.01), "dec": (15.25, 20.84, 22.49, 22.74), "ir": (18.76, 21.56, "N.B.", None)},
}


@dataclass
class ExperimentConfig:
    kind: str = "field"  # "field" or "ceo"
    n: int = 100
    beta: float = 0.5
    sigma0_sq: float = 1.0
    lambda_sq: float = 0.1
    rate: int = 1
    resolutions: tuple = (4, 8, 16)
    S: int = 4
    A: int = 1
    B: int = 1
    pmf_samples: int = 1_000_000
    eval_samples: int = 10_000
    seed: int = 0
    hub_levels: int = 64
    max_cells: int = MAX_CELLS

    def __post_init__(self):
        self.resolutions = tuple(int(L) for L in self.resolutions)

    @property
    def K(self) -> int:
        return 2 ** self.rate

    def ir_candidates(self) -> list:
        """Resolutions above ``2**R``; at ``L = 2**R`` index reuse degenerates to Dec."""
        return sorted(L for L in set(self.resolutions) if L > self.K)

    def validate(self) -> "ExperimentConfig":
        for name in ("n", "rate", "S", "A", "B", "pmf_samples", "eval_samples", "seed", "hub_levels", "max_cells"):
            v = getattr(self, name)
            if isinstance(v, bool) or not isinstance(v, (int, np.integer)):
                raise ConfigError(f"{name} must be an integer, got {v!r}")
        for name in ("beta", "sigma0_sq", "lambda_sq"):
            v = getattr(self, name)
            if isinstance(v, bool) or not isinstance(v, (int, float)):
                raise ConfigError(f"{name} must be a number, got {v!r}")
        if self.kind not in ("field", "ceo"):
            raise ConfigError(f"unknown scenario kind {self.kind!r}")
        if self.n < 1:
            raise ConfigError("n must be at least 1")
        if self.rate < 1:
            raise ConfigError("rate must be at least 1 bit")
        if self.S < 1 or self.A < 1 or self.B < 1:
            raise ConfigError("S, A and B must be at least 1")
        if any(L < 2 for L in self.resolutions):
            raise ConfigError("resolutions must be at least 2")
        if self.pmf_samples < 1 or self.eval_samples < 0:
            raise ConfigError("sample counts must be positive")
        if self.kind == "field" and not (math.isfinite(self.beta) and self.beta >= 0):
            raise ConfigError("beta must be finite and non-negative")
        if self.kind == "ceo" and not (self.sigma0_sq > 0 and self.lambda_sq > 0):
            raise ConfigError("CEO variances must be positive")
        if self.hub_levels < 1:
            raise ConfigError("hub_levels must be positive")
        return self

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["resolutions"] = list(self.resolutions)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            return cls(**d).validate()
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(str(exc)) from None


def snr(u, uhat) -> float:
    """``10 log10(sum u^2 / max(sum (u - uhat)^2, 1e-12))`` in dB."""
    u = np.asarray(u, dtype=float)
    uhat = np.asarray(uhat, dtype=float)
    if u.shape != uhat.shape:
        raise ValueError(f"shape mismatch {u.shape} vs {uhat.shape}")
    if u.size == 0:
        raise ValueError("empty batch")
    err = float(np.sum((u - uhat) ** 2))
    return 10.0 * math.log10(float(np.sum(u * u)) / max(err, MSE_FLOOR))


# -- field scenario ---------------------------------------------------------

@dataclass
class FieldSetup:
    """Mode-independent part of a field design: placement, clusters, factorization."""

    positions: np.ndarray
    model: CovarianceModel
    dendrogram: object
    plan: object
    factorization: object


def field_setup(config: ExperimentConfig) -> FieldSetup:
    pos = place_sensors(config.n, make_rng(config.seed, PLACEMENT_STREAM))
    model = build_field_model(pos, config.beta)
    dg = build_dendrogram(model)
    plan = prune(dg, config.S)
    fac = factorize(model, plan, config.A, config.B)
    return FieldSetup(pos, model, dg, plan, fac)


def design_field(config: ExperimentConfig, L: int | None = None, setup: FieldSetup | None = None) -> DesignArtifact:
    """Field design; ``L=None`` is Dec mode, otherwise IR from ``L`` levels to ``2**R`` codewords."""
    setup = setup or field_setup(config)
    K = config.K
    model, plan, ccre = setup.model, setup.plan, setup.factorization.ccre
    multi = [c for c in plan.clusters if len(c) > 1] if L is not None else []
    in_multi = {s for c in multi for s in c}
    quantizers = {s: design_lloyd_max(0.0, model.variance(s), L if s in in_multi else K) for s in range(config.n)}

    scopes = list(ccre.scopes) + [tuple(c) for c in multi]
    pmfs = estimate_joint_pmfs(model, quantizers, scopes, config.pmf_samples, config.seed,
                               stream=DESIGN_STREAM, max_cells=config.max_cells)
    factor_pmfs, cluster_pmfs = pmfs[: len(ccre)], pmfs[len(ccre):]

    assignments = {s: IndexAssignment.identity(K) for s in range(config.n) if s not in in_multi}
    clusters_info = []
    for c, pmf in zip(multi, cluster_pmfs):
        des = optimize_index_reuse(pmf, quantizers, c, c, L, K)
        assignments.update(des.assignments)
        dq = distortion_dq(quantizers, c)
        dd = des.distortion_dd()
        clusters_info.append({"members": list(c), "L": L, "K": K, "d_q": dq, "d_d": dd, "d": dq + dd})

    tables = [conditional_table(p, a, b).table for p, (a, b) in zip(factor_pmfs, ccre.factors)]
    summary = {
        "mode": "dec" if L is None else "ir",
        "L": L if L is not None else K,
        "K": K,
        "cluster_sizes": [len(c) for c in plan.clusters],
        "cluster_kld_bits": plan.kld_bits,
        "kld_bits": setup.factorization.kld_bits,
        "root": setup.factorization.root,
        "designs": clusters_info,
        "positions": setup.positions.tolist(),
    }
    return DesignArtifact(
        kind="field", config=config.to_dict(), covariance=model.matrix.copy(), quantizers=quantizers,
        assignments=assignments, clusters=list(plan.clusters), ccre=ccre, factor_tables=tables,
        targets=tuple(range(config.n)), merges=[tuple(m) for m in setup.dendrogram.merges],
        summary=summary, provenance=provenance(config.seed),
    )


# -- CEO scenario -----------------------------------------------------------

def ceo_clusters(n: int, S: int) -> list:
    """Encoders ``1..n`` in consecutive groups of ``S``; the last group may be smaller."""
    return [tuple(range(lo, min(n, lo + S - 1) + 1)) for lo in range(1, n + 1, S)]


def design_ceo(config: ExperimentConfig, L: int | None = None) -> DesignArtifact:
    """CEO design on the star factorization; IR is designed once per cluster size and replicated."""
    K = config.K
    Lq = K if L is None else L
    model = build_ceo_model(config.n, config.sigma0_sq, config.lambda_sq)
    q0 = design_lloyd_max(0.0, config.sigma0_sq, config.hub_levels)
    qn = design_lloyd_max(0.0, config.sigma0_sq + config.lambda_sq, Lq)
    S = min(config.S, config.n)
    small = build_ceo_model(S, config.sigma0_sq, config.lambda_sq)
    pair = estimate_pooled_pair_pmf(small, q0, qn, 0, list(range(1, S + 1)), config.pmf_samples, config.seed,
                                    stream=DESIGN_STREAM)
    hub = marginalize(pair, [0]).table
    cond = conditional_table(pair, [1], [0]).table  # (|I0|, Lq)

    clusters = ceo_clusters(config.n, S)
    quantizers = {0: q0, **{s: qn for s in range(1, config.n + 1)}}
    assignments = {}
    designs = {}
    for c in clusters:
        size = len(c)
        if L is None:
            maps = [IndexAssignment.identity(K)] * size
        else:
            if size not in designs:
                scope = tuple(range(size + 1))
                joint = star_joint(hub, [cond] * size, scope, max_cells=config.max_cells)
                des = optimize_index_reuse(joint, {s: quantizers[s] for s in scope}, scope[1:], (0,), L, K)
                designs[size] = des
            des = designs[size]
            maps = [des.assignments[k] for k in range(1, size + 1)]
        assignments.update(zip(c, maps))

    factors = [((0,), ())] + [((s,), (0,)) for s in range(1, config.n + 1)]
    tables = [hub] + [cond] * config.n
    summary = {
        "mode": "dec" if L is None else "ir",
        "L": Lq,
        "K": K,
        "cluster_sizes": [len(c) for c in clusters],
        "designs": [
            {"size": size, "d_d": des.distortion_dd(), "maps": [des.assignments[k].map.tolist()
                                                                for k in range(1, size + 1)]}
            for size, des in sorted(designs.items())
        ],
    }
    return DesignArtifact(
        kind="ceo", config=config.to_dict(), covariance=model.matrix.copy(), quantizers=quantizers,
        assignments=assignments, clusters=clusters, ccre=Ccre(factors), factor_tables=tables,
        targets=(0,), summary=summary, provenance=provenance(config.seed),
    )


def design(config: ExperimentConfig, L: int | None = None, setup: FieldSetup | None = None) -> DesignArtifact:
    config.validate()
    if config.kind == "field":
        return design_field(config, L, setup)
    return design_ceo(config, L)


# -- simulation -------------------------------------------------------------

@dataclass
class SimulationResult:
    snr_db: float | None
    mse: float | None
    n_vectors: int
    fallbacks: int
    signal_energy: float = 0.0
    error_energy: float = 0.0


def simulate(artifact: DesignArtifact, n_vectors: int, seed: int, batch_size: int = 10_000) -> SimulationResult:
    """Encode and decode ``n_vectors`` fresh source vectors; SNR over all target samples."""
    if n_vectors < 0:
        raise ValueError("n_vectors must be non-negative")
    if n_vectors == 0:
        return SimulationResult(None, None, 0, 0)
    model = artifact.model
    dec = artifact.decoder()
    targets = list(artifact.targets)
    sig = err = 0.0
    for u in sample_batches(model, seed, n_vectors, batch_size, EVAL_STREAM):
        uhat = dec.decode(artifact.encode(u))
        ut = u[:, targets]
        sig += float(np.sum(ut * ut))
        err += float(np.sum((ut - uhat) ** 2))
    count = n_vectors * len(targets)
    snr_db = 10.0 * math.log10(sig / max(err, MSE_FLOOR))
    return SimulationResult(snr_db, err / count, n_vectors, dec.stats.fallbacks, sig, err)


# -- experiments ------------------------------------------------------------

@dataclass
class ExperimentReport:
    config: dict
    dec_snr: float | None = None
    ir_snr: dict = field(default_factory=dict)  # L -> SNR dB
    best_L: int | None = None
    status: str = ""  # "", "N.A." or "N.B."
    fallbacks: int = 0
    wall_clock: float = 0.0
    summaries: dict = field(default_factory=dict)

    @property
    def best_ir_snr(self) -> float | None:
        return self.ir_snr[self.best_L] if self.best_L is not None else None

    @property
    def gain(self) -> float | None:
        if self.dec_snr is None or self.best_L is None:
            return None
        return self.best_ir_snr - self.dec_snr

    def ir_cell(self) -> str:
        if self.status == "N.A.":
            return "N.A."
        if self.best_L is None:
            return "-"
        cell = f"{self.best_ir_snr:.2f}"
        return f"{cell} (N.B.)" if self.status == "N.B." else cell

    def rows(self) -> list:
        """CSV rows ``(mode, R, L, SNR_dB, seed)``; wall-clock stays out for byte-stable output."""
        R, seed = self.config["rate"], self.config["seed"]
        out = []
        if self.dec_snr is not None:
            out.append(("dec", R, 2 ** R, f"{self.dec_snr:.6f}", seed))
        for L, v in sorted(self.ir_snr.items()):
            out.append(("ir", R, L, f"{v:.6f}", seed))
        return out


def run_experiment(config: ExperimentConfig, modes=("dec", "ir")) -> ExperimentReport:
    """Design and evaluate the requested modes; the IR entry is the best candidate ``L``."""
    config.validate()
    t0 = time.perf_counter()
    rep = ExperimentReport(config.to_dict())
    setup = field_setup(config) if config.kind == "field" else None
    if "dec" in modes:
        art = design(config, None, setup)
        res = simulate(art, config.eval_samples, config.seed)
        rep.dec_snr = res.snr_db
        rep.fallbacks += res.fallbacks
        rep.summaries["dec"] = art.summary
    if "ir" in modes:
        cands = config.ir_candidates()
        if not cands:
            rep.status = "N.A."
        for L in cands:
            art = design(config, L, setup)
            res = simulate(art, config.eval_samples, config.seed)
            rep.ir_snr[L] = res.snr_db
            rep.fallbacks += res.fallbacks
            rep.summaries[f"ir{L}"] = art.summary
            log.info("%s R=%d L=%d: %.2f dB", config.kind, config.rate, L, res.snr_db)
        if rep.ir_snr:
            rep.best_L = max(rep.ir_snr, key=lambda L: (rep.ir_snr[L], -L))
            if rep.dec_snr is not None and rep.best_ir_snr <= rep.dec_snr:
                rep.status = "N.B."
    rep.wall_clock = time.perf_counter() - t0
    return rep


def run_field_experiment(config: ExperimentConfig, modes=("dec", "ir")) -> ExperimentReport:
    if config.kind != "field":
        raise ConfigError("field experiment needs kind='field'")
    return run_experiment(config, modes)


def run_ceo_experiment(config: ExperimentConfig, modes=("dec", "ir")) -> ExperimentReport:
    if config.kind != "ceo":
        raise ConfigError("CEO experiment needs kind='ceo'")
    return run_experiment(config, modes)


def table_grid(which: str, base: ExperimentConfig | None = None) -> list:
    """Configs for every cell of the reference grids (both parameters, R = 1..4)."""
    if which == "table1":
        base = base or ExperimentConfig(kind="field")
        return [dataclasses.replace(base, kind="field", beta=b, rate=R) for b in TABLE1 for R in range(1, 5)]
    if which == "table2":
        base = base or ExperimentConfig(kind="ceo")
        return [dataclasses.replace(base, kind="ceo", lambda_sq=l, rate=R) for l in TABLE2 for R in range(1, 5)]
    raise ConfigError(f"unknown table {which!r}")
