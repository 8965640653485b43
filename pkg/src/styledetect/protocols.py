"""Evaluation protocols: single-target, multi-target, unknown-source,
paraphrase-attack sweep, and the episode-size sweep.

All protocol randomness (trial supports, paraphrase sampling, bootstrap
resamples) flows through seeds derived from (config seed, stable string
keys, indices), so reports are byte-identical across reruns and parallel
schedules.  Per-domain rows are macro-averaged into the overall row.
"""

from __future__ import annotations

import csv
import io
import json
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .corpus import Document, Episode, build_episodes
from .embedder import embed_episode, pool_vectors
from .errors import ProtocolError
from .metrics import bootstrap_se, pauc, roc_curve
from .rng import SplitMix64, derive_seed
from .scoring import ScoreRecord, cosine_score, prototype_score


@dataclass(frozen=True)
class EvalConfig:
    episode_size: int = 5
    max_fpr: float = 0.01
    trials: int = 1000
    bootstrap: int = 1000
    seed: int = 0
    scorer: str = "cosine"
    aggregation: str = "min"
    paraphrase_proportion: float = 0.0
    workers: int = 1

    def __post_init__(self):
        if self.episode_size < 1:
            raise ProtocolError("bad-config", "episode_size must be >= 1")
        if not 0.0 < self.max_fpr <= 1.0:
            raise ProtocolError("bad-config", "max_fpr must be in (0, 1]")
        if self.trials < 1:
            raise ProtocolError("bad-config", "trials must be >= 1")
        if self.scorer not in ("cosine", "prototype"):
            raise ProtocolError("bad-config", f"unknown scorer {self.scorer!r}")
        if self.aggregation not in ("min", "max"):
            raise ProtocolError("bad-config", f"unknown aggregation {self.aggregation!r}")
        if not 0.0 <= self.paraphrase_proportion <= 1.0:
            raise ProtocolError("bad-config", "paraphrase proportion must be in [0, 1]")
        if self.workers < 1:
            raise ProtocolError("bad-config", "workers must be >= 1")


@dataclass(frozen=True)
class ReportRow:
    domain: str
    model: str
    metric: str
    mean: float
    se: float
    n: int


@dataclass(frozen=True)
class EvalReport:
    protocol: str
    config: dict
    per_domain: tuple[ReportRow, ...]
    overall: tuple[ReportRow, ...]

    def to_dict(self) -> dict:
        return {
            "protocol": self.protocol,
            "config": self.config,
            "per_domain": [asdict(r) for r in self.per_domain],
            "overall": [asdict(r) for r in self.overall],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["domain", "model", "metric", "mean", "se", "n"])
        for row in list(self.per_domain) + list(self.overall):
            writer.writerow([row.domain, row.model, row.metric, repr(row.mean), repr(row.se), row.n])
        return buf.getvalue()


@dataclass(frozen=True)
class EmbeddedEpisode:
    id: str
    author: str
    kind: str
    model: str
    domain: str
    vector: np.ndarray = field(repr=False)


def _episode_vector(ep: Episode, embedder) -> np.ndarray:
    if hasattr(embedder, "episode_vector"):
        return embedder.episode_vector(ep)
    return embed_episode(ep, embedder)


def _embed_all(episodes: list[Episode], embedder) -> list[EmbeddedEpisode]:
    out = []
    for ep in episodes:
        out.append(
            EmbeddedEpisode(
                id=ep.id,
                author=ep.author,
                kind=ep.source.kind,
                model=ep.source.model_name,
                domain=ep.domain,
                vector=_episode_vector(ep, embedder),
            )
        )
    return out


def _score(cfg: EvalConfig, support: np.ndarray, query: np.ndarray) -> float:
    if cfg.scorer == "prototype":
        return prototype_score([support], query)
    return cosine_score(support, query)


def _pauc_metric(cfg: EvalConfig):
    return lambda records: pauc(roc_curve(records), cfg.max_fpr)


def _macro_rows(rows: list[ReportRow], metric: str) -> ReportRow:
    """Overall row: mean of group means with independent-SE propagation."""
    means = [r.mean for r in rows]
    ses = [r.se for r in rows]
    return ReportRow(
        domain="overall",
        model="all",
        metric=metric,
        mean=float(np.mean(means)),
        se=float(math.sqrt(sum(s * s for s in ses)) / len(rows)),
        n=sum(r.n for r in rows),
    )


def _config_echo(cfg: EvalConfig, **extra) -> dict:
    out = asdict(cfg)
    # workers is an execution detail: parallel and serial schedules produce
    # byte-identical reports, so it does not belong in the experiment echo
    out.pop("workers", None)
    out.update(extra)
    return out


def _by_domain(embedded: list[EmbeddedEpisode]) -> dict[str, list[EmbeddedEpisode]]:
    domains: dict[str, list[EmbeddedEpisode]] = {}
    for ep in embedded:
        domains.setdefault(ep.domain, []).append(ep)
    return domains


def _single_target_rows(
    embedded: list[EmbeddedEpisode],
    cfg: EvalConfig,
    paraphrased: dict[str, np.ndarray] | None = None,
    proportion: float = 0.0,
    defended: bool = False,
    record_sink: list | None = None,
) -> list[ReportRow]:
    """Shared core of the single-target and paraphrase protocols.

    For each domain and machine model, every episode of that model serves as
    the support in turn; queries are the model's remaining episodes (label 1)
    and all human episodes in the domain (label 0).  With a paraphrase map, a
    seeded sample of `proportion` of the machine queries is swapped for its
    paraphrase; in defended mode each score is the min over the support and
    its paraphrase.
    """
    metric = _pauc_metric(cfg)
    rows: list[ReportRow] = []
    defended_rows: list[ReportRow] = []
    for domain in sorted(_by_domain(embedded)):
        members = [e for e in embedded if e.domain == domain]
        humans = [e for e in members if e.kind == "human"]
        if not humans:
            raise ProtocolError("no-humans", f"domain {domain!r} has no human episodes")
        models = sorted({e.model for e in members if e.kind == "machine"})
        for model in models:
            m_eps = [e for e in members if e.model == model]
            if len(m_eps) < 2:
                warnings.warn(f"model {model!r} in domain {domain!r} has one episode; skipped")
                continue
            point_paucs: list[float] = []
            ses: list[float] = []
            d_paucs: list[float] = []
            d_ses: list[float] = []
            for s_idx, support in enumerate(m_eps):
                machine_queries = [e for e in m_eps if e.id != support.id]
                swapped: set[str] = set()
                if paraphrased is not None and proportion > 0.0:
                    k = int(round(proportion * len(machine_queries)))
                    rng = SplitMix64(
                        derive_seed(
                            cfg.seed, "paraphrase", domain, model, s_idx,
                            int(round(proportion * 1_000_000)),
                        )
                    )
                    swapped = {machine_queries[i].id for i in rng.sample(len(machine_queries), k)}

                def query_vector(q: EmbeddedEpisode) -> np.ndarray:
                    if q.id in swapped:
                        if q.id not in paraphrased:
                            raise ProtocolError("missing-paraphrase", f"no paraphrase for episode {q.id!r}")
                        return paraphrased[q.id]
                    return q.vector

                records = [
                    ScoreRecord(q.id, _score(cfg, support.vector, query_vector(q)), 1, support.id)
                    for q in machine_queries
                ]
                records += [
                    ScoreRecord(h.id, _score(cfg, support.vector, h.vector), 0, support.id)
                    for h in humans
                ]
                point_paucs.append(metric(records))
                _, se = bootstrap_se(
                    records, metric, cfg.bootstrap, derive_seed(cfg.seed, "bootstrap", domain, model, s_idx)
                )
                ses.append(se)
                sink_entry = None
                if record_sink is not None:
                    sink_entry = {
                        "protocol": "single",
                        "domain": domain,
                        "model": model,
                        "support_id": support.id,
                        "records": records,
                    }
                    record_sink.append(sink_entry)
                if defended:
                    if paraphrased is None or support.id not in paraphrased:
                        raise ProtocolError(
                            "missing-paraphrase", f"no paraphrase for support episode {support.id!r}"
                        )
                    sp = paraphrased[support.id]
                    d_records = []
                    components = {}
                    for q in machine_queries + humans:
                        qv = query_vector(q) if q.kind == "machine" else q.vector
                        c1 = cosine_score(support.vector, qv)
                        c2 = cosine_score(sp, qv)
                        components[q.id] = (c1, c2)
                        d_records.append(
                            ScoreRecord(q.id, min(c1, c2), 1 if q.kind == "machine" else 0, support.id)
                        )
                    d_paucs.append(metric(d_records))
                    _, d_se = bootstrap_se(
                        d_records, metric, cfg.bootstrap,
                        derive_seed(cfg.seed, "bootstrap-defended", domain, model, s_idx),
                    )
                    d_ses.append(d_se)
                    if sink_entry is not None:
                        sink_entry["defended_records"] = d_records
                        sink_entry["defended_components"] = components
            if point_paucs:
                rows.append(
                    ReportRow(
                        domain, model, "pauc",
                        float(np.mean(point_paucs)),
                        float(math.sqrt(sum(s * s for s in ses)) / len(ses)),
                        len(point_paucs),
                    )
                )
            if d_paucs:
                defended_rows.append(
                    ReportRow(
                        domain, model, "pauc_defended",
                        float(np.mean(d_paucs)),
                        float(math.sqrt(sum(s * s for s in d_ses)) / len(d_ses)),
                        len(d_paucs),
                    )
                )
    if not rows:
        raise ProtocolError("no-evaluable-models", "every model was skipped (needs >= 2 episodes)")
    return rows + defended_rows


def single_target_eval(
    episodes: list[Episode], embedder, cfg: EvalConfig, record_sink: list | None = None
) -> EvalReport:
    """Each machine episode serves as the support for its own model in turn."""
    embedded = _embed_all(episodes, embedder)
    rows = _single_target_rows(embedded, cfg, record_sink=record_sink)
    return EvalReport(
        protocol="single",
        config=_config_echo(cfg),
        per_domain=tuple(rows),
        overall=(_macro_rows(rows, "pauc"),),
    )


def _trial_rows(
    protocol: str,
    domains: list[str],
    trial_fn,
    cfg: EvalConfig,
) -> list[ReportRow]:
    """Run per-domain trials (possibly in parallel) and reduce in index order."""
    rows = []
    for domain in domains:
        if cfg.workers > 1:
            with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
                paucs = list(pool.map(lambda t: trial_fn(domain, t), range(cfg.trials)))
        else:
            paucs = [trial_fn(domain, t) for t in range(cfg.trials)]
        arr = np.asarray(paucs, dtype=np.float64)
        se = float(arr.std(ddof=1) / math.sqrt(len(arr))) if len(arr) > 1 else 0.0
        rows.append(ReportRow(domain, "all", "pauc", float(arr.mean()), se, len(arr)))
    return rows


def multi_target_eval(
    episodes: list[Episode], embedder, cfg: EvalConfig, record_sink: list | None = None
) -> EvalReport:
    """Detect any of several models given one random support per model.

    Per domain and trial, one support episode is drawn for every machine
    model; each remaining episode is scored by the aggregated (default min)
    cosine against all supports, labeled machine vs human.
    """
    embedded = _embed_all(episodes, embedder)
    by_domain = _by_domain(embedded)
    metric = _pauc_metric(cfg)

    def trial(domain: str, t: int) -> float:
        members = by_domain[domain]
        models = sorted({e.model for e in members if e.kind == "machine"})
        if not models:
            raise ProtocolError("no-machines", f"domain {domain!r} has no machine episodes")
        if not any(e.kind == "human" for e in members):
            raise ProtocolError("no-humans", f"domain {domain!r} has no human episodes")
        rng = SplitMix64(derive_seed(cfg.seed, "multi", domain, t))
        supports = {}
        for model in models:
            m_eps = [e for e in members if e.model == model]
            supports[model] = m_eps[rng.randbelow(len(m_eps))]
        support_ids = {s.id for s in supports.values()}
        support_vecs = [supports[m].vector for m in models]
        records = []
        per_support: dict[str, list[float]] = {}
        for q in members:
            if q.id in support_ids:
                continue
            scores = [cosine_score(v, q.vector) for v in support_vecs]
            per_support[q.id] = scores
            agg = min(scores) if cfg.aggregation == "min" else max(scores)
            records.append(ScoreRecord(q.id, agg, 1 if q.kind == "machine" else 0, f"trial:{t}"))
        if record_sink is not None:
            record_sink.append(
                {
                    "protocol": "multi",
                    "domain": domain,
                    "trial": t,
                    "supports": {m: supports[m].id for m in models},
                    "per_support_scores": per_support,
                    "records": records,
                }
            )
        return metric(records)

    rows = _trial_rows("multi", sorted(by_domain), trial, cfg)
    return EvalReport(
        protocol="multi",
        config=_config_echo(cfg),
        per_domain=tuple(rows),
        overall=(_macro_rows(rows, "pauc"),),
    )


def unknown_llm_eval(
    documents: list[Document], embedder, cfg: EvalConfig, record_sink: list | None = None
) -> EvalReport:
    """Support = N machine documents sampled without model attribution.

    Per domain and trial: N machine documents (possibly from several models)
    are pooled into one support embedding; the remaining documents are
    partitioned into single-source episodes and scored by cosine.
    """
    n = cfg.episode_size
    doc_vectors = {d.id: embedder.embed_document(d) for d in documents}
    by_domain: dict[str, list[Document]] = {}
    for d in documents:
        by_domain.setdefault(d.domain, []).append(d)
    metric = _pauc_metric(cfg)
    for domain, members in by_domain.items():
        if sum(1 for d in members if d.source.kind == "machine") < n:
            raise ProtocolError(
                "insufficient-machine-docs", f"domain {domain!r} has fewer than {n} machine documents"
            )

    def trial(domain: str, t: int) -> float:
        members = by_domain[domain]
        machine_docs = [d for d in members if d.source.kind == "machine"]
        rng = SplitMix64(derive_seed(cfg.seed, "unknown", domain, t))
        support_idx = sorted(rng.sample(len(machine_docs), n))
        support_docs = [machine_docs[i] for i in support_idx]
        support_ids = {d.id for d in support_docs}
        support_vec = pool_vectors([doc_vectors[d.id] for d in support_docs])
        remaining = [d for d in members if d.id not in support_ids]
        queries = build_episodes(remaining, n, derive_seed(cfg.seed, "unknown-episodes", domain, t))
        if not queries:
            raise ProtocolError("insufficient-docs", f"domain {domain!r} yields no query episodes")
        records = []
        for q in queries:
            q_vec = pool_vectors([doc_vectors[d.id] for d in q.documents])
            records.append(
                ScoreRecord(
                    q.id, cosine_score(support_vec, q_vec),
                    1 if q.source.kind == "machine" else 0, f"trial:{t}",
                )
            )
        if record_sink is not None:
            record_sink.append(
                {
                    "protocol": "unknown",
                    "domain": domain,
                    "trial": t,
                    "support_doc_ids": sorted(support_ids),
                    "records": records,
                }
            )
        return metric(records)

    rows = _trial_rows("unknown", sorted(by_domain), trial, cfg)
    return EvalReport(
        protocol="unknown",
        config=_config_echo(cfg),
        per_domain=tuple(rows),
        overall=(_macro_rows(rows, "pauc"),),
    )


def paraphrase_eval(
    episodes: list[Episode],
    paraphrase_map: dict[str, Episode],
    embedder,
    cfg: EvalConfig,
    proportions: list[float] | None = None,
    include_defended: bool = True,
    record_sink: list | None = None,
) -> list[tuple[float, EvalReport]]:
    """Single-target evaluation under a paraphrasing adversary.

    For each proportion p, a seeded sample of p of each support's machine
    queries is replaced by its paraphrased episode.  Undefended rows score
    against the support alone; defended rows take the min over the support
    and its own paraphrase.  At p = 0 the undefended rows coincide with
    single_target_eval exactly.
    """
    if proportions is None:
        proportions = [cfg.paraphrase_proportion]
    embedded = _embed_all(episodes, embedder)
    paraphrased = {qid: embed_episode(ep, embedder) for qid, ep in paraphrase_map.items()}
    out = []
    for p in proportions:
        if not 0.0 <= p <= 1.0:
            raise ProtocolError("bad-config", f"paraphrase proportion {p} outside [0, 1]")
        rows = _single_target_rows(
            embedded, cfg,
            paraphrased=paraphrased, proportion=p,
            defended=include_defended, record_sink=record_sink,
        )
        plain = [r for r in rows if r.metric == "pauc"]
        defended = [r for r in rows if r.metric == "pauc_defended"]
        overall = [_macro_rows(plain, "pauc")]
        if defended:
            overall.append(_macro_rows(defended, "pauc_defended"))
        out.append(
            (
                p,
                EvalReport(
                    protocol="paraphrase",
                    config=_config_echo(cfg, paraphrase_proportion=p),
                    per_domain=tuple(rows),
                    overall=tuple(overall),
                ),
            )
        )
    return out


def sweep_N(
    episodes: list[Episode],
    embedder,
    cfg: EvalConfig,
    n_values: list[int],
    protocol: str = "single",
) -> list[tuple[int, EvalReport]]:
    """Re-partition the underlying documents per N and rerun the protocol."""
    docs = [d for ep in episodes for d in ep.documents]
    out = []
    for n in n_values:
        eps_n = build_episodes(docs, n, derive_seed(cfg.seed, "sweep", n))
        cfg_n = replace(cfg, episode_size=n)
        if protocol == "single":
            report = single_target_eval(eps_n, embedder, cfg_n)
        elif protocol == "multi":
            report = multi_target_eval(eps_n, embedder, cfg_n)
        else:
            raise ProtocolError("bad-config", f"sweep cannot run protocol {protocol!r}")
        out.append((n, report))
    return out
