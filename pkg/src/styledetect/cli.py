"""Command-line surface: prepare / embed / eval / detect.

Every run is reproducible: the seed is explicit in all emitted artifacts,
reports embed their full configuration, and rerunning with the same inputs
produces byte-identical output.  Values in a ``--config`` key=value file
override the corresponding flags.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys

from .corpus import (
    DEFAULT_ABBREVIATIONS,
    Document,
    Episode,
    SourceLabel,
    balance_corpus,
    build_episodes,
    ingest_corpus,
)
from .embedder import (
    BuiltinEmbedder,
    EmbeddingRecord,
    EpisodeStoreEmbedder,
    FeaturizerConfig,
    StoreEmbedder,
    embed_episode,
    import_external,
    pool_vectors,
    write_store,
)
from .errors import CorpusError, EngineError, ProtocolError, StoreError
from .protocols import (
    EvalConfig,
    EvalReport,
    multi_target_eval,
    paraphrase_eval,
    single_target_eval,
    sweep_N,
    unknown_llm_eval,
)
from .scoring import cosine_score
from .tokenize import TokenizerSpec
from .trainer import PlattCalibrator, apply_platt, load_head


def _tokenizer_from_args(args) -> TokenizerSpec:
    return TokenizerSpec(mode=args.tokenizer, vocab_path=args.vocab, merges_path=args.merges)


def _abbreviations_from_args(args) -> frozenset[str]:
    path = getattr(args, "abbreviations", None)
    if not path:
        return DEFAULT_ABBREVIATIONS
    try:
        with open(path, encoding="utf-8") as fh:
            return frozenset(w.strip().lower() for w in fh if w.strip())
    except OSError as exc:
        raise CorpusError("bad-config", f"cannot read abbreviation list: {exc}")


def _doc_to_json(doc: Document) -> dict:
    return {
        "id": doc.id,
        "text": doc.text,
        "author": doc.author,
        "label": doc.source.label(),
        "domain": doc.domain,
        "timestamp": doc.timestamp,
        "token_count": doc.token_count,
        "hard_cut": doc.hard_cut,
    }


def _doc_from_json(obj: dict) -> Document:
    return Document(
        id=obj["id"],
        text=obj["text"],
        author=obj["author"],
        source=SourceLabel.from_label(obj["label"]),
        domain=obj["domain"],
        timestamp=obj.get("timestamp"),
        token_count=obj.get("token_count", 0),
        hard_cut=obj.get("hard_cut", False),
    )


def write_manifest(episodes: list[Episode], config: dict, path: str) -> None:
    payload = {
        "config": config,
        "episodes": [
            {
                "id": ep.id,
                "author": ep.author,
                "label": ep.source.label(),
                "domain": ep.domain,
                "documents": [_doc_to_json(d) for d in ep.documents],
            }
            for ep in episodes
        ],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, sort_keys=True, indent=2)
        fh.write("\n")


def load_manifest(path: str) -> tuple[list[Episode], dict]:
    try:
        with open(path, encoding="utf-8") as fh:
            payload = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise CorpusError("bad-manifest", f"cannot read manifest {path}: {exc}")
    episodes = []
    for ep in payload.get("episodes", []):
        docs = tuple(_doc_from_json(d) for d in ep["documents"])
        episodes.append(
            Episode(
                id=ep["id"],
                documents=docs,
                author=ep["author"],
                source=SourceLabel.from_label(ep["label"]),
                domain=ep["domain"],
            )
        )
    return episodes, payload.get("config", {})


def load_paraphrase_map(path: str, episodes: list[Episode], max_tokens: int, tok: TokenizerSpec) -> dict[str, Episode]:
    """Line-delimited JSON {query_id, documents: [text, ...]} keyed by episode id."""
    by_id = {ep.id: ep for ep in episodes}
    out: dict[str, Episode] = {}
    try:
        fh = open(path, encoding="utf-8")
    except OSError as exc:
        raise CorpusError("bad-paraphrase-map", f"cannot read paraphrase map: {exc}")
    with fh:
        for lineno, raw in enumerate(fh, start=1):
            if not raw.strip():
                continue
            try:
                rec = json.loads(raw)
                qid = rec["query_id"]
                texts = rec["documents"]
            except (json.JSONDecodeError, KeyError, TypeError):
                raise CorpusError("bad-paraphrase-map", f"line {lineno}: expected {{query_id, documents}}")
            original = by_id.get(qid)
            if original is None:
                raise CorpusError("bad-paraphrase-map", f"line {lineno}: unknown episode id {qid!r}")
            lines = [
                json.dumps(
                    {
                        "id": f"{qid}#para{i}",
                        "text": text,
                        "author": original.author,
                        "label": original.source.label(),
                        "domain": original.domain,
                    }
                )
                for i, text in enumerate(texts)
            ]
            docs = tuple(ingest_corpus(lines, max_tokens=max_tokens, tok=tok))
            out[qid] = Episode(
                id=qid, documents=docs, author=original.author,
                source=original.source, domain=original.domain,
            )
    return out


def _read_lines(path: str) -> list[str]:
    try:
        with open(path, encoding="utf-8") as fh:
            return fh.readlines()
    except OSError as exc:
        raise CorpusError("unreadable-input", f"cannot read {path}: {exc}")


def _apply_config_file(args: argparse.Namespace) -> None:
    """key=value pairs from --config override the parsed flags."""
    if not getattr(args, "config", None):
        return
    for lineno, raw in enumerate(_read_lines(args.config), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise CorpusError("bad-config", f"{args.config}:{lineno}: expected key=value")
        key, _, value = line.partition("=")
        key = key.strip().replace("-", "_")
        if not hasattr(args, key):
            raise CorpusError("bad-config", f"{args.config}:{lineno}: unknown key {key!r}")
        current = getattr(args, key)
        if isinstance(current, bool):
            setattr(args, key, value.strip().lower() in ("1", "true", "yes", "on"))
        elif isinstance(current, int):
            setattr(args, key, int(value))
        elif isinstance(current, float):
            setattr(args, key, float(value))
        else:
            setattr(args, key, value.strip())


def _build_embedder(args, episodes: list[Episode]):
    if getattr(args, "doc_store", None):
        records = import_external(args.doc_store)
        return StoreEmbedder(records)
    return BuiltinEmbedder(FeaturizerConfig(buckets=args.buckets))


def cmd_prepare(args) -> int:
    tok = _tokenizer_from_args(args)
    docs = ingest_corpus(
        _read_lines(args.corpus), max_tokens=args.max_tokens, tok=tok,
        abbreviations=_abbreviations_from_args(args),
    )
    if args.balance:
        docs = balance_corpus(docs, args.seed)
    episodes = build_episodes(docs, args.episode_size, args.seed)
    config = {
        "command": "prepare",
        "corpus": args.corpus,
        "max_tokens": args.max_tokens,
        "episode_size": args.episode_size,
        "seed": args.seed,
        "balance": args.balance,
        "tokenizer": {"mode": tok.mode, "vocab_path": tok.vocab_path, "merges_path": tok.merges_path},
    }
    write_manifest(episodes, config, args.out)
    print(f"wrote {len(episodes)} episodes ({sum(len(e.documents) for e in episodes)} documents) to {args.out}")
    return 0


def cmd_embed(args) -> int:
    episodes, _ = load_manifest(args.episodes)
    embedder = _build_embedder(args, episodes)
    records = [
        EmbeddingRecord(
            id=ep.id, author=ep.author, source=ep.source, domain=ep.domain,
            vector=embed_episode(ep, embedder),
        )
        for ep in episodes
    ]
    write_store(records, args.out, normalized=True, dim=embedder.dim)
    print(f"wrote {len(records)} episode embeddings (dim {embedder.dim}) to {args.out}")
    return 0


def _eval_config(args) -> EvalConfig:
    return EvalConfig(
        episode_size=args.episode_size,
        max_fpr=args.max_fpr,
        trials=args.trials,
        bootstrap=args.bootstrap,
        seed=args.seed,
        scorer=args.scorer,
        aggregation=args.aggregation,
        paraphrase_proportion=args.proportion,
        workers=args.workers,
    )


def _emit_report(
    report: EvalReport, fmt: str, out_path: str | None, suffix: str = "",
    run_context: dict | None = None,
) -> None:
    if run_context:
        report = dataclasses.replace(report, config={**report.config, **run_context})
    payload = report.to_json() if fmt == "json" else report.to_csv()
    if out_path:
        path = out_path if not suffix else _suffixed(out_path, suffix)
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(payload)
        print(f"wrote {report.protocol} report to {path}")
    else:
        sys.stdout.write(payload)


def _suffixed(path: str, suffix: str) -> str:
    if "." in path.rsplit("/", 1)[-1]:
        stem, _, ext = path.rpartition(".")
        return f"{stem}{suffix}.{ext}"
    return f"{path}{suffix}"


def cmd_eval(args) -> int:
    episodes, manifest_cfg = load_manifest(args.episodes)
    cfg = _eval_config(args)
    tok_cfg = manifest_cfg.get("tokenizer") or {}
    tok = TokenizerSpec(
        mode=tok_cfg.get("mode", "word"),
        vocab_path=tok_cfg.get("vocab_path"),
        merges_path=tok_cfg.get("merges_path"),
    )
    if getattr(args, "episode_store", None):
        if args.protocol in ("unknown", "sweep", "paraphrase"):
            raise ProtocolError(
                "bad-config", f"protocol {args.protocol!r} needs document-level embeddings"
            )
        embedder = EpisodeStoreEmbedder(import_external(args.episode_store))
    else:
        embedder = _build_embedder(args, episodes)
    return _dispatch_eval(args, episodes, embedder, cfg, tok)


def _dispatch_eval(args, episodes, embedder, cfg: EvalConfig, tok: TokenizerSpec) -> int:
    fmt = args.format
    # run context rides along in the config echo so a report names its exact
    # inputs; rerunning the embedded configuration reproduces it byte-for-byte
    run_context = {
        "command": "eval",
        "episodes": args.episodes,
        "protocol": args.protocol,
        "embedder": (
            f"doc-store:{args.doc_store}" if args.doc_store
            else f"episode-store:{args.episode_store}" if args.episode_store
            else f"builtin:buckets={args.buckets}"
        ),
    }
    if args.protocol == "single":
        _emit_report(single_target_eval(episodes, embedder, cfg), fmt, args.out,
                     run_context=run_context)
    elif args.protocol == "multi":
        _emit_report(multi_target_eval(episodes, embedder, cfg), fmt, args.out,
                     run_context=run_context)
    elif args.protocol == "unknown":
        docs = [d for ep in episodes for d in ep.documents]
        _emit_report(unknown_llm_eval(docs, embedder, cfg), fmt, args.out,
                     run_context=run_context)
    elif args.protocol == "paraphrase":
        if not args.paraphrase_map:
            raise ProtocolError("bad-config", "paraphrase protocol needs --paraphrase-map")
        pmap = load_paraphrase_map(args.paraphrase_map, episodes, args.max_tokens, tok)
        proportions = [float(x) for x in args.proportions.split(",")] if args.proportions else None
        results = paraphrase_eval(
            episodes, pmap, embedder, cfg,
            proportions=proportions, include_defended=not args.no_defended,
        )
        context = {**run_context, "paraphrase_map": args.paraphrase_map}
        for p, report in results:
            _emit_report(report, fmt, args.out, suffix=f"-p{p:g}", run_context=context)
    elif args.protocol == "sweep":
        n_values = [int(x) for x in args.sweep_n.split(",")]
        for n, report in sweep_N(episodes, embedder, cfg, n_values):
            _emit_report(report, fmt, args.out, suffix=f"-N{n}", run_context=run_context)
    else:
        raise ProtocolError("bad-config", f"unknown protocol {args.protocol!r}")
    return 0


def _read_detect_docs(
    path: str, role: str, max_tokens: int, tok: TokenizerSpec,
    abbreviations: frozenset[str] = DEFAULT_ABBREVIATIONS,
) -> list[Document]:
    docs = []
    seen = set()
    for lineno, raw in enumerate(_read_lines(path), start=1):
        if not raw.strip():
            continue
        try:
            rec = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise CorpusError("malformed-record", f"{path}:{lineno}: invalid JSON ({exc.msg})")
        if "text" not in rec:
            raise CorpusError("malformed-record", f"{path}:{lineno}: missing field 'text'")
        doc_id = str(rec.get("id", f"{role}-{lineno}"))
        if doc_id in seen:
            raise CorpusError("duplicate-id", f"duplicate document id {doc_id!r}")
        seen.add(doc_id)
        line = json.dumps(
            {
                "id": doc_id,
                "text": rec["text"],
                "author": rec.get("author", role),
                "label": rec.get("label", "target" if role == "support" else "human"),
                "domain": rec.get("domain", "detect"),
            }
        )
        docs.extend(ingest_corpus([line], max_tokens=max_tokens, tok=tok,
                                  abbreviations=abbreviations))
    if not docs:
        raise CorpusError("empty-input", f"no documents in {path}")
    return docs


def cmd_detect(args) -> int:
    tok = _tokenizer_from_args(args)
    abbreviations = _abbreviations_from_args(args)
    support = _read_detect_docs(args.support, "support", args.max_tokens, tok, abbreviations)
    queries = _read_detect_docs(args.query, "query", args.max_tokens, tok, abbreviations)
    embedder = BuiltinEmbedder(FeaturizerConfig(buckets=args.buckets))
    support_vec = pool_vectors([embedder.embed_document(d) for d in support])
    calibrator = None
    if args.calibrator:
        head = load_head(args.calibrator)
        if not isinstance(head, PlattCalibrator):
            raise StoreError("bad-head", f"{args.calibrator} is not a calibrator")
        calibrator = head
    for doc in queries:
        score = cosine_score(support_vec, embedder.embed_document(doc))
        if calibrator is not None:
            prob = apply_platt(calibrator, score)
            print(f"{doc.id}\t{score:.6f}\t{prob:.6f}")
        else:
            print(f"{doc.id}\t{score:.6f}")
    return 0


def _add_tokenizer_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--tokenizer", choices=["word", "bpe"], default="word")
    p.add_argument("--vocab", default=None, help="BPE vocab JSON (bpe mode)")
    p.add_argument("--merges", default=None, help="BPE merges file (bpe mode)")
    p.add_argument("--abbreviations", default=None,
                   help="newline-separated abbreviation list replacing the builtin one")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="styledetect",
        description="Few-shot machine-text detection engine and evaluation harness",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prepare", help="ingest, truncate, and group a corpus into episodes")
    p.add_argument("--corpus", required=True, help="line-delimited JSON corpus")
    p.add_argument("--out", required=True, help="episode manifest path")
    p.add_argument("--max-tokens", type=int, default=128)
    p.add_argument("--episode-size", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--balance", action="store_true", help="down-sample the majority class")
    p.add_argument("--config", default=None, help="key=value file overriding flags")
    _add_tokenizer_flags(p)
    p.set_defaults(fn=cmd_prepare)

    p = sub.add_parser("embed", help="embed a manifest into a binary store")
    p.add_argument("--episodes", required=True, help="episode manifest from prepare")
    p.add_argument("--out", required=True, help="output embedding store")
    p.add_argument("--doc-store", default=None, help="imported per-document store instead of the builtin featurizer")
    p.add_argument("--buckets", type=int, default=8192)
    p.add_argument("--config", default=None)
    p.set_defaults(fn=cmd_embed)

    p = sub.add_parser("eval", help="run an evaluation protocol")
    p.add_argument("--episodes", required=True)
    p.add_argument("--protocol", required=True, choices=["single", "multi", "unknown", "paraphrase", "sweep"])
    p.add_argument("--out", default=None, help="report path (stdout when omitted)")
    p.add_argument("--format", choices=["json", "csv"], default="json")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--episode-size", type=int, default=5)
    p.add_argument("--max-tokens", type=int, default=128)
    p.add_argument("--max-fpr", type=float, default=0.01)
    p.add_argument("--trials", type=int, default=1000)
    p.add_argument("--bootstrap", type=int, default=1000)
    p.add_argument("--scorer", choices=["cosine", "prototype"], default="cosine")
    p.add_argument("--aggregation", choices=["min", "max"], default="min")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--buckets", type=int, default=8192)
    p.add_argument("--doc-store", default=None, help="per-document embedding store")
    p.add_argument("--episode-store", default=None, help="per-episode embedding store")
    p.add_argument("--paraphrase-map", default=None)
    p.add_argument("--proportions", default=None, help="comma-separated paraphrase proportions")
    p.add_argument("--proportion", type=float, default=0.0)
    p.add_argument("--no-defended", action="store_true")
    p.add_argument("--sweep-n", default="1,3,5,10")
    p.add_argument("--config", default=None)
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("detect", help="score query documents against a support sample")
    p.add_argument("--support", required=True, help="line-delimited JSON support documents")
    p.add_argument("--query", required=True, help="line-delimited JSON query documents")
    p.add_argument("--calibrator", default=None, help="Platt calibrator head file")
    p.add_argument("--max-tokens", type=int, default=128)
    p.add_argument("--buckets", type=int, default=8192)
    p.add_argument("--config", default=None)
    _add_tokenizer_flags(p)
    p.set_defaults(fn=cmd_detect)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        _apply_config_file(args)
        return args.fn(args)
    except EngineError as exc:
        print(f"error[{exc.code}]: {exc.message}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
