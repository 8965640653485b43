"""Few-shot machine-generated-text detection with style embeddings.

Core pipeline: ingest and truncate documents (corpus), group them into
same-author episodes, embed episodes (embedder), score queries against
support samples (scoring), and evaluate with the standardized-pAUC harness
(metrics, protocols).  Zero-shot likelihood baselines live in zeroshot;
contrastive projection training and Platt calibration in trainer.
"""

from .corpus import (
    Document,
    Episode,
    SourceLabel,
    balance_corpus,
    build_episodes,
    ingest_corpus,
    segment_sentences,
    truncate_to_boundary,
)
from .embedder import (
    BuiltinEmbedder,
    EmbeddingRecord,
    FeaturizerConfig,
    ProjectionHead,
    embed_episode,
    featurize_document,
    import_external,
    read_store,
    write_store,
)
from .errors import EngineError
from .metrics import RocCurve, auc, bootstrap_se, fpr_at_tpr, pauc, roc_curve
from .protocols import (
    EvalConfig,
    EvalReport,
    multi_target_eval,
    paraphrase_eval,
    single_target_eval,
    sweep_N,
    unknown_llm_eval,
)
from .scoring import (
    ScoreRecord,
    cosine_score,
    defended_score,
    multi_target_score,
    prototype_score,
)
from .tokenize import TokenizerSpec
from .trainer import (
    ContrastiveConfig,
    LogisticHead,
    PlattCalibrator,
    apply_platt,
    fit_platt,
    info_nce_loss,
    sample_contrastive_batch,
    train_logistic_head,
    train_projection,
)
from .zeroshot import (
    NGramLM,
    TokenStats,
    entropy_score,
    logrank_score,
    rank_score,
    train_ngram_lm,
)

__version__ = "0.1.0"
