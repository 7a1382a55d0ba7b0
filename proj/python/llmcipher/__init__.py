"""Embedding-based detection and attribution of machine-generated text."""

import json

from . import _core
from ._core import (
    ConfigError,
    ContrastiveConfig,
    DataError,
    DimensionError,
    DomainError,
    EmbeddingRecord,
    EmbeddingSet,
    FormatError,
    InputError,
    IoError,
    KnnModel,
    LlmcipherError,
    MlpModel,
    NumericError,
    ParseError,
    ProjectionNetwork,
    ProtocolError,
    SamplingError,
    TrainConfig,
    UnsupportedError,
    delta_recall,
    f1_machine,
    features_csv,
    fit_projected_knn,
    format_embedding_line,
    knn_fit,
    load_embeddings,
    load_knn,
    load_mlp,
    load_projection,
    make_split,
    metrics_from_confusion,
    mlp_init,
    pair_label,
    parse_embedding_line,
    save_embeddings,
    save_knn,
    save_mlp,
    save_projection,
    triplet_loss,
)


def train_mlp(train, val, config=None, binary=False, layer_dims=()):
    """Returns (model, training log dict)."""
    model, log = _core.train_mlp(train, val, config or TrainConfig(), binary, list(layer_dims))
    return model, json.loads(log)


def train_projection(train, val, config=None, layer_dims=(), allow_nonstandard=False):
    """Returns (projection, training log dict)."""
    projection, log = _core.train_projection(
        train, val, config or ContrastiveConfig(), list(layer_dims), allow_nonstandard
    )
    return projection, json.loads(log)


def perturb_text(text, corpus, synonym_table, **config):
    """Returns {"text": ..., "substitutions": [...]}."""
    result = json.loads(_core.perturb_text(text, corpus, synonym_table, **config))
    result.pop("id", None)
    return result


def run_cli(*args):
    """Runs the command-line tool in-process; returns (exit code, stdout, stderr)."""
    return _core.cli_run([str(a) for a in args])
