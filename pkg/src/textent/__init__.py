"""Joint word / entity / document embeddings learned from an annotated corpus.

The package trains a document encoder that predicts which entity a document
describes, seeds it with skip-gram pretraining over an entity-replaced token
stream, and evaluates the learned representations on fine-grained entity
typing and multiclass text classification.  See the ``textent`` command for
the file-based pipeline, or use the modules directly:

- :mod:`textent.corpus` — ingestion, filtering, vocabularies, compilation
- :mod:`textent.sgns` — skip-gram pretraining with negative sampling
- :mod:`textent.model` / :mod:`textent.train` — the document encoder
- :mod:`textent.typing_eval` — entity-typing protocol
- :mod:`textent.classify` — text-classification protocol
- :mod:`textent.metrics` — ranking and assignment measures
- :mod:`textent.vectors` — embedding files and cosine queries
"""

from .corpus import (Annotation, CompiledDataset, Document, RawDocument,
                     Vocabulary, build_corpus, build_vocabularies,
                     compile_dataset, compile_document, emit_pretrain_stream,
                     filter_annotations, load_dataset, normalize, read_corpus,
                     save_dataset, select_training_documents)
from .model import (DocumentEncoding, ModelParameters, TrainConfig,
                    apply_word_dropout, backward, bag_average, encode,
                    full_softmax_rank, load_model, sample_negatives,
                    sampled_softmax_loss, save_model)
from .sgns import SamplingTable, SgnsConfig, build_sampling_table, train_skipgram
from .train import TrainResult, init_parameters, train
from .vectors import VectorStore, cosine, load_vectors, nearest_entities, save_vectors

__version__ = "0.1.0"

__all__ = [
    "Annotation", "CompiledDataset", "Document", "DocumentEncoding",
    "ModelParameters", "RawDocument", "SamplingTable", "SgnsConfig",
    "TrainConfig", "TrainResult", "VectorStore", "Vocabulary",
    "apply_word_dropout", "backward", "bag_average", "build_corpus",
    "build_sampling_table", "build_vocabularies", "compile_dataset",
    "compile_document", "cosine", "emit_pretrain_stream",
    "encode", "filter_annotations", "full_softmax_rank", "init_parameters",
    "load_dataset", "load_model", "load_vectors", "nearest_entities",
    "normalize", "read_corpus", "sample_negatives", "sampled_softmax_loss",
    "save_dataset", "save_model", "save_vectors",
    "select_training_documents", "train", "train_skipgram",
]
