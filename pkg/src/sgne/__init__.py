"""Skip-gram network embeddings with Sigmoid or Sine pair scores.

Modules: ``graph`` (ingestion and generators), ``corpus`` (walks, pair
counts, PPMI, noise), ``model`` (losses and gradients), ``optim`` (update
rules including adversarial parameter perturbation), ``training``,
``theory`` (closed forms and oracles), ``evaluation`` and ``cli``.
"""

from .errors import (ConfigError, DegenerateLabelError, DomainError, EdgeListParseError,
                     EmptyGraphError, NumericError, SgneError, SplitError,
                     UndefinedSimilarityError)
from .graph import (Graph, generate_planted_partition_graph, generate_power_law_graph,
                    load_edge_list)
from .model import EmbeddingModel, SampleBatch, batch_gradients, batch_loss, init_model
from .training import CorpusConfig, ModelConfig, OptimizerConfig, TrainingTrace, train

__version__ = "0.1.0"
