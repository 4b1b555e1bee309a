"""Cache-efficient Metropolis-Hastings trainer for LDA topic models."""

from .corpus import (Corpus, CorpusFormatError, CorpusStats, corpus_stats,
                     load_corpus, parse_uci_bag_of_words)
from .countstore import (AliasTable, GlobalState, SparseCounts, alias_draw,
                         build_alias, counts_from_assignments,
                         draw_doc_proposal, draw_word_proposal)
from .evaluate import (IterationMetrics, load_metrics, log_joint_likelihood,
                       log_joint_likelihood_matrix, record_metrics)
from .matrixframe import (ColumnView, MatrixBuilder, PartitionPlan, RowView,
                          TokenEntry, TokenTopicMatrix, VisitError,
                          dump_matrix, dynamic_partition, greedy_partition,
                          imbalance_index, load_matrix, static_partition)
from .sampler import (Checkpoint, RngKey, TrainConfig, TrainedModel,
                      dense_counts, document_phase, extract_model,
                      init_assignments, load_checkpoint, matrix_from_corpus,
                      mh_accept, mh_acceptance_ratio, rng_at, rng_uniform,
                      save_checkpoint, train, word_phase)
from .baseline import (CollapsedGibbs, DenseCounts, NaiveSampler,
                       cgs_iteration, enumerate_token_posterior,
                       frozen_chain_counts, naive_mcem_iteration)

__version__ = "0.1.0"
