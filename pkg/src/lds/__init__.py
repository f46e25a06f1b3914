"""Label-guided distance scaling for few-shot episodic classification.

The pieces:

* core: domain types, dataset/split IO and validation
* encoder: toy trainable encoder and precomputed embedding stores
* sampler: N-way K-shot episode construction with named RNG streams
* losses: label-guided training objectives with analytic gradients
* scaler: test-time EM fusion of supports with label representations
* metalearners: prototypical (cosine softmax) and ridge heads
* synth: desk-scale synthetic fixtures
* harness: training/evaluation/ablation loops, metrics, CSV export
* cli: the `lds` command
"""

from .core import (ClassSplit, ConfigError, DataError, Dataset, EmbeddedEpisode,
                   Episode, NumericalError, TextSample, load_dataset,
                   load_split, save_dataset, save_split, validate_split)
from .encoder import (EmbeddingStore, EncoderParams, PromptTemplate, Vocabulary,
                      apply_template, encode_label, encode_text,
                      encoder_backward, load_checkpoint, load_embedding_store,
                      save_checkpoint, save_embedding_store)
from .harness import (Adam, BackendConfig, MetaLearnerConfig, Metrics,
                      OptimizerConfig, PrecomputedBackend, RunConfig,
                      TrainableBackend, TrainResult, ablate, config_from_dict,
                      evaluate, export_results, load_backend, load_config,
                      train)
from .losses import (LossConfig, LossResult, finite_diff_check, loss_all,
                     loss_ce, loss_label, loss_lg)
from .metalearners import (Prototypes, RidgeModel, classify_pn,
                           compute_prototypes, cosine_similarities,
                           pn_probabilities, predict, rrml_fit, rrml_predict,
                           rrml_scores)
from .sampler import (SamplerConfig, draw_without_replacement, episode_rng,
                      sample_episode)
from .scaler import (CandidateSet, GmmState, ScalerConfig, build_candidate_set,
                     e_step, em_fit, fuse, m_step, scale_support_set)
from .synth import (KeywordSynthConfig, SynthConfig, gen_keyword_dataset,
                    gen_random_store, gen_synthetic)

__version__ = "0.1.0"
