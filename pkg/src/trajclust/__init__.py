"""Desk-scale unsupervised video-representation learning.

Synthetic descriptor corpora, sketched Fisher-vector encoding, a small
feed-forward encoder trained with non-parametric contrastive objectives over
a memory bank, descriptor-space cluster priors, and evaluation tooling.
"""

__version__ = "0.1.0"

from .bank import EmbeddingBank, init_bank, sample_negatives, update as bank_update
from .clustering import (
    ClusterModel,
    KmeansResult,
    build_cluster_model,
    kmeans,
    neighbor_sets,
)
from .corpus import (
    DescriptorBag,
    LatentSpec,
    RawVideoFeature,
    generate_corpus,
    read_corpus,
    write_corpus,
)
from .encoder import (
    EncoderGrads,
    EncoderParams,
    OptimizerState,
    backward,
    forward,
    init_encoder,
    init_optimizer,
    sgd_step,
)
from .errors import (
    CompatibilityError,
    ConfigError,
    DegenerateDataError,
    FitError,
    FormatError,
    InputError,
    NormalizationError,
    NumericError,
    TrainingError,
    TrajclustError,
)
from .evaluate import (
    ProbeReport,
    clustering_metrics,
    linear_probe,
    retrieval_accuracy,
)
from .fisher import (
    CodebookConfig,
    FisherCodebook,
    GmmModel,
    PcaModel,
    SketchProjection,
    encode_bag,
    encode_corpus,
    encode_trajectories,
    encode_trajectory,
    fit_codebook,
    fit_gmm,
    fit_pca,
    load_codebook,
    make_sketch,
    read_encoded,
    save_codebook,
    sketch_apply,
    write_encoded,
)
from .objectives import (
    IrConfig,
    NeighborSets,
    instance_prob,
    ir_loss_and_grad,
    la_loss_and_grad,
    la_loss_reference,
    set_prob,
)
from .trainer import (
    RunArtifacts,
    TrainConfig,
    TrainingData,
    initial_state,
    load_checkpoint,
    resume_training,
    run_training,
    save_checkpoint,
    train_ir,
    train_la,
    training_data_from_corpus,
)
