"""Video person re-identification by fusing appearance and silhouette-set
gait embeddings into one retrieval descriptor."""

from .errors import ConfigError, DataError, InvalidInputError, SeqMasksError
from .evaluation import EvalReport, RetrievalProblem, average_precision, casia_eval, cmc_map
from .index import DatasetIndex, SequenceRecord, filter_corpus
from .losses import (
    LossBreakdown,
    LossWeights,
    batch_all_triplet,
    batch_hard_triplet,
    lsr_softmax,
    pairwise_dist,
    total_loss,
)
from .masks import align_silhouette, crop_silhouette, foreground_ratio, is_effective
from .models import FeatureBundle, FusionNetwork, build_backbone
from .parsers import parse_casia_b, parse_mask_mars
from .sampling import TrainBatch, pk_sample
from .training import (
    FeatureStore,
    TrainConfig,
    build_model,
    extract_features,
    load_model,
    save_checkpoint,
    train,
)
from .transforms import augment_pair, normalize_frames

__version__ = "0.1.0"
