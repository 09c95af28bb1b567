"""rhythmbench: rhythm-feature classification experiments with validity audits.

The package reproduces a standard rhythm-classification pipeline (onset
strength, autocorrelation window, AR features, Gaussian/kNN classifiers) and
the audits that probe its validity: random-baseline significance, repeated
repartitioning, time-dilation confound probing, and cross-dataset
evaluation.
"""

__version__ = "0.1.0"

from .audio import AudioClip, load_wav, save_wav
from .config import (
    DEFAULT_MODELS,
    DEFAULT_PIPELINE,
    LEARNED_MODELS,
    PipelineConfig,
    RunConfig,
    build_run_config,
    default_dilation_factors,
)
from .datasets import DatasetManifest, Partition, ingest, random_partition, read_manifest_csv
from .dsp import (
    ArModel,
    Autocorrelation,
    OnsetEnvelope,
    levinson_durbin,
    mel_filterbank,
    normalized_autocorrelation,
    onset_strength,
    stft_magnitude,
    time_stretch,
)
from .experiments import (
    BaselineDistribution,
    Contrast,
    ContrastStudy,
    DilationCurve,
    EvaluationReport,
    TrialOutcome,
    baseline_distribution,
    cross_dataset_eval,
    dilation_probe,
    random_reference_level,
    repartition_study,
    run_trial,
)
from .features import (
    FeatureRecord,
    FeatureTable,
    Normalizer,
    RhythmFeature,
    apply_normalizer,
    extract_feature,
    fit_normalizer,
    read_feature_cache,
    write_feature_cache,
)
from .metrics import (
    ConfusionMatrix,
    FigureOfMerit,
    confusion,
    figures_of_merit,
    gaussian_tail_log_prob,
)
from .models import (
    BaselineModel,
    GaussianClassifier,
    KnnClassifier,
    predict_baseline,
    predict_gaussian,
    predict_knn,
    predict_model,
    train_baseline,
    train_gaussian,
    train_knn,
)
