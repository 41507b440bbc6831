"""Mixtures of probabilistic principal component analyzers for category
learning: single-analyzer estimation, signal-to-noise analysis of retained
dimensions, a nonparametric mixture with shared loading directions,
one-shot/zero-shot predictives, exemplar/prototype baselines, and a
penalized classifier head for learned embeddings.
"""

from .datatypes import Dataset, Prediction
from .ppca import (
    DegenerateDataError,
    LatentPosterior,
    PpcaParams,
    fit_mle,
    latent_posterior,
    marginal_log_density,
    sample,
)
from .theory import (
    DegenerateConfigError,
    InfoDecomposition,
    TwoCategorySpec,
    accuracy_lower_bound,
    alpha_moments,
    drop_condition,
    info_decomposition,
    mc_alpha_moments,
    mc_classifier_accuracy,
    orientation_report,
    pca_classifier_prob,
    random_two_category_spec,
    snr_analytic,
)
from .dpmix import (
    Hyperparams,
    MixtureModel,
    cluster_loadings,
    crp_assignment_probs,
    crp_expected_clusters,
    fit_supervised,
    fit_unsupervised,
    generalization_grid,
    generate,
    generate_with_structure,
    map_assignments,
    model_from_json,
    model_to_json,
    predict_category,
    simulate_crp,
    stick_breaking_weights,
)
from .fewshot import (
    NewCategoryMixture,
    NewCategoryPredictive,
    SubcategorySpec,
    new_category_predictive,
    sample_latent_mixture,
    subcategory_log_density,
)
from .baselines import (
    ExemplarStore,
    PrototypeStore,
    compare_models,
    exemplar_predict,
    fit_attention,
    fit_exemplar,
    fit_linear_rule,
    fit_prototype,
    linear_rule_predict,
    prototype_predict,
)
from .deep_head import (
    HeadGrads,
    HeadParams,
    SoftLabelBatch,
    TrainConfig,
    TrainingDivergenceError,
    align_soft_labels,
    default_lambda1,
    head_log_likelihoods,
    heads_from_json,
    heads_to_json,
    init_heads,
    init_heads_for,
    loss_gradient,
    predict_probs,
    read_embeddings_csv,
    read_soft_labels_csv,
    regularized_loss,
    spectrum_report,
    train,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
