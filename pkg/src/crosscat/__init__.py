"""Cross-category choice models: estimation, assortment optimization, experiments."""
from .choice import (
    McModel,
    MnlModel,
    RankingModel,
    choice_operator,
    choice_probs,
    mc_absorption,
    mc_choice_prob,
    mnl_choice_prob,
    mnl_conditional_prob,
    mnl_to_mc,
    rcm_choice_prob,
    rcm_conditional_prob,
)
from .errors import (
    ConfigError,
    ConvergenceError,
    CrossCatError,
    DataError,
    DomainError,
    EstimationError,
    ModelError,
    UnsupportedStructureError,
)
from .model import (
    CategoryNode,
    CrossCatModel,
    EdgeLambda,
    category_marginals,
    conditional_b_prob,
    joint_choice_prob,
    sample_paths,
    two_category,
)

__version__ = "0.1.0"
