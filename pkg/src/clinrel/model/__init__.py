from .encoders import HFEncoder, ReferenceEncoder, build_encoder, reference_encoder
from .heads import (
    RelationHead,
    RelationModel,
    RepresentationScheme,
    extract_representation,
    forward,
)
from .selection import GridResult, assign_folds, cross_validate, select_best
from .training import (
    ALL,
    BINARY,
    DISTANCE_SPECIFIC,
    MULTI_CLASS,
    POSITIVE,
    UNIFIED,
    GroupModel,
    ModelBundle,
    TrainConfig,
    load_bundle,
    save_bundle,
    train,
)
