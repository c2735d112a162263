from repmult.trainer.data import (
    Dataset,
    OodTransform,
    apply_ood_transform,
    generate_synthetic,
    load_idx,
    parse_transform,
    split_dataset,
    write_idx,
)
from repmult.trainer.network import NetworkSpec, Network, desk_spec, forward, init_network, paper_spec
from repmult.trainer.optim import Adam, train_step
from repmult.trainer.train import (
    TrainingStrategy,
    VariantResult,
    evaluate_accuracy,
    select_pseudo_max,
    train_variant,
)
