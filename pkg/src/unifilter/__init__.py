"""Adaptive polynomial graph filters with homophily-aware bases and spectral diagnostics."""

__version__ = "0.1.0"

from .basis import (
    BasisTensor,
    angle_law_deviation,
    basis_spectrum,
    export_basis,
    heterophily_basis,
    homophily_basis,
    orthonormal_basis,
    orthonormality_deviation,
    unibasis,
)
from .datasets import (
    SynthSpec,
    TreeSpec,
    ablation_basis_variants,
    binary_tree_dataset,
    energy_trajectory,
    make_splits,
    oversquashing_experiment,
    planted_homophily_graph,
    synth_variable_h,
    write_dataset,
)
from .graph import (
    Graph,
    LabeledDataset,
    PropagationOperator,
    Split,
    estimate_homophily,
    homophily_ratio,
    load_dataset,
    load_graph,
    propagation_operator,
)
from .model import (
    FilterModel,
    TrainConfig,
    TrainReport,
    evaluate,
    forward,
    gradient_check,
    init_filter_model,
    load_checkpoint,
    loss,
    random_search,
    save_checkpoint,
    train,
)
from .spectral import (
    SpectrumReport,
    aligned_unit_signal,
    dense_eigen_oracle,
    dirichlet_energy,
    expected_frequency_regular,
    mc_expected_frequency,
    sample_regular_graph,
    signal_frequency,
)
