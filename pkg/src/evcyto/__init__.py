"""Event-based flow cytometry classification with a spiking neural network.

Pipeline: event streams (EVCY files) -> patch pooling + LIF temporal
filter -> binary spike rasters -> feedforward LIF classifier trained
with surrogate-gradient BPTT -> leave-one-experiment-out evaluation.
"""

from .events import (
    CLASS_LABELS,
    Dataset,
    Event,
    EventSample,
    EventStream,
    EvcyFormatError,
    read_events,
    segment_windows,
    validate_stream,
    write_events,
)
from .preprocess import (
    NUM_CHANNELS,
    LifFilterParams,
    bin_events,
    channel_index,
    lif_filter,
    preprocess_sample,
)
from .snn import (
    ForwardTrace,
    Network,
    NetworkConfig,
    forward,
    init_network,
    lif_layer_step,
    population_counts,
    predict,
)
from .synthgen import GenConfig, generate_dataset, generate_experiment, generate_sample
from .train import (
    AdamState,
    EpochMetrics,
    Gradients,
    RasterSet,
    TrainConfig,
    adam_step,
    backward,
    evaluate,
    rate_mse_loss,
    surrogate_grad,
    train_epoch,
)
from .harness import ResultsTable, Split, export_results, make_splits, run_experiment

__version__ = "0.1.0"
