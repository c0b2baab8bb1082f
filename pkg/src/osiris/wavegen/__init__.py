from .channel import ChannelRealization, apply_channel, doppler_from_speed, random_channel
from .dataset import (
    DEFAULT_CLASSES,
    DEFAULT_SIRS,
    DEFAULT_SNRS,
    Dataset,
    DatasetHeader,
    generate_dataset,
    splitmix64,
)
from .interferers import CLASS_NAMES, InterferenceClass, gen_interferer
from .synth import (
    DomainSample,
    MixSpec,
    csi_from_freq,
    extract_domains,
    freq_from_time,
    gen_srs_grid,
    mix_and_receive,
    srs_active_bins,
    srs_time,
    synthesize,
)

__all__ = [
    "CLASS_NAMES", "ChannelRealization", "DEFAULT_CLASSES", "DEFAULT_SIRS", "DEFAULT_SNRS",
    "Dataset", "DatasetHeader", "DomainSample", "InterferenceClass", "MixSpec",
    "apply_channel", "csi_from_freq", "doppler_from_speed", "extract_domains",
    "freq_from_time", "gen_interferer", "gen_srs_grid", "generate_dataset",
    "mix_and_receive", "random_channel", "splitmix64", "srs_active_bins", "srs_time",
    "synthesize",
]
