"""Benchmark manifests, sample loading, batch sampling and synthetic data."""
from .loading import LoadedSample, load_gt, load_sample, read_image, write_gray_png
from .manifest import AMXD_TEST, AMXD_TRAIN, Manifest, ModePlan, SampleRecord, build_manifest, expand_modes
from .sampler import BatchSampler, ModalBatch, batch_sampler
from .synth import synth_generate

__all__ = [
    "AMXD_TEST", "AMXD_TRAIN", "BatchSampler", "LoadedSample", "Manifest", "ModalBatch", "ModePlan",
    "SampleRecord", "batch_sampler", "build_manifest", "expand_modes", "load_gt", "load_sample",
    "read_image", "synth_generate", "write_gray_png",
]
