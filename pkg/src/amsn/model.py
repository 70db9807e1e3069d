"""The full modality switch network: extractor, per-level fusion, decoder."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np

from . import tensor as T
from .config import ModelConfig
from .decoder import decode, init_decoder
from .dfm import fuse, init_dfm
from .errors import ConfigurationError, DataError, DimensionError
from .losses import saliency_loss, total_loss
from .modality import MODALITIES, indicator, sort_modalities
from .msfe import LEVELS, UnimodalFeatures, classify_modality, extract, init_msfe, modality_loss
from .params import NetworkParams
from .tensor import Tensor


@dataclass
class MSNOutput:
    modalities: tuple[str, ...]
    unimodal: dict[str, UnimodalFeatures]
    fused: list[Tensor]
    saliency: list[Tensor]           # S^1..S^4
    modality_probs: dict[str, Tensor]


@dataclass
class LossTerms:
    l_ce: Tensor
    l_modality: Tensor
    l_total: Tensor


class MSN:
    """One parameter set serving every modality combination."""

    def __init__(self, params: NetworkParams, config: ModelConfig):
        self.params = params
        self.config = config

    @classmethod
    def initialize(cls, config: ModelConfig | None = None, seed: int = 0) -> "MSN":
        config = config or ModelConfig()
        rng = np.random.default_rng(seed)
        params = NetworkParams()
        init_msfe(params, rng, config)
        init_dfm(params, rng, config)
        init_decoder(params, rng, config)
        return cls(params, config)

    @classmethod
    def from_state(cls, state: Mapping[str, np.ndarray]) -> "MSN":
        """Rebuild from a checkpoint dict, reading the architecture off the shapes."""
        try:
            widths = tuple(int(state[f"msfe.stage{i}.down.weight"].shape[0]) for i in range(1, 6))
            k = int(state["msfe.classifier.weight"].shape[1])
            in_channels = int(state["msfe.stage1.down.weight"].shape[1])
            ctx2 = int(state["msfe.miwg2.weight"].shape[0]) - widths[1]
        except KeyError as exc:
            raise DataError(f"checkpoint lacks parameter {exc.args[0]}") from None
        mode = "recursive" if ctx2 == widths[0] and ctx2 != k else "indicator"
        config = ModelConfig(widths=widths, num_modalities=k, miwg_mode=mode, in_channels=in_channels)
        model = cls.initialize(config)
        for name, t in model.params.items():
            if name not in state:
                raise DataError(f"checkpoint lacks parameter {name}")
            arr = np.asarray(state[name])
            if arr.shape != t.shape:
                raise DataError(f"checkpoint parameter {name} has shape {arr.shape}, expected {t.shape}")
            t.data = np.ascontiguousarray(arr, dtype=t.dtype)
        extra = set(state) - set(model.params)
        if extra:
            raise DataError(f"checkpoint has unknown parameters: {sorted(extra)[:5]}")
        return model

    def state(self) -> dict[str, np.ndarray]:
        return self.params.state()

    # ------------------------------------------------------------ forward

    def forward(self, inputs: Mapping[str, Tensor]) -> MSNOutput:
        """Run on registered images keyed by modality (``"RGB"``, ``"D"``, ``"T"``).

        Inputs are processed in canonical modality order regardless of the
        mapping's order, so results do not depend on how callers list them.
        """
        if not inputs:
            raise ConfigurationError("at least one modality is required")
        mods = sort_modalities(inputs)
        if len(mods) > self.config.num_modalities:
            raise ConfigurationError(f"{len(mods)} modalities exceed the universe size {self.config.num_modalities}")
        by_mod = {m: inputs[k] for k in inputs for m in sort_modalities([k])}
        shape = by_mod[mods[0]].shape
        for m in mods:
            if by_mod[m].shape != shape:
                raise DimensionError(f"modality {m} image shape {by_mod[m].shape} differs from {shape}")
        b = shape[0]
        images = T.concat([by_mod[m] for m in mods], axis=0) if len(mods) > 1 else by_mod[mods[0]]
        k = self.config.num_modalities
        inds = [indicator(m, k) for m in mods for _ in range(b)]
        feats = extract(images, inds, self.params, self.config.miwg_mode)

        unimodal = {m: UnimodalFeatures([], [], [m] * b) for m in mods}
        for level in range(LEVELS):
            parts = [feats.features[level]] if len(mods) == 1 else T.split_axis0(feats.features[level], [b] * len(mods))
            wparts = [feats.weights[level]] if len(mods) == 1 else T.split_axis0(feats.weights[level], [b] * len(mods))
            for m, f, w in zip(mods, parts, wparts):
                unimodal[m].features.append(f)
                unimodal[m].weights.append(w)

        fused = [fuse([unimodal[m].features[lvl] for m in mods], self.params, lvl + 1, max_modalities=k)
                 for lvl in range(LEVELS)]
        saliency = decode(fused, self.params)
        probs = {m: classify_modality(unimodal[m].features[-1], self.params) for m in mods}
        return MSNOutput(mods, unimodal, fused, saliency, probs)

    def losses(self, out: MSNOutput, gt: Tensor) -> LossTerms:
        l_ce = saliency_loss(out.saliency, gt)
        terms = [modality_loss(out.modality_probs[m], [m] * gt.shape[0]) for m in out.modalities]
        l_mod = terms[0]
        for t in terms[1:]:
            l_mod = l_mod + t
        if len(terms) > 1:
            l_mod = l_mod * (1.0 / len(terms))
        return LossTerms(l_ce, l_mod, total_loss(l_ce, l_mod))

    def predict(self, inputs: Mapping[str, Tensor]) -> np.ndarray:
        """Final saliency maps [B,H,W] at input resolution (S^1 upsampled)."""
        with T.no_grad():
            out = self.forward(inputs)
            h, w = next(iter(inputs.values())).shape[2:]
            final = T.bilinear_upsample(out.saliency[0], h, w)
        return final.data[:, 0]

    def level5_embeddings(self, inputs: Mapping[str, Tensor]) -> dict[str, np.ndarray]:
        """Globally pooled level-5 unimodal features per modality, [B,C5] each."""
        with T.no_grad():
            out = self.forward(inputs)
            return {m: T.global_avg_pool(out.unimodal[m].features[-1]).data for m in out.modalities}


def parameter_report(params: NetworkParams) -> dict[str, int]:
    return {
        "backbone": params.numel("msfe.stage"),
        "msfe": params.numel("msfe."),
        "dfm": params.numel("dfm."),
        "decoder": params.numel("decoder."),
        "total": params.numel(),
    }


__all__ = ["MSN", "MSNOutput", "LossTerms", "parameter_report", "MODALITIES"]
