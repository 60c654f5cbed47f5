"""Python bindings for the protoalign adaptation library."""

import json

from . import _core
from ._core import (
    DegenerateInput,
    Error,
    FormatError,
    InvalidArgument,
    Model,
    PrototypeSet,
    UndefinedMetric,
    assd_2d,
    class_probabilities,
    class_thresholds,
    config_keys,
    dice,
    em_prior_update,
    generate_domains,
    gradient_suites,
    p2t_loss,
    pfa_loss,
    pretrain,
    resolved_config,
    select_negatives,
    select_queries,
    t2p_loss,
    transport_conditional,
)


def adapt(source, target_inputs, config_text="", stage="both"):
    """Adapt `source` to unlabeled target inputs; returns (model, report dict)."""
    model, report = _core.adapt(source, target_inputs, config_text, stage)
    return model, json.loads(report)


def evaluate(model, inputs, labels):
    """Metrics dict with the same keys as the CLI evaluate report."""
    return json.loads(_core.evaluate_json(model, inputs, labels))


__all__ = [name for name in dir() if not name.startswith("_") and name != "json"]
