"""imba-lens: look into what imbalance-handling losses do to a CNN's features.

The toolkit operates purely on serialized model internals (feature maps,
classifier-head weights, logits) plus bounding-box annotations:

- :mod:`imba_lens.tensor_io` -- the interchange format (tensors, manifests, boxes)
- :mod:`imba_lens.losses` -- the unified cost-sensitive loss family and gradients
- :mod:`imba_lens.cam` -- class activation maps, normalization, upsampling
- :mod:`imba_lens.alignment` -- soft IoBB / IoR against pathology boxes
- :mod:`imba_lens.dissection` -- channel thresholds, components, concept counts
- :mod:`imba_lens.metrics` -- AUROC, average precision, mean predicted probability
- :mod:`imba_lens.cli` -- command-line front end
"""

__version__ = "0.1.0"

from imba_lens import alignment, cam, dissection, losses, metrics, tensor_io

__all__ = ["alignment", "cam", "dissection", "losses", "metrics", "tensor_io"]
