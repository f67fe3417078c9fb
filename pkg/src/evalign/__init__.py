"""evalign: uncertainty-calibrated contrastive image-text alignment at desk scale.

Subpackage map:

- ``autodiff``   reverse-mode engine over small float64 tensors
- ``special``    log-gamma / digamma / trigamma
- ``encoder``    LoRA-adapted dual encoders with projection heads
- ``evidential`` contrastive + Dirichlet calibration loss stack
- ``datagen``    deterministic synthetic image-text corpora
- ``trainer``    Adam loop, linear probes, checkpoints
- ``inference``  zero-shot, retrieval, and the metric suite
- ``study``      two-round reader-study event log and report
- ``server``     HTTP JSON API around the study service
- ``config``     flat dotted-key run configuration and typed views
- ``cli``        single entry point tying the pipeline together
"""

__version__ = "0.1.0"
