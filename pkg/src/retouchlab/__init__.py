"""Differentiable photo-retouching engine.

Subpackages:
    imagecore -- pixel buffers, PNG I/O, color conversions
    ops       -- the 38-parameter analytic operator pipeline
    jacobian  -- exact pipeline derivatives via forward-mode duals
    graph     -- minimal reverse-mode autodiff, the per-pixel MLP, Adam
    renderer  -- control latents, distillation, latent inversion
    synth     -- deterministic data-synthesis pipelines
    metrics   -- histogram suite, fidelity metrics, reward functions
    cli       -- command-line surface
"""

__version__ = "0.1.0"
