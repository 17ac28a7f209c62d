"""Flow-based DDoS detection toolkit.

Submodules:
    flowcap   -- bidirectional flow aggregation and feature extraction
    dataio    -- labeled flow datasets: loading, balancing, splitting, scaling
    nnet      -- the dense feedforward classifier and its training loop
    baselines -- Gaussian naive Bayes and logistic regression comparators
    metrics   -- confusion matrices, per-class scores, report generation
    synthgen  -- seeded synthetic flow and packet-trace generation
    backend   -- numba-jitted numeric kernels with a pure-numpy fallback
    cli       -- the `ddosdet` command-line entry point
"""

__version__ = "0.1.0"
