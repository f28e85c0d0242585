"""Digital pendulum control simulation and spectral-submanifold model reduction.

Subpackage map:

- ``furuta``      closed-loop simulation of the rotary pendulum
- ``embedding``   delay-coordinate embedding of scalar observables
- ``manifold``    invariant-manifold geometry fitting (tangent + polynomial graph)
- ``dynamics``    reduced dynamics: polynomial fields, polar normal forms, RBF maps
- ``parametric``  parameter-interpolated models and bifurcation analysis
- ``diagnostics`` chaos statistics and trajectory-error metrics
- ``pipeline``    end-to-end training/analysis orchestration
- ``cli``         command-line interface
"""

__version__ = "0.1.0"
