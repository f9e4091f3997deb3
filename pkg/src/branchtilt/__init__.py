"""branchtilt: multi-type, age-structured branching populations, their
extinction probabilities, and the extinction-conditioned (tilted) models.

The package is organized as:

* :mod:`branchtilt.pedigree` descent labels, lines, covering lines
* :mod:`branchtilt.kernels` life careers, model variants, generating
  functions and mean structure
* :mod:`branchtilt.extinction` extinction probability vectors (fixed
  point and Monte Carlo)
* :mod:`branchtilt.tilt` conditioned offspring laws, tilted models,
  Radon-Nikodym line weights, rejection sampling
* :mod:`branchtilt.simulate` event-driven population runs, replicate
  orchestration, line extraction
* :mod:`branchtilt.verify` statistical verification suites
* :mod:`branchtilt.cli` command line front end
"""

from __future__ import annotations

__version__ = "0.1.0"
