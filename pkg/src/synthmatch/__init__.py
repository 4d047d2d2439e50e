"""synthmatch: recover playable subtractive-synth patches from audio.

A 28-parameter (tiered 15/18/24/28/31) subtractive synthesizer, a composite
perceptual spectral loss, and a CMA-ES search that fits the synthesizer to
recorded notes. Includes a CLI, an HTTP/WebSocket job service, and a browser
keyboard front end for auditioning recovered patches.
"""

__version__ = "0.1.0"
