import numpy as np
import pytest

from synthmatch import params
from synthmatch.synth import AudioBuffer, RenderRequest, render

SR = 44100


def tone(freq, seconds=1.0, amp=0.5, sr=SR):
    t = np.arange(int(seconds * sr)) / sr
    return AudioBuffer(amp * np.sin(2 * np.pi * freq * t), sr)


def naive_saw(freq, seconds=1.0, amp=1.0, sr=SR):
    t = np.arange(int(seconds * sr)) / sr
    return AudioBuffer(amp * (2.0 * ((freq * t) % 1.0) - 1.0), sr)


def square(freq, seconds=1.0, amp=1.0, sr=SR):
    t = np.arange(int(seconds * sr)) / sr
    return AudioBuffer(amp * np.sign(np.sin(2 * np.pi * freq * t)), sr)


def white_noise(seconds=1.0, amp=0.5, sr=SR, seed=0):
    rng = np.random.default_rng(seed)
    return AudioBuffer(amp * rng.uniform(-1.0, 1.0, int(seconds * sr)), sr)


def neutral_patch(tier="t28", **overrides):
    """A quiet, effect-free patch: one saw voice through an open filter."""
    tier = params.get_tier(tier)
    values = {}
    defaults = {
        "osc_mix_saw": 1.0,
        "osc_mix_pulse": 0.0,
        "osc_mix_sine": 0.0,
        "osc_mix_noise": 0.0,
        "detune": 0.0,
        "cutoff": 16000.0,
        "resonance": 0.0,
        "slope": 48.0,
        "filter_attack": 0.001,
        "filter_decay": 0.001,
        "filter_sustain": 1.0,
        "filter_release": 0.05,
        "filter_env_amount": 0.0,
        "amp_attack": 0.001,
        "amp_decay": 0.001,
        "amp_sustain": 1.0,
        "amp_release": 0.05,
        "eq1_freq": 1000.0,
        "eq1_gain": 0.0,
        "eq2_freq": 5000.0,
        "eq2_gain": 0.0,
        "pulse_width": 0.5,
        "unison_voices": 1,
        "unison_spread": 0.0,
        "noise_floor": 0.0,
        "reverb_size": 0.0,
        "reverb_mix": 0.0,
        "distortion_drive": 1.0,
        "delay_feedback": 0.0,
        "vibrato_depth": 0.0,
        "output_gain": 0.3,
    }
    for name in tier.names:
        values[name] = float(defaults[name])
    values.update({k: float(v) for k, v in overrides.items()})
    patch = params.Patch(tier, values)
    patch.validate()
    return patch


def render_note(patch, f0, seconds=0.15, seed=0, note_len=None):
    return render(RenderRequest(patch, f0, seconds, SR, seed, note_len))


@pytest.fixture(scope="session")
def saw_note():
    return render_note(neutral_patch(), 221.0, seconds=0.5)
