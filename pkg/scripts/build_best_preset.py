"""Regenerate the bundled demonstration preset.

Renders a hand-designed lead patch at the three standard pitches, runs a
round-trip match at tier t28, and stores the recovered preset plus its
losses for the keyboard's instant-demo endpoint.
"""

import json
from pathlib import Path

import numpy as np

from synthmatch import params, synth
from synthmatch.optimizer import CmaConfig, Objective, optimize
from synthmatch.pipeline import NoteSegment

SEED = 7
BUDGET = 6000
PITCHES = (221.0, 278.0, 295.0)

LEAD = {
    "osc_mix_saw": 0.85,
    "osc_mix_pulse": 0.35,
    "osc_mix_sine": 0.1,
    "osc_mix_noise": 0.05,
    "detune": 0.08,
    "cutoff": 3800.0,
    "resonance": 0.28,
    "slope": 30.0,
    "filter_attack": 0.002,
    "filter_decay": 0.18,
    "filter_sustain": 0.55,
    "filter_release": 0.12,
    "filter_env_amount": 0.9,
    "amp_attack": 0.004,
    "amp_decay": 0.10,
    "amp_sustain": 0.75,
    "amp_release": 0.08,
    "eq1_freq": 5800.0,
    "eq1_gain": 1.0,
    "eq2_freq": 900.0,
    "eq2_gain": -1.5,
    "pulse_width": 0.32,
    "unison_voices": 5,
    "unison_spread": 0.18,
    "noise_floor": 0.01,
    "reverb_size": 0.35,
    "reverb_mix": 0.12,
    "distortion_drive": None,
    "delay_feedback": None,
    "vibrato_depth": None,
    "output_gain": 0.8,
}


def main():
    tier = params.get_tier("t28")
    values = {k: float(v) for k, v in LEAD.items() if v is not None and k in tier.names}
    target = params.Patch(tier, values)
    target.validate()

    segments = []
    for f0 in PITCHES:
        buf = synth.render(synth.RenderRequest(target, f0, 0.15, seed=SEED))
        segments.append(NoteSegment(buf, 0, len(buf.samples), f0, 1.0))

    result = optimize(segments, CmaConfig(budget=BUDGET, seed=SEED), tier)
    per_pitch = Objective(segments, tier, seed=SEED).per_pitch(result.vector)

    out = Path(__file__).resolve().parents[1] / "src" / "synthmatch" / "presets"
    out.mkdir(parents=True, exist_ok=True)
    params.save_preset(result.patch, out / "best.preset")
    meta = {
        "schema_version": 1,
        "round_trip_loss": result.final_loss,
        "init_loss": result.init_loss,
        "per_pitch_losses": per_pitch,
        "pitches": list(PITCHES),
        "budget": BUDGET,
        "seed": SEED,
    }
    (out / "best.meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    print(f"final loss {result.final_loss:.4f} (init {result.init_loss:.4f})")
    print(f"wrote {out / 'best.preset'}")


if __name__ == "__main__":
    main()
