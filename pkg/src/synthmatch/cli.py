"""Command-line interface.

Verbs: match, render, ablate, bench, serve. Exit codes: 0 success,
2 input error, 3 optimization aborted (no usable notes).
"""

from __future__ import annotations

import sys

import click

from synthmatch import audio_io, params, pipeline
from synthmatch.optimizer import CmaConfig
from synthmatch.params import ParamError, load_preset
from synthmatch.pipeline import PipelineAbort
from synthmatch.synth import RenderRequest, RenderError, render

EXIT_INPUT = 2
EXIT_ABORT = 3


def _fail(code: int, message: str):
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def parse_pitch(text: str) -> float:
    """Plain numbers <= 127 are MIDI notes, larger are Hz; prefixes override.

    Examples: 221 (Hz), 57 (MIDI), midi:57, hz:221.
    """
    text = text.strip().lower()
    try:
        if text.startswith("midi:"):
            return midi_to_hz(float(text[5:]))
        if text.startswith("hz:"):
            return float(text[3:])
        value = float(text)
    except ValueError:
        raise ParamError(f"cannot parse pitch {text!r}")
    return midi_to_hz(value) if value <= 127 else value


def midi_to_hz(note: float) -> float:
    return 440.0 * 2.0 ** ((note - 69.0) / 12.0)


@click.group()
def main():
    """Recover subtractive-synth patches from recorded audio."""


@main.command("match")
@click.argument("input_wav", type=click.Path())
@click.option("--tier", default="t28", show_default=True)
@click.option("--budget", default=10_000, show_default=True,
              help="evaluation budget (use 100000 to push past the plateau)")
@click.option("--seed", default=0, show_default=True)
@click.option("--lam", default=40, show_default=True, help="population size")
@click.option("--out", "out_dir", default="match_out", show_default=True)
def match_cmd(input_wav, tier, budget, seed, lam, out_dir):
    """Fit a synth patch to the notes in INPUT_WAV."""
    try:
        tier_obj = params.get_tier(tier)
    except ParamError as exc:
        _fail(EXIT_INPUT, str(exc))
    try:
        audio = audio_io.load_normalized(input_wav)
    except (audio_io.AudioIOError, OSError) as exc:
        _fail(EXIT_INPUT, str(exc))

    def sink(sample):
        if sample.evaluations % (lam * 25) == 0:
            click.echo(
                f"  {sample.evaluations:>7} evals  best {sample.best_loss:.4f}"
                f"  {sample.wall_ms / 1000:.1f}s"
            )

    try:
        report = pipeline.match(
            audio, tier_obj, CmaConfig(lam=lam, budget=budget, seed=seed),
            out_dir=out_dir, progress_sink=sink,
        )
    except PipelineAbort as exc:
        _fail(EXIT_ABORT, str(exc))
    except (ParamError, RenderError, ValueError) as exc:
        _fail(EXIT_INPUT, str(exc))
    click.echo(
        f"matched {len(report.pitches)} pitches: init {report.init_loss:.4f}"
        f" -> final {report.final_loss:.4f}"
    )
    if report.at_bound:
        click.echo(f"  parameters at bounds: {', '.join(report.at_bound)}")
    click.echo(f"wrote preset/report/trace/audio under {out_dir}/")


@main.command("render")
@click.argument("preset", type=click.Path())
@click.option("--pitch", required=True, help="Hz, or MIDI when <= 127; hz:/midi: prefixes")
@click.option("--dur", default=1.0, show_default=True, help="seconds")
@click.option("--seed", default=0, show_default=True)
@click.option("--bits", default="16", type=click.Choice(["16", "float32"]))
@click.option("--out", "out_wav", default="note.wav", show_default=True)
def render_cmd(preset, pitch, dur, seed, bits, out_wav):
    """Render a preset at a pitch to a WAV file."""
    try:
        patch = load_preset(preset)
        f0 = parse_pitch(pitch)
        buf = render(RenderRequest(patch, f0, dur, seed=seed))
        audio_io.write_wav(out_wav, buf, 16 if bits == "16" else "float32")
    except (ParamError, RenderError, audio_io.AudioIOError, OSError) as exc:
        _fail(EXIT_INPUT, str(exc))
    click.echo(f"rendered {f0:.2f} Hz for {dur}s -> {out_wav}")


@main.command("ablate")
@click.argument("input_wav", type=click.Path())
@click.option("--tiers", default="t15,t18,t24,t28", show_default=True)
@click.option("--budget", default=2000, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--lam", default=40, show_default=True)
def ablate_cmd(input_wav, tiers, budget, seed, lam):
    """Fit several tiers to the same input and tabulate final losses."""
    try:
        tier_list = [params.get_tier(t) for t in tiers.split(",") if t]
        audio = audio_io.load_normalized(input_wav)
    except (ParamError, audio_io.AudioIOError, OSError) as exc:
        _fail(EXIT_INPUT, str(exc))
    try:
        rows = pipeline.ablate(audio, tier_list, budget=budget, seed=seed, lam=lam)
    except PipelineAbort as exc:
        _fail(EXIT_ABORT, str(exc))
    click.echo(f"{'tier':<6} {'params':>6} {'final loss':>12}  flags")
    for row in rows:
        flags = "detune@bound" if "detune" in row.at_bound else ""
        click.echo(f"{row.tier:<6} {row.dimension:>6} {row.final_loss:>12.4f}  {flags}")


@main.command("bench")
@click.option("--b", default=40, show_default=True, help="population size")
@click.option("--k", default=3, show_default=True, help="pitches per evaluation")
@click.option("--duration", default=0.15, show_default=True)
@click.option("--seconds", default=10.0, show_default=True, help="minimum timing window")
def bench_cmd(b, k, duration, seconds):
    """Measure batched vs one-at-a-time evaluation throughput."""
    report = pipeline.bench(b=b, k=k, duration=duration, min_seconds=seconds)
    for line in report.lines():
        click.echo(line)


@main.command("serve")
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8765, show_default=True)
@click.option("--results-dir", default=None, help="where job artifacts are written")
def serve_cmd(host, port, results_dir):
    """Run the HTTP/WebSocket job service (and the web UI when built)."""
    import uvicorn

    from synthmatch.service import create_app

    uvicorn.run(create_app(results_dir=results_dir), host=host, port=port)


if __name__ == "__main__":
    main()
