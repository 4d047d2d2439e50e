/** WebAudio playback of server-rendered WAV bytes. */

import type { NotePlayer } from './keyboard.js';

export class WebAudioPlayer implements NotePlayer {
  private ctx: AudioContext | null = null;

  private context(): AudioContext {
    if (!this.ctx) {
      this.ctx = new AudioContext();
    }
    if (this.ctx.state === 'suspended') {
      void this.ctx.resume();
    }
    return this.ctx;
  }

  async play(pcm: ArrayBuffer): Promise<{ stop(): void }> {
    const ctx = this.context();
    const buffer = await ctx.decodeAudioData(pcm);
    const source = ctx.createBufferSource();
    source.buffer = buffer;
    source.connect(ctx.destination);
    source.start();
    return {
      stop() {
        try {
          source.stop();
        } catch {
          /* already ended */
        }
      },
    };
  }
}
