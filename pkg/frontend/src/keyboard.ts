/**
 * Two-octave keyboard (C3..C5, MIDI 48..72) playing server-rendered notes.
 *
 * Key presses fetch (and cache) the note's WAV and play it through a
 * caller-supplied player; repeated presses retrigger from the start
 * (monophonic per key). Fetch failures flash the key, never crash.
 */

import { MIDI_HI, MIDI_LO, noteName } from './api.js';

export interface KeyDef {
  midi: number;
  name: string;
  black: boolean;
  /** index of the white key this key sits on / after */
  whiteIndex: number;
}

const BLACK = new Set([1, 3, 6, 8, 10]);

export function keyboardLayout(): KeyDef[] {
  const keys: KeyDef[] = [];
  let whiteIndex = -1;
  for (let midi = MIDI_LO; midi <= MIDI_HI; midi++) {
    const black = BLACK.has(midi % 12);
    if (!black) whiteIndex++;
    keys.push({ midi, name: noteName(midi), black, whiteIndex });
  }
  return keys;
}

export interface NotePlayer {
  /** decode and start playback; returns a stop handle */
  play(pcm: ArrayBuffer): Promise<{ stop(): void }>;
}

export type NoteFetcher = (midi: number) => Promise<ArrayBuffer>;

export class KeyboardController {
  private cache = new Map<number, ArrayBuffer>();
  private playing = new Map<number, { stop(): void }>();
  private errors: (midi: number) => void;

  constructor(
    private fetchNote: NoteFetcher,
    private player: NotePlayer,
    onError?: (midi: number) => void,
  ) {
    this.errors = onError ?? (() => undefined);
  }

  cached(midi: number): boolean {
    return this.cache.has(midi);
  }

  async press(midi: number): Promise<boolean> {
    if (midi < MIDI_LO || midi > MIDI_HI) return false;
    let pcm = this.cache.get(midi);
    if (!pcm) {
      try {
        pcm = await this.fetchNote(midi);
      } catch {
        this.errors(midi);
        return false;
      }
      this.cache.set(midi, pcm);
    }
    this.playing.get(midi)?.stop(); // retrigger from the start
    try {
      const handle = await this.player.play(pcm.slice(0));
      this.playing.set(midi, handle);
      return true;
    } catch {
      this.errors(midi);
      return false;
    }
  }

  stopAll(): void {
    for (const handle of this.playing.values()) handle.stop();
    this.playing.clear();
  }

  reset(): void {
    this.stopAll();
    this.cache.clear();
  }
}
