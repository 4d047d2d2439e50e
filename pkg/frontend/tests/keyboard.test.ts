import { describe, expect, it, vi } from 'vitest';

import { midiToHz, MIDI_HI, MIDI_LO } from '../src/api.js';
import { KeyboardController, keyboardLayout } from '../src/keyboard.js';

describe('keyboard layout', () => {
  it('spans two octaves C3..C5 with 25 keys', () => {
    const keys = keyboardLayout();
    expect(keys).toHaveLength(25);
    expect(keys[0].midi).toBe(48);
    expect(keys[0].name).toBe('C3');
    expect(keys.at(-1)?.midi).toBe(72);
    expect(keys.at(-1)?.name).toBe('C5');
    expect(keys.filter((k) => !k.black)).toHaveLength(15);
    expect(keys.filter((k) => k.black)).toHaveLength(10);
  });

  it('A3 maps to 220 Hz', () => {
    expect(midiToHz(57)).toBeCloseTo(220.0, 6);
    expect(midiToHz(69)).toBe(440);
  });
});

function makePlayer() {
  const stops: number[] = [];
  let playCount = 0;
  return {
    stops,
    played: () => playCount,
    player: {
      async play(_pcm: ArrayBuffer) {
        const id = playCount++;
        return {
          stop() {
            stops.push(id);
          },
        };
      },
    },
  };
}

describe('keyboard controller', () => {
  it('fetches once per key and caches the PCM', async () => {
    const fetcher = vi.fn(async (midi: number) => new ArrayBuffer(midi));
    const { player } = makePlayer();
    const kb = new KeyboardController(fetcher, player);
    expect(await kb.press(57)).toBe(true);
    expect(await kb.press(57)).toBe(true);
    expect(fetcher).toHaveBeenCalledTimes(1);
    expect(kb.cached(57)).toBe(true);
    await kb.press(60);
    expect(fetcher).toHaveBeenCalledTimes(2);
  });

  it('retriggers from the start on rapid repeat presses', async () => {
    const { player, stops, played } = makePlayer();
    const kb = new KeyboardController(async () => new ArrayBuffer(8), player);
    await kb.press(57);
    await kb.press(57);
    await kb.press(57);
    expect(played()).toBe(3);
    expect(stops).toEqual([0, 1]); // each press stopped the previous voice
  });

  it('requests only the documented midi range', async () => {
    const fetcher = vi.fn(async () => new ArrayBuffer(4));
    const kb = new KeyboardController(fetcher, makePlayer().player);
    expect(await kb.press(MIDI_LO - 1)).toBe(false);
    expect(await kb.press(MIDI_HI + 1)).toBe(false);
    expect(fetcher).not.toHaveBeenCalled();
  });

  it('fetch failure flashes the key and does not throw', async () => {
    const errors: number[] = [];
    const kb = new KeyboardController(
      async () => {
        throw new Error('boom');
      },
      makePlayer().player,
      (midi) => errors.push(midi),
    );
    expect(await kb.press(57)).toBe(false);
    expect(errors).toEqual([57]);
  });
});
