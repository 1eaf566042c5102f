/** Minimal RGB PNG writing for parity-test inputs. */

import * as fs from 'node:fs';
import { PNG } from 'pngjs';

export function writeRgbPng(path: string, width: number, height: number,
                            rgb: Uint8Array): void {
  const png = new PNG({ width, height });
  for (let i = 0; i < width * height; i++) {
    png.data[4 * i] = rgb[3 * i];
    png.data[4 * i + 1] = rgb[3 * i + 1];
    png.data[4 * i + 2] = rgb[3 * i + 2];
    png.data[4 * i + 3] = 255;
  }
  fs.writeFileSync(path, PNG.sync.write(png, { colorType: 2 }));
}
